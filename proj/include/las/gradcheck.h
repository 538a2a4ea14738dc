#pragma once

#include <functional>
#include <vector>

#include "las/tensor.h"

namespace las {

struct GradCheckOptions {
  double step = 1e-5;          // central-difference step, keep in [1e-6, 1e-4]
  int samples_per_param = 0;   // 0 = check every element
  uint64_t seed = 0x5eed;      // element sampling when samples_per_param > 0
};

// Compares the reverse-mode gradient of f (a scalar-valued rebuildable loss)
// against central finite differences (f(p+h) - f(p-h)) / 2h, element-wise over
// params. Returns the max over checked elements of
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
// f must be deterministic; it is re-evaluated with perturbed parameters.
double grad_check(const std::function<TensorPtr(Graph&)>& f,
                  const std::vector<TensorPtr>& params,
                  const GradCheckOptions& opt = {});

}  // namespace las
