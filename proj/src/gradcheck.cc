#include "las/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "las/error.h"
#include "las/rng.h"

namespace las {

namespace {

double eval_scalar(const std::function<TensorPtr(Graph&)>& f) {
  Graph g;
  TensorPtr out = f(g);
  if (out->size() != 1) {
    throw DimensionError("grad_check: f must return a single element, got " +
                         shape_str(out->shape()));
  }
  const double v = (*out)[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: f evaluated to a non-finite value");
  return v;
}

}  // namespace

double grad_check(const std::function<TensorPtr(Graph&)>& f,
                  const std::vector<TensorPtr>& params, const GradCheckOptions& opt) {
  // Analytic pass.
  std::vector<std::vector<Scalar>> analytic;
  {
    Graph g;
    TensorPtr loss = f(g);
    if (loss->size() != 1) {
      throw DimensionError("grad_check: f must return a single element, got " +
                           shape_str(loss->shape()));
    }
    if (!std::isfinite(static_cast<double>((*loss)[0]))) {
      throw NumericError("grad_check: f evaluated to a non-finite value");
    }
    g.backward(loss);
    for (const auto& p : params) {
      p->ensure_grad();
      analytic.push_back(p->grad);
    }
  }

  Rng rng(opt.seed);
  const double h = opt.step;
  double max_rel = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    std::vector<int> idx;
    if (opt.samples_per_param <= 0 || p.size() <= opt.samples_per_param) {
      idx.resize(p.size());
      for (int i = 0; i < p.size(); ++i) idx[i] = i;
    } else {
      for (int s = 0; s < opt.samples_per_param; ++s)
        idx.push_back(static_cast<int>(rng.uniform_int(0, p.size() - 1)));
    }
    for (int i : idx) {
      const Scalar saved = p[i];
      p[i] = saved + static_cast<Scalar>(h);
      const double up = eval_scalar(f);
      p[i] = saved - static_cast<Scalar>(h);
      const double dn = eval_scalar(f);
      p[i] = saved;
      const double fd = (up - dn) / (2 * h);
      if (!std::isfinite(fd)) throw NumericError("grad_check: non-finite finite difference");
      const double ad = analytic[pi][i];
      const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace las
