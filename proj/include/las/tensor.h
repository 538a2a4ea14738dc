#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "las/error.h"

namespace las {

#if defined(LAS_SCALAR_32)
using Scalar = float;
#else
using Scalar = double;
#endif

std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor. Rank 1 and 2 cover everything in this project;
// rank-1 tensors act as row vectors where a 2-D view is needed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, Scalar fill = 0);
  Tensor(std::vector<int> shape, std::vector<Scalar> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(Scalar v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<Scalar> v);
  static Tensor matrix(int rows, int cols, std::vector<Scalar> v);

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int size() const { return static_cast<int>(data_.size()); }
  // 2-D view: rank-1 [n] reads as [1, n].
  int rows() const;
  int cols() const;

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](int i) { return data_[i]; }
  Scalar operator[](int i) const { return data_[i]; }
  Scalar& at(int r, int c) { return data_[r * cols() + c]; }
  Scalar at(int r, int c) const { return data_[r * cols() + c]; }

  bool all_finite() const;
  double l2_norm() const;

  // Reverse-mode slots. grad is empty until ensure_grad(); when present it has
  // one entry per data element.
  bool requires_grad = false;
  std::vector<Scalar> grad;
  void ensure_grad();
  void zero_grad();

 private:
  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(Tensor t);
TensorPtr make_param(Tensor t);  // requires_grad = true

// Row-wise, max-subtracted softmax as a plain kernel; the graph op and the
// decoder's tempered distribution both call this so they agree bitwise.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Tape of primitive ops. Ops evaluate eagerly and record a backward closure;
// backward() replays the tape in exact reverse order, accumulating gradients
// additively so fan-out sums.
class Graph {
 public:
  // Leaf holding a fresh value; no gradient is tracked for it.
  TensorPtr input(Tensor value);
  // Register an externally owned tensor (typically a parameter) as a leaf.
  TensorPtr use(TensorPtr t);

  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  // a: [m x n], bias: [n] or [1 x n], broadcast over the leading dimension.
  // The only implicit broadcast in the library.
  TensorPtr add_bias(const TensorPtr& a, const TensorPtr& bias);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr scale(const TensorPtr& a, Scalar c);
  TensorPtr tanh(const TensorPtr& a);
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr exp(const TensorPtr& a);
  TensorPtr log(const TensorPtr& a);
  TensorPtr softmax(const TensorPtr& a);      // row-wise
  TensorPtr log_softmax(const TensorPtr& a);  // row-wise
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
  TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
  TensorPtr slice_rows(const TensorPtr& a, int r0, int r1);
  TensorPtr slice_cols(const TensorPtr& a, int c0, int c1);
  TensorPtr row(const TensorPtr& a, int r) { return slice_rows(a, r, r + 1); }
  TensorPtr sum(const TensorPtr& a);  // -> [1]
  // signal: [T], filters: [k x r] with r odd; zero-padded centered window.
  // out[t][f] = sum_d filters[f][d] * signal[t + d - (r-1)/2].
  TensorPtr conv1d(const TensorPtr& signal, const TensorPtr& filters);
  TensorPtr transpose(const TensorPtr& a);
  TensorPtr reshape(const TensorPtr& a, std::vector<int> shape);

  // loss must be a single-element tensor on this tape.
  void backward(const TensorPtr& loss);

  size_t size() const { return tape_.size(); }

 private:
  struct Step {
    TensorPtr out;
    std::vector<TensorPtr> in;
    std::function<void()> back;
  };
  std::vector<Step> tape_;

  TensorPtr emit(Tensor value, std::vector<TensorPtr> in, std::function<void()> back);
};

}  // namespace las
