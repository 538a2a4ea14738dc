#include "las/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace las {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

int shape_size(const std::vector<int>& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  int n = 1;
  for (int e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void check_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, Scalar fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<Scalar> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != static_cast<int>(data_.size())) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::vec(std::vector<Scalar> v) {
  int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<Scalar> v) {
  return Tensor({rows, cols}, std::move(v));
}

int Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return shape_[0];
  throw DimensionError("no 2-D view for tensor of shape " + shape_str(shape_));
}

int Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw DimensionError("no 2-D view for tensor of shape " + shape_str(shape_));
}

bool Tensor::all_finite() const {
  for (Scalar v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::l2_norm() const {
  double s = 0;
  for (Scalar v : data_) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

void Tensor::ensure_grad() {
  if (grad.size() != data_.size()) grad.assign(data_.size(), 0);
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), Scalar(0));
}

TensorPtr make_tensor(Tensor t) { return std::make_shared<Tensor>(std::move(t)); }

TensorPtr make_param(Tensor t) {
  auto p = make_tensor(std::move(t));
  p->requires_grad = true;
  return p;
}

Tensor softmax_rows(const Tensor& x) {
  const int R = x.rows(), C = x.cols();
  Tensor y(x.shape());
  for (int r = 0; r < R; ++r) {
    const Scalar* xr = x.data() + r * C;
    Scalar* yr = y.data() + r * C;
    Scalar mx = xr[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    Scalar sum = 0;
    for (int c = 0; c < C; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      sum += yr[c];
    }
    for (int c = 0; c < C; ++c) yr[c] /= sum;
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  const int R = x.rows(), C = x.cols();
  Tensor y(x.shape());
  for (int r = 0; r < R; ++r) {
    const Scalar* xr = x.data() + r * C;
    Scalar* yr = y.data() + r * C;
    Scalar mx = xr[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    Scalar sum = 0;
    for (int c = 0; c < C; ++c) sum += std::exp(xr[c] - mx);
    const Scalar lse = mx + std::log(sum);
    for (int c = 0; c < C; ++c) yr[c] = xr[c] - lse;
  }
  return y;
}

TensorPtr Graph::input(Tensor value) {
  return std::make_shared<Tensor>(std::move(value));
}

TensorPtr Graph::use(TensorPtr t) { return t; }

TensorPtr Graph::emit(Tensor value, std::vector<TensorPtr> in, std::function<void()> back) {
  bool rg = false;
  for (const auto& i : in) rg = rg || i->requires_grad;
  auto out = std::make_shared<Tensor>(std::move(value));
  out->requires_grad = rg;
  tape_.push_back({out, std::move(in), std::move(back)});
  return out;
}

TensorPtr Graph::matmul(const TensorPtr& a, const TensorPtr& b) {
  check_rank2("matmul", *a);
  check_rank2("matmul", *b);
  if (a->cols() != b->rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a->shape()) +
                         " vs " + shape_str(b->shape()));
  }
  const int m = a->rows(), k = a->cols(), n = b->cols();
  Tensor v({m, n});
  const Scalar* A = a->data();
  const Scalar* B = b->data();
  Scalar* V = v.data();
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const Scalar s = A[i * k + kk];
      const Scalar* Br = B + kk * n;
      Scalar* Vr = V + i * n;
      for (int j = 0; j < n; ++j) Vr[j] += s * Br[j];
    }
  }
  Tensor* ap = a.get();
  Tensor* bp = b.get();
  auto out = emit(std::move(v), {a, b}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, bp, op, m, k, n] {
    const Scalar* D = op->grad.data();
    if (ap->requires_grad) {
      Scalar* dA = ap->grad.data();
      const Scalar* B = bp->data();
      for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
          const Scalar* Dr = D + i * n;
          const Scalar* Br = B + kk * n;
          Scalar s = 0;
          for (int j = 0; j < n; ++j) s += Dr[j] * Br[j];
          dA[i * k + kk] += s;
        }
      }
    }
    if (bp->requires_grad) {
      Scalar* dB = bp->grad.data();
      const Scalar* A = ap->data();
      for (int kk = 0; kk < k; ++kk) {
        for (int i = 0; i < m; ++i) {
          const Scalar s = A[i * k + kk];
          const Scalar* Dr = D + i * n;
          Scalar* dBr = dB + kk * n;
          for (int j = 0; j < n; ++j) dBr[j] += s * Dr[j];
        }
      }
    }
  };
  return out;
}

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("add", *a, *b);
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = (*a)[i] + (*b)[i];
  Tensor* ap = a.get();
  Tensor* bp = b.get();
  auto out = emit(std::move(v), {a, b}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, bp, op] {
    const int n = op->size();
    if (ap->requires_grad)
      for (int i = 0; i < n; ++i) ap->grad[i] += op->grad[i];
    if (bp->requires_grad)
      for (int i = 0; i < n; ++i) bp->grad[i] += op->grad[i];
  };
  return out;
}

TensorPtr Graph::add_bias(const TensorPtr& a, const TensorPtr& bias) {
  const int m = a->rows(), n = a->cols();
  if (bias->size() != n || bias->rows() != 1) {
    throw DimensionError("add_bias: bias " + shape_str(bias->shape()) +
                         " does not broadcast over " + shape_str(a->shape()));
  }
  Tensor v(a->shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[i * n + j] = (*a)[i * n + j] + (*bias)[j];
  Tensor* ap = a.get();
  Tensor* bp = bias.get();
  auto out = emit(std::move(v), {a, bias}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, bp, op, m, n] {
    if (ap->requires_grad)
      for (int i = 0; i < m * n; ++i) ap->grad[i] += op->grad[i];
    if (bp->requires_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) bp->grad[j] += op->grad[i * n + j];
  };
  return out;
}

TensorPtr Graph::sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("sub", *a, *b);
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = (*a)[i] - (*b)[i];
  Tensor* ap = a.get();
  Tensor* bp = b.get();
  auto out = emit(std::move(v), {a, b}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, bp, op] {
    const int n = op->size();
    if (ap->requires_grad)
      for (int i = 0; i < n; ++i) ap->grad[i] += op->grad[i];
    if (bp->requires_grad)
      for (int i = 0; i < n; ++i) bp->grad[i] -= op->grad[i];
  };
  return out;
}

TensorPtr Graph::mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("mul", *a, *b);
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = (*a)[i] * (*b)[i];
  Tensor* ap = a.get();
  Tensor* bp = b.get();
  auto out = emit(std::move(v), {a, b}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, bp, op] {
    const int n = op->size();
    if (ap->requires_grad)
      for (int i = 0; i < n; ++i) ap->grad[i] += op->grad[i] * (*bp)[i];
    if (bp->requires_grad)
      for (int i = 0; i < n; ++i) bp->grad[i] += op->grad[i] * (*ap)[i];
  };
  return out;
}

TensorPtr Graph::scale(const TensorPtr& a, Scalar c) {
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = (*a)[i] * c;
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op, c] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < op->size(); ++i) ap->grad[i] += c * op->grad[i];
  };
  return out;
}

TensorPtr Graph::tanh(const TensorPtr& a) {
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = std::tanh((*a)[i]);
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < op->size(); ++i) {
      const Scalar y = (*op)[i];
      ap->grad[i] += op->grad[i] * (1 - y * y);
    }
  };
  return out;
}

TensorPtr Graph::sigmoid(const TensorPtr& a) {
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = Scalar(1) / (Scalar(1) + std::exp(-(*a)[i]));
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < op->size(); ++i) {
      const Scalar y = (*op)[i];
      ap->grad[i] += op->grad[i] * y * (1 - y);
    }
  };
  return out;
}

TensorPtr Graph::exp(const TensorPtr& a) {
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = std::exp((*a)[i]);
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < op->size(); ++i) ap->grad[i] += op->grad[i] * (*op)[i];
  };
  return out;
}

TensorPtr Graph::log(const TensorPtr& a) {
  Tensor v(a->shape());
  for (int i = 0; i < v.size(); ++i) v[i] = std::log((*a)[i]);
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < op->size(); ++i) ap->grad[i] += op->grad[i] / (*ap)[i];
  };
  return out;
}

TensorPtr Graph::softmax(const TensorPtr& a) {
  Tensor v = softmax_rows(*a);
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  const int R = a->rows(), C = a->cols();
  tape_.back().back = [ap, op, R, C] {
    if (!ap->requires_grad) return;
    for (int r = 0; r < R; ++r) {
      const Scalar* y = op->data() + r * C;
      const Scalar* dy = op->grad.data() + r * C;
      Scalar dot = 0;
      for (int c = 0; c < C; ++c) dot += dy[c] * y[c];
      Scalar* dx = ap->grad.data() + r * C;
      for (int c = 0; c < C; ++c) dx[c] += y[c] * (dy[c] - dot);
    }
  };
  return out;
}

TensorPtr Graph::log_softmax(const TensorPtr& a) {
  Tensor v = log_softmax_rows(*a);
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  const int R = a->rows(), C = a->cols();
  tape_.back().back = [ap, op, R, C] {
    if (!ap->requires_grad) return;
    for (int r = 0; r < R; ++r) {
      const Scalar* y = op->data() + r * C;
      const Scalar* dy = op->grad.data() + r * C;
      Scalar sum = 0;
      for (int c = 0; c < C; ++c) sum += dy[c];
      Scalar* dx = ap->grad.data() + r * C;
      for (int c = 0; c < C; ++c) dx[c] += dy[c] - std::exp(y[c]) * sum;
    }
  };
  return out;
}

TensorPtr Graph::concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const int n = parts[0]->cols();
  int rows = 0;
  for (const auto& p : parts) {
    if (p->cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(p->shape()) +
                           " vs [*x" + std::to_string(n) + "]");
    }
    rows += p->rows();
  }
  Tensor v({rows, n});
  int r = 0;
  for (const auto& p : parts) {
    std::copy(p->data(), p->data() + p->size(), v.data() + r * n);
    r += p->rows();
  }
  std::vector<Tensor*> raw;
  for (const auto& p : parts) raw.push_back(p.get());
  auto out = emit(std::move(v), parts, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [raw, op, n] {
    int r = 0;
    for (Tensor* p : raw) {
      if (p->requires_grad) {
        const Scalar* src = op->grad.data() + r * n;
        for (int i = 0; i < p->size(); ++i) p->grad[i] += src[i];
      }
      r += p->rows();
    }
  };
  return out;
}

TensorPtr Graph::concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const int m = parts[0]->rows();
  int cols = 0;
  for (const auto& p : parts) {
    check_rank2("concat_cols", *p);
    if (p->rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(p->shape()) +
                           " vs [" + std::to_string(m) + "x*]");
    }
    cols += p->cols();
  }
  Tensor v({m, cols});
  int c0 = 0;
  for (const auto& p : parts) {
    const int pc = p->cols();
    for (int i = 0; i < m; ++i)
      std::copy(p->data() + i * pc, p->data() + (i + 1) * pc, v.data() + i * cols + c0);
    c0 += pc;
  }
  std::vector<Tensor*> raw;
  for (const auto& p : parts) raw.push_back(p.get());
  auto out = emit(std::move(v), parts, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [raw, op, m, cols] {
    int c0 = 0;
    for (Tensor* p : raw) {
      const int pc = p->cols();
      if (p->requires_grad) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < pc; ++j) p->grad[i * pc + j] += op->grad[i * cols + c0 + j];
      }
      c0 += pc;
    }
  };
  return out;
}

TensorPtr Graph::slice_rows(const TensorPtr& a, int r0, int r1) {
  check_rank2("slice_rows", *a);
  if (r0 < 0 || r1 > a->rows() || r0 >= r1) {
    throw DimensionError("slice_rows: range [" + std::to_string(r0) + "," +
                         std::to_string(r1) + ") out of " + shape_str(a->shape()));
  }
  const int n = a->cols();
  Tensor v({r1 - r0, n});
  std::copy(a->data() + r0 * n, a->data() + r1 * n, v.data());
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op, r0, n] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < op->size(); ++i) ap->grad[r0 * n + i] += op->grad[i];
  };
  return out;
}

TensorPtr Graph::slice_cols(const TensorPtr& a, int c0, int c1) {
  check_rank2("slice_cols", *a);
  if (c0 < 0 || c1 > a->cols() || c0 >= c1) {
    throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") out of " + shape_str(a->shape()));
  }
  const int m = a->rows(), n = a->cols(), w = c1 - c0;
  Tensor v({m, w});
  for (int i = 0; i < m; ++i)
    std::copy(a->data() + i * n + c0, a->data() + i * n + c1, v.data() + i * w);
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op, m, n, c0, w] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) ap->grad[i * n + c0 + j] += op->grad[i * w + j];
  };
  return out;
}

TensorPtr Graph::sum(const TensorPtr& a) {
  Scalar s = 0;
  for (int i = 0; i < a->size(); ++i) s += (*a)[i];
  Tensor* ap = a.get();
  auto out = emit(Tensor::scalar(s), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op] {
    if (!ap->requires_grad) return;
    const Scalar d = op->grad[0];
    for (int i = 0; i < ap->size(); ++i) ap->grad[i] += d;
  };
  return out;
}

TensorPtr Graph::conv1d(const TensorPtr& signal, const TensorPtr& filters) {
  if (signal->rank() != 1) {
    throw DimensionError("conv1d: signal must be rank-1, got " + shape_str(signal->shape()));
  }
  check_rank2("conv1d", *filters);
  const int T = signal->size();
  const int k = filters->rows(), r = filters->cols();
  if (r % 2 == 0) {
    throw ConfigError("conv1d: filter width must be odd, got " + std::to_string(r));
  }
  const int c = (r - 1) / 2;
  Tensor v({T, k});
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < k; ++f) {
      Scalar s = 0;
      for (int j = 0; j < r; ++j) {
        const int u = t + j - c;
        if (u >= 0 && u < T) s += filters->at(f, j) * (*signal)[u];
      }
      v.at(t, f) = s;
    }
  }
  Tensor* sp = signal.get();
  Tensor* fp = filters.get();
  auto out = emit(std::move(v), {signal, filters}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [sp, fp, op, T, k, r, c] {
    for (int t = 0; t < T; ++t) {
      for (int f = 0; f < k; ++f) {
        const Scalar d = op->grad[t * k + f];
        for (int j = 0; j < r; ++j) {
          const int u = t + j - c;
          if (u < 0 || u >= T) continue;
          if (sp->requires_grad) sp->grad[u] += d * fp->at(f, j);
          if (fp->requires_grad) fp->grad[f * r + j] += d * (*sp)[u];
        }
      }
    }
  };
  return out;
}

TensorPtr Graph::transpose(const TensorPtr& a) {
  check_rank2("transpose", *a);
  const int m = a->rows(), n = a->cols();
  Tensor v({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v.at(j, i) = a->at(i, j);
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op, m, n] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ap->grad[i * n + j] += op->grad[j * m + i];
  };
  return out;
}

TensorPtr Graph::reshape(const TensorPtr& a, std::vector<int> shape) {
  Tensor v(std::move(shape), std::vector<Scalar>(a->data(), a->data() + a->size()));
  if (v.size() != a->size()) {
    throw DimensionError("reshape: size mismatch " + shape_str(a->shape()) + " vs " +
                         shape_str(v.shape()));
  }
  Tensor* ap = a.get();
  auto out = emit(std::move(v), {a}, nullptr);
  Tensor* op = out.get();
  tape_.back().back = [ap, op] {
    if (!ap->requires_grad) return;
    for (int i = 0; i < op->size(); ++i) ap->grad[i] += op->grad[i];
  };
  return out;
}

void Graph::backward(const TensorPtr& loss) {
  if (loss->size() != 1) {
    throw DimensionError("backward: loss must be a single element, got " +
                         shape_str(loss->shape()));
  }
  for (auto& s : tape_) {
    if (s.out->requires_grad) {
      s.out->ensure_grad();
      s.out->zero_grad();
    }
    for (auto& i : s.in) {
      if (i->requires_grad) {
        i->ensure_grad();
        i->zero_grad();
      }
    }
  }
  if (!loss->requires_grad) return;
  loss->ensure_grad();
  loss->grad[0] = 1;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    if (it->out->requires_grad) it->back();
  }
}

}  // namespace las
