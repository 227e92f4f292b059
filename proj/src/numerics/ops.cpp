#include "docentr/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace docentr::numerics {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

Shape batch_shape(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

bool is_suffix(const Shape& whole, const Shape& tail) {
  if (tail.size() > whole.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), whole.rbegin());
}

std::string pair_message(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b);
}

}  // namespace

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b, Transpose transpose_b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.rank() < 2 || B.rank() < 2) throw DimensionError(pair_message("matmul", A.shape(), B.shape()));
  const bool tb = transpose_b == Transpose::Yes;
  const std::size_t m = A.shape()[A.rank() - 2];
  const std::size_t k = A.shape()[A.rank() - 1];
  const std::size_t kb = tb ? B.shape()[B.rank() - 1] : B.shape()[B.rank() - 2];
  const std::size_t n = tb ? B.shape()[B.rank() - 2] : B.shape()[B.rank() - 1];
  if (k != kb) throw DimensionError(pair_message("matmul", A.shape(), B.shape()));

  const Shape ba = batch_shape(A.shape());
  const Shape bb = batch_shape(B.shape());
  const std::size_t na = element_count(ba);
  const std::size_t nb = element_count(bb);
  Shape out_shape;
  if (ba == bb || nb == 1) {
    out_shape = ba;
  } else if (na == 1) {
    out_shape = bb;
  } else {
    throw DimensionError(pair_message("matmul", A.shape(), B.shape()));
  }
  const std::size_t batches = element_count(out_shape);
  const std::size_t step_a = na == 1 ? 0 : m * k;
  const std::size_t step_b = nb == 1 ? 0 : k * n;
  out_shape.push_back(m);
  out_shape.push_back(n);

  BasicTensor<T> C(out_shape);
  for (std::size_t i = 0; i < batches; ++i) {
    ConstMatMap<T> Ai(A.data() + i * step_a, m, k);
    MatMap<T> Ci(C.data() + i * m * n, m, n);
    if (tb) {
      ConstMatMap<T> Bi(B.data() + i * step_b, n, k);
      Ci.noalias() = Ai * Bi.transpose();
    } else {
      ConstMatMap<T> Bi(B.data() + i * step_b, k, n);
      Ci.noalias() = Ai * Bi;
    }
  }

  return g.record(std::move(C), {a, b}, [=](Graph<T>& gr, const BasicTensor<T>& dC) {
    const auto& Av = gr.value(a);
    const auto& Bv = gr.value(b);
    if (auto* dA = gr.grad_target(a)) {
      for (std::size_t i = 0; i < batches; ++i) {
        ConstMatMap<T> dCi(dC.data() + i * m * n, m, n);
        MatMap<T> dAi(dA->data() + i * step_a, m, k);
        if (tb) {
          ConstMatMap<T> Bi(Bv.data() + i * step_b, n, k);
          dAi.noalias() += dCi * Bi;
        } else {
          ConstMatMap<T> Bi(Bv.data() + i * step_b, k, n);
          dAi.noalias() += dCi * Bi.transpose();
        }
      }
    }
    if (auto* dB = gr.grad_target(b)) {
      for (std::size_t i = 0; i < batches; ++i) {
        ConstMatMap<T> dCi(dC.data() + i * m * n, m, n);
        ConstMatMap<T> Ai(Av.data() + i * step_a, m, k);
        if (tb) {
          MatMap<T> dBi(dB->data() + i * step_b, n, k);
          dBi.noalias() += dCi.transpose() * Ai;
        } else {
          MatMap<T> dBi(dB->data() + i * step_b, k, n);
          dBi.noalias() += Ai.transpose() * dCi;
        }
      }
    }
  });
}

template <typename T>
Var softmax(Graph<T>& g, Var x, std::size_t axis) {
  const auto& X = g.value(x);
  if (axis >= X.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for shape " + to_string(X.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= X.shape()[i];
  for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.shape()[i];
  const std::size_t len = X.shape()[axis];

  BasicTensor<T> Y(X.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const T* xs = X.data() + o * len * inner + in;
      T* ys = Y.data() + o * len * inner + in;
      T mx = xs[0];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xs[j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        ys[j * inner] = std::exp(xs[j * inner] - mx);
        total += ys[j * inner];
      }
      const T inv = T{1} / total;
      for (std::size_t j = 0; j < len; ++j) ys[j * inner] *= inv;
    }
  }

  Var y{g.size()};
  return g.record(std::move(Y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    auto* dX = gr.grad_target(x);
    if (!dX) return;
    const auto& Yv = gr.value(y);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += dY[base + j * inner] * Yv[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          (*dX)[idx] += Yv[idx] * (dY[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta, double eps) {
  const auto& X = g.value(x);
  const auto& G = g.value(gamma);
  const auto& Bt = g.value(beta);
  if (X.rank() < 1) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = X.shape().back();
  if (G.shape() != Shape{d} || Bt.shape() != Shape{d}) {
    throw DimensionError(pair_message("layer_norm", X.shape(), G.shape()));
  }
  if (eps < 0) throw ContractError("layer_norm: eps must be non-negative");
  const std::size_t rows = X.size() / d;

  BasicTensor<T> Y(X.shape());
  // normalized activations and reciprocal std per row, kept for backward
  auto xhat = std::make_shared<std::vector<T>>(X.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.data() + r * d;
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = static_cast<T>(rs);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>((xr[j] - mean) * rs);
      (*xhat)[r * d + j] = h;
      Y[r * d + j] = h * G[j] + Bt[j];
    }
  }

  return g.record(std::move(Y), {x, gamma, beta}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    const auto& Gv = gr.value(gamma);
    if (auto* dG = gr.grad_target(gamma)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) (*dG)[j] += dY[r * d + j] * (*xhat)[r * d + j];
    }
    if (auto* dB = gr.grad_target(beta)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) (*dB)[j] += dY[r * d + j];
    }
    if (auto* dX = gr.grad_target(x)) {
      const T inv_d = T{1} / static_cast<T>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_g = 0, mean_gx = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = dY[r * d + j] * Gv[j];
          mean_g += gh;
          mean_gx += gh * (*xhat)[r * d + j];
        }
        mean_g *= inv_d;
        mean_gx *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = dY[r * d + j] * Gv[j];
          (*dX)[r * d + j] += (*rstd)[r] * (gh - mean_g - (*xhat)[r * d + j] * mean_gx);
        }
      }
    }
  });
}

template <typename T>
Var gelu(Graph<T>& g, Var x) {
  const auto& X = g.value(x);
  BasicTensor<T> Y(X.shape());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < X.size(); ++i) {
    const T v = X[i];
    Y[i] = T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2));
  }
  return g.record(std::move(Y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    auto* dX = gr.grad_target(x);
    if (!dX) return;
    const auto& Xv = gr.value(x);
    const T inv_sqrt2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    for (std::size_t i = 0; i < Xv.size(); ++i) {
      const T v = Xv[i];
      const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T{-0.5} * v * v);
      (*dX)[i] += dY[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  const auto& X = g.value(x);
  BasicTensor<T> Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = T{1} / (T{1} + std::exp(-X[i]));
  Var y{g.size()};
  return g.record(std::move(Y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    auto* dX = gr.grad_target(x);
    if (!dX) return;
    const auto& Yv = gr.value(y);
    for (std::size_t i = 0; i < Yv.size(); ++i) (*dX)[i] += dY[i] * Yv[i] * (T{1} - Yv[i]);
  });
}

template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
  const auto& X = g.value(x);
  const auto& W = g.value(w);
  const auto& Bv = g.value(b);
  if (X.rank() < 1 || W.rank() != 2 || X.shape().back() != W.shape()[0] || Bv.shape() != Shape{W.shape()[1]}) {
    throw DimensionError("linear: input " + to_string(X.shape()) + ", weight " + to_string(W.shape()) + ", bias " +
                         to_string(Bv.shape()));
  }
  const std::size_t din = W.shape()[0];
  const std::size_t dout = W.shape()[1];
  const std::size_t rows = X.size() / din;
  Shape out_shape = X.shape();
  out_shape.back() = dout;

  BasicTensor<T> Y(out_shape);
  {
    ConstMatMap<T> Xm(X.data(), rows, din);
    ConstMatMap<T> Wm(W.data(), din, dout);
    MatMap<T> Ym(Y.data(), rows, dout);
    Ym.noalias() = Xm * Wm;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < dout; ++j) Y[r * dout + j] += Bv[j];
  }

  return g.record(std::move(Y), {x, w, b}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    ConstMatMap<T> dYm(dY.data(), rows, dout);
    if (auto* dX = gr.grad_target(x)) {
      ConstMatMap<T> Wm(gr.value(w).data(), din, dout);
      MatMap<T> dXm(dX->data(), rows, din);
      dXm.noalias() += dYm * Wm.transpose();
    }
    if (auto* dW = gr.grad_target(w)) {
      ConstMatMap<T> Xm(gr.value(x).data(), rows, din);
      MatMap<T> dWm(dW->data(), din, dout);
      dWm.noalias() += Xm.transpose() * dYm;
    }
    if (auto* dB = gr.grad_target(b)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < dout; ++j) (*dB)[j] += dY[r * dout + j];
    }
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (!is_suffix(A.shape(), B.shape())) throw DimensionError(pair_message("add", A.shape(), B.shape()));
  const std::size_t inner = B.size();
  const std::size_t reps = A.size() / inner;
  BasicTensor<T> C = A;
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < inner; ++j) C[r * inner + j] += B[j];

  return g.record(std::move(C), {a, b}, [=](Graph<T>& gr, const BasicTensor<T>& dC) {
    if (auto* dA = gr.grad_target(a))
      for (std::size_t i = 0; i < dC.size(); ++i) (*dA)[i] += dC[i];
    if (auto* dB = gr.grad_target(b))
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t j = 0; j < inner; ++j) (*dB)[j] += dC[r * inner + j];
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.shape() != B.shape()) throw DimensionError(pair_message("mul", A.shape(), B.shape()));
  BasicTensor<T> C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[i];
  return g.record(std::move(C), {a, b}, [=](Graph<T>& gr, const BasicTensor<T>& dC) {
    const auto& Av = gr.value(a);
    const auto& Bv = gr.value(b);
    if (auto* dA = gr.grad_target(a))
      for (std::size_t i = 0; i < dC.size(); ++i) (*dA)[i] += dC[i] * Bv[i];
    if (auto* dB = gr.grad_target(b))
      for (std::size_t i = 0; i < dC.size(); ++i) (*dB)[i] += dC[i] * Av[i];
  });
}

template <typename T>
Var scale(Graph<T>& g, Var x, double factor) {
  const T f = static_cast<T>(factor);
  BasicTensor<T> Y = g.value(x);
  for (auto& v : Y.values()) v *= f;
  return g.record(std::move(Y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    if (auto* dX = gr.grad_target(x))
      for (std::size_t i = 0; i < dY.size(); ++i) (*dX)[i] += dY[i] * f;
  });
}

template <typename T>
Var sum(Graph<T>& g, Var x) {
  const auto& X = g.value(x);
  double total = 0;
  for (T v : X.values()) total += v;
  return g.record(BasicTensor<T>::scalar(static_cast<T>(total)), {x},
                  [=](Graph<T>& gr, const BasicTensor<T>& dY) {
                    if (auto* dX = gr.grad_target(x))
                      for (auto& v : dX->values()) v += dY[0];
                  });
}

template <typename T>
Var mse(Graph<T>& g, Var pred, const BasicTensor<T>& target) {
  const auto& P = g.value(pred);
  if (P.shape() != target.shape()) throw DimensionError(pair_message("mse", P.shape(), target.shape()));
  double total = 0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double d = static_cast<double>(P[i]) - static_cast<double>(target[i]);
    total += d * d;
  }
  const double n = static_cast<double>(P.size());
  return g.record(BasicTensor<T>::scalar(static_cast<T>(total / n)), {pred},
                  [=](Graph<T>& gr, const BasicTensor<T>& dY) {
                    auto* dP = gr.grad_target(pred);
                    if (!dP) return;
                    const auto& Pv = gr.value(pred);
                    const T f = static_cast<T>(2.0 / n) * dY[0];
                    for (std::size_t i = 0; i < Pv.size(); ++i) (*dP)[i] += f * (Pv[i] - target[i]);
                  });
}

template <typename T>
Var split_heads(Graph<T>& g, Var qkv, std::size_t part, std::size_t heads) {
  const auto& X = g.value(qkv);
  if (X.rank() != 3 || part > 2 || heads == 0 || X.shape()[2] % (3 * heads) != 0) {
    throw DimensionError("split_heads: shape " + to_string(X.shape()) + " with " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = X.shape()[0];
  const std::size_t n = X.shape()[1];
  const std::size_t width = X.shape()[2];
  const std::size_t dim = width / 3;
  const std::size_t hd = dim / heads;

  BasicTensor<T> Y(Shape{batch * heads, n, hd});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < n; ++t) {
        const T* src = X.data() + (b * n + t) * width + part * dim + h * hd;
        T* dst = Y.data() + ((b * heads + h) * n + t) * hd;
        std::copy(src, src + hd, dst);
      }

  return g.record(std::move(Y), {qkv}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    auto* dX = gr.grad_target(qkv);
    if (!dX) return;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < n; ++t) {
          T* dst = dX->data() + (b * n + t) * width + part * dim + h * hd;
          const T* src = dY.data() + ((b * heads + h) * n + t) * hd;
          for (std::size_t j = 0; j < hd; ++j) dst[j] += src[j];
        }
  });
}

template <typename T>
Var merge_heads(Graph<T>& g, Var x, std::size_t heads) {
  const auto& X = g.value(x);
  if (X.rank() != 3 || heads == 0 || X.shape()[0] % heads != 0) {
    throw DimensionError("merge_heads: shape " + to_string(X.shape()) + " with " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = X.shape()[0] / heads;
  const std::size_t n = X.shape()[1];
  const std::size_t hd = X.shape()[2];
  const std::size_t dim = hd * heads;

  BasicTensor<T> Y(Shape{batch, n, dim});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < n; ++t) {
        const T* src = X.data() + ((b * heads + h) * n + t) * hd;
        std::copy(src, src + hd, Y.data() + (b * n + t) * dim + h * hd);
      }

  return g.record(std::move(Y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& dY) {
    auto* dX = gr.grad_target(x);
    if (!dX) return;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < n; ++t) {
          T* dst = dX->data() + ((b * heads + h) * n + t) * hd;
          const T* src = dY.data() + (b * n + t) * dim + h * hd;
          for (std::size_t j = 0; j < hd; ++j) dst[j] += src[j];
        }
  });
}

#define DOCENTR_INSTANTIATE_OPS(T)                                      \
  template Var matmul<T>(Graph<T>&, Var, Var, Transpose);               \
  template Var softmax<T>(Graph<T>&, Var, std::size_t);                 \
  template Var layer_norm<T>(Graph<T>&, Var, Var, Var, double);         \
  template Var gelu<T>(Graph<T>&, Var);                                 \
  template Var sigmoid<T>(Graph<T>&, Var);                              \
  template Var linear<T>(Graph<T>&, Var, Var, Var);                     \
  template Var add<T>(Graph<T>&, Var, Var);                             \
  template Var mul<T>(Graph<T>&, Var, Var);                             \
  template Var scale<T>(Graph<T>&, Var, double);                        \
  template Var sum<T>(Graph<T>&, Var);                                  \
  template Var mse<T>(Graph<T>&, Var, const BasicTensor<T>&);           \
  template Var split_heads<T>(Graph<T>&, Var, std::size_t, std::size_t); \
  template Var merge_heads<T>(Graph<T>&, Var, std::size_t);

DOCENTR_INSTANTIATE_OPS(float)
DOCENTR_INSTANTIATE_OPS(double)

}  // namespace docentr::numerics
