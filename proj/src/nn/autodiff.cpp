#include "ocskill/nn/autodiff.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <utility>
#include <unordered_set>

#include "ocskill/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ocskill::nn {
namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

thread_local bool g_grad_enabled = true;

#if defined(__GLIBC__)
// Activation buffers are allocated and released every pass. Keeping them on the
// heap instead of fresh mmap pages avoids a page-fault storm per conv layer.
const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
  return true;
}();
#endif

MapRM as_mat(Tensor& t, int rows, int cols) { return MapRM(t.data(), rows, cols); }
CMapRM as_mat(const Tensor& t, int rows, int cols) { return CMapRM(t.data(), rows, cols); }

void require_rank2(const Var& x, const char* op) {
  if (x->value.rank() != 2) {
    throw ConfigError(std::string(op) + ": expected rank-2 input, got " + shape_str(x->value.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->value.shape() != b->value.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) + " vs " +
                      shape_str(b->value.shape()));
  }
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

// Applies f elementwise; df maps (x, y) to dy/dx.
template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  Tensor out(x->value.shape());
  const auto& xv = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_node(std::move(out), {x}, [df](Node& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    const auto& xv = px->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xv[i], self.value[i]);
  });
}

void im2col(const float* x, float* cols, int n, int h, int w, int c, int kernel, int stride, int pad, int ho,
            int wo) {
  const int kk = kernel * kernel * c;
  for (int in = 0; in < n; ++in) {
    const float* img = x + static_cast<std::size_t>(in) * h * w * c;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        float* row = cols + (static_cast<std::size_t>((in * ho + oy) * wo + ox)) * kk;
        const int ix0 = ox * stride - pad;
        const bool cols_inside = ix0 >= 0 && ix0 + kernel <= w;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          float* dst = row + ky * kernel * c;
          if (iy < 0 || iy >= h) {
            std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(kernel * c));
          } else if (cols_inside) {
            std::memcpy(dst, img + (static_cast<std::size_t>(iy) * w + ix0) * c,
                        sizeof(float) * static_cast<std::size_t>(kernel * c));
          } else {
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ix0 + kx;
              float* d = dst + kx * c;
              if (ix < 0 || ix >= w) {
                for (int ch = 0; ch < c; ++ch) d[ch] = 0.0f;
              } else {
                const float* src = img + (static_cast<std::size_t>(iy) * w + ix) * c;
                for (int ch = 0; ch < c; ++ch) d[ch] = src[ch];
              }
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, float* gx, int n, int h, int w, int c, int kernel, int stride, int pad, int ho,
                int wo) {
  const int kk = kernel * kernel * c;
  for (int in = 0; in < n; ++in) {
    float* img = gx + static_cast<std::size_t>(in) * h * w * c;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const float* row = cols + (static_cast<std::size_t>((in * ho + oy) * wo + ox)) * kk;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const float* src = row + (ky * kernel + kx) * c;
            float* dst = img + (static_cast<std::size_t>(iy) * w + ix) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.size() != value.size()) grad = Tensor::zeros(value.shape());
  return grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var param(ParameterSet& params, const std::string& name) {
  auto& p = params.get(name);
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->param = &p;
  n->requires_grad = g_grad_enabled;
  return n;
}

Var detach(const Var& x) { return constant(x->value); }

void backward(const Var& loss) {
  if (loss->value.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss->value.shape()));
  }
  if (!loss->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* next = node->parents[idx++].get();
      if (next->requires_grad && seen.insert(next).second) stack.emplace_back(next, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad()[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.empty()) continue;
    if (n->backward_fn) n->backward_fn(*n);
    if (n->param != nullptr) {
      auto& pg = n->param->grad;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n->grad[i];
      n->param->grad_ready = true;
    }
  }
  // Release the tape.
  for (Node* n : order) {
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

Var matmul(const Var& a, const Var& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int n = a->value.dim(0), k = a->value.dim(1), m = b->value.dim(1);
  if (b->value.dim(0) != k) {
    throw ConfigError("matmul: inner dims differ " + shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()));
  }
  Tensor out({n, m});
  as_mat(out, n, m).noalias() = as_mat(a->value, n, k) * as_mat(b->value, k, m);
  return make_node(std::move(out), {a, b}, [n, k, m](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    auto g = as_mat(std::as_const(self.grad), n, m);
    if (pa->requires_grad) as_mat(pa->ensure_grad(), n, k).noalias() += g * as_mat(std::as_const(pb->value), k, m).transpose();
    if (pb->requires_grad) as_mat(pb->ensure_grad(), k, m).noalias() += as_mat(std::as_const(pa->value), n, k).transpose() * g;
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const int n = x->value.dim(0), k = x->value.dim(1), m = w->value.dim(1);
  if (w->value.dim(0) != k) {
    throw ConfigError("linear: input width " + std::to_string(k) + " does not match weight " +
                      shape_str(w->value.shape()));
  }
  if (b->value.size() != static_cast<std::size_t>(m)) throw ConfigError("linear: bias width mismatch");
  Tensor out({n, m});
  auto o = as_mat(out, n, m);
  o.noalias() = as_mat(x->value, n, k) * as_mat(w->value, k, m);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b->value.data(), m);
  return make_node(std::move(out), {x, w, b}, [n, k, m](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    auto g = as_mat(std::as_const(self.grad), n, m);
    if (px->requires_grad) as_mat(px->ensure_grad(), n, k).noalias() += g * as_mat(std::as_const(pw->value), k, m).transpose();
    if (pw->requires_grad) as_mat(pw->ensure_grad(), k, m).noalias() += as_mat(std::as_const(px->value), n, k).transpose() * g;
    if (pb->requires_grad) MapRM(pb->ensure_grad().data(), 1, m) += g.colwise().sum();
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  const int n = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1);
  if (b->value.dim(0) != n) throw ConfigError("concat_cols: row count mismatch");
  Tensor out({n, ca + cb});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < ca; ++c) out.at(r, c) = a->value.at(r, c);
    for (int c = 0; c < cb; ++c) out.at(r, ca + c) = b->value.at(r, c);
  }
  return make_node(std::move(out), {a, b}, [n, ca, cb](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < ca; ++c) g.at(r, c) += self.grad.at(r, c);
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < cb; ++c) g.at(r, c) += self.grad.at(r, ca + c);
    }
  });
}

Var slice_cols(const Var& x, int begin, int end) {
  require_rank2(x, "slice_cols");
  const int n = x->value.dim(0), cols = x->value.dim(1);
  if (begin < 0 || end > cols || begin >= end) throw ConfigError("slice_cols: bad range");
  const int w = end - begin;
  Tensor out({n, w});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = x->value.at(r, begin + c);
  return make_node(std::move(out), {x}, [n, w, begin](Node& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < w; ++c) g.at(r, begin + c) += self.grad.at(r, c);
  });
}

Var sum_cols(const Var& x) {
  require_rank2(x, "sum_cols");
  const int n = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({n, 1});
  for (int r = 0; r < n; ++r) {
    float s = 0.0f;
    for (int c = 0; c < cols; ++c) s += x->value.at(r, c);
    out[static_cast<std::size_t>(r)] = s;
  }
  return make_node(std::move(out), {x}, [n, cols](Node& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < cols; ++c) g.at(r, c) += self.grad[static_cast<std::size_t>(r)];
  });
}

Var l2_normalize_rows(const Var& x, float eps) {
  require_rank2(x, "l2_normalize_rows");
  const int n = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({n, cols});
  std::vector<float> norms(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += static_cast<double>(x->value.at(r, c)) * x->value.at(r, c);
    const float nr = static_cast<float>(std::sqrt(s + eps));
    norms[static_cast<std::size_t>(r)] = nr;
    for (int c = 0; c < cols; ++c) out.at(r, c) = x->value.at(r, c) / nr;
  }
  return make_node(std::move(out), {x}, [n, cols, norms](Node& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (int r = 0; r < n; ++r) {
      float dot = 0.0f;
      for (int c = 0; c < cols; ++c) dot += self.grad.at(r, c) * self.value.at(r, c);
      const float nr = norms[static_cast<std::size_t>(r)];
      for (int c = 0; c < cols; ++c) g.at(r, c) += (self.grad.at(r, c) - self.value.at(r, c) * dot) / nr;
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var minimum(const Var& a, const Var& b) {
  require_same_shape(a, b, "minimum");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a->value[i], b->value[i]);
  return make_node(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      // Ties route to the first argument.
      const bool first = pa->value[i] <= pb->value[i];
      if (first && pa->requires_grad) pa->ensure_grad()[i] += self.grad[i];
      if (!first && pb->requires_grad) pb->ensure_grad()[i] += self.grad[i];
    }
  });
}

Var mul_scalar_var(const Var& x, const Var& s) {
  if (s->value.size() != 1) throw ConfigError("mul_scalar_var: scale must hold one element");
  const float k = s->value[0];
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * k;
  return make_node(std::move(out), {x, s}, [](Node& self) {
    auto& px = self.parents[0];
    auto& ps = self.parents[1];
    const float k = ps->value[0];
    if (px->requires_grad) {
      auto& g = px->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * k;
    }
    if (ps->requires_grad) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->value[i];
      ps->ensure_grad()[0] += acc;
    }
  });
}

Var scale(const Var& x, float k) {
  return unary(x, [k](float v) { return v * k; }, [k](float, float) { return k; });
}

Var add_scalar(const Var& x, float k) {
  return unary(x, [k](float v) { return v + k; }, [](float, float) { return 1.0f; });
}

Var leaky_relu(const Var& x, float slope) {
  return unary(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Var tanh(const Var& x) {
  return unary(x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); }, [](float, float y) { return y * (1.0f - y); });
}

Var exp(const Var& x) {
  return unary(x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Var square(const Var& x) {
  return unary(x, [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Var log_sech2(const Var& x, float eps) {
  auto sech2 = [](float v) {
    const double e = std::exp(-2.0 * std::abs(static_cast<double>(v)));
    return 4.0 * e / ((1.0 + e) * (1.0 + e));
  };
  return unary(
      x, [=](float v) { return static_cast<float>(std::log(sech2(v) + eps)); },
      [=](float v, float) {
        const double s = sech2(v);
        return static_cast<float>(-2.0 * std::tanh(static_cast<double>(v)) * s / (s + eps));
      });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (float v : x->value.values()) s += v;
  return make_node(Tensor::scalar(static_cast<float>(s)), {x}, [](Node& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& x) {
  const float inv = 1.0f / static_cast<float>(std::max<std::size_t>(x->value.size(), 1));
  return scale(sum(x), inv);
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_node(std::move(out), {x}, [](Node& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

int conv_out_dim(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

Var conv2d(const Var& x, const Var& w, const Var& b, int kernel, int stride, int pad) {
  if (x->value.rank() != 4) throw ConfigError("conv2d: expected NHWC input, got " + shape_str(x->value.shape()));
  const int n = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2), c = x->value.dim(3);
  if (kernel < 1 || stride < 1 || pad < 0) throw ConfigError("conv2d: bad kernel/stride/pad");
  const int ho = conv_out_dim(h, kernel, stride, pad);
  const int wo = conv_out_dim(wd, kernel, stride, pad);
  if (ho < 1 || wo < 1) {
    throw ConfigError("conv2d: input " + shape_str(x->value.shape()) + " too small for kernel " +
                      std::to_string(kernel));
  }
  const int kk = kernel * kernel * c;
  if (w->value.rank() != 2 || w->value.dim(0) != kk) {
    throw ConfigError("conv2d: weight shape " + shape_str(w->value.shape()) + " incompatible with " +
                      std::to_string(c) + " input channels");
  }
  const int f = w->value.dim(1);
  if (b->value.size() != static_cast<std::size_t>(f)) throw ConfigError("conv2d: bias width mismatch");

  const int rows = n * ho * wo;
  auto cols = std::make_shared<Tensor>(Shape{rows, kk});
  im2col(x->value.data(), cols->data(), n, h, wd, c, kernel, stride, pad, ho, wo);

  Tensor out({n, ho, wo, f});
  auto o = MapRM(out.data(), rows, f);
  o.noalias() = as_mat(std::as_const(*cols), rows, kk) * as_mat(w->value, kk, f);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b->value.data(), f);

  return make_node(std::move(out), {x, w, b}, [=](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    auto g = CMapRM(self.grad.data(), rows, f);
    if (pw->requires_grad) as_mat(pw->ensure_grad(), kk, f).noalias() += as_mat(std::as_const(*cols), rows, kk).transpose() * g;
    if (pb->requires_grad) MapRM(pb->ensure_grad().data(), 1, f) += g.colwise().sum();
    if (!px->requires_grad) return;
    MatRM dcols = g * as_mat(std::as_const(pw->value), kk, f).transpose();
    col2im_add(dcols.data(), px->ensure_grad().data(), n, h, wd, c, kernel, stride, pad, ho, wo);
  });
}

}  // namespace ocskill::nn
