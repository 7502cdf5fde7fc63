#include "odetex/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace odetex::ad {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_node(Shape shape, std::vector<float> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool any_requires(const std::vector<std::shared_ptr<Node>>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

// Attaches parents/backward only when recording is on and some parent needs
// gradients; otherwise the result is a plain constant.
Tensor finish(std::shared_ptr<Node> n, std::vector<std::shared_ptr<Node>> parents,
              std::function<void(Node&)> fn) {
  if (g_grad_enabled && any_requires(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Tensor(std::move(n));
}

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// dst[x] += coef * src[(x + dx) mod w] for x in [0, w)
void axpy_shifted(float* dst, const float* src, int w, int dx, float coef) {
  dx = wrap(dx, w);
  const int n1 = w - dx;
  for (int x = 0; x < n1; ++x) dst[x] += coef * src[x + dx];
  for (int x = n1; x < w; ++x) dst[x] += coef * src[x + dx - w];
}

// sum over x of a[x] * b[(x + dx) mod w]
double dot_shifted(const float* a, const float* b, int w, int dx) {
  dx = wrap(dx, w);
  double acc = 0.0;
  const int n1 = w - dx;
  for (int x = 0; x < n1; ++x) acc += static_cast<double>(a[x]) * b[x + dx];
  for (int x = n1; x < w; ++x) acc += static_cast<double>(a[x]) * b[x + dx - w];
  return acc;
}

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0f);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::constant(Shape shape, std::vector<float> values) {
  check(numel(shape) == values.size(), "constant: shape/value size mismatch");
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(float v) { return constant({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  std::vector<float> v(numel(shape), 0.0f);
  return Tensor(make_node(std::move(shape), std::move(v)));
}

Tensor Tensor::full(Shape shape, float value) {
  std::vector<float> v(numel(shape), value);
  return Tensor(make_node(std::move(shape), std::move(v)));
}

Tensor Tensor::randn(Shape shape, Rng& rng) {
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Tensor(make_node(std::move(shape), std::move(v)));
}

Tensor Tensor::param(Shape shape, std::vector<float> values) {
  check(numel(shape) == values.size(), "param: shape/value size mismatch");
  auto n = make_node(std::move(shape), std::move(values));
  n->requires_grad = true;
  return Tensor(std::move(n));
}

float Tensor::item() const {
  check(node_ && node_->values.size() == 1, "item: tensor is not scalar");
  return node_->values[0];
}

Tensor Tensor::detach() const {
  auto n = make_node(node_->shape, node_->values);
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------- elementwise

namespace {

Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* name,
                         const std::function<float(float, float)>& f,
                         // (ga, gb) contributions given (x, y, gout)
                         const std::function<void(float, float, float, float&,
                                                  float&)>& df) {
  check(a.shape() == b.shape(), std::string(name) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  auto n = make_node(a.shape(), std::move(out));
  auto pa = a.node(), pb = b.node();
  return finish(
      n, {pa, pb}, [pa, pb, df](Node& self) {
        const bool na = pa->requires_grad, nb = pb->requires_grad;
        if (na) pa->ensure_grad();
        if (nb) pb->ensure_grad();
        for (std::size_t i = 0; i < self.values.size(); ++i) {
          float ga = 0, gb = 0;
          df(pa->values[i], pb->values[i], self.grad[i], ga, gb);
          if (na) pa->grad[i] += ga;
          if (nb) pb->grad[i] += gb;
        }
      });
}

Tensor unary(const Tensor& a, const std::function<float(float)>& f,
             // gin contribution given (x, out, gout)
             const std::function<float(float, float, float)>& df) {
  const auto& av = a.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto n = make_node(a.shape(), std::move(out));
  auto pa = a.node();
  return finish(n, {pa}, [pa, df](Node& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.values.size(); ++i)
      pa->grad[i] += df(pa->values[i], self.values[i], self.grad[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "add", [](float x, float y) { return x + y; },
      [](float, float, float g, float& ga, float& gb) { ga = g; gb = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "sub", [](float x, float y) { return x - y; },
      [](float, float, float g, float& ga, float& gb) { ga = g; gb = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "mul", [](float x, float y) { return x * y; },
      [](float x, float y, float g, float& ga, float& gb) {
        ga = g * y;
        gb = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "div", [](float x, float y) { return x / y; },
      [](float x, float y, float g, float& ga, float& gb) {
        ga = g / y;
        gb = -g * x / (y * y);
      });
}

Tensor neg(const Tensor& a) {
  return unary(a, [](float x) { return -x; },
               [](float, float, float g) { return -g; });
}

Tensor add_scalar(const Tensor& a, float s) {
  return unary(a, [s](float x) { return x + s; },
               [](float, float, float g) { return g; });
}

Tensor mul_scalar(const Tensor& a, float s) {
  return unary(a, [s](float x) { return x * s; },
               [s](float, float, float g) { return g * s; });
}

Tensor pow_scalar(const Tensor& a, float p) {
  return unary(a,
               [p](float x) { return x > 0.0f ? std::pow(x, p) : 0.0f; },
               [p](float x, float, float g) {
                 return x > 0.0f ? g * p * std::pow(x, p - 1.0f) : 0.0f;
               });
}

Tensor sqrt_t(const Tensor& a) {
  return unary(a, [](float x) { return std::sqrt(x); },
               [](float, float y, float g) {
                 return y > 0.0f ? g * 0.5f / y : 0.0f;
               });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
               [](float, float y, float g) { return g * y * (1.0f - y); });
}

Tensor swish(const Tensor& a) {
  return unary(a,
               [](float x) { return x / (1.0f + std::exp(-x)); },
               [](float x, float, float g) {
                 const float s = 1.0f / (1.0f + std::exp(-x));
                 return g * (s + x * s * (1.0f - s));
               });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](float x) { return x > 0.0f ? x : 0.0f; },
               [](float x, float, float g) { return x > 0.0f ? g : 0.0f; });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
  return unary(a,
               [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
               [lo, hi](float x, float, float g) {
                 return (x >= lo && x <= hi) ? g : 0.0f;
               });
}

Tensor clamp_min(const Tensor& a, float lo) {
  return unary(a, [lo](float x) { return std::max(x, lo); },
               [lo](float x, float, float g) { return x >= lo ? g : 0.0f; });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  check(s.size() == 1, "scale_by: scale must be scalar");
  const float sv = s.values()[0];
  const auto& av = a.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * sv;
  auto n = make_node(a.shape(), std::move(out));
  auto pa = a.node(), ps = s.node();
  return finish(n, {pa, ps}, [pa, ps, sv](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.values.size(); ++i)
        pa->grad[i] += self.grad[i] * sv;
    }
    if (ps->requires_grad) {
      ps->ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < self.values.size(); ++i)
        acc += static_cast<double>(self.grad[i]) * pa->values[i];
      ps->grad[0] += static_cast<float>(acc);
    }
  });
}

Tensor bcast_mul(const Tensor& a, const Tensor& m) {
  check(a.shape().size() == 3 && m.shape().size() == 3 && m.shape()[0] == 1 &&
            m.shape()[1] == a.shape()[1] && m.shape()[2] == a.shape()[2],
        "bcast_mul: expected [C,H,W] and [1,H,W]");
  const int c = a.shape()[0];
  const std::size_t plane = a.size() / c;
  const auto& av = a.values();
  const auto& mv = m.values();
  std::vector<float> out(av.size());
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i)
      out[ci * plane + i] = av[ci * plane + i] * mv[i];
  auto n = make_node(a.shape(), std::move(out));
  auto pa = a.node(), pm = m.node();
  return finish(n, {pa, pm}, [pa, pm, c, plane](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < plane; ++i)
          pa->grad[ci * plane + i] += self.grad[ci * plane + i] * pm->values[i];
    }
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (std::size_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int ci = 0; ci < c; ++ci)
          acc += static_cast<double>(self.grad[ci * plane + i]) *
                 pa->values[ci * plane + i];
        pm->grad[i] += static_cast<float>(acc);
      }
    }
  });
}

// ------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2 &&
            a.shape()[1] == b.shape()[0],
        "matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
            shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], n2 = b.shape()[1];
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<float> out(static_cast<std::size_t>(m) * n2, 0.0f);
  for (int i = 0; i < m; ++i) {
    float* orow = out.data() + static_cast<std::size_t>(i) * n2;
    const float* arow = av.data() + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const float aik = arow[kk];
      if (aik == 0.0f) continue;
      const float* brow = bv.data() + static_cast<std::size_t>(kk) * n2;
      for (int j = 0; j < n2; ++j) orow[j] += aik * brow[j];
    }
  }
  auto node = make_node({m, n2}, std::move(out));
  auto pa = a.node(), pb = b.node();
  return finish(node, {pa, pb}, [pa, pb, m, k, n2](Node& self) {
    // dA = G B^T ; dB = A^T G
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int i = 0; i < m; ++i) {
        const float* grow = self.grad.data() + static_cast<std::size_t>(i) * n2;
        float* garow = pa->grad.data() + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const float* brow =
              pb->values.data() + static_cast<std::size_t>(kk) * n2;
          double acc = 0.0;
          for (int j = 0; j < n2; ++j)
            acc += static_cast<double>(grow[j]) * brow[j];
          garow[kk] += static_cast<float>(acc);
        }
      }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int kk = 0; kk < k; ++kk) {
        float* gbrow = pb->grad.data() + static_cast<std::size_t>(kk) * n2;
        for (int i = 0; i < m; ++i) {
          const float aik = pa->values[static_cast<std::size_t>(i) * k + kk];
          if (aik == 0.0f) continue;
          const float* grow =
              self.grad.data() + static_cast<std::size_t>(i) * n2;
          for (int j = 0; j < n2; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
}

Tensor transpose2d(const Tensor& a) {
  check(a.shape().size() == 2, "transpose2d: expected 2-D tensor");
  const int m = a.shape()[0], n2 = a.shape()[1];
  const auto& av = a.values();
  std::vector<float> out(av.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n2; ++j)
      out[static_cast<std::size_t>(j) * m + i] =
          av[static_cast<std::size_t>(i) * n2 + j];
  auto node = make_node({n2, m}, std::move(out));
  auto pa = a.node();
  return finish(node, {pa}, [pa, m, n2](Node& self) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n2; ++j)
        pa->grad[static_cast<std::size_t>(i) * n2 + j] +=
            self.grad[static_cast<std::size_t>(j) * m + i];
  });
}

Tensor softmax_rows(const Tensor& a) {
  check(a.shape().size() == 2, "softmax_rows: expected 2-D tensor");
  const int m = a.shape()[0], n2 = a.shape()[1];
  const auto& av = a.values();
  std::vector<float> out(av.size());
  for (int i = 0; i < m; ++i) {
    const float* row = av.data() + static_cast<std::size_t>(i) * n2;
    float* orow = out.data() + static_cast<std::size_t>(i) * n2;
    float mx = row[0];
    for (int j = 1; j < n2; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n2; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < n2; ++j) orow[j] *= inv;
  }
  auto node = make_node(a.shape(), std::move(out));
  auto pa = a.node();
  return finish(node, {pa, }, [pa, m, n2](Node& self) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const float* y = self.values.data() + static_cast<std::size_t>(i) * n2;
      const float* g = self.grad.data() + static_cast<std::size_t>(i) * n2;
      float* gin = pa->grad.data() + static_cast<std::size_t>(i) * n2;
      double dot = 0.0;
      for (int j = 0; j < n2; ++j) dot += static_cast<double>(g[j]) * y[j];
      for (int j = 0; j < n2; ++j)
        gin[j] += y[j] * (g[j] - static_cast<float>(dot));
    }
  });
}

// ------------------------------------------------------------------ grid ops

Tensor conv2d_circular(const Tensor& input, const Tensor& kernel,
                       const Tensor& bias) {
  check(input.shape().size() == 3, "conv2d_circular: input must be [C,H,W]");
  check(kernel.shape().size() == 4,
        "conv2d_circular: kernel must be [Cout,Cin,k,k]");
  const int ci = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const int co = kernel.shape()[0], kc = kernel.shape()[1],
            kh = kernel.shape()[2], kw = kernel.shape()[3];
  check(kc == ci, "conv2d_circular: kernel Cin " + std::to_string(kc) +
                      " != input C " + std::to_string(ci));
  check(kh == kw && (kh % 2) == 1, "conv2d_circular: kernel must be odd square");
  check(bias.shape() == Shape{co}, "conv2d_circular: bias must be [Cout]");
  const int r = kh / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const auto& in = input.values();
  const auto& kv = kernel.values();
  const auto& bv = bias.values();
  std::vector<float> out(static_cast<std::size_t>(co) * plane);
  for (int c = 0; c < co; ++c) {
    float* oplane = out.data() + static_cast<std::size_t>(c) * plane;
    std::fill(oplane, oplane + plane, bv[c]);
    for (int i = 0; i < ci; ++i) {
      const float* iplane = in.data() + static_cast<std::size_t>(i) * plane;
      const float* kbase =
          kv.data() + (static_cast<std::size_t>(c) * ci + i) * kh * kw;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const float wv = kbase[(dy + r) * kw + (dx + r)];
          if (wv == 0.0f) continue;
          for (int y = 0; y < h; ++y) {
            const int sy = wrap(y + dy, h);
            axpy_shifted(oplane + static_cast<std::size_t>(y) * w,
                         iplane + static_cast<std::size_t>(sy) * w, w, dx, wv);
          }
        }
      }
    }
  }
  auto node = make_node({co, h, w}, std::move(out));
  auto pin = input.node(), pk = kernel.node(), pb = bias.node();
  return finish(node, {pin, pk, pb},
                [pin, pk, pb, ci, co, h, w, kh, kw, r, plane](Node& self) {
    const auto& g = self.grad;
    if (pin->requires_grad) {
      pin->ensure_grad();
      for (int i = 0; i < ci; ++i) {
        float* gplane = pin->grad.data() + static_cast<std::size_t>(i) * plane;
        for (int c = 0; c < co; ++c) {
          const float* goplane = g.data() + static_cast<std::size_t>(c) * plane;
          const float* kbase =
              pk->values.data() + (static_cast<std::size_t>(c) * ci + i) * kh * kw;
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
              const float wv = kbase[(dy + r) * kw + (dx + r)];
              if (wv == 0.0f) continue;
              for (int y = 0; y < h; ++y) {
                const int sy = wrap(y - dy, h);
                axpy_shifted(gplane + static_cast<std::size_t>(y) * w,
                             goplane + static_cast<std::size_t>(sy) * w, w, -dx,
                             wv);
              }
            }
          }
        }
      }
    }
    if (pk->requires_grad) {
      pk->ensure_grad();
      for (int c = 0; c < co; ++c) {
        const float* goplane = g.data() + static_cast<std::size_t>(c) * plane;
        for (int i = 0; i < ci; ++i) {
          const float* iplane =
              pin->values.data() + static_cast<std::size_t>(i) * plane;
          float* gk = pk->grad.data() +
                      (static_cast<std::size_t>(c) * ci + i) * kh * kw;
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
              double acc = 0.0;
              for (int y = 0; y < h; ++y) {
                const int sy = wrap(y + dy, h);
                acc += dot_shifted(goplane + static_cast<std::size_t>(y) * w,
                                   iplane + static_cast<std::size_t>(sy) * w, w,
                                   dx);
              }
              gk[(dy + r) * kw + (dx + r)] += static_cast<float>(acc);
            }
          }
        }
      }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int c = 0; c < co; ++c) {
        double acc = 0.0;
        const float* goplane = g.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += goplane[i];
        pb->grad[c] += static_cast<float>(acc);
      }
    }
  });
}

Tensor group_norm(const Tensor& x, int groups, float eps) {
  check(x.shape().size() == 3, "group_norm: expected [C,H,W]");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  check(groups >= 1 && c % groups == 0,
        "group_norm: C=" + std::to_string(c) + " not divisible by groups=" +
            std::to_string(groups));
  const int cg = c / groups;
  const std::size_t gsize = static_cast<std::size_t>(cg) * h * w;
  const auto& xv = x.values();
  std::vector<float> out(xv.size());
  auto inv_std = std::make_shared<std::vector<float>>(groups);
  for (int g = 0; g < groups; ++g) {
    const float* base = xv.data() + g * gsize;
    double mean = 0.0;
    for (std::size_t i = 0; i < gsize; ++i) mean += base[i];
    mean /= static_cast<double>(gsize);
    double var = 0.0;
    for (std::size_t i = 0; i < gsize; ++i) {
      const double d = base[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(gsize);
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[g] = is;
    float* obase = out.data() + g * gsize;
    const float mf = static_cast<float>(mean);
    for (std::size_t i = 0; i < gsize; ++i) obase[i] = (base[i] - mf) * is;
  }
  auto node = make_node(x.shape(), std::move(out));
  auto px = x.node();
  return finish(node, {px}, [px, groups, gsize, inv_std](Node& self) {
    px->ensure_grad();
    const double n = static_cast<double>(gsize);
    for (int g = 0; g < groups; ++g) {
      const float* xhat = self.values.data() + g * gsize;
      const float* gy = self.grad.data() + g * gsize;
      float* gx = px->grad.data() + g * gsize;
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) {
        sum_g += gy[i];
        sum_gx += static_cast<double>(gy[i]) * xhat[i];
      }
      const float is = (*inv_std)[g];
      for (std::size_t i = 0; i < gsize; ++i) {
        const double d = gy[i] - sum_g / n - xhat[i] * (sum_gx / n);
        gx[i] += static_cast<float>(is * d);
      }
    }
  });
}

Tensor downsample2x(const Tensor& x) {
  check(x.shape().size() == 3, "downsample2x: expected [C,H,W]");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  check(h % 2 == 0 && w % 2 == 0, "downsample2x: H and W must be even");
  const int oh = h / 2, ow = w / 2;
  const auto& xv = x.values();
  std::vector<float> out(static_cast<std::size_t>(c) * oh * ow);
  for (int ci = 0; ci < c; ++ci) {
    const float* ip = xv.data() + static_cast<std::size_t>(ci) * h * w;
    float* op = out.data() + static_cast<std::size_t>(ci) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx)
        op[y * ow + xx] = 0.25f * (ip[(2 * y) * w + 2 * xx] +
                                   ip[(2 * y) * w + 2 * xx + 1] +
                                   ip[(2 * y + 1) * w + 2 * xx] +
                                   ip[(2 * y + 1) * w + 2 * xx + 1]);
  }
  auto node = make_node({c, oh, ow}, std::move(out));
  auto px = x.node();
  return finish(node, {px}, [px, c, h, w, oh, ow](Node& self) {
    px->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      float* gp = px->grad.data() + static_cast<std::size_t>(ci) * h * w;
      const float* go = self.grad.data() + static_cast<std::size_t>(ci) * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const float g = 0.25f * go[y * ow + xx];
          gp[(2 * y) * w + 2 * xx] += g;
          gp[(2 * y) * w + 2 * xx + 1] += g;
          gp[(2 * y + 1) * w + 2 * xx] += g;
          gp[(2 * y + 1) * w + 2 * xx + 1] += g;
        }
    }
  });
}

namespace {
// Axis weights for circular bilinear 2x upsampling: even output taps copy,
// odd taps average the two wrapped neighbours.
inline void up_taps(int o, int n, int& i0, int& i1, float& w0, float& w1) {
  if (o % 2 == 0) {
    i0 = o / 2;
    i1 = i0;
    w0 = 1.0f;
    w1 = 0.0f;
  } else {
    i0 = o / 2;
    i1 = (i0 + 1) % n;
    w0 = 0.5f;
    w1 = 0.5f;
  }
}
}  // namespace

Tensor upsample2x(const Tensor& x) {
  check(x.shape().size() == 3, "upsample2x: expected [C,H,W]");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int oh = 2 * h, ow = 2 * w;
  const auto& xv = x.values();
  std::vector<float> out(static_cast<std::size_t>(c) * oh * ow);
  for (int ci = 0; ci < c; ++ci) {
    const float* ip = xv.data() + static_cast<std::size_t>(ci) * h * w;
    float* op = out.data() + static_cast<std::size_t>(ci) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      int y0, y1;
      float wy0, wy1;
      up_taps(oy, h, y0, y1, wy0, wy1);
      for (int ox = 0; ox < ow; ++ox) {
        int x0, x1;
        float wx0, wx1;
        up_taps(ox, w, x0, x1, wx0, wx1);
        op[oy * ow + ox] = wy0 * (wx0 * ip[y0 * w + x0] + wx1 * ip[y0 * w + x1]) +
                           wy1 * (wx0 * ip[y1 * w + x0] + wx1 * ip[y1 * w + x1]);
      }
    }
  }
  auto node = make_node({c, oh, ow}, std::move(out));
  auto px = x.node();
  return finish(node, {px}, [px, c, h, w, oh, ow](Node& self) {
    px->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      float* gp = px->grad.data() + static_cast<std::size_t>(ci) * h * w;
      const float* go =
          self.grad.data() + static_cast<std::size_t>(ci) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        int y0, y1;
        float wy0, wy1;
        up_taps(oy, h, y0, y1, wy0, wy1);
        for (int ox = 0; ox < ow; ++ox) {
          int x0, x1;
          float wx0, wx1;
          up_taps(ox, w, x0, x1, wx0, wx1);
          const float g = go[oy * ow + ox];
          gp[y0 * w + x0] += g * wy0 * wx0;
          if (wx1 != 0.0f) gp[y0 * w + x1] += g * wy0 * wx1;
          if (wy1 != 0.0f) {
            gp[y1 * w + x0] += g * wy1 * wx0;
            if (wx1 != 0.0f) gp[y1 * w + x1] += g * wy1 * wx1;
          }
        }
      }
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check(!a.shape().empty() && a.shape().size() == b.shape().size(),
        "concat_channels: rank mismatch");
  for (std::size_t i = 1; i < a.shape().size(); ++i)
    check(a.shape()[i] == b.shape()[i], "concat_channels: trailing dims differ");
  Shape os = a.shape();
  os[0] += b.shape()[0];
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<float> out;
  out.reserve(av.size() + bv.size());
  out.insert(out.end(), av.begin(), av.end());
  out.insert(out.end(), bv.begin(), bv.end());
  auto node = make_node(std::move(os), std::move(out));
  auto pa = a.node(), pb = b.node();
  const std::size_t na = av.size();
  return finish(node, {pa, pb}, [pa, pb, na](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < na; ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = na; i < self.grad.size(); ++i)
        pb->grad[i - na] += self.grad[i];
    }
  });
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  check(!x.shape().empty() && c0 >= 0 && c1 <= x.shape()[0] && c0 < c1,
        "slice_channels: bad range");
  Shape os = x.shape();
  os[0] = c1 - c0;
  const std::size_t stride = x.size() / static_cast<std::size_t>(x.shape()[0]);
  const auto& xv = x.values();
  std::vector<float> out(xv.begin() + c0 * stride, xv.begin() + c1 * stride);
  auto node = make_node(std::move(os), std::move(out));
  auto px = x.node();
  const std::size_t off = c0 * stride;
  return finish(node, {px}, [px, off](Node& self) {
    px->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      px->grad[off + i] += self.grad[i];
  });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  return slice_channels(a, r0, r1);
}

Tensor sum_channels(const Tensor& x) {
  check(x.shape().size() == 3, "sum_channels: expected [C,H,W]");
  const int c = x.shape()[0];
  const std::size_t plane = x.size() / c;
  const auto& xv = x.values();
  std::vector<float> out(plane, 0.0f);
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) out[i] += xv[ci * plane + i];
  auto node = make_node({1, x.shape()[1], x.shape()[2]}, std::move(out));
  auto px = x.node();
  return finish(node, {px}, [px, c, plane](Node& self) {
    px->ensure_grad();
    for (int ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < plane; ++i)
        px->grad[ci * plane + i] += self.grad[i];
  });
}

Tensor scale_shift_channels(const Tensor& x, const Tensor& s, const Tensor& b) {
  check(!x.shape().empty(), "scale_shift_channels: rank-0 input");
  const int c = x.shape()[0];
  check(s.shape() == Shape{c} && b.shape() == Shape{c},
        "scale_shift_channels: scale/bias must be [C]");
  const std::size_t stride = x.size() / static_cast<std::size_t>(c);
  const auto& xv = x.values();
  const auto& sv = s.values();
  const auto& bv = b.values();
  std::vector<float> out(xv.size());
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < stride; ++i)
      out[ci * stride + i] = sv[ci] * xv[ci * stride + i] + bv[ci];
  auto node = make_node(x.shape(), std::move(out));
  auto px = x.node(), ps = s.node(), pb = b.node();
  return finish(node, {px, ps, pb}, [px, ps, pb, c, stride](Node& self) {
    if (px->requires_grad) {
      px->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < stride; ++i)
          px->grad[ci * stride + i] +=
              self.grad[ci * stride + i] * ps->values[ci];
    }
    if (ps->requires_grad) {
      ps->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < stride; ++i)
          acc += static_cast<double>(self.grad[ci * stride + i]) *
                 px->values[ci * stride + i];
        ps->grad[ci] += static_cast<float>(acc);
      }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < stride; ++i)
          acc += self.grad[ci * stride + i];
        pb->grad[ci] += static_cast<float>(acc);
      }
    }
  });
}

Tensor gather_spatial(const Tensor& x, const std::vector<int>& idx, int out_h,
                      int out_w) {
  check(x.shape().size() == 3, "gather_spatial: expected [C,H,W]");
  check(idx.size() == static_cast<std::size_t>(out_h) * out_w,
        "gather_spatial: index count != out_h*out_w");
  const int c = x.shape()[0];
  const std::size_t plane = x.size() / c;
  for (int i : idx)
    check(i >= 0 && static_cast<std::size_t>(i) < plane,
          "gather_spatial: index out of range");
  const auto& xv = x.values();
  const std::size_t oplane = idx.size();
  std::vector<float> out(static_cast<std::size_t>(c) * oplane);
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < oplane; ++i)
      out[ci * oplane + i] = xv[ci * plane + idx[i]];
  auto node = make_node({c, out_h, out_w}, std::move(out));
  auto px = x.node();
  auto idx_copy = std::make_shared<std::vector<int>>(idx);
  return finish(node, {px}, [px, c, plane, oplane, idx_copy](Node& self) {
    px->ensure_grad();
    for (int ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < oplane; ++i)
        px->grad[ci * plane + (*idx_copy)[i]] += self.grad[ci * oplane + i];
  });
}

Tensor roll2d(const Tensor& x, int dy, int dx) {
  check(x.shape().size() == 3, "roll2d: expected [C,H,W]");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  std::vector<int> idx(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      idx[y * w + xx] = wrap(y - dy, h) * w + wrap(xx - dx, w);
  (void)c;
  return gather_spatial(x, idx, h, w);
}

Tensor self_attention(const Tensor& x, int heads, int head_dim,
                      const AttentionParams& p) {
  check(x.shape().size() == 3, "self_attention: expected [C,H,W]");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int hd = heads * head_dim;
  check(p.wq.shape() == Shape{hd, c} && p.wk.shape() == Shape{hd, c} &&
            p.wv.shape() == Shape{hd, c},
        "self_attention: q/k/v projection shape mismatch");
  check(p.wo.shape() == Shape{c, hd} && p.bo.shape() == Shape{c},
        "self_attention: output projection shape mismatch");
  const int n = h * w;
  Tensor tokens = reshape(x, {c, n});
  Tensor q = matmul(p.wq, tokens);
  Tensor k = matmul(p.wk, tokens);
  Tensor v = matmul(p.wv, tokens);
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  Tensor merged;
  for (int hh = 0; hh < heads; ++hh) {
    Tensor qh = slice_rows(q, hh * head_dim, (hh + 1) * head_dim);
    Tensor kh = slice_rows(k, hh * head_dim, (hh + 1) * head_dim);
    Tensor vh = slice_rows(v, hh * head_dim, (hh + 1) * head_dim);
    Tensor scores = mul_scalar(matmul(transpose2d(qh), kh), scale);  // [N,N]
    Tensor attn = softmax_rows(scores);
    Tensor oh = matmul(vh, transpose2d(attn));  // [d, N]
    merged = hh == 0 ? oh : concat_channels(merged, oh);
  }
  Tensor proj = matmul(p.wo, merged);  // [C, N]
  proj = scale_shift_channels(proj, Tensor::constant({c}, std::vector<float>(c, 1.0f)),
                              p.bo);
  return add(x, reshape(proj, {c, h, w}));
}

// ---------------------------------------------------------------- reductions

Tensor sum_all(const Tensor& a) {
  const auto& av = a.values();
  double acc = 0.0;
  for (float v : av) acc += v;
  auto node = make_node({}, {static_cast<float>(acc)});
  auto pa = a.node();
  return finish(node, {pa}, [pa](Node& self) {
    pa->ensure_grad();
    const float g = self.grad[0];
    for (auto& gv : pa->grad) gv += g;
  });
}

Tensor mean_all(const Tensor& a) {
  const auto& av = a.values();
  double acc = 0.0;
  for (float v : av) acc += v;
  const float inv = 1.0f / static_cast<float>(av.size());
  auto node = make_node({}, {static_cast<float>(acc) * inv});
  auto pa = a.node();
  return finish(node, {pa}, [pa, inv](Node& self) {
    pa->ensure_grad();
    const float g = self.grad[0] * inv;
    for (auto& gv : pa->grad) gv += g;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check(numel(shape) == a.size(), "reshape: element count mismatch");
  auto node = make_node(std::move(shape), a.values());
  auto pa = a.node();
  return finish(node, {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i];
  });
}

Tensor sort_rows(const Tensor& a) {
  check(a.shape().size() == 2, "sort_rows: expected 2-D tensor");
  const int m = a.shape()[0], n2 = a.shape()[1];
  const auto& av = a.values();
  std::vector<float> out(av.size());
  auto perm = std::make_shared<std::vector<int>>(av.size());
  std::vector<int> order(n2);
  for (int i = 0; i < m; ++i) {
    const float* row = av.data() + static_cast<std::size_t>(i) * n2;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [row](int x, int y) { return row[x] < row[y]; });
    float* orow = out.data() + static_cast<std::size_t>(i) * n2;
    int* prow = perm->data() + static_cast<std::size_t>(i) * n2;
    for (int j = 0; j < n2; ++j) {
      orow[j] = row[order[j]];
      prow[j] = order[j];
    }
  }
  auto node = make_node(a.shape(), std::move(out));
  auto pa = a.node();
  return finish(node, {pa}, [pa, perm, m, n2](Node& self) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const float* g = self.grad.data() + static_cast<std::size_t>(i) * n2;
      const int* prow = perm->data() + static_cast<std::size_t>(i) * n2;
      float* gin = pa->grad.data() + static_cast<std::size_t>(i) * n2;
      for (int j = 0; j < n2; ++j) gin[prow[j]] += g[j];
    }
  });
}

// ------------------------------------------------------------------ backward

void backward(const Tensor& loss) {
  check(loss.defined() && loss.size() == 1, "backward: loss must be scalar");
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS for topological order.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  std::unordered_set<Node*> visited;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

std::size_t graph_size(const Tensor& t) {
  std::unordered_set<Node*> visited;
  std::vector<Node*> stack{t.node().get()};
  visited.insert(t.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents)
      if (visited.insert(p.get()).second) stack.push_back(p.get());
  }
  return visited.size();
}

}  // namespace odetex::ad
