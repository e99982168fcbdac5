// SPDX-License-Identifier: Apache-2.0
#include "mgt/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mgt/error.hpp"

namespace mgt {

Parameter::Parameter(std::string n, Tensor v, bool f)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()), frozen(f) {}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (p.frozen) return constant(p.value);
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_[id].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(Var v) const {
  const auto& node = nodes_[v.id()];
  if (node.grad.empty()) throw Error("node " + std::to_string(v.id()) + " has no gradient");
  return node.grad;
}

Tensor* Tape::grad_sink(std::size_t id) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return &node.grad;
}

void Tape::backward(Var root, double seed) {
  if (root.value().size() != 1) {
    throw DimensionError("backward root must be a single value, got " +
                         shape_string(root.value().shape()));
  }
  Tensor* g = grad_sink(root.id());
  if (!g) return;
  (*g)[0] += seed;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (node.param && !node.grad.empty()) {
      auto& pg = node.param->grad;
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += node.grad[k];
    }
  }
}

namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error("vars belong to different tapes");
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& tape = a.tape();
  Tensor out = matmul(a.value(), b.value());
  const std::array<std::size_t, 2> in{a.id(), b.id()};
  return tape.record(std::move(out), in, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Tensor& gc = t.upstream(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (Tensor* ga = t.grad_sink(ia)) {
      // dA = dC * B^T
      for (std::size_t r = 0; r < m; ++r) {
        const double* gcr = gc.data() + r * n;
        double* gar = ga->data() + r * k;
        for (std::size_t x = 0; x < k; ++x) {
          const double* br = bv.data() + x * n;
          double acc = 0.0;
          for (std::size_t s = 0; s < n; ++s) acc += gcr[s] * br[s];
          gar[x] += acc;
        }
      }
    }
    if (Tensor* gb = t.grad_sink(ib)) {
      // dB = A^T * dC
      for (std::size_t r = 0; r < m; ++r) {
        const double* ar = av.data() + r * k;
        const double* gcr = gc.data() + r * n;
        for (std::size_t x = 0; x < k; ++x) {
          const double w = ar[x];
          double* gbr = gb->data() + x * n;
          for (std::size_t s = 0; s < n; ++s) gbr[s] += w * gcr[s];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  Tensor out({av.cols(), av.rows()});
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
  const std::array<std::size_t, 1> in{a.id()};
  return a.tape().record(std::move(out), in, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor* ga = t.grad_sink(ia);
    for (std::size_t r = 0; r < ga->rows(); ++r)
      for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += g(c, r);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("add shape mismatch: " + shape_string(av.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::array<std::size_t, 2> in{a.id(), b.id()};
  return a.tape().record(std::move(out), in, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    for (auto id : {ia, ib}) {
      if (Tensor* gi = t.grad_sink(id))
        for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
    }
  });
}

Var add_constant(Var a, const Tensor& c) {
  const Tensor& av = a.value();
  if (av.shape() != c.shape()) {
    throw DimensionError("add_constant shape mismatch: " + shape_string(av.shape()) + " + " +
                         shape_string(c.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  const std::array<std::size_t, 1> in{a.id()};
  return a.tape().record(std::move(out), in, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor* ga = t.grad_sink(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var add_row_bias(Var x, Var b) {
  require_same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  require_matrix(xv, "add_row_bias");
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_string(bv.shape()) + " vs input " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  const std::array<std::size_t, 2> in{x.id(), b.id()};
  return x.tape().record(std::move(out), in, [ix = x.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    if (Tensor* gx = t.grad_sink(ix))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    if (Tensor* gb = t.grad_sink(ib))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g(r, c);
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  const std::array<std::size_t, 1> in{a.id()};
  return a.tape().record(std::move(out), in, [ia = a.id(), s](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor* ga = t.grad_sink(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::array<std::size_t, 1> in{a.id()};
  return a.tape().record(std::move(out), in, [ia = a.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& x = t.value(ia);
    Tensor* ga = t.grad_sink(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) (*ga)[i] += g[i];
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: affine params must have " + std::to_string(n) + " entries");
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  // xhat and 1/sigma are kept for the backward pass.
  Tensor xhat({m, n});
  std::vector<double> inv_std(m);
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xv(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = xv(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * gv[c] + bv[c];
    }
  }
  const std::array<std::size_t, 3> in{x.id(), gain.id(), bias.id()};
  return x.tape().record(
      std::move(out), in,
      [ix = x.id(), ig = gain.id(), ib = bias.id(), xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& g = t.upstream(self);
        const Tensor& gv = t.value(ig);
        const std::size_t m = g.rows(), n = g.cols();
        if (Tensor* gg = t.grad_sink(ig))
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) (*gg)[c] += g(r, c) * xhat(r, c);
        if (Tensor* gb = t.grad_sink(ib))
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) (*gb)[c] += g(r, c);
        if (Tensor* gx = t.grad_sink(ix)) {
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < m; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double d = g(r, c) * gv[c];
              mean_d += d;
              mean_dx += d * xhat(r, c);
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t c = 0; c < n; ++c) {
              const double d = g(r, c) * gv[c];
              (*gx)(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
            }
          }
        }
      });
}

Var masked_row_softmax(Var scores) {
  Tensor out = masked_row_softmax(scores.value());
  const std::array<std::size_t, 1> in{scores.id()};
  return scores.tape().record(std::move(out), in, [is = scores.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& y = t.value(self);
    Tensor* gs = t.grad_sink(is);
    const std::size_t n = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += y(r, c) * g(r, c);
      // Blocked entries have y == 0 and so receive exactly zero gradient.
      for (std::size_t c = 0; c < n; ++c) (*gs)(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

double cross_entropy_value(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  std::size_t top = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] > logits[top]) top = j;
  const double mx = logits[top];
  // log(sum exp(x - mx)) = log1p(sum over j != top), which stays accurate
  // when the label dominates.
  double rest = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (j != top) rest += std::exp(logits[j] - mx);
  return (mx - logits[label]) + std::log1p(rest);
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& lv = logits.value();
  if (!(lv.rank() == 1 || (lv.rank() == 2 && lv.rows() == 1))) {
    throw DimensionError("cross_entropy expects [K] or [1xK] logits, got " + shape_string(lv.shape()));
  }
  if (!lv.all_finite()) throw NumericError("cross_entropy: non-finite logits");
  const double loss = cross_entropy_value(lv.values(), label);
  const std::array<std::size_t, 1> in{logits.id()};
  return logits.tape().record(
      Tensor({1}, {loss}), in, [il = logits.id(), label](Tape& t, std::size_t self) {
        const double g = t.upstream(self)[0];
        const Tensor& lv = t.value(il);
        Tensor* gl = t.grad_sink(il);
        double mx = kNegInf;
        for (double v : lv.values()) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : lv.values()) sum += std::exp(v - mx);
        for (std::size_t j = 0; j < lv.size(); ++j) {
          const double p = std::exp(lv[j] - mx) / sum;
          (*gl)[j] += g * (p - (j == label ? 1.0 : 0.0));
        }
      });
}

Var weighted_sum(Var x, const Tensor& w) {
  const Tensor& xv = x.value();
  if (xv.shape() != w.shape()) {
    throw DimensionError("weighted_sum shape mismatch: " + shape_string(xv.shape()) + " vs " +
                         shape_string(w.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * w[i];
  const std::array<std::size_t, 1> in{x.id()};
  return x.tape().record(Tensor({1}, {s}), in, [ix = x.id(), w](Tape& t, std::size_t self) {
    const double g = t.upstream(self)[0];
    Tensor* gx = t.grad_sink(ix);
    for (std::size_t i = 0; i < w.size(); ++i) (*gx)[i] += g * w[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  if (count == 0 || begin + count > xv.cols()) {
    throw IndexError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(xv.shape()));
  }
  Tensor out({xv.rows(), count});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  const std::array<std::size_t, 1> in{x.id()};
  return x.tape().record(std::move(out), in, [ix = x.id(), begin](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor* gx = t.grad_sink(ix);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*gx)(r, begin + c) += g(r, c);
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_rows");
  if (count == 0 || begin + count > xv.rows()) {
    throw IndexError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.cols();
  std::vector<double> data(xv.data() + begin * n, xv.data() + (begin + count) * n);
  const std::array<std::size_t, 1> in{x.id()};
  return x.tape().record(Tensor({count, n}, std::move(data)), in,
                         [ix = x.id(), off = begin * n](Tape& t, std::size_t self) {
                           const Tensor& g = t.upstream(self);
                           Tensor* gx = t.grad_sink(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) (*gx)[off + i] += g[i];
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != m) throw DimensionError("concat_cols row count mismatch");
    n += p.value().cols();
    ids.push_back(p.id());
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
    off += pv.cols();
  }
  return parts[0].tape().record(std::move(out), ids, [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t w = t.value(id).cols();
      if (Tensor* gp = t.grad_sink(id))
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) (*gp)(r, c) += g(r, off + c);
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    require_matrix(p.value(), "concat_rows");
    if (p.value().cols() != n) throw DimensionError("concat_rows column count mismatch");
    m += p.value().rows();
    ids.push_back(p.id());
  }
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& p : parts) data.insert(data.end(), p.value().data(), p.value().data() + p.value().size());
  return parts[0].tape().record(Tensor({m, n}, std::move(data)), ids, [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t len = t.value(id).size();
      if (Tensor* gp = t.grad_sink(id))
        for (std::size_t i = 0; i < len; ++i) (*gp)[i] += g[off + i];
      off += len;
    }
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows needs at least one index");
  const std::size_t n = tv.cols();
  Tensor out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw IndexError("gather_rows index " + std::to_string(ids[r]) + " out of range for " +
                       shape_string(tv.shape()));
    }
    std::copy_n(tv.data() + ids[r] * n, n, out.data() + r * n);
  }
  const std::array<std::size_t, 1> in{table.id()};
  return table.tape().record(
      std::move(out), in,
      [it = table.id(), rows = std::vector<std::size_t>(ids.begin(), ids.end())](Tape& t,
                                                                                 std::size_t self) {
        const Tensor& g = t.upstream(self);
        Tensor* gt = t.grad_sink(it);
        const std::size_t n = g.cols();
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (std::size_t c = 0; c < n; ++c) (*gt)(rows[r], c) += g(r, c);
      });
}

Var block_slice(Var x, std::size_t index, std::size_t len) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("block_slice expects rank 3, got " + shape_string(xv.shape()));
  if (index >= xv.dim(0) || len == 0 || len > xv.dim(1) || len > xv.dim(2)) {
    throw IndexError("block_slice(" + std::to_string(index) + ", " + std::to_string(len) +
                     ") out of range for " + shape_string(xv.shape()));
  }
  Tensor out({len, len});
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t c = 0; c < len; ++c) out(r, c) = xv(index, r, c);
  const std::array<std::size_t, 1> in{x.id()};
  return x.tape().record(std::move(out), in, [ix = x.id(), index](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor* gx = t.grad_sink(ix);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*gx)(index, r, c) += g(r, c);
  });
}

}  // namespace mgt
