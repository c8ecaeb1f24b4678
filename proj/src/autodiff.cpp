#include "kgdialog/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgdialog::neural {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tape::Var Tape::push(Tensor value,
                     std::function<void(Tape&, const Node&)> backprop) {
  Node node;
  node.grad = Tensor(value.shape, 0.0);
  node.value = std::move(value);
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Tape::Var Tape::add(Var a, Var b) {
  const Tensor& ta = value_of(a.id);
  const Tensor& tb = value_of(b.id);
  require(ta.same_shape(tb), "add: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  return push(std::move(out), [a, b](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    Tensor& gb = t.grad_of(b.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i];
      gb[i] += self.grad[i];
    }
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  const Tensor& ta = value_of(a.id);
  const Tensor& tb = value_of(b.id);
  require(ta.same_shape(tb), "sub: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  return push(std::move(out), [a, b](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    Tensor& gb = t.grad_of(b.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i];
      gb[i] -= self.grad[i];
    }
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value_of(a.id);
  const Tensor& tb = value_of(b.id);
  require(ta.same_shape(tb), "mul: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  return push(std::move(out), [a, b](Tape& t, const Node& self) {
    const Tensor& va = t.value_of(a.id);
    const Tensor& vb = t.value_of(b.id);
    Tensor& ga = t.grad_of(a.id);
    Tensor& gb = t.grad_of(b.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i] * vb[i];
      gb[i] += self.grad[i] * va[i];
    }
  });
}

Tape::Var Tape::scale(Var a, double c) {
  Tensor out = value_of(a.id);
  for (double& v : out.values) v *= c;
  return push(std::move(out), [a, c](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += c * self.grad[i];
    }
  });
}

Tape::Var Tape::add_const(Var a, double c) {
  Tensor out = value_of(a.id);
  for (double& v : out.values) v += c;
  return push(std::move(out), [a](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i];
    }
  });
}

Tape::Var Tape::dot(Var a, Var b) {
  const Tensor& ta = value_of(a.id);
  const Tensor& tb = value_of(b.id);
  require(ta.size() == tb.size(), "dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i] * tb[i];
  return push(Tensor::scalar(acc), [a, b](Tape& t, const Node& self) {
    const double g = self.grad[0];
    const Tensor& va = t.value_of(a.id);
    const Tensor& vb = t.value_of(b.id);
    Tensor& ga = t.grad_of(a.id);
    Tensor& gb = t.grad_of(b.id);
    for (std::size_t i = 0; i < va.size(); ++i) {
      ga[i] += g * vb[i];
      gb[i] += g * va[i];
    }
  });
}

Tape::Var Tape::matvec(Var m, Var x) {
  const Tensor& tm = value_of(m.id);
  const Tensor& tx = value_of(x.id);
  require(tm.shape.size() == 2 && tm.cols() == tx.size(),
          "matvec: shape mismatch");
  const std::size_t r = tm.rows(), c = tm.cols();
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += tm.values[i * c + j] * tx[j];
    out[i] = acc;
  }
  return push(std::move(out), [m, x, r, c](Tape& t, const Node& self) {
    const Tensor& vm = t.value_of(m.id);
    const Tensor& vx = t.value_of(x.id);
    Tensor& gm = t.grad_of(m.id);
    Tensor& gx = t.grad_of(x.id);
    for (std::size_t i = 0; i < r; ++i) {
      const double g = self.grad[i];
      if (g == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) {
        gm.values[i * c + j] += g * vx[j];
        gx[j] += g * vm.values[i * c + j];
      }
    }
  });
}

Tape::Var Tape::matvec_transposed(Var m, Var x) {
  const Tensor& tm = value_of(m.id);
  const Tensor& tx = value_of(x.id);
  require(tm.shape.size() == 2 && tm.rows() == tx.size(),
          "matvec_transposed: shape mismatch");
  const std::size_t r = tm.rows(), c = tm.cols();
  Tensor out({c});
  for (std::size_t i = 0; i < r; ++i) {
    const double xi = tx[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) {
      out[j] += xi * tm.values[i * c + j];
    }
  }
  return push(std::move(out), [m, x, r, c](Tape& t, const Node& self) {
    const Tensor& vm = t.value_of(m.id);
    const Tensor& vx = t.value_of(x.id);
    Tensor& gm = t.grad_of(m.id);
    Tensor& gx = t.grad_of(x.id);
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        gm.values[i * c + j] += vx[i] * self.grad[j];
        acc += vm.values[i * c + j] * self.grad[j];
      }
      gx[i] += acc;
    }
  });
}

Tape::Var Tape::concat(Var a, Var b) {
  const Tensor& ta = value_of(a.id);
  const Tensor& tb = value_of(b.id);
  Tensor out({ta.size() + tb.size()});
  std::copy(ta.values.begin(), ta.values.end(), out.values.begin());
  std::copy(tb.values.begin(), tb.values.end(),
            out.values.begin() + static_cast<std::ptrdiff_t>(ta.size()));
  const std::size_t na = ta.size();
  return push(std::move(out), [a, b, na](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    Tensor& gb = t.grad_of(b.id);
    for (std::size_t i = 0; i < na; ++i) ga[i] += self.grad[i];
    for (std::size_t i = na; i < self.grad.size(); ++i) {
      gb[i - na] += self.grad[i];
    }
  });
}

Tape::Var Tape::tanh(Var a) {
  Tensor out = value_of(a.id);
  for (double& v : out.values) v = std::tanh(v);
  return push(std::move(out), [a](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      ga[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tape::Var Tape::sigmoid(Var a) {
  Tensor out = value_of(a.id);
  for (double& v : out.values) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                 : std::exp(v) / (1.0 + std::exp(v));
  }
  return push(std::move(out), [a](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      ga[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tape::Var Tape::relu(Var a) {
  Tensor out = value_of(a.id);
  for (double& v : out.values) v = std::max(0.0, v);
  return push(std::move(out), [a](Tape& t, const Node& self) {
    const Tensor& va = t.value_of(a.id);
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (va[i] > 0.0) ga[i] += self.grad[i];
    }
  });
}

Tape::Var Tape::exp(Var a) {
  Tensor out = value_of(a.id);
  for (double& v : out.values) v = std::exp(v);
  return push(std::move(out), [a](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i] * self.value[i];
    }
  });
}

Tape::Var Tape::log_clamped(Var a, double floor) {
  Tensor out = value_of(a.id);
  for (double& v : out.values) v = std::log(std::max(v, floor));
  return push(std::move(out), [a, floor](Tape& t, const Node& self) {
    const Tensor& va = t.value_of(a.id);
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (va[i] > floor) ga[i] += self.grad[i] / va[i];
    }
  });
}

Tape::Var Tape::pow_const(Var a, double exponent) {
  const Tensor& ta = value_of(a.id);
  Tensor out = ta;
  for (double& v : out.values) v = std::pow(v, exponent);
  return push(std::move(out), [a, exponent](Tape& t, const Node& self) {
    const Tensor& va = t.value_of(a.id);
    Tensor& ga = t.grad_of(a.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (va[i] == 0.0) continue;  // subgradient 0 at the boundary
      ga[i] += self.grad[i] * exponent * std::pow(va[i], exponent - 1.0);
    }
  });
}

Tape::Var Tape::softmax(Var a) {
  const Tensor& ta = value_of(a.id);
  require(!ta.values.empty(), "softmax: empty input");
  Tensor out = ta;
  const double mx = *std::max_element(out.values.begin(), out.values.end());
  double z = 0.0;
  for (double& v : out.values) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : out.values) v /= z;
  return push(std::move(out), [a](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    double inner = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      inner += self.grad[i] * self.value[i];
    }
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.value[i] * (self.grad[i] - inner);
    }
  });
}

Tape::Var Tape::sum(Var a) {
  const Tensor& ta = value_of(a.id);
  double acc = 0.0;
  for (double v : ta.values) acc += v;
  return push(Tensor::scalar(acc), [a](Tape& t, const Node& self) {
    Tensor& ga = t.grad_of(a.id);
    for (double& g : ga.values) g += self.grad[0];
  });
}

Tape::Var Tape::pick(Var a, std::size_t i) {
  const Tensor& ta = value_of(a.id);
  require(i < ta.size(), "pick: index out of range");
  return push(Tensor::scalar(ta[i]), [a, i](Tape& t, const Node& self) {
    t.grad_of(a.id)[i] += self.grad[0];
  });
}

Tape::Var Tape::pick_sum(Var a, std::vector<std::size_t> idx) {
  const Tensor& ta = value_of(a.id);
  double acc = 0.0;
  for (std::size_t i : idx) {
    require(i < ta.size(), "pick_sum: index out of range");
    acc += ta[i];
  }
  return push(Tensor::scalar(acc),
              [a, idx = std::move(idx)](Tape& t, const Node& self) {
                Tensor& ga = t.grad_of(a.id);
                for (std::size_t i : idx) ga[i] += self.grad[0];
              });
}

Tape::Var Tape::mean_rows(Var m, std::vector<std::size_t> rows) {
  const Tensor& tm = value_of(m.id);
  require(tm.shape.size() == 2, "mean_rows: matrix expected");
  require(!rows.empty(), "mean_rows: row list is empty");
  const std::size_t c = tm.cols();
  Tensor out({c});
  for (std::size_t r : rows) {
    require(r < tm.rows(), "mean_rows: row out of range");
    for (std::size_t j = 0; j < c; ++j) out[j] += tm.values[r * c + j];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : out.values) v *= inv;
  return push(std::move(out), [m, rows = std::move(rows), c,
                               inv](Tape& t, const Node& self) {
    Tensor& gm = t.grad_of(m.id);
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < c; ++j) {
        gm.values[r * c + j] += inv * self.grad[j];
      }
    }
  });
}

Tape::Var Tape::row(Var m, std::size_t r) {
  const Tensor& tm = value_of(m.id);
  require(tm.shape.size() == 2 && r < tm.rows(), "row: out of range");
  const std::size_t c = tm.cols();
  Tensor out({c});
  for (std::size_t j = 0; j < c; ++j) out[j] = tm.values[r * c + j];
  return push(std::move(out), [m, r, c](Tape& t, const Node& self) {
    Tensor& gm = t.grad_of(m.id);
    for (std::size_t j = 0; j < c; ++j) {
      gm.values[r * c + j] += self.grad[j];
    }
  });
}

Tape::Var Tape::add_rows(Var a, std::vector<std::size_t> ra, Var b,
                         std::vector<std::size_t> rb) {
  const Tensor& ta = value_of(a.id);
  const Tensor& tb = value_of(b.id);
  require(ta.shape.size() == 2 && tb.shape.size() == 2 &&
              ta.cols() == tb.cols() && ra.size() == rb.size() && !ra.empty(),
          "add_rows: shape mismatch");
  const std::size_t c = ta.cols();
  const std::size_t len = ra.size();
  Tensor out({len, c});
  for (std::size_t i = 0; i < len; ++i) {
    require(ra[i] < ta.rows() && rb[i] < tb.rows(),
            "add_rows: row out of range");
    for (std::size_t j = 0; j < c; ++j) {
      out.values[i * c + j] =
          ta.values[ra[i] * c + j] + tb.values[rb[i] * c + j];
    }
  }
  return push(std::move(out),
              [a, b, ra = std::move(ra), rb = std::move(rb),
               c](Tape& t, const Node& self) {
                Tensor& ga = t.grad_of(a.id);
                Tensor& gb = t.grad_of(b.id);
                for (std::size_t i = 0; i < ra.size(); ++i) {
                  for (std::size_t j = 0; j < c; ++j) {
                    const double g = self.grad.values[i * c + j];
                    ga.values[ra[i] * c + j] += g;
                    gb.values[rb[i] * c + j] += g;
                  }
                }
              });
}

Tape::Var Tape::div(Var a, Var b_scalar) {
  const Tensor& ta = value_of(a.id);
  const Tensor& tb = value_of(b_scalar.id);
  require(tb.size() == 1, "div: denominator must be scalar");
  require(tb[0] != 0.0, "div: division by zero");
  Tensor out = ta;
  const double inv = 1.0 / tb[0];
  for (double& v : out.values) v *= inv;
  return push(std::move(out), [a, b_scalar](Tape& t, const Node& self) {
    const Tensor& va = t.value_of(a.id);
    const double b = t.value_of(b_scalar.id)[0];
    Tensor& ga = t.grad_of(a.id);
    Tensor& gb = t.grad_of(b_scalar.id);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i] / b;
      gb[0] -= self.grad[i] * va[i] / (b * b);
    }
  });
}

Tape::Var Tape::cosine(Var a, Var b) {
  Var na = pow_const(dot(a, a), 0.5);
  Var nb = pow_const(dot(b, b), 0.5);
  return div(dot(a, b), mul(na, nb));
}

void Tape::backward(Var loss) {
  require(loss.valid() && loss.id < nodes_.size(), "backward: invalid var");
  require(nodes_[loss.id].value.size() == 1, "backward: loss must be scalar");
  require(!backward_done_, "backward: tape already consumed");
  backward_done_ = true;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.backprop) node.backprop(*this, node);
  }
}

}  // namespace kgdialog::neural
