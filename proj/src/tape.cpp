#include "qgen/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qgen/kernels.hpp"

namespace qgen {

namespace {
const kernels::KernelTable& K() { return kernels::active(); }

constexpr double kLogFloor = 1e-300;
constexpr double kBceClamp = 1e-12;
}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_acc(int id) {
    Node& n = nodes_[id];
    if (!n.touched) {
        n.grad = Tensor(n.value.shape());
        n.touched = true;
    }
    return n.grad;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.touched) return n.grad;
    return Tensor(n.value.shape());
}

void Tape::backward(Var loss) {
    const Tensor& l = nodes_[loss.id].value;
    if (!l.is_scalar()) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + l.shape_str());
    }
    grad_acc(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.touched && n.back) n.back(*this);
    }
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "add");
    Tensor out(ta.shape());
    K().vadd(ta.data(), tb.data(), out.data(), out.size());
    return push(std::move(out), [a, b, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        K().axpy(1.0, g.data(), t.grad_acc(a.id).data(), g.size());
        K().axpy(1.0, g.data(), t.grad_acc(b.id).data(), g.size());
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "sub");
    Tensor out(ta.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
    return push(std::move(out), [a, b, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        K().axpy(1.0, g.data(), t.grad_acc(a.id).data(), g.size());
        K().axpy(-1.0, g.data(), t.grad_acc(b.id).data(), g.size());
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "mul");
    Tensor out(ta.shape());
    K().vmul(ta.data(), tb.data(), out.data(), out.size());
    return push(std::move(out), [a, b, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& ta = t.value_of(a.id);
        const Tensor& tb = t.value_of(b.id);
        Tensor& ga = t.grad_acc(a.id);
        Tensor& gb = t.grad_acc(b.id);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * tb[i];
            gb[i] += g[i] * ta[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    const Tensor& ta = val(a);
    Tensor out(ta.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = c * ta[i];
    return push(std::move(out), [a, c, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        K().axpy(c, g.data(), t.grad_acc(a.id).data(), g.size());
    });
}

Var Tape::add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("add_n: empty input");
    Tensor out = val(xs[0]);
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const Tensor& ti = val(xs[i]);
        require_same_shape(out, ti, "add_n");
        K().axpy(1.0, ti.data(), out.data(), out.size());
    }
    return push(std::move(out), [xs, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        for (Var x : xs) K().axpy(1.0, g.data(), t.grad_acc(x.id).data(), g.size());
    });
}

Var Tape::sum(Var x) {
    const Tensor& tx = val(x);
    Tensor out = Tensor::scalar(K().sum(tx.data(), tx.size()));
    return push(std::move(out), [x, self = node_count()](Tape& t) {
        const double g = t.nodes_[self].grad[0];
        Tensor& gx = t.grad_acc(x.id);
        for (int i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

Var Tape::mean(Var x) {
    const Tensor& tx = val(x);
    if (tx.size() == 0) throw std::invalid_argument("mean: empty tensor");
    const double inv = 1.0 / tx.size();
    Tensor out = Tensor::scalar(K().sum(tx.data(), tx.size()) * inv);
    return push(std::move(out), [x, inv, self = node_count()](Tape& t) {
        const double g = t.nodes_[self].grad[0] * inv;
        Tensor& gx = t.grad_acc(x.id);
        for (int i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

Var Tape::concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input");
    int total = 0;
    for (Var p : parts) total += val(p).size();
    Tensor out({total});
    int off = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p);
        std::copy(tp.data(), tp.data() + tp.size(), out.data() + off);
        off += tp.size();
    }
    return push(std::move(out), [parts, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        int off = 0;
        for (Var p : parts) {
            Tensor& gp = t.grad_acc(p.id);
            K().axpy(1.0, g.data() + off, gp.data(), gp.size());
            off += gp.size();
        }
    });
}

Var Tape::slice(Var x, int from, int len) {
    const Tensor& tx = val(x);
    if (from < 0 || len < 0 || from + len > tx.size()) {
        throw std::invalid_argument("slice: out of bounds");
    }
    Tensor out({len});
    std::copy(tx.data() + from, tx.data() + from + len, out.data());
    return push(std::move(out), [x, from, len, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        K().axpy(1.0, g.data(), t.grad_acc(x.id).data() + from, len);
    });
}

Var Tape::pick(Var x, int index) {
    const Tensor& tx = val(x);
    if (index < 0 || index >= tx.size()) throw std::invalid_argument("pick: index out of bounds");
    return push(Tensor::scalar(tx[index]), [x, index, self = node_count()](Tape& t) {
        t.grad_acc(x.id)[index] += t.nodes_[self].grad[0];
    });
}

Var Tape::neg_log_pick(Var x, int index) {
    const Tensor& tx = val(x);
    if (index < 0 || index >= tx.size()) {
        throw std::invalid_argument("neg_log_pick: index out of bounds");
    }
    const double p = std::max(tx[index], kLogFloor);
    return push(Tensor::scalar(-std::log(p)), [x, index, p, self = node_count()](Tape& t) {
        t.grad_acc(x.id)[index] += t.nodes_[self].grad[0] * (-1.0 / p);
    });
}

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    if (tw.ndim() != 2 || tw.cols() != tx.size() || tb.size() != tw.rows()) {
        throw std::invalid_argument("linear: shape mismatch W" + tw.shape_str() + " x" +
                                    tx.shape_str() + " b" + tb.shape_str());
    }
    const int m = tw.rows(), n = tw.cols();
    Tensor out({m});
    K().matvec(tw.data(), tx.data(), out.data(), m, n);
    K().axpy(1.0, tb.data(), out.data(), m);
    return push(std::move(out), [x, w, b, m, n, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& tx = t.value_of(x.id);
        const Tensor& tw = t.value_of(w.id);
        K().matvec_t_acc(tw.data(), g.data(), t.grad_acc(x.id).data(), m, n);
        K().ger_acc(1.0, g.data(), tx.data(), t.grad_acc(w.id).data(), m, n);
        K().axpy(1.0, g.data(), t.grad_acc(b.id).data(), m);
    });
}

Var Tape::matvec(Var w, Var x) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    if (tw.ndim() != 2 || tw.cols() != tx.size()) {
        throw std::invalid_argument("matvec: shape mismatch W" + tw.shape_str() + " x" +
                                    tx.shape_str());
    }
    const int m = tw.rows(), n = tw.cols();
    Tensor out({m});
    K().matvec(tw.data(), tx.data(), out.data(), m, n);
    return push(std::move(out), [x, w, m, n, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& tx = t.value_of(x.id);
        const Tensor& tw = t.value_of(w.id);
        K().matvec_t_acc(tw.data(), g.data(), t.grad_acc(x.id).data(), m, n);
        K().ger_acc(1.0, g.data(), tx.data(), t.grad_acc(w.id).data(), m, n);
    });
}

Var Tape::row(Var m, int r) {
    const Tensor& tm = val(m);
    if (tm.ndim() != 2 || r < 0 || r >= tm.rows()) {
        throw std::invalid_argument("row: index out of bounds");
    }
    const int c = tm.cols();
    Tensor out({c});
    std::copy(tm.row_ptr(r), tm.row_ptr(r) + c, out.data());
    return push(std::move(out), [m, r, c, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        K().axpy(1.0, g.data(), t.grad_acc(m.id).row_ptr(r), c);
    });
}

Var Tape::rows(Var m, std::vector<int> ids) {
    const Tensor& tm = val(m);
    if (tm.ndim() != 2) throw std::invalid_argument("rows: matrix expected");
    const int c = tm.cols();
    Tensor out({static_cast<int>(ids.size()), c});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tm.rows()) throw std::invalid_argument("rows: id out of bounds");
        std::copy(tm.row_ptr(ids[i]), tm.row_ptr(ids[i]) + c, out.row_ptr(static_cast<int>(i)));
    }
    return push(std::move(out), [m, ids = std::move(ids), c, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gm = t.grad_acc(m.id);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            K().axpy(1.0, g.row_ptr(static_cast<int>(i)), gm.row_ptr(ids[i]), c);
        }
    });
}

Var Tape::stack_rows(const std::vector<Var>& rs) {
    if (rs.empty()) throw std::invalid_argument("stack_rows: empty input");
    const int c = val(rs[0]).size();
    Tensor out({static_cast<int>(rs.size()), c});
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const Tensor& tr = val(rs[i]);
        if (tr.size() != c) throw std::invalid_argument("stack_rows: ragged rows");
        std::copy(tr.data(), tr.data() + c, out.row_ptr(static_cast<int>(i)));
    }
    return push(std::move(out), [rs, c, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        for (std::size_t i = 0; i < rs.size(); ++i) {
            K().axpy(1.0, g.row_ptr(static_cast<int>(i)), t.grad_acc(rs[i].id).data(), c);
        }
    });
}

Var Tape::sigmoid(Var x) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-tx[i]));
    return push(std::move(out), [x, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor& gx = t.grad_acc(x.id);
        for (int i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var Tape::tanh_(Var x) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = std::tanh(tx[i]);
    return push(std::move(out), [x, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor& gx = t.grad_acc(x.id);
        for (int i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var Tape::relu(Var x) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = tx[i] > 0.0 ? tx[i] : 0.0;
    return push(std::move(out), [x, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& tx = t.value_of(x.id);
        Tensor& gx = t.grad_acc(x.id);
        for (int i = 0; i < g.size(); ++i) {
            if (tx[i] > 0.0) gx[i] += g[i];
        }
    });
}

namespace {
void softmax_forward(const Tensor& x, Tensor& out) {
    double mx = x[0];
    for (int i = 1; i < x.size(); ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        z += out[i];
    }
    K().scal(1.0 / z, out.data(), out.size());
}
}  // namespace

Var Tape::softmax(Var x) {
    const Tensor& tx = val(x);
    if (tx.size() == 0) throw std::invalid_argument("softmax: empty input");
    Tensor out(tx.shape());
    softmax_forward(tx, out);
    return push(std::move(out), [x, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        const double gy = K().dot(g.data(), y.data(), g.size());
        Tensor& gx = t.grad_acc(x.id);
        for (int i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - gy);
    });
}

Var Tape::log_softmax(Var x) {
    const Tensor& tx = val(x);
    if (tx.size() == 0) throw std::invalid_argument("log_softmax: empty input");
    double mx = tx[0];
    for (int i = 1; i < tx.size(); ++i) mx = std::max(mx, tx[i]);
    double z = 0.0;
    for (int i = 0; i < tx.size(); ++i) z += std::exp(tx[i] - mx);
    const double lse = mx + std::log(z);
    Tensor out(tx.shape());
    for (int i = 0; i < tx.size(); ++i) out[i] = tx[i] - lse;
    return push(std::move(out), [x, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        const double gs = K().sum(g.data(), g.size());
        Tensor& gx = t.grad_acc(x.id);
        for (int i = 0; i < g.size(); ++i) gx[i] += g[i] - std::exp(y[i]) * gs;
    });
}

Var Tape::cross_entropy(Var logits, int target) {
    const Tensor& tx = val(logits);
    if (target < 0 || target >= tx.size()) {
        throw std::invalid_argument("cross_entropy: target out of bounds");
    }
    double mx = tx[0];
    for (int i = 1; i < tx.size(); ++i) mx = std::max(mx, tx[i]);
    double z = 0.0;
    for (int i = 0; i < tx.size(); ++i) z += std::exp(tx[i] - mx);
    const double lse = mx + std::log(z);
    return push(Tensor::scalar(lse - tx[target]),
                [logits, target, self = node_count()](Tape& t) {
                    const double g = t.nodes_[self].grad[0];
                    const Tensor& tx = t.value_of(logits.id);
                    Tensor sm(tx.shape());
                    softmax_forward(tx, sm);
                    Tensor& gx = t.grad_acc(logits.id);
                    K().axpy(g, sm.data(), gx.data(), gx.size());
                    gx[target] -= g;
                });
}

Var Tape::binary_cross_entropy(Var p, double label) {
    const Tensor& tp = val(p);
    if (!tp.is_scalar()) throw std::invalid_argument("binary_cross_entropy: p must be scalar");
    const double pc = std::clamp(tp[0], kBceClamp, 1.0 - kBceClamp);
    const double v = -(label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc));
    return push(Tensor::scalar(v), [p, label, pc, self = node_count()](Tape& t) {
        const double g = t.nodes_[self].grad[0];
        t.grad_acc(p.id)[0] += g * (pc - label) / (pc * (1.0 - pc));
    });
}

std::pair<Var, Var> Tape::lstm_cell(Var x, Var h, Var c, const LstmVars& p) {
    const Tensor& tx = val(x);
    const Tensor& th = val(h);
    const Tensor& tc = val(c);
    const Tensor& wih = val(p.w_ih);
    const Tensor& whh = val(p.w_hh);
    const Tensor& tb = val(p.bias);
    const int hidden = th.size();
    if (wih.ndim() != 2 || wih.rows() != 4 * hidden || wih.cols() != tx.size() ||
        whh.ndim() != 2 || whh.rows() != 4 * hidden || whh.cols() != hidden ||
        tb.size() != 4 * hidden || tc.size() != hidden) {
        throw std::invalid_argument("lstm_cell: shape mismatch W_ih" + wih.shape_str() + " W_hh" +
                                    whh.shape_str() + " x" + tx.shape_str() + " h" +
                                    th.shape_str());
    }

    Tensor pre({4 * hidden});
    K().matvec(wih.data(), tx.data(), pre.data(), 4 * hidden, tx.size());
    Tensor tmp({4 * hidden});
    K().matvec(whh.data(), th.data(), tmp.data(), 4 * hidden, hidden);
    K().axpy(1.0, tmp.data(), pre.data(), 4 * hidden);
    K().axpy(1.0, tb.data(), pre.data(), 4 * hidden);

    // gates: [input; forget; candidate; output]
    Tensor gates({4 * hidden});
    for (int i = 0; i < hidden; ++i) {
        gates[i] = 1.0 / (1.0 + std::exp(-pre[i]));
        gates[hidden + i] = 1.0 / (1.0 + std::exp(-pre[hidden + i]));
        gates[2 * hidden + i] = std::tanh(pre[2 * hidden + i]);
        gates[3 * hidden + i] = 1.0 / (1.0 + std::exp(-pre[3 * hidden + i]));
    }

    Tensor out({2 * hidden});  // [h'; c']
    Tensor tanh_c({hidden});
    for (int i = 0; i < hidden; ++i) {
        const double cn = gates[hidden + i] * tc[i] + gates[i] * gates[2 * hidden + i];
        out[hidden + i] = cn;
        tanh_c[i] = std::tanh(cn);
        out[i] = gates[3 * hidden + i] * tanh_c[i];
    }

    Var cell = push(std::move(out), [x, h, c, p, hidden, gates = std::move(gates),
                                     tanh_c = std::move(tanh_c), self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;  // [gh'; gc']
        const Tensor& tx = t.value_of(x.id);
        const Tensor& th = t.value_of(h.id);
        const Tensor& tc = t.value_of(c.id);
        const Tensor& wih = t.value_of(p.w_ih.id);
        const Tensor& whh = t.value_of(p.w_hh.id);

        Tensor gpre({4 * hidden});
        Tensor& gc_in = t.grad_acc(c.id);
        for (int i = 0; i < hidden; ++i) {
            const double gi = gates[i];
            const double gf = gates[hidden + i];
            const double gcand = gates[2 * hidden + i];
            const double go = gates[3 * hidden + i];
            const double ghp = g[i];
            const double gc_total = g[hidden + i] + ghp * go * (1.0 - tanh_c[i] * tanh_c[i]);
            const double g_o = ghp * tanh_c[i];
            gpre[i] = gc_total * gcand * gi * (1.0 - gi);
            gpre[hidden + i] = gc_total * tc[i] * gf * (1.0 - gf);
            gpre[2 * hidden + i] = gc_total * gi * (1.0 - gcand * gcand);
            gpre[3 * hidden + i] = g_o * go * (1.0 - go);
            gc_in[i] += gc_total * gf;
        }

        K().matvec_t_acc(wih.data(), gpre.data(), t.grad_acc(x.id).data(), 4 * hidden, tx.size());
        K().matvec_t_acc(whh.data(), gpre.data(), t.grad_acc(h.id).data(), 4 * hidden, hidden);
        K().ger_acc(1.0, gpre.data(), tx.data(), t.grad_acc(p.w_ih.id).data(), 4 * hidden,
                    tx.size());
        K().ger_acc(1.0, gpre.data(), th.data(), t.grad_acc(p.w_hh.id).data(), 4 * hidden, hidden);
        K().axpy(1.0, gpre.data(), t.grad_acc(p.bias.id).data(), 4 * hidden);
    });

    return {slice(cell, 0, hidden), slice(cell, hidden, hidden)};
}

Var Tape::attn_precompute(Var keys, const AttentionVars& p) {
    const Tensor& tk = val(keys);
    const Tensor& wk = val(p.wk);
    const Tensor& tb = val(p.bias);
    if (tk.ndim() != 2 || wk.ndim() != 2 || wk.cols() != tk.cols() || tb.size() != wk.rows()) {
        throw std::invalid_argument("attn_precompute: shape mismatch keys" + tk.shape_str() +
                                    " Wk" + wk.shape_str());
    }
    const int steps = tk.rows();
    const int da = wk.rows();
    Tensor out({steps, da});
    for (int t = 0; t < steps; ++t) {
        K().matvec(wk.data(), tk.row_ptr(t), out.row_ptr(t), da, tk.cols());
        K().axpy(1.0, tb.data(), out.row_ptr(t), da);
    }
    return push(std::move(out), [keys, p, steps, da, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& tk = t.value_of(keys.id);
        const Tensor& wk = t.value_of(p.wk.id);
        Tensor& gk = t.grad_acc(keys.id);
        Tensor& gwk = t.grad_acc(p.wk.id);
        Tensor& gb = t.grad_acc(p.bias.id);
        for (int s = 0; s < steps; ++s) {
            K().matvec_t_acc(wk.data(), g.row_ptr(s), gk.row_ptr(s), da, tk.cols());
            K().ger_acc(1.0, g.row_ptr(s), tk.row_ptr(s), gwk.data(), da, tk.cols());
            K().axpy(1.0, g.row_ptr(s), gb.data(), da);
        }
    });
}

std::pair<Var, Var> Tape::attn_step(Var query, Var proj_keys, Var values,
                                    const AttentionVars& p) {
    const Tensor& tq = val(query);
    const Tensor& tp = val(proj_keys);
    const Tensor& tv = val(values);
    const Tensor& wq = val(p.wq);
    const Tensor& v = val(p.v);
    if (tp.ndim() != 2 || tv.ndim() != 2 || tp.rows() != tv.rows() || wq.ndim() != 2 ||
        wq.cols() != tq.size() || wq.rows() != tp.cols() || v.size() != tp.cols()) {
        throw std::invalid_argument("attn_step: shape mismatch query" + tq.shape_str() +
                                    " proj_keys" + tp.shape_str() + " values" + tv.shape_str());
    }
    const int steps = tp.rows();
    const int da = tp.cols();
    const int dv = tv.cols();

    Tensor u({da});
    K().matvec(wq.data(), tq.data(), u.data(), da, tq.size());

    Tensor z({steps, da});
    Tensor scores({steps});
    for (int s = 0; s < steps; ++s) {
        double* zr = z.row_ptr(s);
        const double* pr = tp.row_ptr(s);
        for (int i = 0; i < da; ++i) zr[i] = std::tanh(u[i] + pr[i]);
        scores[s] = K().dot(v.data(), zr, da);
    }
    Tensor w({steps});
    softmax_forward(scores, w);

    Tensor out({dv + steps});  // [context; weights]
    for (int s = 0; s < steps; ++s) K().axpy(w[s], tv.row_ptr(s), out.data(), dv);
    std::copy(w.data(), w.data() + steps, out.data() + dv);

    Var node = push(std::move(out), [query, proj_keys, values, p, steps, da, dv, w = std::move(w),
                                     z = std::move(z), self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;  // [g_ctx; g_w]
        const Tensor& tq = t.value_of(query.id);
        const Tensor& tv = t.value_of(values.id);
        const Tensor& wq = t.value_of(p.wq.id);
        const Tensor& v = t.value_of(p.v.id);

        // weight gradient from both the explicit weight output and the context
        Tensor gw({steps});
        Tensor& gvalues = t.grad_acc(values.id);
        for (int s = 0; s < steps; ++s) {
            gw[s] = g[dv + s] + K().dot(g.data(), tv.row_ptr(s), dv);
            K().axpy(w[s], g.data(), gvalues.row_ptr(s), dv);
        }

        // softmax backward
        const double gww = K().dot(gw.data(), w.data(), steps);
        Tensor ge({steps});
        for (int s = 0; s < steps; ++s) ge[s] = w[s] * (gw[s] - gww);

        Tensor gu({da});
        Tensor& gpk = t.grad_acc(proj_keys.id);
        Tensor& gv = t.grad_acc(p.v.id);
        for (int s = 0; s < steps; ++s) {
            const double* zr = z.row_ptr(s);
            K().axpy(ge[s], zr, gv.data(), da);
            double* gpr = gpk.row_ptr(s);
            for (int i = 0; i < da; ++i) {
                const double gz = ge[s] * v[i] * (1.0 - zr[i] * zr[i]);
                gpr[i] += gz;
                gu[i] += gz;
            }
        }
        K().matvec_t_acc(wq.data(), gu.data(), t.grad_acc(query.id).data(), da, tq.size());
        K().ger_acc(1.0, gu.data(), tq.data(), t.grad_acc(p.wq.id).data(), da, tq.size());
    });

    return {slice(node, 0, dv), slice(node, dv, steps)};
}

std::pair<Var, Var> Tape::additive_attention(Var query, Var keys, Var values,
                                             const AttentionVars& p) {
    Var pk = attn_precompute(keys, p);
    return attn_step(query, pk, values, p);
}

Var Tape::max_over_time(const std::vector<Var>& seq) {
    if (seq.empty()) throw std::invalid_argument("max_over_time: empty sequence");
    const int d = val(seq[0]).size();
    Tensor out = val(seq[0]);
    std::vector<int> argmax(d, 0);
    for (std::size_t s = 1; s < seq.size(); ++s) {
        const Tensor& ts = val(seq[s]);
        if (ts.size() != d) throw std::invalid_argument("max_over_time: ragged sequence");
        for (int i = 0; i < d; ++i) {
            if (ts[i] > out[i]) {
                out[i] = ts[i];
                argmax[i] = static_cast<int>(s);
            }
        }
    }
    return push(std::move(out), [seq, argmax = std::move(argmax), self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        for (int i = 0; i < g.size(); ++i) {
            t.grad_acc(seq[argmax[i]].id)[i] += g[i];
        }
    });
}

Var Tape::mean_over_span(const std::vector<Var>& seq, int start, int end) {
    if (start < 0 || end < start || end >= static_cast<int>(seq.size())) {
        throw std::invalid_argument("mean_over_span: span out of bounds");
    }
    const int d = val(seq[start]).size();
    const int n = end - start + 1;
    Tensor out({d});
    for (int s = start; s <= end; ++s) K().axpy(1.0 / n, val(seq[s]).data(), out.data(), d);
    return push(std::move(out), [seq, start, end, n, self = node_count()](Tape& t) {
        const Tensor& g = t.nodes_[self].grad;
        for (int s = start; s <= end; ++s) {
            K().axpy(1.0 / n, g.data(), t.grad_acc(seq[s].id).data(), g.size());
        }
    });
}

Var Tape::copy_mixture(Var p_vocab, Var gate, Var attn_weights, std::vector<int> src_ext_ids,
                       int ext_size) {
    const Tensor& pv = val(p_vocab);
    const Tensor& tg = val(gate);
    const Tensor& aw = val(attn_weights);
    if (!tg.is_scalar()) throw std::invalid_argument("copy_mixture: gate must be scalar");
    if (ext_size < pv.size()) throw std::invalid_argument("copy_mixture: ext_size < vocab size");
    if (static_cast<int>(src_ext_ids.size()) != aw.size()) {
        throw std::invalid_argument("copy_mixture: source ids and attention length differ");
    }
    for (int id : src_ext_ids) {
        if (id < 0 || id >= ext_size) throw std::invalid_argument("copy_mixture: bad source id");
    }
    const double g = tg[0];
    Tensor out({ext_size});
    for (int i = 0; i < pv.size(); ++i) out[i] = g * pv[i];
    for (std::size_t t = 0; t < src_ext_ids.size(); ++t) {
        out[src_ext_ids[t]] += (1.0 - g) * aw[t];
    }
    return push(std::move(out), [p_vocab, gate, attn_weights, ids = std::move(src_ext_ids),
                                 self = node_count()](Tape& t) {
        const Tensor& gout = t.nodes_[self].grad;
        const Tensor& pv = t.value_of(p_vocab.id);
        const Tensor& aw = t.value_of(attn_weights.id);
        const double g = t.value_of(gate.id)[0];

        Tensor& gpv = t.grad_acc(p_vocab.id);
        K().axpy(g, gout.data(), gpv.data(), gpv.size());

        double ggate = K().dot(gout.data(), pv.data(), pv.size());
        Tensor& gaw = t.grad_acc(attn_weights.id);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ggate -= gout[ids[i]] * aw[static_cast<int>(i)];
            gaw[static_cast<int>(i)] += (1.0 - g) * gout[ids[i]];
        }
        t.grad_acc(gate.id)[0] += ggate;
    });
}

}  // namespace qgen
