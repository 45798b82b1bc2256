#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "qgen/tensor.hpp"

namespace qgen {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// LSTM cell parameters, conventional four-gate formulation. Preactivations
// are stored stacked as [input; forget; candidate; output], each hidden-size
// rows. w_ih is [4H, in], w_hh is [4H, H], bias is [4H].
struct LstmVars {
    Var w_ih, w_hh, bias;
};

// Additive attention parameters: score_t = v . tanh(Wq q + Wk k_t + b).
struct AttentionVars {
    Var wq, wk, bias, v;
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is the
// topological order used by backward(). A tape is built per training example
// or per forward pass and thrown away afterwards.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);

    const Tensor& val(Var v) const { return nodes_[v.id].value; }

    // Gradient of the last backward() loss w.r.t. node v; zeros if the loss
    // did not depend on it.
    Tensor grad(Var v) const;

    // Runs reverse accumulation from a scalar loss. Gradients accumulate over
    // shared inputs. Throws if the loss node is not scalar.
    void backward(Var loss);

    int node_count() const { return static_cast<int>(nodes_.size()); }

    // ---- arithmetic ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);              // elementwise
    Var scale(Var a, double c);
    Var add_n(const std::vector<Var>& xs);
    Var sum(Var x);                     // scalar
    Var mean(Var x);                    // scalar
    Var concat(const std::vector<Var>& parts);
    Var slice(Var x, int from, int len);
    Var pick(Var x, int index);         // scalar x[index]
    Var neg_log_pick(Var x, int index); // scalar -log x[index]

    // ---- linear algebra ----
    Var linear(Var x, Var w, Var b);    // w x + b
    Var matvec(Var w, Var x);           // w x
    Var row(Var m, int r);
    Var rows(Var m, std::vector<int> ids);        // gather rows -> matrix
    Var stack_rows(const std::vector<Var>& rs);   // vectors -> matrix

    // ---- activations ----
    Var sigmoid(Var x);
    Var tanh_(Var x);
    Var relu(Var x);
    Var softmax(Var x);
    Var log_softmax(Var x);

    // ---- losses ----
    Var cross_entropy(Var logits, int target);        // -log softmax(logits)[target]
    Var binary_cross_entropy(Var p, double label);    // p scalar in (0,1)

    // ---- recurrent / attention ----
    // Returns (h', c').
    std::pair<Var, Var> lstm_cell(Var x, Var h, Var c, const LstmVars& p);

    // Projected keys for repeated attention over a fixed source:
    // row t = Wk k_t + b. keys is [T, dk].
    Var attn_precompute(Var keys, const AttentionVars& p);

    // One attention query against precomputed keys. values is [T, dv].
    // Returns (context vector [dv], weights [T]).
    std::pair<Var, Var> attn_step(Var query, Var proj_keys, Var values, const AttentionVars& p);

    // Convenience wrapper: precompute + one step.
    std::pair<Var, Var> additive_attention(Var query, Var keys, Var values,
                                           const AttentionVars& p);

    // ---- pooling ----
    Var max_over_time(const std::vector<Var>& seq);
    Var mean_over_span(const std::vector<Var>& seq, int start, int end);

    // ---- copy decoder ----
    // dist[j] = gate * p_vocab[j] for j < V, plus (1-gate) * attn mass
    // scattered onto src_ext_ids. Output has ext_size entries, ext_size >= V.
    Var copy_mixture(Var p_vocab, Var gate, Var attn_weights,
                     std::vector<int> src_ext_ids, int ext_size);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool touched = false;
        std::function<void(Tape&)> back;
    };

    Var push(Tensor value, std::function<void(Tape&)> back = nullptr);
    Tensor& grad_acc(int id);
    const Tensor& value_of(int id) const { return nodes_[id].value; }

    std::vector<Node> nodes_;
};

}  // namespace qgen
