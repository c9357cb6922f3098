#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "eow/array.hpp"

namespace eow {

// Reverse-mode autodiff over Arrays. Ops append nodes to a Tape; backward()
// walks the records in reverse and yields gradients for every node, so a
// gradient can be read at any intermediate (needed to differentiate energies
// with respect to latents, not just parameters).

enum class OpKind : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Mul,
    Negate,
    Relu,
    Exp,
    Log,
    AddRows,         // matrix + row vector (bias)
    LogSoftmaxRows,  // row-wise log softmax over the full width
    LogSumExpCols,   // row-wise logsumexp over the first `ncols` columns
    SumCols,         // row-wise sum over the first `ncols` columns
    GatherCols,      // out[r] = a[r, idx[r]]
    Sum,
    Mean,
    Scale,        // constant scalar multiply
    WeightedSum,  // sum_i w[i] * a[i] with constant weights
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

struct Node {
    OpKind op = OpKind::Leaf;
    int a = -1;
    int b = -1;
    Array value;
    double factor = 0.0;          // Scale
    int ncols = 0;                // LogSumExpCols / SumCols
    std::vector<int> indices;     // GatherCols
    std::vector<double> weights;  // WeightedSum
};

class Tape;
class Gradients;
Gradients backward(const Tape& t, Var root);

class Tape {
public:
    Var leaf(Array v);

    const Array& value(Var v) const { return nodes_.at(std::size_t(v.id)).value; }
    const Node& node(Var v) const { return nodes_.at(std::size_t(v.id)); }
    std::size_t size() const { return nodes_.size(); }

    // Drop every node recorded after `mark`. Lets a sampler bind parameters
    // once and replay only the per-step suffix.
    void truncate(std::size_t mark);

    int emit(Node n);  // internal: used by the op builders

private:
    std::vector<Node> nodes_;
    friend class Gradients;
    friend Gradients backward(const Tape&, Var);
};

// Op builders. Every result is recorded on the tape and checked finite;
// a NaN/Inf value raises NumericalError.
Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);  // equal shapes, or either side scalar
Var mul(Tape& t, Var a, Var b);  // same broadcasting rule as add
Var negate(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var exp_op(Tape& t, Var a);
Var log_op(Tape& t, Var a);  // input must be strictly positive
Var add_rows(Tape& t, Var mat, Var row);
Var log_softmax(Tape& t, Var logits);
Var logsumexp_cols(Tape& t, Var a, int ncols);
Var sum_cols(Tape& t, Var a, int ncols);
Var gather_cols(Tape& t, Var a, std::vector<int> indices);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var scale(Tape& t, Var a, double factor);
Var weighted_sum(Tape& t, Var a, std::vector<double> weights);

// Result of a reverse sweep from a scalar root: one adjoint per tape node.
// The root's gradient w.r.t. itself is 1.
class Gradients {
public:
    const Array& wrt(Var v) const { return adj_.at(std::size_t(v.id)); }

private:
    explicit Gradients(std::vector<Array> adj) : adj_(std::move(adj)) {}
    std::vector<Array> adj_;
    friend Gradients backward(const Tape&, Var);
};

// Max over coordinates of |analytic - central difference| /
// (|central difference| + 1e-12), with the central difference taken at
// step h. `f` must be evaluable in a neighborhood of x.
double finite_diff_max_rel_error(const std::function<double(const Array&)>& f,
                                 const Array& x, const Array& analytic_grad, double h);

}  // namespace eow
