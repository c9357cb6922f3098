#include "eow/tape.hpp"

#include <cmath>
#include <cstring>

#include "eow/kernels.hpp"

namespace eow {

namespace {

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::Negate: return "negate";
        case OpKind::Relu: return "relu";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::AddRows: return "add_rows";
        case OpKind::LogSoftmaxRows: return "log_softmax";
        case OpKind::LogSumExpCols: return "logsumexp_cols";
        case OpKind::SumCols: return "sum_cols";
        case OpKind::GatherCols: return "gather_cols";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::Scale: return "scale";
        case OpKind::WeightedSum: return "weighted_sum";
    }
    return "?";
}

void require(bool ok, const char* msg) {
    if (!ok) throw ShapeError(msg);
}

// Rank-1 arrays act as a single row in the row-wise ops.
int row_count(const Array& a) { return a.rank() == 1 ? 1 : a.rows(); }
int col_count(const Array& a) { return a.rank() == 1 ? a.shape()[0] : a.cols(); }

}  // namespace

Var Tape::leaf(Array v) {
    Node n;
    n.op = OpKind::Leaf;
    n.value = std::move(v);
    return Var{emit(std::move(n))};
}

void Tape::truncate(std::size_t mark) {
    if (mark > nodes_.size()) throw ShapeError("Tape::truncate past end");
    nodes_.resize(mark);
}

int Tape::emit(Node n) {
    if (!kernels::active().all_finite(n.value.data(), n.value.numel()))
        throw NumericalError(std::string("non-finite values out of op ") + op_name(n.op));
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

Var matmul(Tape& t, Var va, Var vb) {
    const Array& a = t.value(va);
    const Array& b = t.value(vb);
    require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + a.shape_str() + " vs " + b.shape_str());
    Node n;
    n.op = OpKind::MatMul;
    n.a = va.id;
    n.b = vb.id;
    n.value = Array({a.rows(), b.cols()});
    kernels::active().gemm_nn(a.rows(), a.cols(), b.cols(), a.data(), b.data(), n.value.data(), false);
    return Var{t.emit(std::move(n))};
}

namespace {

Var elementwise_binary(Tape& t, Var va, Var vb, OpKind op) {
    const Array& a = t.value(va);
    const Array& b = t.value(vb);
    const bool a_scalar = a.is_scalar();
    const bool b_scalar = b.is_scalar();
    require(a_scalar || b_scalar || a.same_shape(b),
            "elementwise: shapes must match or one side must be scalar");
    Node n;
    n.op = op;
    n.a = va.id;
    n.b = vb.id;
    const Array& big = a_scalar ? b : a;
    n.value = Array(big.shape());
    const std::size_t m = big.numel();
    const auto& k = kernels::active();
    if (a.same_shape(b)) {
        (op == OpKind::Add ? k.add : k.mul)(a.data(), b.data(), n.value.data(), m);
    } else if (op == OpKind::Add) {
        const double s = (a_scalar ? a : b).scalar_value();
        const double* big_p = big.data();
        for (std::size_t i = 0; i < m; ++i) n.value.data()[i] = big_p[i] + s;
    } else {
        const double s = (a_scalar ? a : b).scalar_value();
        k.scale(s, big.data(), n.value.data(), m);
    }
    return Var{t.emit(std::move(n))};
}

}  // namespace

Var add(Tape& t, Var a, Var b) { return elementwise_binary(t, a, b, OpKind::Add); }
Var mul(Tape& t, Var a, Var b) { return elementwise_binary(t, a, b, OpKind::Mul); }

Var negate(Tape& t, Var va) {
    const Array& a = t.value(va);
    Node n;
    n.op = OpKind::Negate;
    n.a = va.id;
    n.value = Array(a.shape());
    kernels::active().negate(a.data(), n.value.data(), a.numel());
    return Var{t.emit(std::move(n))};
}

Var relu(Tape& t, Var va) {
    const Array& a = t.value(va);
    Node n;
    n.op = OpKind::Relu;
    n.a = va.id;
    n.value = Array(a.shape());
    kernels::active().relu(a.data(), n.value.data(), a.numel());
    return Var{t.emit(std::move(n))};
}

Var exp_op(Tape& t, Var va) {
    const Array& a = t.value(va);
    Node n;
    n.op = OpKind::Exp;
    n.a = va.id;
    n.value = Array(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) n.value.data()[i] = std::exp(a[i]);
    return Var{t.emit(std::move(n))};
}

Var log_op(Tape& t, Var va) {
    const Array& a = t.value(va);
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (!(a[i] > 0.0)) throw NumericalError("log: input must be strictly positive");
    Node n;
    n.op = OpKind::Log;
    n.a = va.id;
    n.value = Array(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) n.value.data()[i] = std::log(a[i]);
    return Var{t.emit(std::move(n))};
}

Var add_rows(Tape& t, Var vmat, Var vrow) {
    const Array& m = t.value(vmat);
    const Array& r = t.value(vrow);
    require(m.rank() == 2 && r.rank() == 1, "add_rows: matrix + row vector");
    require(m.cols() == r.shape()[0], "add_rows: width mismatch");
    Node n;
    n.op = OpKind::AddRows;
    n.a = vmat.id;
    n.b = vrow.id;
    n.value = Array(m.shape());
    for (int i = 0; i < m.rows(); ++i)
        kernels::active().add(m.data() + std::size_t(i) * m.cols(), r.data(),
                              n.value.data() + std::size_t(i) * m.cols(), std::size_t(m.cols()));
    return Var{t.emit(std::move(n))};
}

Var log_softmax(Tape& t, Var vlogits) {
    const Array& x = t.value(vlogits);
    const int rows = row_count(x), cols = col_count(x);
    Node n;
    n.op = OpKind::LogSoftmaxRows;
    n.a = vlogits.id;
    n.value = Array(x.shape());
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.data() + std::size_t(r) * cols;
        double* yr = n.value.data() + std::size_t(r) * cols;
        double m = xr[0];
        for (int j = 1; j < cols; ++j) m = std::max(m, xr[j]);
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += std::exp(xr[j] - m);
        const double lse = m + std::log(s);
        for (int j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
    }
    return Var{t.emit(std::move(n))};
}

Var logsumexp_cols(Tape& t, Var va, int ncols) {
    const Array& x = t.value(va);
    const int rows = row_count(x), cols = col_count(x);
    require(ncols >= 1 && ncols <= cols, "logsumexp_cols: ncols out of range");
    Node n;
    n.op = OpKind::LogSumExpCols;
    n.a = va.id;
    n.ncols = ncols;
    n.value = Array({rows});
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.data() + std::size_t(r) * cols;
        double m = xr[0];
        for (int j = 1; j < ncols; ++j) m = std::max(m, xr[j]);
        double s = 0.0;
        for (int j = 0; j < ncols; ++j) s += std::exp(xr[j] - m);
        n.value.data()[r] = m + std::log(s);
    }
    return Var{t.emit(std::move(n))};
}

Var sum_cols(Tape& t, Var va, int ncols) {
    const Array& x = t.value(va);
    const int rows = row_count(x), cols = col_count(x);
    require(ncols >= 1 && ncols <= cols, "sum_cols: ncols out of range");
    Node n;
    n.op = OpKind::SumCols;
    n.a = va.id;
    n.ncols = ncols;
    n.value = Array({rows});
    for (int r = 0; r < rows; ++r)
        n.value.data()[r] = kernels::active().sum(x.data() + std::size_t(r) * cols, std::size_t(ncols));
    return Var{t.emit(std::move(n))};
}

Var gather_cols(Tape& t, Var va, std::vector<int> indices) {
    const Array& x = t.value(va);
    const int rows = row_count(x), cols = col_count(x);
    require(int(indices.size()) == rows, "gather_cols: one index per row");
    for (int idx : indices)
        if (idx < 0 || idx >= cols) throw ShapeError("gather_cols: index out of range");
    Node n;
    n.op = OpKind::GatherCols;
    n.a = va.id;
    n.value = Array({rows});
    for (int r = 0; r < rows; ++r) n.value.data()[r] = x.data()[std::size_t(r) * cols + indices[r]];
    n.indices = std::move(indices);
    return Var{t.emit(std::move(n))};
}

Var sum(Tape& t, Var va) {
    const Array& x = t.value(va);
    Node n;
    n.op = OpKind::Sum;
    n.a = va.id;
    n.value = Array::scalar(kernels::active().sum(x.data(), x.numel()));
    return Var{t.emit(std::move(n))};
}

Var mean(Tape& t, Var va) {
    const Array& x = t.value(va);
    Node n;
    n.op = OpKind::Mean;
    n.a = va.id;
    n.value = Array::scalar(kernels::active().sum(x.data(), x.numel()) / double(x.numel()));
    return Var{t.emit(std::move(n))};
}

Var scale(Tape& t, Var va, double factor) {
    const Array& x = t.value(va);
    Node n;
    n.op = OpKind::Scale;
    n.a = va.id;
    n.factor = factor;
    n.value = Array(x.shape());
    kernels::active().scale(factor, x.data(), n.value.data(), x.numel());
    return Var{t.emit(std::move(n))};
}

Var weighted_sum(Tape& t, Var va, std::vector<double> weights) {
    const Array& x = t.value(va);
    require(weights.size() == x.numel(), "weighted_sum: weight per element");
    Node n;
    n.op = OpKind::WeightedSum;
    n.a = va.id;
    n.value = Array::scalar(kernels::active().dot(x.data(), weights.data(), x.numel()));
    n.weights = std::move(weights);
    return Var{t.emit(std::move(n))};
}

Gradients backward(const Tape& t, Var root) {
    if (!root.valid() || std::size_t(root.id) >= t.size())
        throw ShapeError("backward: invalid root");
    if (!t.value(root).is_scalar()) throw ShapeError("backward: root must be scalar");

    const auto& k = kernels::active();
    std::vector<Array> adj(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) adj[i] = Array::zeros(t.nodes_[i].value.shape());
    adj[std::size_t(root.id)].data()[0] = 1.0;

    for (int i = root.id; i >= 0; --i) {
        const Node& n = t.nodes_[std::size_t(i)];
        const Array& g = adj[std::size_t(i)];
        switch (n.op) {
            case OpKind::Leaf:
                break;
            case OpKind::MatMul: {
                const Array& a = t.nodes_[std::size_t(n.a)].value;
                const Array& b = t.nodes_[std::size_t(n.b)].value;
                // dA += g * B^T ; dB += A^T * g
                k.gemm_nt(a.rows(), b.cols(), a.cols(), g.data(), b.data(),
                          adj[std::size_t(n.a)].data(), true);
                k.gemm_tn(a.cols(), a.rows(), b.cols(), a.data(), g.data(),
                          adj[std::size_t(n.b)].data(), true);
                break;
            }
            case OpKind::Add: {
                for (int side = 0; side < 2; ++side) {
                    const int src = side == 0 ? n.a : n.b;
                    Array& d = adj[std::size_t(src)];
                    if (d.numel() == g.numel())
                        k.axpy(1.0, g.data(), d.data(), g.numel());
                    else  // scalar side accumulates the full adjoint mass
                        d.data()[0] += k.sum(g.data(), g.numel());
                }
                break;
            }
            case OpKind::Mul: {
                const Array& a = t.nodes_[std::size_t(n.a)].value;
                const Array& b = t.nodes_[std::size_t(n.b)].value;
                Array& da = adj[std::size_t(n.a)];
                Array& db = adj[std::size_t(n.b)];
                if (a.same_shape(b)) {
                    for (std::size_t j = 0; j < g.numel(); ++j) {
                        da.data()[j] += g[j] * b[j];
                        db.data()[j] += g[j] * a[j];
                    }
                } else if (a.is_scalar()) {
                    da.data()[0] += k.dot(g.data(), b.data(), g.numel());
                    k.axpy(a.scalar_value(), g.data(), db.data(), g.numel());
                } else {
                    db.data()[0] += k.dot(g.data(), a.data(), g.numel());
                    k.axpy(b.scalar_value(), g.data(), da.data(), g.numel());
                }
                break;
            }
            case OpKind::Negate:
                k.axpy(-1.0, g.data(), adj[std::size_t(n.a)].data(), g.numel());
                break;
            case OpKind::Relu:
                k.relu_mask_add(t.nodes_[std::size_t(n.a)].value.data(), g.data(),
                                adj[std::size_t(n.a)].data(), g.numel());
                break;
            case OpKind::Exp: {
                const Array& y = n.value;
                Array& d = adj[std::size_t(n.a)];
                for (std::size_t j = 0; j < g.numel(); ++j) d.data()[j] += g[j] * y[j];
                break;
            }
            case OpKind::Log: {
                const Array& x = t.nodes_[std::size_t(n.a)].value;
                Array& d = adj[std::size_t(n.a)];
                for (std::size_t j = 0; j < g.numel(); ++j) d.data()[j] += g[j] / x[j];
                break;
            }
            case OpKind::AddRows: {
                Array& dm = adj[std::size_t(n.a)];
                Array& dr = adj[std::size_t(n.b)];
                k.axpy(1.0, g.data(), dm.data(), g.numel());
                const int cols = n.value.cols();
                for (int r = 0; r < n.value.rows(); ++r)
                    k.add(dr.data(), g.data() + std::size_t(r) * cols, dr.data(), std::size_t(cols));
                break;
            }
            case OpKind::LogSoftmaxRows: {
                const Array& y = n.value;
                Array& d = adj[std::size_t(n.a)];
                const int rows = row_count(y), cols = col_count(y);
                for (int r = 0; r < rows; ++r) {
                    const double* gr = g.data() + std::size_t(r) * cols;
                    const double* yr = y.data() + std::size_t(r) * cols;
                    double* dr = d.data() + std::size_t(r) * cols;
                    const double gsum = k.sum(gr, std::size_t(cols));
                    for (int j = 0; j < cols; ++j) dr[j] += gr[j] - std::exp(yr[j]) * gsum;
                }
                break;
            }
            case OpKind::LogSumExpCols: {
                const Array& x = t.nodes_[std::size_t(n.a)].value;
                Array& d = adj[std::size_t(n.a)];
                const int rows = row_count(x), cols = col_count(x);
                for (int r = 0; r < rows; ++r) {
                    const double gr = g[std::size_t(r)];
                    if (gr == 0.0) continue;
                    const double lse = n.value[std::size_t(r)];
                    const double* xr = x.data() + std::size_t(r) * cols;
                    double* dr = d.data() + std::size_t(r) * cols;
                    for (int j = 0; j < n.ncols; ++j) dr[j] += gr * std::exp(xr[j] - lse);
                }
                break;
            }
            case OpKind::SumCols: {
                const Array& x = t.nodes_[std::size_t(n.a)].value;
                Array& d = adj[std::size_t(n.a)];
                const int rows = row_count(x), cols = col_count(x);
                for (int r = 0; r < rows; ++r) {
                    const double gr = g[std::size_t(r)];
                    double* dr = d.data() + std::size_t(r) * cols;
                    for (int j = 0; j < n.ncols; ++j) dr[j] += gr;
                }
                break;
            }
            case OpKind::GatherCols: {
                const Array& x = t.nodes_[std::size_t(n.a)].value;
                Array& d = adj[std::size_t(n.a)];
                const int cols = col_count(x);
                for (std::size_t r = 0; r < n.indices.size(); ++r)
                    d.data()[r * cols + n.indices[r]] += g[r];
                break;
            }
            case OpKind::Sum: {
                Array& d = adj[std::size_t(n.a)];
                const double gs = g.scalar_value();
                for (std::size_t j = 0; j < d.numel(); ++j) d.data()[j] += gs;
                break;
            }
            case OpKind::Mean: {
                Array& d = adj[std::size_t(n.a)];
                const double gs = g.scalar_value() / double(d.numel());
                for (std::size_t j = 0; j < d.numel(); ++j) d.data()[j] += gs;
                break;
            }
            case OpKind::Scale:
                k.axpy(n.factor, g.data(), adj[std::size_t(n.a)].data(), g.numel());
                break;
            case OpKind::WeightedSum:
                k.axpy(g.scalar_value(), n.weights.data(), adj[std::size_t(n.a)].data(),
                       n.weights.size());
                break;
        }
    }
    return Gradients(std::move(adj));
}

double finite_diff_max_rel_error(const std::function<double(const Array&)>& f,
                                 const Array& x, const Array& analytic_grad, double h) {
    if (!analytic_grad.same_shape(x)) throw ShapeError("finite_diff: gradient shape mismatch");
    Array probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe[i];
        probe.data()[i] = orig + h;
        const double fp = f(probe);
        probe.data()[i] = orig - h;
        const double fm = f(probe);
        probe.data()[i] = orig;
        const double central = (fp - fm) / (2.0 * h);
        const double rel = std::abs(analytic_grad[i] - central) / (std::abs(central) + 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace eow
