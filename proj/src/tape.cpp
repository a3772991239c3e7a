#include "morphseq/tape.hpp"

#include <cassert>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace morphseq {

namespace {

void check_vector(const Tensor& t, const char* op) {
    if (t.rank() != 1) {
        throw std::invalid_argument(std::string(op) + ": expected a vector, got shape " + shape_str(t));
    }
}

}  // namespace

Tape::Id Tape::push(Node n) {
#ifndef NDEBUG
    assert(val(n).all_finite() && "non-finite value produced by a forward op");
#endif
    consumed_ = false;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

void Tape::shape_error(const char* op, const Tensor& a, const Tensor& b) const {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

Tape::Id Tape::constant(Tensor v) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(v);
    return push(std::move(n));
}

Tape::Id Tape::leaf_param(const Tensor& value, Tensor& grad) {
    if (!value.same_shape(grad)) shape_error("leaf_param", value, grad);
    Node n;
    n.op = Op::kLeafParam;
    n.value = value;
    n.ext_grad = &grad;
    return push(std::move(n));
}

Tape::Id Tape::leaf_param_row(const Tensor& matrix, Tensor& grad, std::size_t row) {
    if (matrix.rank() != 2 || row >= matrix.dim(0)) {
        throw std::invalid_argument("leaf_param_row: row " + std::to_string(row) + " out of range for " +
                                    shape_str(matrix));
    }
    if (!matrix.same_shape(grad)) shape_error("leaf_param_row", matrix, grad);
    const std::size_t cols = matrix.dim(1);
    Node n;
    n.op = Op::kLeafParamRow;
    n.value = Tensor::zeros({cols});
    for (std::size_t c = 0; c < cols; ++c) n.value[c] = matrix.at2(row, c);
    n.ext_grad = &grad;
    n.index = row;
    return push(std::move(n));
}

Tape::Id Tape::leaf_borrow(const Tensor& value) {
    Node n;
    n.op = Op::kLeafBorrow;
    n.borrowed = &value;
    return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) shape_error("add", va, vb);
    Node n;
    n.op = Op::kAdd;
    n.in0 = a;
    n.in1 = b;
    n.value = va;
    for (std::size_t i = 0; i < vb.numel(); ++i) n.value[i] += vb[i];
    return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) shape_error("sub", va, vb);
    Node n;
    n.op = Op::kSub;
    n.in0 = a;
    n.in1 = b;
    n.value = va;
    for (std::size_t i = 0; i < vb.numel(); ++i) n.value[i] -= vb[i];
    return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) shape_error("mul", va, vb);
    Node n;
    n.op = Op::kMul;
    n.in0 = a;
    n.in1 = b;
    n.value = va;
    for (std::size_t i = 0; i < vb.numel(); ++i) n.value[i] *= vb[i];
    return push(std::move(n));
}

Tape::Id Tape::affine(Id a, double k, double m) {
    Node n;
    n.op = Op::kAffine;
    n.in0 = a;
    n.k = k;
    n.m = m;
    n.value = value(a);
    for (double& x : n.value.data) x = k * x + m;
    return push(std::move(n));
}

Tape::Id Tape::add_weighted(Id a, double wa, Id b, double wb) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) shape_error("add_weighted", va, vb);
    Node n;
    n.op = Op::kAddWeighted;
    n.in0 = a;
    n.in1 = b;
    n.k = wa;
    n.m = wb;
    n.value = va;
    for (std::size_t i = 0; i < va.numel(); ++i) n.value[i] = wa * va[i] + wb * vb[i];
    return push(std::move(n));
}

Tape::Id Tape::mul_mask(Id a, const Tensor& mask) {
    const Tensor& va = value(a);
    if (!va.same_shape(mask)) shape_error("mul_mask", va, mask);
    Node n;
    n.op = Op::kMulMask;
    n.in0 = a;
    n.mask = mask;
    n.value = va;
    for (std::size_t i = 0; i < mask.numel(); ++i) n.value[i] *= mask[i];
    return push(std::move(n));
}

Tape::Id Tape::matvec(Id w, Id x, const char* wname) {
    const Tensor& vw = value(w);
    const Tensor& vx = value(x);
    if (vw.rank() != 2) {
        throw std::invalid_argument(std::string("matvec: parameter '") + wname + "' is not a matrix, shape " +
                                    shape_str(vw));
    }
    check_vector(vx, "matvec");
    if (vw.dim(1) != vx.dim(0)) {
        throw std::invalid_argument(std::string("matvec: parameter '") + wname + "' has shape " + shape_str(vw) +
                                    " but input is " + shape_str(vx));
    }
    const std::size_t rows = vw.dim(0), cols = vw.dim(1);
    Node n;
    n.op = Op::kMatvec;
    n.in0 = w;
    n.in1 = x;
    n.value = Tensor::zeros({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* wr = vw.data.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * vx[c];
        n.value[r] = acc;
    }
    return push(std::move(n));
}

Tape::Id Tape::concat(Id a, Id b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_vector(va, "concat");
    check_vector(vb, "concat");
    Node n;
    n.op = Op::kConcat;
    n.in0 = a;
    n.in1 = b;
    n.value = Tensor::zeros({va.numel() + vb.numel()});
    for (std::size_t i = 0; i < va.numel(); ++i) n.value[i] = va[i];
    for (std::size_t i = 0; i < vb.numel(); ++i) n.value[va.numel() + i] = vb[i];
    return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id a) {
    Node n;
    n.op = Op::kSigmoid;
    n.in0 = a;
    n.value = value(a);
    for (double& x : n.value.data) x = 1.0 / (1.0 + std::exp(-x));
    return push(std::move(n));
}

Tape::Id Tape::tanh(Id a) {
    Node n;
    n.op = Op::kTanh;
    n.in0 = a;
    n.value = value(a);
    for (double& x : n.value.data) x = std::tanh(x);
    return push(std::move(n));
}

Tape::Id Tape::softmax(Id logits) {
    const Tensor& v = value(logits);
    check_vector(v, "softmax");
    if (v.numel() == 0) throw std::invalid_argument("softmax: empty distribution");
    Node n;
    n.op = Op::kSoftmax;
    n.in0 = logits;
    n.value = v;
    double mx = n.value[0];
    for (double x : n.value.data) mx = std::max(mx, x);
    double z = 0.0;
    for (double& x : n.value.data) {
        x = std::exp(x - mx);
        z += x;
    }
    for (double& x : n.value.data) x /= z;
    return push(std::move(n));
}

Tape::Id Tape::rows_weighted_sum(Id alpha, std::span<const Id> rows) {
    const Tensor& va = value(alpha);
    check_vector(va, "rows_weighted_sum");
    if (va.numel() != rows.size()) {
        throw std::invalid_argument("rows_weighted_sum: " + std::to_string(rows.size()) + " rows but " +
                                    std::to_string(va.numel()) + " weights");
    }
    if (rows.empty()) throw std::invalid_argument("rows_weighted_sum: no rows");
    const std::size_t d = value(rows[0]).numel();
    Node n;
    n.op = Op::kRowsWeightedSum;
    n.in0 = alpha;
    n.extra.assign(rows.begin(), rows.end());
    n.value = Tensor::zeros({d});
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const Tensor& r = value(rows[j]);
        if (r.numel() != d) shape_error("rows_weighted_sum", value(rows[0]), r);
        for (std::size_t i = 0; i < d; ++i) n.value[i] += va[j] * r[i];
    }
    return push(std::move(n));
}

Tape::Id Tape::stack(std::span<const Id> scalars) {
    if (scalars.empty()) throw std::invalid_argument("stack: no inputs");
    Node n;
    n.op = Op::kStack;
    n.extra.assign(scalars.begin(), scalars.end());
    n.value = Tensor::zeros({scalars.size()});
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        const Tensor& s = value(scalars[i]);
        if (s.numel() != 1) throw std::invalid_argument("stack: input " + std::to_string(i) + " is not a scalar");
        n.value[i] = s[0];
    }
    return push(std::move(n));
}

Tape::Id Tape::nll(Id dist, std::size_t gold) {
    const Tensor& v = value(dist);
    check_vector(v, "nll");
    if (gold >= v.numel()) {
        throw std::invalid_argument("nll: gold index " + std::to_string(gold) + " out of range for " + shape_str(v));
    }
    Node n;
    n.op = Op::kNll;
    n.in0 = dist;
    n.index = gold;
    n.value = Tensor::scalar(-std::log(v[gold] + kNllEpsilon));
    return push(std::move(n));
}

Tape::Id Tape::mean(std::span<const Id> scalars) {
    if (scalars.empty()) throw std::invalid_argument("mean: no inputs");
    Node n;
    n.op = Op::kMean;
    n.extra.assign(scalars.begin(), scalars.end());
    double acc = 0.0;
    for (Id s : scalars) {
        const Tensor& v = value(s);
        if (v.numel() != 1) throw std::invalid_argument("mean: non-scalar input");
        acc += v[0];
    }
    n.value = Tensor::scalar(acc / static_cast<double>(scalars.size()));
    return push(std::move(n));
}

Tape::Id Tape::sum(Id a) {
    Node n;
    n.op = Op::kSum;
    n.in0 = a;
    double acc = 0.0;
    for (double x : value(a).data) acc += x;
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

const Tensor& Tape::value(Id id) const {
    return val(nodes_.at(id));
}

void Tape::backward(Id loss, double seed) {
    if (consumed_ || nodes_.empty()) {
        throw std::logic_error("backward: graph already consumed; record a new forward pass first");
    }
    if (loss >= nodes_.size()) throw std::invalid_argument("backward: bad loss id");
    if (val(nodes_[loss]).numel() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got " + shape_str(val(nodes_[loss])));
    }
    for (Node& n : nodes_) {
        n.grad = Tensor::zeros(val(n).shape);
    }
    nodes_[loss].grad[0] = seed;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        backprop_node(nodes_[i]);
    }
    // graph freed; parameter gradients live in their external buffers
    nodes_.clear();
    consumed_ = true;
}

void Tape::backprop_node(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::kConstant:
        case Op::kLeafBorrow:
            break;
        case Op::kLeafParam:
            for (std::size_t i = 0; i < g.numel(); ++i) n.ext_grad->data[i] += g[i];
            break;
        case Op::kLeafParamRow: {
            const std::size_t cols = n.ext_grad->dim(1);
            for (std::size_t c = 0; c < g.numel(); ++c) n.ext_grad->data[n.index * cols + c] += g[c];
            break;
        }
        case Op::kAdd:
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in0].grad[i] += g[i];
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in1].grad[i] += g[i];
            break;
        case Op::kSub:
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in0].grad[i] += g[i];
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in1].grad[i] -= g[i];
            break;
        case Op::kMul: {
            const Tensor& va = val(nodes_[n.in0]);
            const Tensor& vb = val(nodes_[n.in1]);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                nodes_[n.in0].grad[i] += g[i] * vb[i];
                nodes_[n.in1].grad[i] += g[i] * va[i];
            }
            break;
        }
        case Op::kAffine:
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in0].grad[i] += n.k * g[i];
            break;
        case Op::kAddWeighted:
            for (std::size_t i = 0; i < g.numel(); ++i) {
                nodes_[n.in0].grad[i] += n.k * g[i];
                nodes_[n.in1].grad[i] += n.m * g[i];
            }
            break;
        case Op::kMulMask:
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in0].grad[i] += n.mask[i] * g[i];
            break;
        case Op::kMatvec: {
            const Tensor& vw = val(nodes_[n.in0]);
            const Tensor& vx = val(nodes_[n.in1]);
            Tensor& gw = nodes_[n.in0].grad;
            Tensor& gx = nodes_[n.in1].grad;
            const std::size_t rows = vw.dim(0), cols = vw.dim(1);
            for (std::size_t r = 0; r < rows; ++r) {
                const double gr = g[r];
                if (gr == 0.0) continue;
                double* gwr = gw.data.data() + r * cols;
                const double* wr = vw.data.data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) {
                    gwr[c] += gr * vx[c];
                    gx[c] += gr * wr[c];
                }
            }
            break;
        }
        case Op::kConcat: {
            const std::size_t na = val(nodes_[n.in0]).numel();
            for (std::size_t i = 0; i < na; ++i) nodes_[n.in0].grad[i] += g[i];
            for (std::size_t i = na; i < g.numel(); ++i) nodes_[n.in1].grad[i - na] += g[i];
            break;
        }
        case Op::kSigmoid: {
            const Tensor& y = n.value;
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in0].grad[i] += g[i] * y[i] * (1.0 - y[i]);
            break;
        }
        case Op::kTanh: {
            const Tensor& y = n.value;
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in0].grad[i] += g[i] * (1.0 - y[i] * y[i]);
            break;
        }
        case Op::kSoftmax: {
            const Tensor& y = n.value;
            double dot = 0.0;
            for (std::size_t i = 0; i < g.numel(); ++i) dot += g[i] * y[i];
            for (std::size_t i = 0; i < g.numel(); ++i) nodes_[n.in0].grad[i] += y[i] * (g[i] - dot);
            break;
        }
        case Op::kRowsWeightedSum: {
            const Tensor& va = val(nodes_[n.in0]);
            for (std::size_t j = 0; j < n.extra.size(); ++j) {
                Node& row = nodes_[n.extra[j]];
                const Tensor& vr = val(row);
                double dot = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    row.grad[i] += va[j] * g[i];
                    dot += g[i] * vr[i];
                }
                nodes_[n.in0].grad[j] += dot;
            }
            break;
        }
        case Op::kStack:
            for (std::size_t j = 0; j < n.extra.size(); ++j) nodes_[n.extra[j]].grad[0] += g[j];
            break;
        case Op::kNll: {
            const Tensor& v = val(nodes_[n.in0]);
            nodes_[n.in0].grad[n.index] += -g[0] / (v[n.index] + kNllEpsilon);
            break;
        }
        case Op::kMean: {
            const double share = g[0] / static_cast<double>(n.extra.size());
            for (Id s : n.extra) nodes_[s].grad[0] += share;
            break;
        }
        case Op::kSum:
            for (std::size_t i = 0; i < val(nodes_[n.in0]).numel(); ++i) nodes_[n.in0].grad[i] += g[0];
            break;
    }
}

}  // namespace morphseq
