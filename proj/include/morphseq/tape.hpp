#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "morphseq/tensor.hpp"

namespace morphseq {

// Reverse-mode tape. Every op appends one node, so creation order is a
// topological order and backward() is a single reverse sweep. Leaves bound
// to external parameter storage (leaf_param / leaf_param_row) accumulate
// their gradients there. backward() frees the graph; calling it again
// without recording a new forward pass is an error.
//
// Scalars are rank-1 tensors of length 1. All values are checked finite in
// debug builds.
class Tape {
   public:
    using Id = std::uint32_t;

    // leaves
    Id constant(Tensor v);
    // value is copied in; gradient flows out into `grad` (allocated by caller)
    Id leaf_param(const Tensor& value, Tensor& grad);
    // one row of a rank-2 parameter; gradient accumulates into grad row
    Id leaf_param_row(const Tensor& matrix, Tensor& grad, std::size_t row);
    // read-only view of external storage, no gradient (inference path);
    // caller keeps `value` alive for the life of the tape
    Id leaf_borrow(const Tensor& value);

    // elementwise, same shape
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    // k*a + m, elementwise with scalar constants
    Id affine(Id a, double k, double m);
    // wa*a + wb*b with scalar constants, same shape
    Id add_weighted(Id a, double wa, Id b, double wb);
    // y = mask .* a where mask is a plain tensor (dropout)
    Id mul_mask(Id a, const Tensor& mask);

    Id matvec(Id w, Id x, const char* wname = "matrix");  // [r x c] * [c] -> [r]
    Id concat(Id a, Id b);                                // vectors
    Id sigmoid(Id a);
    Id tanh(Id a);
    Id softmax(Id logits);                      // stable, max-subtracted
    Id rows_weighted_sum(Id alpha, std::span<const Id> rows);
    Id stack(std::span<const Id> scalars);      // k scalars -> [k]
    Id nll(Id dist, std::size_t gold);          // -log(dist[gold] + 1e-12)
    Id mean(std::span<const Id> scalars);
    Id sum(Id a);                               // -> scalar

    const Tensor& value(Id id) const;

    // Seeds d(loss) = seed, sweeps the tape in reverse, accumulates into
    // bound parameter gradients, then frees the graph.
    void backward(Id loss, double seed = 1.0);

    std::size_t size() const { return nodes_.size(); }

    static constexpr double kNllEpsilon = 1e-12;

   private:
    enum class Op : std::uint8_t {
        kConstant,
        kLeafParam,
        kLeafParamRow,
        kLeafBorrow,
        kAdd,
        kSub,
        kMul,
        kAffine,
        kAddWeighted,
        kMulMask,
        kMatvec,
        kConcat,
        kSigmoid,
        kTanh,
        kSoftmax,
        kRowsWeightedSum,
        kStack,
        kNll,
        kMean,
        kSum,
    };

    struct Node {
        Tensor value;             // unused when borrowed != nullptr
        const Tensor* borrowed = nullptr;
        Tensor grad;
        Op op = Op::kConstant;
        Id in0 = 0, in1 = 0;
        std::vector<Id> extra;    // variadic inputs (rows, scalars)
        double k = 0.0, m = 0.0;  // affine / add_weighted coefficients
        std::size_t index = 0;    // gold index / embedding row
        Tensor mask;              // dropout mask
        Tensor* ext_grad = nullptr;
    };

    const Tensor& val(const Node& n) const { return n.borrowed ? *n.borrowed : n.value; }
    Id push(Node n);
    void backprop_node(Node& n);
    [[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) const;

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace morphseq
