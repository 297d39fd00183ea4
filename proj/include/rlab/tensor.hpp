#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rlab/error.hpp"
#include "rlab/rng.hpp"

namespace rlab {

// Dense row-major tensor of doubles with an optional gradient buffer.
// Storage is shared (shallow copies alias); values are immutable by
// convention once an op has consumed the tensor, grads accumulate.
// No views or strides: transpose and slicing copy.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad; // non-null iff requires_grad
    bool requires_grad = false;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar_of(double value, bool requires_grad = false);
    // Entries drawn i.i.d. normal(mean, sd) from the given rng.
    static Tensor randn(std::vector<int> shape, Rng& rng, double mean = 0.0, double sd = 1.0,
                        bool requires_grad = false);

    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    size_t numel() const { return data ? data->size() : 0; }
    bool defined() const { return static_cast<bool>(data); }
    bool is_scalar() const { return defined() && data->size() == 1; }

    double& at(size_t i) { return (*data)[i]; }
    double at(size_t i) const { return (*data)[i]; }
    // Rank-2 accessors.
    double& at2(int r, int c) { return (*data)[static_cast<size_t>(r) * dim(1) + c]; }
    double at2(int r, int c) const { return (*data)[static_cast<size_t>(r) * dim(1) + c]; }

    double scalar_value() const;
    void zero_grad();

    // Rows and row width for "last axis" ops; rank >= 1.
    int last_dim() const;
    size_t row_count() const;
};

// Throws ShapeError unless both shapes are identical.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
// Throws NumericError naming `op` if any entry is NaN/Inf.
void check_finite(const Tensor& t, const char* op);

// Ordered record of backward steps for one forward pass. Ops append their
// backward closure as they execute, so creation order is a topological
// order and replaying in reverse visits every node after its consumers.
// Confined to one logical thread.
class Tape {
  public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
    // `loss` must be a scalar produced through this tape with requires_grad.
    void backward(const Tensor& loss);

    size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }

  private:
    std::vector<std::function<void()>> steps_;
};

// ---------------------------------------------------------------------------
// Primitive ops. Each validates shapes, checks outputs finite, and records
// a backward step on the tape when any input requires grad.
// ---------------------------------------------------------------------------

// [m×k] x [k×n] -> [m×n]. Summation over k in ascending order per output
// cell (bit-identical to the naive triple loop).
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// [m×n] -> [n×m], copying.
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);       // same shape
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);       // elementwise
Tensor scale(Tape& tape, const Tensor& a, double c);

// x[R×C] + v[C] broadcast over rows.
Tensor add_row_vector(Tape& tape, const Tensor& x, const Tensor& v);

// Gathers rows of table[V×d] at ids; backward scatter-adds.
Tensor embedding_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids);

// Normalizes the last axis to mean 0 / variance 1 (epsilon 1e-5 inside the
// square root), then applies gain and bias of length last_dim.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor gelu(Tape& tape, const Tensor& x); // tanh approximation

// Row softmax with per-row max subtraction; rows sum to 1 within 1e-9.
Tensor softmax_rows(Tape& tape, const Tensor& x);

// Row log-softmax, computed directly (x - max - log(sum exp)).
Tensor log_softmax_rows(Tape& tape, const Tensor& x);

// Mean over positions of -log softmax(logits)[target]; natural-log units.
// logits [n×V], targets length n with every id in [0, V).
Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& targets);

// Copies columns [start, start+len) of x[R×C].
Tensor slice_cols(Tape& tape, const Tensor& x, int start, int len);

// Concatenates [R×c_i] blocks along columns.
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& xs);

constexpr double kLayerNormEps = 1e-5;

} // namespace rlab
