#pragma once

#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "rlab/tensor.hpp"

namespace rlab {

enum class BiasKind { none, dvm, alibi };
enum class BiasPhase { inference_only, train_and_inference };

const char* to_string(BiasKind k);
const char* to_string(BiasPhase p);
BiasKind bias_kind_from_string(const std::string& s);
BiasPhase bias_phase_from_string(const std::string& s);

// One experiment condition's recency-bias setup.
//   none:  softmax(K^T q_i / sqrt(d))
//   dvm:   softmax(alpha * b_i + (1 - alpha) * K^T q_i / sqrt(d)),
//          b_i[j] = exp(-lambda * (i - j))
//   alibi: softmax(b'_i + K^T q_i / sqrt(d)),  b'_i[j] = m * (j - i)
struct BiasSpec {
    BiasKind kind = BiasKind::none;
    BiasPhase phase = BiasPhase::inference_only;
    std::vector<double> slopes; // per head, alibi only
    double lambda = 82.86;
    double alpha = 0.37;
    bool use_rotary = true;

    // Throws ConfigError on violated invariants:
    //  - alibi needs one nonnegative slope per head
    //  - a model trained with a recency bias must not also use rotary
    //    embeddings (they are removed when the bias is present in training)
    //  - an unbiased model keeps rotary embeddings
    void validate(int n_heads) const;

    bool applies(bool training) const {
        return kind != BiasKind::none && (!training || phase == BiasPhase::train_and_inference);
    }
};

// Slope of head h (1-based) out of n_heads is 2^(-8h/H), strictly
// decreasing. n_heads=4 gives 1/4, 1/16, 1/64, 1/256.
std::vector<double> alibi_slopes(int n_heads);

// Uniform-slope variant: the same slope for every head.
std::vector<double> uniform_slopes(int n_heads, double slope);

// Bias row for query position i (1-based): entry j (1-based) is
// m * (j - i); the self position is always 0.
std::vector<double> alibi_bias(int i, double slope);

// Bias row for query position i (1-based): entry j is exp(-lambda*(i-j));
// the self position is exactly 1.
std::vector<double> dvm_bias(int i, double lambda);

// Pairwise 2-D rotations with frequencies theta_k = 10000^(-2k/d_head)
// applied to consecutive dimension pairs; angle is position * theta_k.
// x is [N x d_head] with d_head even, positions are 0-based.
Tensor rotary_transform(Tape& tape, const Tensor& x, const std::vector<int>& positions);

// Additive matrices combining recency bias with the causal mask: entry
// (i, j) is the bias at (query i, key j) for j <= i and -1e30 above the
// diagonal. Cached per (kind, parameters, n). Returned tensors are
// constants (requires_grad = false) and must not be mutated.
class BiasMatrixCache {
  public:
    // kind=none: pure causal mask. alibi: slope m. dvm: alpha * bias, so
    // the caller only adds the matrix after scaling scores by (1-alpha).
    Tensor mask_only(int n);
    Tensor alibi_matrix(double slope, int n);
    Tensor dvm_matrix(double lambda, double alpha, int n);

  private:
    std::map<std::tuple<int, double, double, int>, Tensor> cache_;
    std::mutex mu_;
};

constexpr double kCausalMaskValue = -1e30;

struct AttentionHeadOutput {
    Tensor weights; // [N x N], rows sum to 1 over the causal prefix
    Tensor context; // [N x d_head]
};

// Causal self-attention for one head: scores = Q K^T / sqrt(d_head),
// biased per `spec.kind` (phase is resolved by the caller), masked with
// the -1e30 sentinel, then row softmax and context = weights * V.
// Rotary application is the caller's job; this op acts on final q, k.
AttentionHeadOutput biased_causal_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                            const Tensor& v, const BiasSpec& spec, int head_index,
                                            BiasMatrixCache* cache = nullptr);

} // namespace rlab
