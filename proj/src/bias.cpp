#include "rlab/bias.hpp"

#include <cmath>

namespace rlab {

const char* to_string(BiasKind k) {
    switch (k) {
        case BiasKind::none: return "none";
        case BiasKind::dvm: return "dvm";
        case BiasKind::alibi: return "alibi";
    }
    return "?";
}

const char* to_string(BiasPhase p) {
    return p == BiasPhase::inference_only ? "inference_only" : "train_and_inference";
}

BiasKind bias_kind_from_string(const std::string& s) {
    if (s == "none") return BiasKind::none;
    if (s == "dvm") return BiasKind::dvm;
    if (s == "alibi") return BiasKind::alibi;
    throw ConfigError("unknown bias kind '" + s + "' (expected none|dvm|alibi)");
}

BiasPhase bias_phase_from_string(const std::string& s) {
    if (s == "inference_only") return BiasPhase::inference_only;
    if (s == "train_and_inference") return BiasPhase::train_and_inference;
    throw ConfigError("unknown bias phase '" + s +
                      "' (expected inference_only|train_and_inference)");
}

void BiasSpec::validate(int n_heads) const {
    if (kind == BiasKind::alibi) {
        if (static_cast<int>(slopes.size()) != n_heads)
            throw ConfigError("bias: alibi needs " + std::to_string(n_heads) + " slopes, got " +
                              std::to_string(slopes.size()));
        for (double m : slopes)
            if (!(m >= 0.0))
                throw ConfigError("bias: alibi slopes must be nonnegative");
    }
    if (kind == BiasKind::dvm && !(lambda > 0.0))
        throw ConfigError("bias: dvm lambda must be positive");
    if (kind == BiasKind::dvm && (alpha < 0.0 || alpha > 1.0))
        throw ConfigError("bias: dvm alpha must lie in [0, 1]");
    if (kind != BiasKind::none && phase == BiasPhase::train_and_inference && use_rotary)
        throw ConfigError("bias: a model trained with a recency bias must not use rotary "
                          "positional embeddings (set bias.use_rotary=false; rotary embeddings "
                          "are removed when the bias is present during training)");
    if (kind == BiasKind::none && !use_rotary)
        throw ConfigError("bias: an unbiased model requires rotary positional embeddings "
                          "(set bias.use_rotary=true)");
}

std::vector<double> alibi_slopes(int n_heads) {
    if (n_heads < 1) throw ContractError("alibi_slopes: head count must be >= 1");
    std::vector<double> slopes(static_cast<size_t>(n_heads));
    for (int h = 1; h <= n_heads; ++h)
        slopes[static_cast<size_t>(h - 1)] = std::exp2(-8.0 * h / n_heads);
    return slopes;
}

std::vector<double> uniform_slopes(int n_heads, double slope) {
    if (n_heads < 1) throw ContractError("uniform_slopes: head count must be >= 1");
    if (!(slope >= 0.0)) throw ContractError("uniform_slopes: slope must be nonnegative");
    return std::vector<double>(static_cast<size_t>(n_heads), slope);
}

std::vector<double> alibi_bias(int i, double slope) {
    if (i < 1) throw ContractError("alibi_bias: query position is 1-based");
    if (!(slope >= 0.0)) throw ContractError("alibi_bias: slope must be nonnegative");
    std::vector<double> b(static_cast<size_t>(i));
    for (int j = 1; j <= i; ++j) b[static_cast<size_t>(j - 1)] = slope * (j - i);
    return b;
}

std::vector<double> dvm_bias(int i, double lambda) {
    if (i < 1) throw ContractError("dvm_bias: query position is 1-based");
    if (!(lambda > 0.0)) throw ContractError("dvm_bias: lambda must be positive");
    std::vector<double> b(static_cast<size_t>(i));
    for (int j = 1; j <= i; ++j) b[static_cast<size_t>(j - 1)] = std::exp(-lambda * (i - j));
    return b;
}

Tensor rotary_transform(Tape& tape, const Tensor& x, const std::vector<int>& positions) {
    if (x.rank() != 2) throw ShapeError("rotary_transform: expected [N x d_head]");
    const int n = x.dim(0), d = x.dim(1);
    if (d % 2 != 0)
        throw ConfigError("rotary_transform: head dimension must be even, got " + std::to_string(d));
    if (static_cast<int>(positions.size()) != n)
        throw ShapeError("rotary_transform: need one position per row");

    const int half = d / 2;
    // cos/sin per (row, pair), saved for backward.
    auto cs = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * d);
    for (int r = 0; r < n; ++r) {
        for (int p = 0; p < half; ++p) {
            const double theta = std::pow(10000.0, -2.0 * p / d);
            const double angle = positions[static_cast<size_t>(r)] * theta;
            (*cs)[(static_cast<size_t>(r) * half + p) * 2] = std::cos(angle);
            (*cs)[(static_cast<size_t>(r) * half + p) * 2 + 1] = std::sin(angle);
        }
    }

    Tensor out = Tensor::zeros(x.shape, x.requires_grad);
    for (int r = 0; r < n; ++r) {
        const double* xi = x.data->data() + static_cast<size_t>(r) * d;
        double* yi = out.data->data() + static_cast<size_t>(r) * d;
        for (int p = 0; p < half; ++p) {
            const double c = (*cs)[(static_cast<size_t>(r) * half + p) * 2];
            const double s = (*cs)[(static_cast<size_t>(r) * half + p) * 2 + 1];
            const double a = xi[2 * p], b = xi[2 * p + 1];
            yi[2 * p] = a * c - b * s;
            yi[2 * p + 1] = a * s + b * c;
        }
    }
    check_finite(out, "rotary_transform");
    if (out.requires_grad) {
        tape.record([x, out, cs, n, d, half] {
            // Backward of a rotation is the inverse rotation of the grad.
            for (int r = 0; r < n; ++r) {
                const double* gy = out.grad->data() + static_cast<size_t>(r) * d;
                double* gx = x.grad->data() + static_cast<size_t>(r) * d;
                for (int p = 0; p < half; ++p) {
                    const double c = (*cs)[(static_cast<size_t>(r) * half + p) * 2];
                    const double s = (*cs)[(static_cast<size_t>(r) * half + p) * 2 + 1];
                    const double ga = gy[2 * p], gb = gy[2 * p + 1];
                    gx[2 * p] += ga * c + gb * s;
                    gx[2 * p + 1] += -ga * s + gb * c;
                }
            }
        });
    }
    return out;
}

namespace {

Tensor build_matrix(BiasKind kind, double p1, double p2, int n) {
    Tensor m = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) {
        double* row = m.data->data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            if (j > i) {
                row[j] = kCausalMaskValue;
            } else if (kind == BiasKind::alibi) {
                row[j] = p1 * (j - i);
            } else if (kind == BiasKind::dvm) {
                row[j] = p2 * std::exp(-p1 * (i - j)); // p2 = alpha
            }
        }
    }
    return m;
}

} // namespace

Tensor BiasMatrixCache::mask_only(int n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(static_cast<int>(BiasKind::none), 0.0, 0.0, n);
    auto it = cache_.find(key);
    if (it == cache_.end())
        it = cache_.emplace(key, build_matrix(BiasKind::none, 0.0, 0.0, n)).first;
    return it->second;
}

Tensor BiasMatrixCache::alibi_matrix(double slope, int n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(static_cast<int>(BiasKind::alibi), slope, 0.0, n);
    auto it = cache_.find(key);
    if (it == cache_.end())
        it = cache_.emplace(key, build_matrix(BiasKind::alibi, slope, 0.0, n)).first;
    return it->second;
}

Tensor BiasMatrixCache::dvm_matrix(double lambda, double alpha, int n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(static_cast<int>(BiasKind::dvm), lambda, alpha, n);
    auto it = cache_.find(key);
    if (it == cache_.end())
        it = cache_.emplace(key, build_matrix(BiasKind::dvm, lambda, alpha, n)).first;
    return it->second;
}

AttentionHeadOutput biased_causal_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                            const Tensor& v, const BiasSpec& spec, int head_index,
                                            BiasMatrixCache* cache) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw ShapeError("attention: q, k, v must be [N x d_head]");
    check_same_shape(q, k, "attention q/k");
    if (v.dim(0) != q.dim(0)) throw ShapeError("attention: v row count mismatch");
    const int n = q.dim(0);
    const int d_head = q.dim(1);

    BiasMatrixCache local;
    BiasMatrixCache& mats = cache ? *cache : local;

    Tensor scores = matmul(tape, q, transpose(tape, k));
    Tensor scaled = scale(tape, scores, 1.0 / std::sqrt(static_cast<double>(d_head)));

    Tensor masked;
    switch (spec.kind) {
        case BiasKind::none:
            masked = add(tape, scaled, mats.mask_only(n));
            break;
        case BiasKind::alibi: {
            if (head_index < 0 || head_index >= static_cast<int>(spec.slopes.size()))
                throw ConfigError("attention: slope index " + std::to_string(head_index) +
                                  " out of range for " + std::to_string(spec.slopes.size()) +
                                  " slopes");
            masked = add(tape, scaled, mats.alibi_matrix(spec.slopes[static_cast<size_t>(head_index)], n));
            break;
        }
        case BiasKind::dvm:
            masked = add(tape, scale(tape, scaled, 1.0 - spec.alpha),
                         mats.dvm_matrix(spec.lambda, spec.alpha, n));
            break;
    }

    AttentionHeadOutput out;
    out.weights = softmax_rows(tape, masked);
    out.context = matmul(tape, out.weights, v);
    return out;
}

} // namespace rlab
