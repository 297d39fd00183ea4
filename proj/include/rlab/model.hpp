#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rlab/bias.hpp"
#include "rlab/tensor.hpp"

namespace rlab {

// Pythia-style decoder-only transformer: parallel attention/FFN sublayers
// sharing one pre-norm per layer, untied embedding and output projection,
// rotary positional embeddings unless a trained recency bias replaces them.
struct ModelConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256; // 4 * d_model
    int vocab_size = 2000;
    int max_context = 256;
    BiasSpec bias;
    uint64_t seed = 1;

    int d_head() const { return d_model / n_heads; }
    void validate() const;

    // The paper-scale reference point (2 layers, 4 heads, 256 embedding,
    // context 2048); slow to train on a desk but fully supported.
    static ModelConfig paper_scale();
};

struct LayerParams {
    Tensor ln_gain, ln_bias;
    Tensor wq, wk, wv, wo; // [d_model x d_model]
    Tensor bq, bk, bv, bo; // [d_model]
    Tensor w_ff1, b_ff1;   // [d_model x d_ff], [d_ff]
    Tensor w_ff2, b_ff2;   // [d_ff x d_model], [d_model]
};

struct ModelParams {
    Tensor embedding; // [vocab x d_model]
    std::vector<LayerParams> layers;
    Tensor final_ln_gain, final_ln_bias;
    Tensor output_proj; // [d_model x vocab], untied from embedding, no bias

    // Seeded init: normal(0, 0.02) for embeddings/projections, layer-norm
    // gain 1 / bias 0.
    static ModelParams init(const ModelConfig& config);

    // Stable name -> tensor listing; order fixes Adam state and
    // checkpoint block layout.
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
    void zero_grad();
    size_t parameter_count() const;
};

enum class Mode { train, eval };

struct ForwardOptions {
    Mode mode = Mode::eval;
    bool collect_attention = false;
};

struct ForwardResult {
    Tensor logits; // [N x vocab]
    // [layer][head] -> [N x N] post-softmax weights; filled only when
    // collect_attention was set.
    std::vector<std::vector<Tensor>> attention;
};

// Autoregressive forward pass over `token_ids`. Logits at position t
// depend only on tokens <= t. Rotary models reject N > max_context with a
// ContextLengthError; models without rotary embeddings (trained recency
// bias) may extrapolate past it.
ForwardResult forward(Tape& tape, const ModelParams& params, const ModelConfig& config,
                      const std::vector<int>& token_ids, const ForwardOptions& opts = {});

// Row t is the natural-log next-token distribution after token t
// (eval-mode bias application); rows logsumexp to 0.
Tensor next_token_logprobs(const ModelParams& params, const ModelConfig& config,
                           const std::vector<int>& token_ids);

// Checkpoint: text header (magic, version, config key=value lines, blank
// line) followed by named blocks of `name rank dims...\n` + little-endian
// 64-bit float payload. Round trip is bit-exact.
void save_checkpoint(std::ostream& out, const ModelParams& params, const ModelConfig& config);
void save_checkpoint_file(const std::string& path, const ModelParams& params,
                          const ModelConfig& config);
std::pair<ModelParams, ModelConfig> load_checkpoint(std::istream& in);
std::pair<ModelParams, ModelConfig> load_checkpoint_file(const std::string& path);

// Shared block-format helpers (also used by the trainer's resume state).
void write_tensor_block(std::ostream& out, const std::string& name, const Tensor& t);
std::pair<std::string, Tensor> read_tensor_block(std::istream& in);

} // namespace rlab
