#include "rlab/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rlab {

void ModelConfig::validate() const {
    if (n_layers < 0) throw ConfigError("model: n_layers must be >= 0");
    if (n_heads < 1) throw ConfigError("model: n_heads must be >= 1");
    if (d_model < 1 || d_model % n_heads != 0)
        throw ConfigError("model: d_model (" + std::to_string(d_model) +
                          ") must be a positive multiple of n_heads (" + std::to_string(n_heads) +
                          ")");
    if (d_ff < 1) throw ConfigError("model: d_ff must be >= 1");
    if (vocab_size < 1) throw ConfigError("model: vocab_size must be >= 1");
    if (max_context < 1) throw ConfigError("model: max_context must be >= 1");
    if (bias.use_rotary && d_head() % 2 != 0)
        throw ConfigError("model: rotary embeddings need an even head dimension, got " +
                          std::to_string(d_head()));
    bias.validate(n_heads);
}

ModelConfig ModelConfig::paper_scale() {
    ModelConfig c;
    c.n_layers = 2;
    c.n_heads = 4;
    c.d_model = 256;
    c.d_ff = 1024;
    c.max_context = 2048;
    return c;
}

ModelParams ModelParams::init(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const int d = config.d_model, ff = config.d_ff, v = config.vocab_size;
    constexpr double sd = 0.02;
    ModelParams p;
    p.embedding = Tensor::randn({v, d}, rng, 0.0, sd, true);
    p.layers.resize(static_cast<size_t>(config.n_layers));
    for (auto& layer : p.layers) {
        layer.ln_gain = Tensor::full({d}, 1.0, true);
        layer.ln_bias = Tensor::zeros({d}, true);
        layer.wq = Tensor::randn({d, d}, rng, 0.0, sd, true);
        layer.wk = Tensor::randn({d, d}, rng, 0.0, sd, true);
        layer.wv = Tensor::randn({d, d}, rng, 0.0, sd, true);
        layer.wo = Tensor::randn({d, d}, rng, 0.0, sd, true);
        layer.bq = Tensor::zeros({d}, true);
        layer.bk = Tensor::zeros({d}, true);
        layer.bv = Tensor::zeros({d}, true);
        layer.bo = Tensor::zeros({d}, true);
        layer.w_ff1 = Tensor::randn({d, ff}, rng, 0.0, sd, true);
        layer.b_ff1 = Tensor::zeros({ff}, true);
        layer.w_ff2 = Tensor::randn({ff, d}, rng, 0.0, sd, true);
        layer.b_ff2 = Tensor::zeros({d}, true);
    }
    p.final_ln_gain = Tensor::full({d}, 1.0, true);
    p.final_ln_bias = Tensor::zeros({d}, true);
    p.output_proj = Tensor::randn({d, v}, rng, 0.0, sd, true);
    return p;
}

namespace {

template <typename Params, typename TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> named_impl(Params& p) {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("embedding", &p.embedding);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        out.emplace_back(prefix + "ln_gain", &layer.ln_gain);
        out.emplace_back(prefix + "ln_bias", &layer.ln_bias);
        out.emplace_back(prefix + "wq", &layer.wq);
        out.emplace_back(prefix + "bq", &layer.bq);
        out.emplace_back(prefix + "wk", &layer.wk);
        out.emplace_back(prefix + "bk", &layer.bk);
        out.emplace_back(prefix + "wv", &layer.wv);
        out.emplace_back(prefix + "bv", &layer.bv);
        out.emplace_back(prefix + "wo", &layer.wo);
        out.emplace_back(prefix + "bo", &layer.bo);
        out.emplace_back(prefix + "w_ff1", &layer.w_ff1);
        out.emplace_back(prefix + "b_ff1", &layer.b_ff1);
        out.emplace_back(prefix + "w_ff2", &layer.w_ff2);
        out.emplace_back(prefix + "b_ff2", &layer.b_ff2);
    }
    out.emplace_back("final_ln_gain", &p.final_ln_gain);
    out.emplace_back("final_ln_bias", &p.final_ln_bias);
    out.emplace_back("output_proj", &p.output_proj);
    return out;
}

} // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    return named_impl<ModelParams, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    return named_impl<const ModelParams, const Tensor*>(*this);
}

void ModelParams::zero_grad() {
    for (auto& [name, t] : named()) t->zero_grad();
}

size_t ModelParams::parameter_count() const {
    size_t n = 0;
    for (auto& [name, t] : named()) n += t->numel();
    return n;
}

ForwardResult forward(Tape& tape, const ModelParams& params, const ModelConfig& config,
                      const std::vector<int>& token_ids, const ForwardOptions& opts) {
    const int n = static_cast<int>(token_ids.size());
    if (n < 1) throw ContractError("forward: need at least one token");
    if (config.bias.use_rotary && n > config.max_context)
        throw ContextLengthError("forward: sequence length " + std::to_string(n) +
                                 " exceeds max_context " + std::to_string(config.max_context) +
                                 " and rotary embeddings do not extrapolate");

    const bool training = opts.mode == Mode::train;
    BiasSpec effective = config.bias;
    if (!effective.applies(training)) effective.kind = BiasKind::none;

    const int d_head = config.d_head();
    std::vector<int> positions(static_cast<size_t>(n));
    std::iota(positions.begin(), positions.end(), 0);

    BiasMatrixCache cache;
    ForwardResult result;

    Tensor x = embedding_rows(tape, params.embedding, token_ids);
    for (const LayerParams& layer : params.layers) {
        Tensor h = layer_norm(tape, x, layer.ln_gain, layer.ln_bias);

        // Attention branch.
        Tensor q = add_row_vector(tape, matmul(tape, h, layer.wq), layer.bq);
        Tensor k = add_row_vector(tape, matmul(tape, h, layer.wk), layer.bk);
        Tensor v = add_row_vector(tape, matmul(tape, h, layer.wv), layer.bv);
        std::vector<Tensor> head_contexts;
        std::vector<Tensor> head_weights;
        head_contexts.reserve(static_cast<size_t>(config.n_heads));
        for (int head = 0; head < config.n_heads; ++head) {
            Tensor qh = slice_cols(tape, q, head * d_head, d_head);
            Tensor kh = slice_cols(tape, k, head * d_head, d_head);
            Tensor vh = slice_cols(tape, v, head * d_head, d_head);
            if (config.bias.use_rotary) {
                qh = rotary_transform(tape, qh, positions);
                kh = rotary_transform(tape, kh, positions);
            }
            AttentionHeadOutput att = biased_causal_attention(tape, qh, kh, vh, effective, head,
                                                              &cache);
            head_contexts.push_back(att.context);
            if (opts.collect_attention) head_weights.push_back(att.weights);
        }
        Tensor merged = concat_cols(tape, head_contexts);
        Tensor attn_out = add_row_vector(tape, matmul(tape, merged, layer.wo), layer.bo);

        // FFN branch, reading the same normalized input.
        Tensor ff = add_row_vector(tape, matmul(tape, h, layer.w_ff1), layer.b_ff1);
        ff = gelu(tape, ff);
        ff = add_row_vector(tape, matmul(tape, ff, layer.w_ff2), layer.b_ff2);

        x = add(tape, x, add(tape, attn_out, ff));
        if (opts.collect_attention) result.attention.push_back(std::move(head_weights));
    }

    // Degenerate n_layers=0 maps embeddings straight to logits.
    if (!params.layers.empty())
        x = layer_norm(tape, x, params.final_ln_gain, params.final_ln_bias);
    result.logits = matmul(tape, x, params.output_proj);
    return result;
}

Tensor next_token_logprobs(const ModelParams& params, const ModelConfig& config,
                           const std::vector<int>& token_ids) {
    Tape tape;
    ForwardResult r = forward(tape, params, config, token_ids, {Mode::eval, false});
    return log_softmax_rows(tape, r.logits);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "recency-lab-checkpoint";
constexpr int kFormatVersion = 1;

void write_le_doubles(std::ostream& out, const std::vector<double>& values) {
    for (double v : values) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(buf), 8);
    }
}

void read_le_doubles(std::istream& in, std::vector<double>& values) {
    for (double& v : values) {
        unsigned char buf[8];
        in.read(reinterpret_cast<char*>(buf), 8);
        if (!in) throw DataError("checkpoint: truncated tensor payload");
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
        std::memcpy(&v, &bits, sizeof v);
    }
}

std::string slopes_to_csv(const std::vector<double>& slopes) {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < slopes.size(); ++i) os << (i ? "," : "") << slopes[i];
    return os.str();
}

std::vector<double> slopes_from_csv(const std::string& s) {
    std::vector<double> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

} // namespace

void write_tensor_block(std::ostream& out, const std::string& name, const Tensor& t) {
    out << name << " " << t.rank();
    for (int d : t.shape) out << " " << d;
    out << "\n";
    write_le_doubles(out, *t.data);
}

std::pair<std::string, Tensor> read_tensor_block(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint: missing tensor block header");
    std::istringstream hs(line);
    std::string name;
    int rank = -1;
    hs >> name >> rank;
    if (name.empty() || rank < 0) throw DataError("checkpoint: malformed block header '" + line + "'");
    std::vector<int> shape(static_cast<size_t>(rank));
    for (int& d : shape) {
        if (!(hs >> d)) throw DataError("checkpoint: malformed dims in block '" + name + "'");
    }
    Tensor t = Tensor::zeros(shape.empty() ? std::vector<int>{1} : shape);
    t.shape = shape.empty() ? std::vector<int>{1} : shape;
    read_le_doubles(in, *t.data);
    check_finite(t, ("checkpoint block '" + name + "'").c_str());
    return {name, t};
}

void save_checkpoint(std::ostream& out, const ModelParams& params, const ModelConfig& config) {
    out << kMagic << "\n";
    out << "format_version=" << kFormatVersion << "\n";
    out << "n_layers=" << config.n_layers << "\n";
    out << "n_heads=" << config.n_heads << "\n";
    out << "d_model=" << config.d_model << "\n";
    out << "d_ff=" << config.d_ff << "\n";
    out << "vocab_size=" << config.vocab_size << "\n";
    out << "max_context=" << config.max_context << "\n";
    out << "seed=" << config.seed << "\n";
    out << "bias.kind=" << to_string(config.bias.kind) << "\n";
    out << "bias.phase=" << to_string(config.bias.phase) << "\n";
    out << "bias.slopes=" << slopes_to_csv(config.bias.slopes) << "\n";
    std::ostringstream nums;
    nums.precision(17);
    nums << "bias.lambda=" << config.bias.lambda << "\n";
    nums << "bias.alpha=" << config.bias.alpha << "\n";
    out << nums.str();
    out << "bias.use_rotary=" << (config.bias.use_rotary ? 1 : 0) << "\n";
    out << "norm=shared_prenorm\n";
    out << "\n";
    for (const auto& [name, t] : params.named()) write_tensor_block(out, name, *t);
}

void save_checkpoint_file(const std::string& path, const ModelParams& params,
                          const ModelConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + path);
    save_checkpoint(out, params, config);
    if (!out) throw DataError("checkpoint: write failed for " + path);
}

std::pair<ModelParams, ModelConfig> load_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw DataError("checkpoint: bad magic (not a recency-lab checkpoint)");
    ModelConfig config;
    while (std::getline(in, line) && !line.empty()) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint: malformed header line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "format_version") {
            if (std::stoi(value) != kFormatVersion)
                throw DataError("checkpoint: unsupported format version " + value);
        } else if (key == "n_layers") config.n_layers = std::stoi(value);
        else if (key == "n_heads") config.n_heads = std::stoi(value);
        else if (key == "d_model") config.d_model = std::stoi(value);
        else if (key == "d_ff") config.d_ff = std::stoi(value);
        else if (key == "vocab_size") config.vocab_size = std::stoi(value);
        else if (key == "max_context") config.max_context = std::stoi(value);
        else if (key == "seed") config.seed = std::stoull(value);
        else if (key == "bias.kind") config.bias.kind = bias_kind_from_string(value);
        else if (key == "bias.phase") config.bias.phase = bias_phase_from_string(value);
        else if (key == "bias.slopes") config.bias.slopes = slopes_from_csv(value);
        else if (key == "bias.lambda") config.bias.lambda = std::stod(value);
        else if (key == "bias.alpha") config.bias.alpha = std::stod(value);
        else if (key == "bias.use_rotary") config.bias.use_rotary = value == "1";
        else if (key == "norm") { /* informational */ }
        else throw DataError("checkpoint: unknown header key '" + key + "'");
    }
    config.validate();
    ModelParams params = ModelParams::init(config);
    for (auto& [name, t] : params.named()) {
        auto [block_name, loaded] = read_tensor_block(in);
        if (block_name != name)
            throw DataError("checkpoint: expected block '" + name + "', found '" + block_name + "'");
        if (loaded.shape != t->shape)
            throw DataError("checkpoint: block '" + name + "' has unexpected shape");
        *t->data = *loaded.data;
    }
    return {std::move(params), config};
}

std::pair<ModelParams, ModelConfig> load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot read " + path);
    return load_checkpoint(in);
}

} // namespace rlab
