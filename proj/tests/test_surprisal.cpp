#include <doctest.h>

#include <cmath>

#include "rlab/surprisal.hpp"

using namespace rlab;

namespace {

// A zero-layer model: logits at position t are emb[token_t] .
// output_proj, so next-token distributions can be dialed in exactly.
ModelConfig lookup_config(int vocab_size) {
    ModelConfig cfg;
    cfg.n_layers = 0;
    cfg.n_heads = 1;
    cfg.d_model = vocab_size;
    cfg.d_ff = 1;
    cfg.vocab_size = vocab_size;
    cfg.max_context = 64;
    cfg.seed = 5;
    // No rotary so odd d_model is fine; alibi slope 0 is inert.
    cfg.bias.kind = BiasKind::alibi;
    cfg.bias.phase = BiasPhase::train_and_inference;
    cfg.bias.use_rotary = false;
    cfg.bias.slopes = {0.0};
    return cfg;
}

ModelParams lookup_params(const ModelConfig& cfg) {
    ModelParams p = ModelParams::init(cfg);
    std::fill(p.embedding.data->begin(), p.embedding.data->end(), 0.0);
    std::fill(p.output_proj.data->begin(), p.output_proj.data->end(), 0.0);
    for (int i = 0; i < cfg.d_model; ++i) p.output_proj.at2(i, i) = 1.0; // identity
    return p;
}

} // namespace

TEST_CASE("certainty: a deterministic model gives zero surprisal") {
    Vocab vocab = Vocab::build_from_string("a b a b", 259);
    const int ida = vocab.word_id("a"), idb = vocab.word_id("b");
    REQUIRE(ida >= 0);
    REQUIRE(idb >= 0);
    ModelConfig cfg = lookup_config(vocab.size());
    ModelParams params = lookup_params(cfg);
    // BOS -> a, a -> b, b -> a with margin 80.
    params.embedding.at2(Vocab::kBos, ida) = 80.0;
    params.embedding.at2(ida, idb) = 80.0;
    params.embedding.at2(idb, ida) = 80.0;

    for (const auto& rec : word_surprisals(params, cfg, vocab, "a b a b a")) {
        CHECK(rec.surprisal_bits >= 0.0);
        CHECK(rec.surprisal_bits < 1e-9);
    }
}

TEST_CASE("uniformity: all-zero logits give log2(V) per single-token word") {
    Vocab vocab = Vocab::build_from_string("a b", 259);
    ModelConfig cfg = lookup_config(vocab.size());
    ModelParams params = lookup_params(cfg);
    const double expect = std::log2(static_cast<double>(vocab.size()));
    for (const auto& rec : word_surprisals(params, cfg, vocab, "a b a")) {
        CHECK(rec.n_tokens == 1);
        CHECK(rec.surprisal_bits == doctest::Approx(expect).epsilon(1e-12));
    }
    // Perplexity of the uniform model is exactly V.
    const double ppl = perplexity(params, cfg, vocab, {"a b a b", "b a"});
    CHECK(ppl == doctest::Approx(static_cast<double>(vocab.size())).epsilon(1e-9));
    CHECK(ppl >= 1.0);
}

TEST_CASE("chain rule: a two-token word sums its token surprisals") {
    // Word "qz" falls back to bytes q, z. Dial in p(q|BOS) = 1/2 and
    // p(z|q) = 1/4; the word surprisal must be 1 + 2 = 3 bits (the word
    // probability is 1/8).
    Vocab vocab = Vocab::build_from_string("filler", 258);
    ModelConfig cfg = lookup_config(vocab.size());
    ModelParams params = lookup_params(cfg);
    const int q = 'q', z = 'z';
    const int v = vocab.size();
    for (int j = 0; j < v; ++j) {
        params.embedding.at2(Vocab::kBos, j) = j == q ? std::log(0.5) : std::log(0.5 / (v - 1));
        params.embedding.at2(q, j) = j == z ? std::log(0.25) : std::log(0.75 / (v - 1));
    }
    auto records = word_surprisals(params, cfg, vocab, "qz");
    REQUIRE(records.size() == 1);
    CHECK(records[0].n_tokens == 2);
    CHECK(records[0].surprisal_bits == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("empty text yields an empty record list") {
    Vocab vocab = Vocab::build_from_string("a", 258);
    ModelConfig cfg = lookup_config(vocab.size());
    ModelParams params = lookup_params(cfg);
    CHECK(word_surprisals(params, cfg, vocab, "").empty());
    CHECK(word_surprisals(params, cfg, vocab, "   \t\n").empty());
}

TEST_CASE("surprisal is nonnegative and finite on a random model") {
    Vocab vocab = Vocab::build_from_string("cats chase very small shiny mice", 300);
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.vocab_size = vocab.size();
    cfg.max_context = 64;
    cfg.seed = 21;
    ModelParams params = ModelParams::init(cfg);
    int total_words = 0;
    for (const auto& rec :
         word_surprisals(params, cfg, vocab, "cats chase mice zqqx shiny mice")) {
        CHECK(rec.surprisal_bits >= 0.0);
        CHECK(std::isfinite(rec.surprisal_bits));
        CHECK(rec.n_tokens >= 1);
        ++total_words;
    }
    CHECK(total_words == 6);
}

TEST_CASE("re-chunking invariance: prefix passes reproduce full-pass rows") {
    Vocab vocab = Vocab::build_from_string("one two three four five six seven", 300);
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.vocab_size = vocab.size();
    cfg.max_context = 64;
    cfg.seed = 9;
    ModelParams params = ModelParams::init(cfg);

    const std::string text = "one two three four five six seven";
    TokenizedText toks = encode(vocab, text);
    Tensor full = next_token_logprobs(params, cfg, toks.token_ids);
    for (size_t cut = 2; cut < toks.token_ids.size(); ++cut) {
        std::vector<int> prefix(toks.token_ids.begin(), toks.token_ids.begin() + cut);
        Tensor part = next_token_logprobs(params, cfg, prefix);
        for (int r = 0; r < part.dim(0); ++r)
            for (int c = 0; c < part.dim(1); ++c)
                CHECK(part.at2(r, c) == full.at2(r, c));
    }
}

TEST_CASE("unigram surprisal with add-1 smoothing") {
    UnigramModel m = UnigramModel::from_counts({{"a", 3}, {"b", 1}});
    // total 4, V 2: p(a) = 4/7.
    CHECK(m.surprisal_bits("a") == doctest::Approx(-std::log2(4.0 / 7.0)).epsilon(1e-12));
    CHECK(m.surprisal_bits("b") == doctest::Approx(-std::log2(2.0 / 7.0)).epsilon(1e-12));
    // OOV takes count 0.
    CHECK(m.surprisal_bits("zzz") == doctest::Approx(-std::log2(1.0 / 7.0)).epsilon(1e-12));

    // Single-word corpus: count 1, total 1, V 1 -> p(a) = 2/3.
    UnigramModel single = UnigramModel::from_counts({{"a", 1}});
    CHECK(single.surprisal_bits("a") == doctest::Approx(-std::log2(2.0 / 3.0)).epsilon(1e-12));

    // Probabilities over vocab + OOV sum to one.
    double total = m.probability("a") + m.probability("b") + m.probability("unseen");
    CHECK(std::fabs(total - 1.0) < 1e-9);

    UnigramModel built = UnigramModel::build_from_string("a a a b");
    CHECK(built.total_count() == 4);
    CHECK(built.distinct_words() == 2);
    CHECK(built.surprisal_bits("a") == m.surprisal_bits("a"));
    CHECK_THROWS_AS(UnigramModel::build_from_string("   "), DataError);
}
