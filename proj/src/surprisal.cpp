#include "rlab/surprisal.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace rlab {

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

std::vector<SurprisalRecord> word_surprisals(const ModelParams& params, const ModelConfig& config,
                                             const Vocab& vocab, const std::string& text) {
    TokenizedText toks = encode(vocab, text);
    std::vector<SurprisalRecord> out;
    if (toks.words.empty()) return out;

    Tensor logprobs = next_token_logprobs(params, config, toks.token_ids); // [T x V]
    const int vsize = logprobs.dim(1);
    out.reserve(toks.word_spans.size());
    for (const WordSpan& span : toks.word_spans) {
        double nats = 0.0;
        for (int t = span.start_token; t < span.end_token; ++t) {
            const int id = toks.token_ids[static_cast<size_t>(t)];
            if (id < 0 || id >= vsize)
                throw IndexError("word_surprisals: token id out of vocabulary range");
            nats -= logprobs.at2(t - 1, id); // distribution after token t-1
        }
        out.push_back({span.word_index, toks.words[static_cast<size_t>(span.word_index)],
                       nats / kLn2, span.end_token - span.start_token});
    }
    return out;
}

double perplexity(const ModelParams& params, const ModelConfig& config, const Vocab& vocab,
                  const std::vector<std::string>& documents) {
    if (documents.empty()) throw ContractError("perplexity: no documents");
    double total_nats = 0.0;
    long long total_tokens = 0;
    for (const std::string& doc : documents) {
        TokenizedText toks = encode(vocab, doc);
        if (toks.token_ids.size() < 2) continue; // BOS only
        Tensor logprobs = next_token_logprobs(params, config, toks.token_ids);
        for (size_t t = 1; t < toks.token_ids.size(); ++t) {
            total_nats -= logprobs.at2(static_cast<int>(t) - 1, toks.token_ids[t]);
            ++total_tokens;
        }
    }
    if (total_tokens == 0) throw DataError("perplexity: corpus has no scorable tokens");
    return std::exp(total_nats / static_cast<double>(total_tokens));
}

UnigramModel UnigramModel::build(std::istream& corpus, bool lowercase, double k) {
    std::map<std::string, long long> counts;
    std::string line;
    while (std::getline(corpus, line))
        for (auto& w : split_words(line, lowercase)) ++counts[w];
    if (counts.empty()) throw DataError("unigram: empty corpus");
    UnigramModel m = from_counts(std::move(counts), k);
    m.lowercase_ = lowercase;
    return m;
}

UnigramModel UnigramModel::build_from_string(const std::string& corpus, bool lowercase, double k) {
    std::istringstream in(corpus);
    return build(in, lowercase, k);
}

UnigramModel UnigramModel::from_counts(std::map<std::string, long long> counts, double k) {
    if (!(k > 0.0)) throw ContractError("unigram: smoothing constant must be positive");
    UnigramModel m;
    m.counts_ = std::move(counts);
    m.k_ = k;
    m.total_ = 0;
    for (const auto& [w, c] : m.counts_) m.total_ += c;
    return m;
}

double UnigramModel::probability(const std::string& word) const {
    const std::string key = lowercase_ ? [&] {
        std::string lower;
        for (char ch : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        return lower;
    }() : word;
    auto it = counts_.find(key);
    const long long c = it == counts_.end() ? 0 : it->second;
    const double denom = static_cast<double>(total_) + k_ * (static_cast<double>(counts_.size()) + 1.0);
    return (static_cast<double>(c) + k_) / denom;
}

double UnigramModel::surprisal_bits(const std::string& word) const {
    return -std::log2(probability(word));
}

} // namespace rlab
