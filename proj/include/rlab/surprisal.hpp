#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rlab/model.hpp"
#include "rlab/tokenizer.hpp"

namespace rlab {

// Word-level surprisal: the negative log probability of the word given
// its preceding context, summed over the word's tokens (chain rule).
// Bits at this boundary; training stays in nats.
struct SurprisalRecord {
    int word_index;
    std::string word;
    double surprisal_bits;
    int n_tokens;
};

// Scores one document as a single stream; the first word conditions on
// BOS. Empty text gives an empty list. Documents longer than the rotary
// context window raise ContextLengthError (no sliding-window rescue).
std::vector<SurprisalRecord> word_surprisals(const ModelParams& params, const ModelConfig& config,
                                             const Vocab& vocab, const std::string& text);

// exp(mean token-level negative natural-log probability) over all
// documents; always >= 1.
double perplexity(const ModelParams& params, const ModelConfig& config, const Vocab& vocab,
                  const std::vector<std::string>& documents);

// Add-k unigram estimator over whitespace words:
//   p(w) = (count(w) + k) / (total + k * (V + 1)),
// with OOV words taking count 0 (the +1 slot).
class UnigramModel {
  public:
    static UnigramModel build(std::istream& corpus, bool lowercase = false, double k = 1.0);
    static UnigramModel build_from_string(const std::string& corpus, bool lowercase = false,
                                          double k = 1.0);
    static UnigramModel from_counts(std::map<std::string, long long> counts, double k = 1.0);

    double probability(const std::string& word) const;
    double surprisal_bits(const std::string& word) const;

    long long total_count() const { return total_; }
    size_t distinct_words() const { return counts_.size(); }
    bool lowercase() const { return lowercase_; }

  private:
    std::map<std::string, long long> counts_;
    long long total_ = 0;
    double k_ = 1.0;
    bool lowercase_ = false;
};

} // namespace rlab
