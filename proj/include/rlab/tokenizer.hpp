#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "rlab/error.hpp"

namespace rlab {

// Word-level vocabulary with UTF-8 byte fallback. Ids 0..255 are the byte
// tokens, 256 is BOS, word tokens follow. Every string is encodable.
class Vocab {
  public:
    static constexpr int kBos = 256;
    static constexpr int kFirstWord = 257;

    // Counts whitespace-delimited words in `corpus` and keeps the
    // (max_size - 257) most frequent, ties broken lexicographically.
    // max_size >= 257; empty corpus is an error.
    static Vocab build(std::istream& corpus, int max_size, bool lowercase = false);
    static Vocab build_from_string(const std::string& corpus, int max_size,
                                   bool lowercase = false);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    bool lowercase() const { return lowercase_; }
    // -1 when the word is not in the vocabulary.
    int word_id(const std::string& word) const;
    const std::string& token(int id) const;

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Vocab load(std::istream& in);
    static Vocab load_file(const std::string& path);

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> word_to_id_;
    bool lowercase_ = false;

    void index_words();
};

// (start_token, end_token) is a half-open token-index range; spans exclude
// the BOS at index 0 and partition the rest in order.
struct WordSpan {
    int start_token;
    int end_token;
    int word_index;
};

struct TokenizedText {
    std::vector<int> token_ids;      // BOS first
    std::vector<WordSpan> word_spans;
    std::vector<std::string> words;  // original whitespace-delimited words
};

// Total: unknown words fall back to their UTF-8 byte token sequence.
TokenizedText encode(const Vocab& vocab, const std::string& text);

// Inverse up to whitespace normalization (single spaces between words).
std::string decode(const Vocab& vocab, const std::vector<int>& ids);

// Whitespace-delimited words of `text`, lowercased when asked. Shared by
// the tokenizer, the unigram model, and the rt harness so word indices
// always agree.
std::vector<std::string> split_words(const std::string& text, bool lowercase = false);

} // namespace rlab
