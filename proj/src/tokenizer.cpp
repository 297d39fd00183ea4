#include "rlab/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace rlab {

std::vector<std::string> split_words(const std::string& text, bool lowercase) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(ch)))
                                    : ch);
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

Vocab Vocab::build(std::istream& corpus, int max_size, bool lowercase) {
    if (max_size < kFirstWord)
        throw ContractError("build_vocab: max_size must be >= 257, got " + std::to_string(max_size));
    // std::map keeps deterministic order for the lexicographic tie-break.
    std::map<std::string, long long> counts;
    std::string line;
    bool any = false;
    while (std::getline(corpus, line)) {
        for (auto& w : split_words(line, lowercase)) {
            ++counts[w];
            any = true;
        }
    }
    if (!any) throw DataError("build_vocab: empty corpus");

    std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    v.lowercase_ = lowercase;
    v.id_to_token_.reserve(static_cast<size_t>(max_size));
    for (int b = 0; b < 256; ++b) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "<0x%02x>", b);
        v.id_to_token_.emplace_back(buf);
    }
    v.id_to_token_.emplace_back("<bos>");
    const size_t budget = static_cast<size_t>(max_size - kFirstWord);
    for (size_t i = 0; i < ranked.size() && i < budget; ++i)
        v.id_to_token_.push_back(ranked[i].first);
    v.index_words();
    return v;
}

Vocab Vocab::build_from_string(const std::string& corpus, int max_size, bool lowercase) {
    std::istringstream in(corpus);
    return build(in, max_size, lowercase);
}

void Vocab::index_words() {
    word_to_id_.clear();
    for (int id = kFirstWord; id < size(); ++id)
        word_to_id_.emplace(id_to_token_[static_cast<size_t>(id)], id);
}

int Vocab::word_id(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? -1 : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size())
        throw IndexError("vocab: token id " + std::to_string(id) + " out of range [0, " +
                         std::to_string(size()) + ")");
    return id_to_token_[static_cast<size_t>(id)];
}

void Vocab::save(std::ostream& out) const {
    out << "rlab-vocab v1 bytes=0..255 bos=256 words=257.." << (size() - 1)
        << " lowercase=" << (lowercase_ ? 1 : 0) << "\n";
    for (const auto& t : id_to_token_) out << t << "\n";
}

void Vocab::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("vocab: cannot write " + path);
    save(out);
}

Vocab Vocab::load(std::istream& in) {
    std::string header;
    if (!std::getline(in, header) || header.rfind("rlab-vocab v1", 0) != 0)
        throw DataError("vocab: missing or unrecognized header");
    Vocab v;
    v.lowercase_ = header.find("lowercase=1") != std::string::npos;
    std::string line;
    while (std::getline(in, line)) v.id_to_token_.push_back(line);
    if (v.size() < kFirstWord) throw DataError("vocab: truncated file");
    v.index_words();
    return v;
}

Vocab Vocab::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("vocab: cannot read " + path);
    return load(in);
}

TokenizedText encode(const Vocab& vocab, const std::string& text) {
    TokenizedText out;
    out.words = split_words(text, vocab.lowercase());
    out.token_ids.push_back(Vocab::kBos);
    bool prev_fallback = false;
    for (size_t w = 0; w < out.words.size(); ++w) {
        const int start = static_cast<int>(out.token_ids.size());
        const int id = vocab.word_id(out.words[w]);
        if (id >= 0) {
            out.token_ids.push_back(id);
            prev_fallback = false;
        } else {
            // A space byte keeps adjacent fallback words separable on
            // decode; it belongs to this word's span.
            if (prev_fallback) out.token_ids.push_back(static_cast<int>(' '));
            for (unsigned char byte : out.words[w])
                out.token_ids.push_back(static_cast<int>(byte));
            prev_fallback = true;
        }
        out.word_spans.push_back({start, static_cast<int>(out.token_ids.size()),
                                  static_cast<int>(w)});
    }
    return out;
}

std::string decode(const Vocab& vocab, const std::vector<int>& ids) {
    std::vector<std::string> words;
    std::string byte_run;
    auto flush = [&] {
        if (!byte_run.empty()) {
            words.push_back(byte_run);
            byte_run.clear();
        }
    };
    for (int id : ids) {
        if (id < 0 || id >= vocab.size())
            throw IndexError("decode: token id " + std::to_string(id) + " out of range");
        if (id == static_cast<int>(' ')) {
            flush(); // fallback-word separator
        } else if (id < 256) {
            byte_run.push_back(static_cast<char>(id));
        } else if (id == Vocab::kBos) {
            flush();
        } else {
            flush();
            words.push_back(vocab.token(id));
        }
    }
    flush();
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

} // namespace rlab
