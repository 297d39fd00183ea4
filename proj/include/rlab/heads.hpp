#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "rlab/model.hpp"
#include "rlab/tokenizer.hpp"

namespace rlab {

// (type, head word, dependent word) triple; indices are 0-based word
// positions in the document's whitespace tokenization. After validation
// the dependent strictly precedes the head, so the head's query can
// attend to the dependent's keys under the causal mask.
struct DependencyRecord {
    std::string doc_id;
    std::string dep_type; // arg1 | arg2 | coref
    int head_word_index = 0;
    int dependent_word_index = 0;
};

struct DependencyLoad {
    std::vector<DependencyRecord> records;
    long long dropped_noncausal = 0; // dependent at or after the head
};

// Tab-separated with header doc_id, dep_type, head_word_index,
// dependent_word_index. doc_word_counts bounds-checks indices; errors
// carry the offending line number. Duplicates are kept.
DependencyLoad load_dependencies(std::istream& in,
                                 const std::map<std::string, int>& doc_word_counts);
DependencyLoad load_dependencies_file(const std::string& path,
                                      const std::map<std::string, int>& doc_word_counts);

struct HeadTypeStats {
    double mean_score = 0.0;
    long long count = 0;
    double mean_distance = 0.0; // head index - dependent index, in words
};

// Rows keyed by (layer, head, dep_type); types with no surviving records
// are simply absent.
struct HeadScoreReport {
    std::map<std::tuple<int, int, std::string>, HeadTypeStats> cells;
    int n_layers = 0;
    int n_heads = 0;
};

// One forward pass per document (attention collected at every layer and
// head); per record the score is the mean post-softmax weight over
// (head-word token x dependent-word token) pairs, averaged within words
// BEFORE averaging across records. Documents must fit the context window.
HeadScoreReport analyze_heads(const ModelParams& params, const ModelConfig& config,
                              const Vocab& vocab,
                              const std::vector<std::pair<std::string, std::string>>& documents,
                              const std::vector<DependencyRecord>& deps);

// Single (layer, head) slice: dep_type -> mean score.
std::map<std::string, double> mean_attention(const ModelParams& params, const ModelConfig& config,
                                             const Vocab& vocab,
                                             const std::vector<std::pair<std::string, std::string>>& documents,
                                             const std::vector<DependencyRecord>& deps, int layer,
                                             int head);

void write_head_report_csv(std::ostream& out, const HeadScoreReport& report);

} // namespace rlab
