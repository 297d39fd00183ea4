#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rlab/model.hpp"
#include "rlab/regression.hpp"
#include "rlab/trainer.hpp"

namespace rlab {

// One experiment condition: architecture + bias + training setup + data
// paths, parsed from a flat key=value file with section prefixes
// (model., train., bias., paths.). Lines starting with # are comments.
struct ExperimentConfig {
    std::string condition = "default";
    ModelConfig model;
    TrainConfig train;
    bool lowercase = false;
    std::string train_corpus;
    std::string eval_corpus;
    std::vector<std::string> rt_corpora;
    std::string dependency_file;
    std::string out_dir;

    // Throws ConfigError before any work happens.
    void validate_for(const std::string& command) const;
};

ExperimentConfig parse_experiment_config(std::istream& in, const std::string& origin);
ExperimentConfig load_experiment_config(const std::string& path);

// TSV with header doc_id<TAB>text, one document per line.
std::vector<std::pair<std::string, std::string>> read_eval_docs(const std::string& path);

// Condition-scoped artifact paths under <out_dir>/<condition>/.
struct ConditionPaths {
    std::string dir;
    std::string checkpoint;
    std::string train_state;
    std::string vocab;
    std::string loss_log;
    std::string manifest;
    std::string surprisal_csv;
    std::string head_report_csv;
};
ConditionPaths condition_paths(const ExperimentConfig& config);

// train: build vocab, tokenize, train, write checkpoint + loss log +
// manifest (artifact checksums; rerunning with the same inputs is
// byte-identical).
void cmd_train(const ExperimentConfig& config);

// surprisal: score every eval document with the condition's checkpoint.
// CSV columns: doc_id, word_index, word, surprisal_bits, n_tokens, model_id.
void cmd_surprisal(const ExperimentConfig& config);

// regress: join rt corpora with each condition's surprisal CSV, apply the
// measure-appropriate filters, compute per-(corpus, measure) ΔLogLik and
// the held-out permutation p versus the reference condition (bias kind
// none when present, else the first). Writes <out_dir>/delta_loglik.csv.
void cmd_regress(const std::vector<ExperimentConfig>& conditions);

// heads: per-(layer, head, dep_type) mean attention report + one bar SVG
// per dependency type.
void cmd_heads(const ExperimentConfig& config);

// report: per-condition ΔLogLik totals and perplexity; writes
// summary.csv, dll_totals.svg, and ppl_vs_dll.svg
// into the run directory.
void cmd_report(const std::vector<ExperimentConfig>& conditions);

// Checksum used in manifests (FNV-1a 64 over file bytes, hex).
std::string file_checksum_hex(const std::string& path);

} // namespace rlab
