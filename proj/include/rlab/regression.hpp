#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlab/error.hpp"
#include "rlab/surprisal.hpp"

namespace rlab {

enum class Measure { SPR, SP, FP, GP };
enum class Partition { fit, exploratory, heldout };

const char* to_string(Measure m);
const char* to_string(Partition p);
Measure measure_from_string(const std::string& s);
bool is_eye_tracking(Measure m);

// One reading-time data point. word_index is document-level (the join key
// against surprisal records); word_index_in_sentence is derived per
// (subject, doc, sentence) group and drives the position predictor and
// sentence-boundary filters.
struct Observation {
    std::string corpus;
    Measure measure = Measure::SPR;
    int subject = 0;
    int sentence = 0;
    std::string doc_id;
    int word_index = 0;
    int word_index_in_sentence = -1;
    std::string word;
    double rt_ms = 0.0;
    int word_length = 0;
    std::optional<bool> prev_fixated; // ET measures only
    std::optional<int> line_pos;      // Dundee-style extras
    std::optional<int> screen_pos;
    double surprisal_bits = 0.0;
    double prev_surprisal_bits = 0.0;
    double unigram_bits = 0.0;
    Partition partition = Partition::fit;
};

// (subject + sentence) mod 4: 0 or 1 -> fit, 2 -> exploratory,
// 3 -> heldout. Keeps every (subject, sentence) pair intact.
Partition assign_partition(int subject, int sentence);

// Derives word_index_in_sentence (rank of word_index) and partition for
// every row, grouping by (subject, doc, sentence). Rows are sorted into
// reading order (corpus, measure, subject, doc, sentence, word_index).
void prepare_observations(std::vector<Observation>& rows);

struct FilterReport {
    long long kept = 0;
    long long dropped_sentence_boundary = 0;
    long long dropped_rt_range = 0;      // SPR only
    long long dropped_unfixated = 0;     // ET only
    long long dropped_long_saccade = 0;  // ET only
    long long dropped_line_boundary = 0; // ET only
    long long dropped_screen_boundary = 0;
};

// SPR: drops sentence-initial/final words and rt < 100 ms or > 3000 ms
// (endpoints kept). Requires prepared rows.
std::vector<Observation> filter_spr(const std::vector<Observation>& rows, FilterReport* report);

// ET: drops unfixated words (rt == 0), words following saccades longer
// than four words (length >= 5), sentence-initial/final words, and
// line/screen starts and ends when those columns are present.
std::vector<Observation> filter_et(const std::vector<Observation>& rows, FilterReport* report);

// ---------------------------------------------------------------------------
// Fixed-effects Gaussian regression
// ---------------------------------------------------------------------------

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> coefficients;
    double sigma2 = 0.0;        // MLE residual variance, floored at 1e-12
    double log_likelihood = 0.0;
    int n = 0;
};

// Ordinary least squares via normal equations with 1e-10 ridge jitter on
// the Gram diagonal; Gaussian log-likelihood at the MLE variance. X is
// row-major n x p and must include the intercept column. Throws DataError
// naming the offending column if the system stays singular past jitter.
FitResult fit_linear(const std::vector<double>& X, int n, int p, const std::vector<double>& y,
                     const std::vector<std::string>& names);

// Gaussian log-likelihood of (X, y) under frozen coefficients and sigma2.
double evaluate_loglik(const FitResult& fit, const std::vector<double>& X, int n, int p,
                       const std::vector<double>& y);

// Per-observation squared prediction errors under frozen coefficients.
std::vector<double> squared_errors(const FitResult& fit, const std::vector<double>& X, int n,
                                   int p, const std::vector<double>& y);

// Column means/sds learned on the fit partition and reused verbatim on
// the other partitions; constant columns are centered only.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> sd;

    static Standardizer fit(const std::vector<double>& X, int n, int p);
    void apply(std::vector<double>& X, int n, int p) const;
};

// Predictor layout for one (corpus, measure) group. Baseline: intercept,
// word length, word position in sentence, unigram surprisal, and
// prev_fixated for ET; the full model adds current and previous word
// surprisal (spillover).
struct DesignInfo {
    std::vector<std::string> names;
    int p = 0;
};

DesignInfo design_info(Measure measure, bool full_model);
std::vector<double> build_design(const std::vector<Observation>& rows, Measure measure,
                                 bool full_model);
std::vector<double> response(const std::vector<Observation>& rows);

struct DeltaLogLik {
    double value = 0.0;
    FitResult base_fit;
    FitResult full_fit;
    int n_fit = 0;
    int n_exploratory = 0;
};

// The protocol: fit base and full models on the fit partition (predictors
// z-scored there), evaluate both log-likelihoods on the exploratory
// partition with frozen coefficients and variance, report the increase.
DeltaLogLik delta_loglik(const std::vector<Observation>& prepared_filtered_rows, Measure measure);

// Squared errors of base/full (fit-partition coefficients) on a chosen
// partition, paired by observation; feeds the permutation test.
struct PairedErrors {
    std::vector<double> base;
    std::vector<double> full;
};
PairedErrors heldout_squared_errors(const std::vector<Observation>& rows, Measure measure,
                                    Partition eval_partition = Partition::heldout);

// Paired sign-permutation test of mean(sq_err_base - sq_err_full).
// Enumerates all 2^n sign patterns when 2^n <= n_perm (p = #{>=obs}/2^n);
// otherwise samples n_perm sign vectors and returns
// (1 + #{>=obs}) / (1 + n_perm).
double permutation_test(const std::vector<double>& sq_err_base,
                        const std::vector<double>& sq_err_full, int n_perm, uint64_t seed);

} // namespace rlab
