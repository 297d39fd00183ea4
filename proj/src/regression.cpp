#include "rlab/regression.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace rlab {

const char* to_string(Measure m) {
    switch (m) {
        case Measure::SPR: return "SPR";
        case Measure::SP: return "SP";
        case Measure::FP: return "FP";
        case Measure::GP: return "GP";
    }
    return "?";
}

const char* to_string(Partition p) {
    switch (p) {
        case Partition::fit: return "fit";
        case Partition::exploratory: return "exploratory";
        case Partition::heldout: return "heldout";
    }
    return "?";
}

Measure measure_from_string(const std::string& s) {
    if (s == "SPR") return Measure::SPR;
    if (s == "SP") return Measure::SP;
    if (s == "FP") return Measure::FP;
    if (s == "GP") return Measure::GP;
    throw DataError("unknown measure '" + s + "' (expected SPR|SP|FP|GP)");
}

bool is_eye_tracking(Measure m) { return m != Measure::SPR; }

Partition assign_partition(int subject, int sentence) {
    if (subject < 0 || sentence < 0)
        throw ContractError("assign_partition: indices must be nonnegative");
    switch ((subject + sentence) % 4) {
        case 0:
        case 1: return Partition::fit;
        case 2: return Partition::exploratory;
        default: return Partition::heldout;
    }
}

namespace {

// Reading order within one subject's pass over a document.
bool reading_order(const Observation& a, const Observation& b) {
    return std::tie(a.corpus, a.measure, a.subject, a.doc_id, a.sentence, a.word_index) <
           std::tie(b.corpus, b.measure, b.subject, b.doc_id, b.sentence, b.word_index);
}

bool same_sentence_group(const Observation& a, const Observation& b) {
    return a.corpus == b.corpus && a.measure == b.measure && a.subject == b.subject &&
           a.doc_id == b.doc_id && a.sentence == b.sentence;
}

bool same_subject_doc(const Observation& a, const Observation& b) {
    return a.corpus == b.corpus && a.measure == b.measure && a.subject == b.subject &&
           a.doc_id == b.doc_id;
}

} // namespace

void prepare_observations(std::vector<Observation>& rows) {
    std::sort(rows.begin(), rows.end(), reading_order);
    size_t start = 0;
    while (start < rows.size()) {
        size_t end = start + 1;
        while (end < rows.size() && same_sentence_group(rows[start], rows[end])) ++end;
        for (size_t i = start; i < end; ++i) {
            rows[i].word_index_in_sentence = static_cast<int>(i - start);
            rows[i].word_length = static_cast<int>(rows[i].word.size());
            rows[i].partition = assign_partition(rows[i].subject, rows[i].sentence);
        }
        start = end;
    }
}

std::vector<Observation> filter_spr(const std::vector<Observation>& rows, FilterReport* report) {
    FilterReport local;
    FilterReport& rep = report ? *report : local;
    std::vector<Observation> kept;
    kept.reserve(rows.size());
    size_t start = 0;
    while (start < rows.size()) {
        size_t end = start + 1;
        while (end < rows.size() && same_sentence_group(rows[start], rows[end])) ++end;
        for (size_t i = start; i < end; ++i) {
            const Observation& row = rows[i];
            if (row.word_index_in_sentence < 0)
                throw DataError("filter_spr: rows not prepared (word_index_in_sentence missing)");
            if (i == start || i == end - 1) {
                ++rep.dropped_sentence_boundary;
                continue;
            }
            if (row.rt_ms < 100.0 || row.rt_ms > 3000.0) {
                ++rep.dropped_rt_range;
                continue;
            }
            kept.push_back(row);
            ++rep.kept;
        }
        start = end;
    }
    return kept;
}

std::vector<Observation> filter_et(const std::vector<Observation>& rows, FilterReport* report) {
    FilterReport local;
    FilterReport& rep = report ? *report : local;
    for (const Observation& row : rows) {
        if (!row.prev_fixated.has_value())
            throw DataError("filter_et: missing required column prev_fixated for measure " +
                            std::string(to_string(row.measure)));
    }

    std::vector<Observation> kept;
    kept.reserve(rows.size());
    size_t start = 0;
    while (start < rows.size()) {
        size_t end = start + 1;
        while (end < rows.size() && same_sentence_group(rows[start], rows[end])) ++end;
        // Most recent fixated position, sentence start counting from -1.
        int prev_fixated_index = -1;
        for (size_t i = start; i < end; ++i) {
            const Observation& row = rows[i];
            if (row.word_index_in_sentence < 0)
                throw DataError("filter_et: rows not prepared (word_index_in_sentence missing)");
            const bool fixated = row.rt_ms > 0.0;
            const int saccade_len = row.word_index_in_sentence - prev_fixated_index;
            if (fixated) prev_fixated_index = row.word_index_in_sentence;

            if (i == start || i == end - 1) {
                ++rep.dropped_sentence_boundary;
                continue;
            }
            if (!fixated) {
                ++rep.dropped_unfixated;
                continue;
            }
            if (saccade_len >= 5) {
                ++rep.dropped_long_saccade;
                continue;
            }
            // Line/screen boundaries, Dundee-style: a start is position 0,
            // an end is a row whose successor (same subject+doc reading
            // order) resets to 0 or is absent.
            if (row.line_pos.has_value()) {
                const bool at_start = *row.line_pos == 0;
                const bool at_end = i + 1 >= rows.size() || !same_subject_doc(row, rows[i + 1]) ||
                                    !rows[i + 1].line_pos.has_value() || *rows[i + 1].line_pos == 0;
                if (at_start || at_end) {
                    ++rep.dropped_line_boundary;
                    continue;
                }
            }
            if (row.screen_pos.has_value()) {
                const bool at_start = *row.screen_pos == 0;
                const bool at_end = i + 1 >= rows.size() || !same_subject_doc(row, rows[i + 1]) ||
                                    !rows[i + 1].screen_pos.has_value() ||
                                    *rows[i + 1].screen_pos == 0;
                if (at_start || at_end) {
                    ++rep.dropped_screen_boundary;
                    continue;
                }
            }
            kept.push_back(row);
            ++rep.kept;
        }
        start = end;
    }
    return kept;
}

// ---------------------------------------------------------------------------
// OLS via Cholesky on the jittered Gram matrix
// ---------------------------------------------------------------------------

namespace {

constexpr double kRidgeJitter = 1e-10;
constexpr double kSigma2Floor = 1e-12;

// Solves (X'X + jitter I) beta = X'y. Returns the pivot column index on
// failure, -1 on success.
int solve_normal_equations(const std::vector<double>& X, int n, int p,
                           const std::vector<double>& y, std::vector<double>& beta) {
    std::vector<double> gram(static_cast<size_t>(p) * p, 0.0);
    std::vector<double> xty(static_cast<size_t>(p), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = X.data() + static_cast<size_t>(i) * p;
        for (int a = 0; a < p; ++a) {
            xty[static_cast<size_t>(a)] += row[a] * y[static_cast<size_t>(i)];
            for (int b = a; b < p; ++b)
                gram[static_cast<size_t>(a) * p + b] += row[a] * row[b];
        }
    }
    for (int a = 0; a < p; ++a) {
        gram[static_cast<size_t>(a) * p + a] += kRidgeJitter;
        for (int b = 0; b < a; ++b)
            gram[static_cast<size_t>(a) * p + b] = gram[static_cast<size_t>(b) * p + a];
    }

    // Cholesky: gram = L L'.
    std::vector<double> L(static_cast<size_t>(p) * p, 0.0);
    for (int a = 0; a < p; ++a) {
        for (int b = 0; b <= a; ++b) {
            double s = gram[static_cast<size_t>(a) * p + b];
            for (int c = 0; c < b; ++c)
                s -= L[static_cast<size_t>(a) * p + c] * L[static_cast<size_t>(b) * p + c];
            if (a == b) {
                if (!(s > 0.0)) return a;
                L[static_cast<size_t>(a) * p + a] = std::sqrt(s);
            } else {
                L[static_cast<size_t>(a) * p + b] = s / L[static_cast<size_t>(b) * p + b];
            }
        }
    }
    // Forward then back substitution.
    std::vector<double> z(static_cast<size_t>(p));
    for (int a = 0; a < p; ++a) {
        double s = xty[static_cast<size_t>(a)];
        for (int c = 0; c < a; ++c) s -= L[static_cast<size_t>(a) * p + c] * z[static_cast<size_t>(c)];
        z[static_cast<size_t>(a)] = s / L[static_cast<size_t>(a) * p + a];
    }
    beta.assign(static_cast<size_t>(p), 0.0);
    for (int a = p - 1; a >= 0; --a) {
        double s = z[static_cast<size_t>(a)];
        for (int c = a + 1; c < p; ++c)
            s -= L[static_cast<size_t>(c) * p + a] * beta[static_cast<size_t>(c)];
        beta[static_cast<size_t>(a)] = s / L[static_cast<size_t>(a) * p + a];
    }
    return -1;
}

double gaussian_loglik(double sigma2, double rss, int n) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    return -0.5 * n * std::log(two_pi * sigma2) - rss / (2.0 * sigma2);
}

} // namespace

FitResult fit_linear(const std::vector<double>& X, int n, int p, const std::vector<double>& y,
                     const std::vector<std::string>& names) {
    if (n <= p) throw ContractError("fit_linear: need n > p, got n=" + std::to_string(n) +
                                    " p=" + std::to_string(p));
    if (X.size() != static_cast<size_t>(n) * p || y.size() != static_cast<size_t>(n))
        throw ShapeError("fit_linear: design/response sizes disagree");
    if (static_cast<int>(names.size()) != p)
        throw ShapeError("fit_linear: need one name per column");

    FitResult fit;
    fit.names = names;
    fit.n = n;
    const int bad = solve_normal_equations(X, n, p, y, fit.coefficients);
    if (bad >= 0)
        throw DataError("fit_linear: design matrix singular beyond jitter at column '" +
                        names[static_cast<size_t>(bad)] + "'");
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
        double pred = 0.0;
        for (int a = 0; a < p; ++a)
            pred += X[static_cast<size_t>(i) * p + a] * fit.coefficients[static_cast<size_t>(a)];
        const double r = y[static_cast<size_t>(i)] - pred;
        rss += r * r;
    }
    fit.sigma2 = std::max(rss / n, kSigma2Floor);
    // At the MLE variance the log-likelihood reduces to this closed form.
    fit.log_likelihood = -0.5 * n * (std::log(6.283185307179586476925286766559 * fit.sigma2) + 1.0);
    return fit;
}

double evaluate_loglik(const FitResult& fit, const std::vector<double>& X, int n, int p,
                       const std::vector<double>& y) {
    if (p != static_cast<int>(fit.coefficients.size()))
        throw ShapeError("evaluate_loglik: column count mismatch");
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
        double pred = 0.0;
        for (int a = 0; a < p; ++a)
            pred += X[static_cast<size_t>(i) * p + a] * fit.coefficients[static_cast<size_t>(a)];
        const double r = y[static_cast<size_t>(i)] - pred;
        rss += r * r;
    }
    return gaussian_loglik(fit.sigma2, rss, n);
}

std::vector<double> squared_errors(const FitResult& fit, const std::vector<double>& X, int n,
                                   int p, const std::vector<double>& y) {
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double pred = 0.0;
        for (int a = 0; a < p; ++a)
            pred += X[static_cast<size_t>(i) * p + a] * fit.coefficients[static_cast<size_t>(a)];
        const double r = y[static_cast<size_t>(i)] - pred;
        out[static_cast<size_t>(i)] = r * r;
    }
    return out;
}

Standardizer Standardizer::fit(const std::vector<double>& X, int n, int p) {
    Standardizer s;
    s.mean.assign(static_cast<size_t>(p), 0.0);
    s.sd.assign(static_cast<size_t>(p), 1.0);
    for (int a = 0; a < p; ++a) {
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += X[static_cast<size_t>(i) * p + a];
        m /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = X[static_cast<size_t>(i) * p + a] - m;
            var += d * d;
        }
        var /= n;
        s.mean[static_cast<size_t>(a)] = m;
        // Constant columns (e.g. an all-zero predictor) are centered only.
        s.sd[static_cast<size_t>(a)] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    // Intercept column stays untouched.
    s.mean[0] = 0.0;
    s.sd[0] = 1.0;
    return s;
}

void Standardizer::apply(std::vector<double>& X, int n, int p) const {
    if (static_cast<int>(mean.size()) != p) throw ShapeError("standardizer: column count mismatch");
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < p; ++a) {
            double& v = X[static_cast<size_t>(i) * p + a];
            v = (v - mean[static_cast<size_t>(a)]) / sd[static_cast<size_t>(a)];
        }
}

DesignInfo design_info(Measure measure, bool full_model) {
    DesignInfo info;
    info.names = {"intercept", "word_length", "word_position", "unigram_surprisal"};
    if (is_eye_tracking(measure)) info.names.push_back("prev_fixated");
    if (full_model) {
        info.names.push_back("surprisal");
        info.names.push_back("prev_surprisal");
    }
    info.p = static_cast<int>(info.names.size());
    return info;
}

std::vector<double> build_design(const std::vector<Observation>& rows, Measure measure,
                                 bool full_model) {
    const DesignInfo info = design_info(measure, full_model);
    std::vector<double> X;
    X.reserve(rows.size() * static_cast<size_t>(info.p));
    for (const Observation& row : rows) {
        X.push_back(1.0);
        X.push_back(static_cast<double>(row.word_length));
        X.push_back(static_cast<double>(row.word_index_in_sentence));
        X.push_back(row.unigram_bits);
        if (is_eye_tracking(measure)) {
            if (!row.prev_fixated.has_value())
                throw DataError("build_design: missing prev_fixated for an ET row");
            X.push_back(*row.prev_fixated ? 1.0 : 0.0);
        }
        if (full_model) {
            X.push_back(row.surprisal_bits);
            X.push_back(row.prev_surprisal_bits);
        }
    }
    return X;
}

std::vector<double> response(const std::vector<Observation>& rows) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (const Observation& row : rows) y.push_back(row.rt_ms);
    return y;
}

namespace {

std::vector<Observation> take_partition(const std::vector<Observation>& rows, Partition part) {
    std::vector<Observation> out;
    for (const Observation& row : rows)
        if (row.partition == part) out.push_back(row);
    return out;
}

struct PreparedDesigns {
    std::vector<double> X_fit_base, X_fit_full, X_eval_base, X_eval_full;
    std::vector<double> y_fit, y_eval;
    DesignInfo base_info, full_info;
    int n_fit = 0, n_eval = 0;
};

PreparedDesigns prepare_designs(const std::vector<Observation>& rows, Measure measure,
                                Partition eval_partition) {
    PreparedDesigns d;
    const auto fit_rows = take_partition(rows, Partition::fit);
    const auto eval_rows = take_partition(rows, eval_partition);
    if (fit_rows.empty()) throw DataError("delta_loglik: fit partition is empty");
    if (eval_rows.empty())
        throw DataError(std::string("delta_loglik: ") + to_string(eval_partition) +
                        " partition is empty");
    d.base_info = design_info(measure, false);
    d.full_info = design_info(measure, true);
    d.n_fit = static_cast<int>(fit_rows.size());
    d.n_eval = static_cast<int>(eval_rows.size());

    d.X_fit_base = build_design(fit_rows, measure, false);
    d.X_fit_full = build_design(fit_rows, measure, true);
    d.X_eval_base = build_design(eval_rows, measure, false);
    d.X_eval_full = build_design(eval_rows, measure, true);
    d.y_fit = response(fit_rows);
    d.y_eval = response(eval_rows);

    // z-scoring is learned on the fit partition only.
    const Standardizer std_base = Standardizer::fit(d.X_fit_base, d.n_fit, d.base_info.p);
    const Standardizer std_full = Standardizer::fit(d.X_fit_full, d.n_fit, d.full_info.p);
    std_base.apply(d.X_fit_base, d.n_fit, d.base_info.p);
    std_base.apply(d.X_eval_base, d.n_eval, d.base_info.p);
    std_full.apply(d.X_fit_full, d.n_fit, d.full_info.p);
    std_full.apply(d.X_eval_full, d.n_eval, d.full_info.p);
    return d;
}

} // namespace

DeltaLogLik delta_loglik(const std::vector<Observation>& rows, Measure measure) {
    PreparedDesigns d = prepare_designs(rows, measure, Partition::exploratory);
    DeltaLogLik out;
    out.base_fit = fit_linear(d.X_fit_base, d.n_fit, d.base_info.p, d.y_fit, d.base_info.names);
    out.full_fit = fit_linear(d.X_fit_full, d.n_fit, d.full_info.p, d.y_fit, d.full_info.names);
    const double ll_base = evaluate_loglik(out.base_fit, d.X_eval_base, d.n_eval, d.base_info.p, d.y_eval);
    const double ll_full = evaluate_loglik(out.full_fit, d.X_eval_full, d.n_eval, d.full_info.p, d.y_eval);
    out.value = ll_full - ll_base;
    out.n_fit = d.n_fit;
    out.n_exploratory = d.n_eval;
    return out;
}

PairedErrors heldout_squared_errors(const std::vector<Observation>& rows, Measure measure,
                                    Partition eval_partition) {
    PreparedDesigns d = prepare_designs(rows, measure, eval_partition);
    const FitResult base = fit_linear(d.X_fit_base, d.n_fit, d.base_info.p, d.y_fit, d.base_info.names);
    const FitResult full = fit_linear(d.X_fit_full, d.n_fit, d.full_info.p, d.y_fit, d.full_info.names);
    PairedErrors pe;
    pe.base = squared_errors(base, d.X_eval_base, d.n_eval, d.base_info.p, d.y_eval);
    pe.full = squared_errors(full, d.X_eval_full, d.n_eval, d.full_info.p, d.y_eval);
    return pe;
}

double permutation_test(const std::vector<double>& sq_err_base,
                        const std::vector<double>& sq_err_full, int n_perm, uint64_t seed) {
    if (sq_err_base.size() != sq_err_full.size())
        throw ShapeError("permutation_test: paired error vectors differ in length (" +
                         std::to_string(sq_err_base.size()) + " vs " +
                         std::to_string(sq_err_full.size()) + ")");
    if (sq_err_base.empty()) throw ContractError("permutation_test: empty input");
    if (n_perm < 1) throw ContractError("permutation_test: n_perm must be >= 1");

    const size_t n = sq_err_base.size();
    std::vector<double> diff(n);
    double observed = 0.0;
    for (size_t i = 0; i < n; ++i) {
        diff[i] = sq_err_base[i] - sq_err_full[i];
        observed += diff[i];
    }
    observed /= static_cast<double>(n);

    // Exhaustive when all sign patterns fit the budget.
    if (n < 63 && (1ULL << n) <= static_cast<uint64_t>(n_perm)) {
        const uint64_t total = 1ULL << n;
        uint64_t count = 0;
        for (uint64_t mask = 0; mask < total; ++mask) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i)
                s += (mask >> i) & 1 ? -diff[i] : diff[i];
            if (s / static_cast<double>(n) >= observed) ++count;
        }
        return static_cast<double>(count) / static_cast<double>(total);
    }

    Rng rng(seed);
    int count = 0;
    for (int perm = 0; perm < n_perm; ++perm) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += rng.next_u64() & 1 ? -diff[i] : diff[i];
        if (s / static_cast<double>(n) >= observed) ++count;
    }
    return (1.0 + count) / (1.0 + n_perm);
}

} // namespace rlab
