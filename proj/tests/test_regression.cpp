#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rlab/regression.hpp"
#include "rlab/rng.hpp"

using namespace rlab;

namespace {

// Independent normal-equations oracle: Gauss-Jordan on X'X (no jitter,
// different algorithm from the library's Cholesky).
std::vector<double> ols_oracle(const std::vector<double>& X, int n, int p,
                               const std::vector<double>& y) {
    std::vector<double> a(static_cast<size_t>(p) * (p + 1), 0.0);
    for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += X[static_cast<size_t>(i) * p + r] * X[static_cast<size_t>(i) * p + c];
            a[static_cast<size_t>(r) * (p + 1) + c] = s;
        }
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += X[static_cast<size_t>(i) * p + r] * y[static_cast<size_t>(i)];
        a[static_cast<size_t>(r) * (p + 1) + p] = s;
    }
    for (int col = 0; col < p; ++col) {
        int pivot = col;
        for (int r = col + 1; r < p; ++r)
            if (std::fabs(a[static_cast<size_t>(r) * (p + 1) + col]) >
                std::fabs(a[static_cast<size_t>(pivot) * (p + 1) + col]))
                pivot = r;
        for (int c = 0; c <= p; ++c)
            std::swap(a[static_cast<size_t>(col) * (p + 1) + c],
                      a[static_cast<size_t>(pivot) * (p + 1) + c]);
        const double d = a[static_cast<size_t>(col) * (p + 1) + col];
        for (int c = 0; c <= p; ++c) a[static_cast<size_t>(col) * (p + 1) + c] /= d;
        for (int r = 0; r < p; ++r) {
            if (r == col) continue;
            const double f = a[static_cast<size_t>(r) * (p + 1) + col];
            for (int c = 0; c <= p; ++c)
                a[static_cast<size_t>(r) * (p + 1) + c] -= f * a[static_cast<size_t>(col) * (p + 1) + c];
        }
    }
    std::vector<double> beta(static_cast<size_t>(p));
    for (int r = 0; r < p; ++r) beta[static_cast<size_t>(r)] = a[static_cast<size_t>(r) * (p + 1) + p];
    return beta;
}

Observation make_spr_row(int subject, int sentence, int word_index, const std::string& word,
                         double rt, const std::string& doc = "d0") {
    Observation o;
    o.corpus = "synth";
    o.measure = Measure::SPR;
    o.subject = subject;
    o.sentence = sentence;
    o.doc_id = doc;
    o.word_index = word_index;
    o.word = word;
    o.rt_ms = rt;
    return o;
}

// Synthetic SPR dataset: `subjects` x `sentences` x `words_per_sentence`,
// rt = 300 + effect * surprisal(word) + noise. Surprisal is a per-word
// property shared across subjects, like real data.
std::vector<Observation> synth_dataset(int subjects, int sentences, int words, double effect,
                                       double noise_sd, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> word_surprisal(static_cast<size_t>(sentences * words));
    std::vector<double> word_unigram(word_surprisal.size());
    for (size_t i = 0; i < word_surprisal.size(); ++i) {
        word_surprisal[i] = std::fabs(rng.normal(6.0, 2.5));
        word_unigram[i] = std::fabs(rng.normal(10.0, 3.0));
    }
    std::vector<Observation> rows;
    for (int subj = 0; subj < subjects; ++subj)
        for (int sent = 0; sent < sentences; ++sent)
            for (int w = 0; w < words; ++w) {
                const size_t wi = static_cast<size_t>(sent * words + w);
                Observation o = make_spr_row(subj, sent, sent * words + w,
                                             "w" + std::to_string(w % 7) + std::string(1 + w % 5, 'x'),
                                             0.0);
                o.surprisal_bits = word_surprisal[wi];
                o.prev_surprisal_bits = wi > 0 ? word_surprisal[wi - 1] : 0.0;
                o.unigram_bits = word_unigram[wi];
                o.rt_ms = 300.0 + effect * o.surprisal_bits + 2.0 * o.prev_surprisal_bits +
                          rng.normal(0.0, noise_sd);
                o.rt_ms = std::max(o.rt_ms, 1.0);
                rows.push_back(std::move(o));
            }
    prepare_observations(rows);
    return rows;
}

double ks_distance_from_uniform(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double d = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        d = std::max(d, std::fabs(values[i] - (static_cast<double>(i) + 1.0) / n));
        d = std::max(d, std::fabs(values[i] - static_cast<double>(i) / n));
    }
    return d;
}

} // namespace

TEST_CASE("partition rule reproduces the modulo-four mapping") {
    // All 16 residue combinations.
    for (int subject = 0; subject < 4; ++subject)
        for (int sentence = 0; sentence < 4; ++sentence) {
            const int s = (subject + sentence) % 4;
            const Partition expect = s <= 1 ? Partition::fit
                                     : s == 2 ? Partition::exploratory
                                              : Partition::heldout;
            CHECK(assign_partition(subject, sentence) == expect);
            CHECK(assign_partition(subject + 4, sentence + 8) == expect);
        }
    CHECK(assign_partition(0, 0) == Partition::fit);
    CHECK(assign_partition(1, 1) == Partition::exploratory);
    CHECK(assign_partition(2, 1) == Partition::heldout);
    CHECK_THROWS_AS(assign_partition(-1, 0), ContractError);
}

TEST_CASE("partition proportions approach 50/25/25") {
    Rng rng(123);
    long long counts[3] = {0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const int subject = static_cast<int>(rng.below(501));
        const int sentence = static_cast<int>(rng.below(997));
        counts[static_cast<int>(assign_partition(subject, sentence))]++;
    }
    CHECK(std::fabs(counts[0] / double(n) - 0.50) < 0.05);
    CHECK(std::fabs(counts[1] / double(n) - 0.25) < 0.05);
    CHECK(std::fabs(counts[2] / double(n) - 0.25) < 0.05);
}

TEST_CASE("partition keeps every (subject, sentence) pair intact") {
    auto rows = synth_dataset(6, 10, 8, 10.0, 30.0, 5);
    std::map<std::pair<int, int>, Partition> seen;
    for (const auto& row : rows) {
        auto key = std::make_pair(row.subject, row.sentence);
        auto it = seen.find(key);
        if (it == seen.end()) seen.emplace(key, row.partition);
        else CHECK(it->second == row.partition);
    }
}

TEST_CASE("filter_spr drops boundaries and out-of-range rts") {
    std::vector<Observation> rows;
    // One subject, one sentence of six words with controlled rts.
    rows.push_back(make_spr_row(0, 0, 0, "first", 500.0));   // sentence-initial
    rows.push_back(make_spr_row(0, 0, 1, "ok", 250.0));      // kept
    rows.push_back(make_spr_row(0, 0, 2, "fast", 99.9));     // rt < 100
    rows.push_back(make_spr_row(0, 0, 3, "slow", 3000.0));   // kept: inclusive bound
    rows.push_back(make_spr_row(0, 0, 4, "slower", 3000.1)); // rt > 3000
    rows.push_back(make_spr_row(0, 0, 5, "last", 400.0));    // sentence-final
    prepare_observations(rows);

    FilterReport report;
    auto kept = filter_spr(rows, &report);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].word == "ok");
    CHECK(kept[1].word == "slow");
    CHECK(report.dropped_sentence_boundary == 2);
    CHECK(report.dropped_rt_range == 2);
    CHECK(report.kept == 2);
}

TEST_CASE("filter_et drops unfixated words, long saccades, and line boundaries") {
    auto et_row = [](int subject, int word_index, double rt, int line_pos = -1) {
        Observation o = make_spr_row(subject, 0, word_index, "w" + std::to_string(word_index), rt);
        o.measure = Measure::FP;
        o.prev_fixated = true;
        if (line_pos >= 0) o.line_pos = line_pos;
        return o;
    };

    SUBCASE("unfixated and saccade rules") {
        std::vector<Observation> rows;
        rows.push_back(et_row(0, 0, 200)); // boundary
        rows.push_back(et_row(0, 1, 210)); // kept
        rows.push_back(et_row(0, 2, 0));   // unfixated
        rows.push_back(et_row(0, 3, 0));   // unfixated
        rows.push_back(et_row(0, 4, 0));   // unfixated
        rows.push_back(et_row(0, 5, 230)); // saccade length 4 from word 1: kept
        rows.push_back(et_row(0, 6, 240)); // kept (saccade 1)
        rows.push_back(et_row(0, 7, 250)); // boundary
        prepare_observations(rows);
        FilterReport report;
        auto kept = filter_et(rows, &report);
        REQUIRE(kept.size() == 3);
        CHECK(kept[0].word_index == 1);
        CHECK(kept[1].word_index == 5);
        CHECK(kept[2].word_index == 6);
        CHECK(report.dropped_unfixated == 3);
        CHECK(report.dropped_sentence_boundary == 2);
        CHECK(report.dropped_long_saccade == 0);
    }

    SUBCASE("saccade of five words is dropped") {
        std::vector<Observation> rows;
        rows.push_back(et_row(0, 0, 200));
        rows.push_back(et_row(0, 1, 210));
        rows.push_back(et_row(0, 2, 0));
        rows.push_back(et_row(0, 3, 0));
        rows.push_back(et_row(0, 4, 0));
        rows.push_back(et_row(0, 5, 0));
        rows.push_back(et_row(0, 6, 230)); // saccade length 5 from word 1
        rows.push_back(et_row(0, 7, 240));
        rows.push_back(et_row(0, 8, 250));
        prepare_observations(rows);
        FilterReport report;
        auto kept = filter_et(rows, &report);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].word_index == 1);
        CHECK(kept[1].word_index == 7);
        CHECK(report.dropped_long_saccade == 1);
    }

    SUBCASE("line starts and ends are dropped when the column is present") {
        std::vector<Observation> rows;
        // Line 1 covers words 0..3 (positions 0..3), line 2 starts at word 4.
        rows.push_back(et_row(0, 0, 200, 0));
        rows.push_back(et_row(0, 1, 210, 1)); // kept
        rows.push_back(et_row(0, 2, 215, 2)); // kept
        rows.push_back(et_row(0, 3, 220, 3)); // line end (next resets to 0)
        rows.push_back(et_row(0, 4, 225, 0)); // line start
        rows.push_back(et_row(0, 5, 230, 1)); // kept
        rows.push_back(et_row(0, 6, 235, 2)); // sentence-final boundary anyway
        prepare_observations(rows);
        FilterReport report;
        auto kept = filter_et(rows, &report);
        REQUIRE(kept.size() == 3);
        CHECK(kept[0].word_index == 1);
        CHECK(kept[1].word_index == 2);
        CHECK(kept[2].word_index == 5);
        CHECK(report.dropped_line_boundary == 2);
    }

    SUBCASE("missing prev_fixated is an ingestion error naming the column") {
        std::vector<Observation> rows{et_row(0, 0, 200)};
        rows[0].prev_fixated.reset();
        prepare_observations(rows);
        try {
            filter_et(rows, nullptr);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("prev_fixated") != std::string::npos);
        }
    }
}

TEST_CASE("fit_linear exact and closed-form cases") {
    // y = 3x: exact fit, variance at the floor.
    std::vector<double> X;
    std::vector<double> y;
    for (int i = 1; i <= 6; ++i) {
        X.push_back(1.0);
        X.push_back(static_cast<double>(i));
        y.push_back(3.0 * i);
    }
    FitResult exact = fit_linear(X, 6, 2, y, {"intercept", "x"});
    CHECK(exact.coefficients[1] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(exact.coefficients[0] == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(exact.sigma2 == 1e-12);

    // Intercept-only: coefficient is mean(y), LL matches the closed form.
    std::vector<double> Xint(5, 1.0);
    std::vector<double> yv{1.0, 2.0, 3.0, 4.0, 10.0};
    FitResult mean_fit = fit_linear(Xint, 5, 1, yv, {"intercept"});
    const double mean = 4.0;
    CHECK(mean_fit.coefficients[0] == doctest::Approx(mean).epsilon(1e-8));
    double rss = 0.0;
    for (double v : yv) rss += (v - mean) * (v - mean);
    const double sigma2 = rss / 5.0;
    const double expect_ll = -0.5 * 5.0 * (std::log(2.0 * 3.14159265358979323846 * sigma2) + 1.0);
    CHECK(mean_fit.log_likelihood == doctest::Approx(expect_ll).epsilon(1e-9));
    CHECK(mean_fit.n == 5);
}

TEST_CASE("fit_linear agrees with the independent oracle on a 5-point dataset") {
    const int n = 5, p = 3;
    std::vector<double> X{
        1, 0.5, 2.0,
        1, 1.5, 1.0,
        1, 2.5, 0.5,
        1, 3.5, 2.5,
        1, 4.5, 1.5,
    };
    std::vector<double> y{3.1, 4.9, 6.8, 10.2, 11.1};
    FitResult fit = fit_linear(X, n, p, y, {"intercept", "a", "b"});
    auto oracle = ols_oracle(X, n, p, y);
    for (int c = 0; c < p; ++c)
        CHECK(fit.coefficients[static_cast<size_t>(c)] ==
              doctest::Approx(oracle[static_cast<size_t>(c)]).epsilon(1e-8));
}

TEST_CASE("fit_linear names the collinear column past jitter rescue") {
    // Exactly collinear columns at magnitude 2^40: the jitter is absorbed
    // by rounding, so the Cholesky pivot hits exact zero.
    const double big = 1099511627776.0; // 2^40
    std::vector<double> X{
        big, big,
        big, big,
        big, big,
        big, big,
    };
    std::vector<double> y{1, 2, 3, 4};
    try {
        fit_linear(X, 4, 2, y, {"c0", "c1"});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("c1") != std::string::npos);
    }
    CHECK_THROWS_AS(fit_linear(X, 1, 2, {1.0}, {"c0", "c1"}), ContractError); // n <= p
}

TEST_CASE("fit_linear recovers known coefficients within 3 standard errors") {
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 400, p = 3;
        const double beta[3] = {250.0, 8.0, -3.0};
        const double sigma = 25.0;
        std::vector<double> X, y;
        for (int i = 0; i < n; ++i) {
            const double x1 = rng.uniform(0.0, 10.0);
            const double x2 = rng.normal(0.0, 2.0);
            X.insert(X.end(), {1.0, x1, x2});
            y.push_back(beta[0] + beta[1] * x1 + beta[2] * x2 + rng.normal(0.0, sigma));
        }
        FitResult fit = fit_linear(X, n, p, y, {"intercept", "x1", "x2"});
        // SEs from sigma2_hat * inv(X'X), the 3x3 inverse done by adjugate.
        std::vector<double> xtx(static_cast<size_t>(p) * p, 0.0);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < p; ++a)
                for (int b = 0; b < p; ++b)
                    xtx[static_cast<size_t>(a) * p + b] +=
                        X[static_cast<size_t>(i) * p + a] * X[static_cast<size_t>(i) * p + b];
        // Invert 3x3 by adjugate.
        auto det3 = [&](const std::vector<double>& m) {
            return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                   m[2] * (m[3] * m[7] - m[4] * m[6]);
        };
        const double det = det3(xtx);
        auto inv_at = [&](int r, int c) {
            const int r1 = (r + 1) % 3, r2 = (r + 2) % 3;
            const int c1 = (c + 1) % 3, c2 = (c + 2) % 3;
            // Transposed cofactor.
            return (xtx[static_cast<size_t>(c1) * 3 + r1] * xtx[static_cast<size_t>(c2) * 3 + r2] -
                    xtx[static_cast<size_t>(c1) * 3 + r2] * xtx[static_cast<size_t>(c2) * 3 + r1]) /
                   det;
        };
        for (int c = 0; c < p; ++c) {
            const double se = std::sqrt(fit.sigma2 * inv_at(c, c));
            CHECK(std::fabs(fit.coefficients[static_cast<size_t>(c)] - beta[c]) < 3.0 * se);
        }
    }
}

TEST_CASE("delta_loglik is zero when surprisal predictors are null") {
    auto rows = synth_dataset(8, 12, 10, 0.0, 40.0, 11);
    for (auto& row : rows) {
        row.surprisal_bits = 0.0;
        row.prev_surprisal_bits = 0.0;
    }
    DeltaLogLik dll = delta_loglik(rows, Measure::SPR);
    CHECK(std::fabs(dll.value) < 1e-9);
}

TEST_CASE("delta_loglik is positive on the generative fixture") {
    auto rows = synth_dataset(10, 20, 10, 10.0, 30.0, 13);
    DeltaLogLik dll = delta_loglik(rows, Measure::SPR);
    CHECK(dll.value > 0.0);
    CHECK(dll.n_fit > 0);
    CHECK(dll.n_exploratory > 0);
}

TEST_CASE("delta_loglik stays small when surprisal is pure noise") {
    // 10000 rows, surprisal uncorrelated with rt: chi-square heuristic
    // puts |dLL| well under 5 (seeded, statistical).
    auto rows = synth_dataset(25, 40, 10, 0.0, 40.0, 17);
    REQUIRE(rows.size() == 10000);
    Rng rng(19);
    for (auto& row : rows) {
        row.surprisal_bits = std::fabs(rng.normal(6.0, 2.5));
        row.prev_surprisal_bits = std::fabs(rng.normal(6.0, 2.5));
    }
    DeltaLogLik dll = delta_loglik(rows, Measure::SPR);
    CHECK(std::fabs(dll.value) < 5.0);
}

TEST_CASE("delta_loglik is invariant to rescaling the surprisal predictor") {
    auto rows = synth_dataset(8, 16, 10, 10.0, 30.0, 23);
    DeltaLogLik base = delta_loglik(rows, Measure::SPR);
    auto scaled = rows;
    for (auto& row : scaled) {
        row.surprisal_bits *= 37.5;
        row.prev_surprisal_bits *= 37.5;
    }
    DeltaLogLik rescaled = delta_loglik(scaled, Measure::SPR);
    CHECK(std::fabs(base.value - rescaled.value) < 1e-6);
}

TEST_CASE("delta_loglik errors on an empty partition") {
    // Subjects+sentences chosen so no row lands in exploratory.
    std::vector<Observation> rows;
    for (int w = 0; w < 12; ++w) rows.push_back(make_spr_row(0, 0, w, "w", 300.0));
    for (auto& row : rows) {
        row.surprisal_bits = 1.0;
        row.unigram_bits = 1.0;
    }
    prepare_observations(rows);
    CHECK_THROWS_AS(delta_loglik(rows, Measure::SPR), DataError);
}

TEST_CASE("permutation test basics") {
    // Identical error vectors: zero statistic, every permutation ties.
    std::vector<double> same{1.0, 2.0, 3.0, 4.0};
    CHECK(permutation_test(same, same, 1000, 1) == 1.0);

    // Full strictly better on all 10 points, exhaustive enumeration.
    std::vector<double> base(10), full(10);
    Rng rng(29);
    for (size_t i = 0; i < base.size(); ++i) {
        full[i] = rng.uniform(0.5, 1.0);
        base[i] = full[i] + rng.uniform(0.5, 1.0);
    }
    CHECK(permutation_test(base, full, 1024, 2) == doctest::Approx(1.0 / 1024.0));

    // Swapped inputs: sign symmetry puts p above one half.
    CHECK(permutation_test(full, base, 1024, 3) > 0.5);

    CHECK_THROWS_AS(permutation_test({1.0}, {1.0, 2.0}, 10, 4), ShapeError);
}

TEST_CASE("permutation test p-values are approximately uniform under the null") {
    const int runs = 500;
    std::vector<double> pvals;
    pvals.reserve(runs);
    Rng rng(31);
    for (int run = 0; run < runs; ++run) {
        const size_t n = 64;
        std::vector<double> base(n), full(n);
        for (size_t i = 0; i < n; ++i) {
            // Paired errors whose difference is symmetric around zero.
            base[i] = std::fabs(rng.normal(0.0, 1.0));
            full[i] = std::fabs(rng.normal(0.0, 1.0));
        }
        pvals.push_back(permutation_test(base, full, 999, 1000 + run));
    }
    CHECK(ks_distance_from_uniform(pvals) < 0.05);
}
