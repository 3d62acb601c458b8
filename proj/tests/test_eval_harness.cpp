#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include <json.hpp>

#include "impact/errors.hpp"
#include "impact/eval_harness.hpp"
#include "impact/io.hpp"
#include "impact/rng.hpp"

using namespace impact;

TEST_CASE("matching: a single truth takes the nearest candidate overall") {
    const auto matched = match_candidates({0.5}, {0.1, 0.8, 0.45}, 0.0, 1.0);
    REQUIRE(matched.size() == 1);
    REQUIRE(matched[0].has_value());
    CHECK(*matched[0] == 0.45);
}

TEST_CASE("matching: the midpoint partition drives assignment") {
    const auto matched =
        match_candidates({1.0 / 3.0, 2.0 / 3.0}, {0.30, 0.35, 0.70}, 0.0, 1.0);
    REQUIRE(matched.size() == 2);
    CHECK(*matched[0] == 0.35);  // |0.35 - 1/3| < |0.30 - 1/3|
    CHECK(*matched[1] == 0.70);
}

TEST_CASE("matching: no candidates leaves every truth missing") {
    const auto matched = match_candidates({0.25, 0.75}, {}, 0.0, 1.0);
    for (const auto& m : matched) {
        CHECK(!m.has_value());
    }
}

TEST_CASE("matching: a candidate is never assigned twice and stays in its interval") {
    RngStream rng(7);
    const std::vector<double> taus{0.2, 0.5, 0.8};
    for (int round = 0; round < 50; ++round) {
        std::vector<double> candidates;
        const int m = static_cast<int>(rng.next_u64() % 6);
        for (int c = 0; c < m; ++c) {
            candidates.push_back(rng.uniform());
        }
        const auto idx = match_candidates_idx(taus, candidates, 0.0, 1.0);
        std::set<std::size_t> used;
        const double mids[] = {0.0, 0.35, 0.65, 1.0};
        for (std::size_t j = 0; j < taus.size(); ++j) {
            if (!idx[j]) {
                continue;
            }
            CHECK(used.insert(*idx[j]).second);  // no double assignment
            const double loc = candidates[*idx[j]];
            CHECK(loc >= mids[j]);
            if (j + 1 == taus.size()) {
                CHECK(loc <= mids[j + 1]);
            } else {
                CHECK(loc < mids[j + 1]);
            }
        }
    }
}

TEST_CASE("matching: an endpoint candidate can match the last truth") {
    const auto matched = match_candidates({0.5, 0.9}, {1.0}, 0.0, 1.0);
    CHECK(!matched[0].has_value());
    REQUIRE(matched[1].has_value());
    CHECK(*matched[1] == 1.0);
}

TEST_CASE("fit_quality: constant and separating probabilities") {
    const std::vector<double> y{0, 1, 0, 1, 1};
    const std::vector<double> flat{0.4, 0.4, 0.4, 0.4, 0.4};
    const FitQuality q_flat = fit_quality(y, flat, -3.0, -3.4);
    CHECK(q_flat.somers_dxy == 0.0);

    const std::vector<double> sep{0.1, 0.9, 0.2, 0.8, 0.7};
    const FitQuality q_sep = fit_quality(y, sep, -1.0, -3.4);
    CHECK(q_sep.somers_dxy == 1.0);
}

TEST_CASE("fit_quality: McFadden pseudo R^2 from reported likelihoods") {
    const std::vector<double> y{0, 1};
    const std::vector<double> probs{0.4, 0.6};
    const FitQuality q = fit_quality(y, probs, -36.03, -45.03);
    CHECK(q.mcfadden_r2 == doctest::Approx(1.0 - 36.03 / 45.03).epsilon(1e-12));
    CHECK(q.mcfadden_r2 == doctest::Approx(0.20).epsilon(0.01));
}

TEST_CASE("fit_quality: one-class responses are rejected") {
    const std::vector<double> y{1, 1, 1};
    const std::vector<double> probs{0.5, 0.5, 0.5};
    CHECK_THROWS_AS(fit_quality(y, probs, -1.0, -1.0), DataError);
    const std::vector<double> bad{0.5, 0.2, 1.0};
    CHECK_THROWS_AS(fit_quality(bad, probs, -1.0, -1.0), ConfigError);
}

TEST_CASE("fit_quality: Somers' D stays within [-1, 1] on random inputs") {
    RngStream rng(23);
    for (int round = 0; round < 30; ++round) {
        const std::size_t n = 10 + rng.next_u64() % 20;
        std::vector<double> y(n);
        std::vector<double> probs(n);
        bool has0 = false;
        bool has1 = false;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            probs[i] = rng.uniform();
            has0 = has0 || y[i] == 0.0;
            has1 = has1 || y[i] == 1.0;
        }
        if (!has0 || !has1) {
            continue;
        }
        const FitQuality q = fit_quality(y, probs, -5.0, -6.0);
        CHECK(q.somers_dxy >= -1.0);
        CHECK(q.somers_dxy <= 1.0);
    }
}

TEST_CASE("per_models: monotone positive curves peak at the end") {
    FunctionalDataset data;
    data.grid = GridSpec{0.0, 1.0, 5};
    data.x = Matrix(1, 5);
    for (std::size_t j = 0; j < 5; ++j) {
        data.x(0, j) = 1.0 + static_cast<double>(j);
    }
    data.y = {1.0};
    const auto [per1, per2] = per_models(data);
    CHECK(per1(0, 0) == 5.0);  // peak |X| at the last point
    CHECK(per1(0, 1) == 5.0);  // end value
    CHECK(per2(0, 0) == 5.0);  // positive peak
    CHECK(per2(0, 1) == 1.0);  // negative peak = minimum
    CHECK(per2(0, 2) == 5.0);
}

TEST_CASE("per_models: absolute-peak ties resolve to the first index") {
    FunctionalDataset data;
    data.grid = GridSpec{0.0, 1.0, 5};
    data.x = Matrix(1, 5);
    data.x(0, 0) = 0.0;
    data.x(0, 1) = -1.0;
    data.x(0, 2) = 0.3;
    data.x(0, 3) = 1.0;
    data.x(0, 4) = 0.2;
    data.y = {0.0};
    const auto [per1, per2] = per_models(data);
    CHECK(per1(0, 0) == -1.0);  // |.| ties at indices 1 and 3; the earlier one wins
    CHECK(per2(0, 0) == 1.0);
    CHECK(per2(0, 1) == -1.0);
    CHECK(per1(0, 1) == 0.2);
}

TEST_CASE("per_models: three-curve fixture matches a manual scan") {
    FunctionalDataset data;
    data.grid = GridSpec{0.0, 1.0, 4};
    data.x = Matrix(3, 4);
    const double rows[3][4] = {{0.5, -2.0, 1.0, 0.1}, {-0.2, 0.4, -0.6, 0.3}, {2.0, 1.0, 0.0, -1.0}};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            data.x(i, j) = rows[i][j];
        }
    }
    data.y = {0.0, 1.0, 0.0};
    const auto [per1, per2] = per_models(data);
    const double expect_abs[3] = {-2.0, -0.6, 2.0};
    const double expect_pos[3] = {1.0, 0.4, 2.0};
    const double expect_neg[3] = {-2.0, -0.6, -1.0};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(per1(i, 0) == expect_abs[i]);
        CHECK(per1(i, 1) == rows[i][3]);
        CHECK(per2(i, 0) == expect_pos[i]);
        CHECK(per2(i, 1) == expect_neg[i]);
        CHECK(per2(i, 2) == rows[i][3]);
    }
}

TEST_CASE("rng streams are pairwise distinct over many replication ids") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t rep = 0; rep < 100000; ++rep) {
        RngStream stream(12345, rep);
        CHECK(seen.insert(stream.next_u64()).second);
    }
}

namespace {

ExperimentSpec tiny_dgp2_spec() {
    ExperimentSpec spec = ExperimentSpec::for_dgp(Dgp::Dgp2);
    spec.n_list = {150};
    spec.p_list = {50};
    spec.reps = 8;
    spec.run_trh = true;
    spec.run_poi = true;
    spec.seed = 99;
    return spec;
}

// Byte-level view of a report with the wall-clock field removed.
std::string report_bytes(const McReport& report, const ExperimentSpec& spec) {
    nlohmann::json j = report_to_json(report, spec);
    j["metadata"].erase("runtime_seconds");
    return j.dump();
}

}  // namespace

TEST_CASE("run_experiment is byte-stable across runs and worker counts") {
    ExperimentSpec spec = tiny_dgp2_spec();
    spec.threads = 1;
    const McReport serial = run_experiment(spec);
    spec.threads = 8;
    const McReport parallel = run_experiment(spec);
    const McReport again = run_experiment(spec);

    CHECK(report_bytes(serial, spec) == report_bytes(parallel, spec));
    CHECK(report_bytes(parallel, spec) == report_bytes(again, spec));
    CHECK(serial.spec_hash == spec_hash(spec));
}

TEST_CASE("run_experiment aggregates are exact functions of the records") {
    const ExperimentSpec spec = tiny_dgp2_spec();
    const McReport report = run_experiment(spec);
    REQUIRE(report.cells.size() == 2);  // trh + poi for one (n, p) cell

    for (const CellReport& cell : report.cells) {
        CHECK(cell.records.size() == spec.reps);
        double mase_sum = 0.0;
        std::size_t mase_count = 0;
        std::size_t s_correct = 0;
        std::size_t ok = 0;
        for (const RepRecord& rec : cell.records) {
            if (rec.failed) {
                continue;
            }
            ++ok;
            if (rec.s_hat == spec.model.s()) {
                ++s_correct;
            }
            if (!std::isnan(rec.mase_contrib)) {
                mase_sum += rec.mase_contrib;
                ++mase_count;
            }
        }
        CHECK(cell.aggregates.reps == spec.reps);
        CHECK(cell.aggregates.p_s_correct ==
              doctest::Approx(static_cast<double>(s_correct) / static_cast<double>(ok)));
        CHECK(cell.aggregates.mase ==
              doctest::Approx(mase_sum / static_cast<double>(mase_count)).epsilon(1e-15));

        // AvgMSE is the plain mean of the per-tau MSEs.
        const auto& agg = cell.aggregates;
        if (!std::isnan(agg.avg_mse_penalized)) {
            double avg = 0.0;
            for (double v : agg.mse_per_tau_penalized) {
                avg += v;
            }
            avg /= static_cast<double>(agg.mse_per_tau_penalized.size());
            CHECK(agg.avg_mse_penalized == doctest::Approx(avg).epsilon(1e-15));
        }
    }
}

TEST_CASE("run_experiment on DGP2 recovers both impact points at moderate n") {
    ExperimentSpec spec = ExperimentSpec::for_dgp(Dgp::Dgp2);
    spec.n_list = {500};
    spec.p_list = {100};
    spec.reps = 40;
    spec.run_trh = true;
    spec.run_poi = false;
    spec.seed = 5;
    spec.compute_mase = true;
    const McReport report = run_experiment(spec);
    REQUIRE(report.cells.size() == 1);
    const CellAggregates& agg = report.cells[0].aggregates;
    CHECK(agg.failure_count == 0);
    // both tau errors should be small on average once matched
    REQUIRE(agg.mse_per_tau_matched.size() == 2);
    for (double mse : agg.mse_per_tau_matched) {
        CHECK(mse < 0.01);
    }
    CHECK(agg.mase < 0.2);
    CHECK(agg.mase > 0.0);
}

TEST_CASE("dgp designs carry the printed constants") {
    const DgpDesign d1 = dgp_design(Dgp::Dgp1);
    CHECK(d1.model.taus == std::vector<double>{0.5});
    CHECK(d1.model.betas == std::vector<double>{4.0});
    CHECK(d1.model.alpha == 1.0);
    CHECK(d1.known_s == 1);
    CHECK(d1.process.kind == ProcessKind::OrnsteinUhlenbeck);
    CHECK(d1.process.theta == 5.0);
    CHECK(d1.process.sigma_u_sq == 3.5);

    const DgpDesign d3 = dgp_design(Dgp::Dgp3);
    CHECK(d3.model.taus.size() == 4);
    CHECK(d3.model.betas == std::vector<double>{-6.0, 6.0, -5.0, 5.0});

    const DgpDesign d4 = dgp_design(Dgp::Dgp4);
    CHECK(d4.process.kind == ProcessKind::GaussianCovarianceModel);
    CHECK(d4.process.length_scale == 0.1);

    const DgpDesign d5 = dgp_design(Dgp::Dgp5);
    CHECK(d5.process.kind == ProcessKind::ExponentialBrownianMotion);
    CHECK(d5.c_delta == 3.0);
}

TEST_CASE("per-rep failures are recorded without aborting the experiment") {
    // An inadmissible custom model (tau at the boundary) fails every rep.
    ExperimentSpec spec = ExperimentSpec::for_dgp(Dgp::Dgp2);
    spec.model.taus = {0.5, 1.0};
    spec.model.betas = {1.0, 1.0};
    spec.n_list = {20};
    spec.p_list = {30};
    spec.reps = 3;
    spec.dgp.reset();
    const McReport report = run_experiment(spec);
    REQUIRE(!report.cells.empty());
    CHECK(report.cells[0].aggregates.failure_count == 3);
    for (const RepRecord& rec : report.cells[0].records) {
        CHECK(rec.failed);
        CHECK(!rec.error.empty());
    }
}
