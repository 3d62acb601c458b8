#include "impact/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "impact/errors.hpp"

namespace impact {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ImpactModelSpec logit_model(double alpha, std::vector<double> betas, std::vector<double> taus) {
    ImpactModelSpec m;
    m.alpha = alpha;
    m.betas = std::move(betas);
    m.taus = std::move(taus);
    m.response.kind = ResponseSpec::Kind::BernoulliLogit;
    return m;
}

}  // namespace

DgpDesign dgp_design(Dgp dgp) {
    DgpDesign d;
    switch (dgp) {
        case Dgp::Dgp1:
            d.process = ProcessSpec::ornstein_uhlenbeck(5.0, 3.5);
            d.model = logit_model(1.0, {4.0}, {0.5});
            d.known_s = 1;
            break;
        case Dgp::Dgp2:
            d.process = ProcessSpec::ornstein_uhlenbeck(5.0, 3.5);
            d.model = logit_model(1.0, {-6.0, 5.0}, {1.0 / 3.0, 2.0 / 3.0});
            break;
        case Dgp::Dgp3:
            d.process = ProcessSpec::ornstein_uhlenbeck(5.0, 3.5);
            d.model = logit_model(1.0, {-6.0, 6.0, -5.0, 5.0},
                                  {1.0 / 6.0, 2.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0});
            break;
        case Dgp::Dgp4:
            d.process = ProcessSpec::gaussian_covariance(0.1);
            d.model = logit_model(1.0, {-6.0, 5.0}, {1.0 / 3.0, 2.0 / 3.0});
            break;
        case Dgp::Dgp5:
            d.process = ProcessSpec::exponential_brownian();
            d.model = logit_model(1.0, {-6.0, 5.0}, {1.0 / 3.0, 2.0 / 3.0});
            d.c_delta = 3.0;
            break;
    }
    return d;
}

std::string estimator_name(EstimatorKind kind) {
    return kind == EstimatorKind::Trh ? "trh" : "poi";
}

ExperimentSpec ExperimentSpec::for_dgp(Dgp dgp) {
    const DgpDesign d = dgp_design(dgp);
    ExperimentSpec spec;
    spec.dgp = dgp;
    spec.process = d.process;
    spec.model = d.model;
    spec.c_delta = d.c_delta;
    spec.known_s = d.known_s;
    spec.n_list = {100};
    spec.p_list = {100};
    return spec;
}

void ExperimentSpec::validate() const {
    process.validate();
    model.validate();
    if (!(domain_a < domain_b)) {
        throw ConfigError("ExperimentSpec: requires domain_a < domain_b");
    }
    if (n_list.empty() || p_list.empty()) {
        throw ConfigError("ExperimentSpec: n_list and p_list must be nonempty");
    }
    for (std::size_t n : n_list) {
        if (n < 2) {
            throw ConfigError("ExperimentSpec: every n must be >= 2");
        }
    }
    for (std::size_t p : p_list) {
        GridSpec{domain_a, domain_b, p}.validate();
    }
    if (reps < 1) {
        throw ConfigError("ExperimentSpec: reps must be >= 1");
    }
    if (!run_trh && !run_poi) {
        throw ConfigError("ExperimentSpec: at least one estimator must be enabled");
    }
    if (!(c_delta > 0.0)) {
        throw ConfigError("ExperimentSpec: c_delta must be positive");
    }
}

std::vector<std::optional<std::size_t>> match_candidates_idx(
    const std::vector<double>& taus_true, const std::vector<double>& candidates, double a,
    double b) {
    const std::size_t s = taus_true.size();
    for (std::size_t j = 1; j < s; ++j) {
        if (!(taus_true[j - 1] < taus_true[j])) {
            throw ConfigError("match_candidates: true taus must be sorted");
        }
    }
    std::vector<std::optional<std::size_t>> matched(s);
    if (s == 0) {
        return matched;
    }
    std::vector<double> mid(s + 1);
    mid[0] = a;
    mid[s] = b;
    for (std::size_t j = 1; j < s; ++j) {
        mid[j] = 0.5 * (taus_true[j - 1] + taus_true[j]);
    }
    for (std::size_t j = 0; j < s; ++j) {
        const double lo = mid[j];
        const double hi = mid[j + 1];
        const bool last = (j + 1 == s);
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double loc = candidates[c];
            const bool inside = loc >= lo && (last ? loc <= hi : loc < hi);
            if (!inside) {
                continue;
            }
            const double dist = std::fabs(loc - taus_true[j]);
            if (dist < best_dist) {
                best_dist = dist;
                matched[j] = c;
            }
        }
    }
    return matched;
}

std::vector<std::optional<double>> match_candidates(const std::vector<double>& taus_true,
                                                    const std::vector<double>& candidates,
                                                    double a, double b) {
    const auto idx = match_candidates_idx(taus_true, candidates, a, b);
    std::vector<std::optional<double>> out(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j]) {
            out[j] = candidates[*idx[j]];
        }
    }
    return out;
}

std::string canonical_description(const ExperimentSpec& spec) {
    std::ostringstream os;
    os.precision(17);
    os << "process=" << spec.process.name();
    os << ";theta=" << spec.process.theta << ";sigma_u_sq=" << spec.process.sigma_u_sq
       << ";length_scale=" << spec.process.length_scale << ";scale=" << spec.process.scale;
    os << ";alpha=" << spec.model.alpha << ";betas=";
    for (double beta : spec.model.betas) {
        os << beta << ",";
    }
    os << ";taus=";
    for (double tau : spec.model.taus) {
        os << tau << ",";
    }
    os << ";response="
       << (spec.model.response.kind == ResponseSpec::Kind::BernoulliLogit ? "logit" : "identity");
    os << ";domain=" << spec.domain_a << ".." << spec.domain_b;
    os << ";n=";
    for (std::size_t n : spec.n_list) {
        os << n << ",";
    }
    os << ";p=";
    for (std::size_t p : spec.p_list) {
        os << p << ",";
    }
    os << ";reps=" << spec.reps << ";trh=" << spec.run_trh << ";poi=" << spec.run_poi
       << ";c_delta=" << spec.c_delta << ";seed=" << spec.seed
       << ";mase=" << spec.compute_mase << ";c_h=" << spec.kernel.bandwidths.c_h
       << ";max_subset=" << spec.limits.max_subset_size
       << ";center=" << spec.center_curves;
    if (spec.known_s) {
        os << ";known_s=" << *spec.known_s;
    }
    return os.str();
}

std::uint64_t spec_hash(const ExperimentSpec& spec) {
    const std::string text = canonical_description(spec);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

double response_mean(const ResponseSpec& response, double eta) {
    return response.kind == ResponseSpec::Kind::BernoulliLogit ? logistic(eta) : eta;
}

LinkSpec link_for(const ResponseSpec& response) {
    return {response.kind == ResponseSpec::Kind::BernoulliLogit ? LinkKind::Logit
                                                                : LinkKind::Identity};
}

// In-sample Nadaraya-Watson MASE contribution for one replication.
double nw_mase_contribution(const FunctionalDataset& data, const std::vector<double>& taus_hat,
                            const KernelConfig& kernel, const std::vector<double>& truth) {
    const std::size_t n = data.n();
    double sum = 0.0;
    if (taus_hat.empty()) {
        double ybar = 0.0;
        for (double v : data.y) {
            ybar += v;
        }
        ybar /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double e = truth[i] - ybar;
            sum += e * e;
        }
        return sum / static_cast<double>(n);
    }
    const NwFit fit = fit_nw(data, taus_hat, kernel);
    std::vector<double> query(fit.anchors.cols());
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = fit.anchors.row(i);
        std::copy(row.begin(), row.end(), query.begin());
        const double e = truth[i] - predict_nw(fit, query);
        sum += e * e;
    }
    return sum / static_cast<double>(n);
}

// Assembles a replication record. Location errors come from matching the
// full candidate set (the locations the estimator can report); coefficient
// alignment and the nonparametric fit use only the selected points.
RepRecord make_record(const ExperimentSpec& spec, const FunctionalDataset& data,
                      const std::vector<double>& truth, std::size_t rep, std::size_t s_hat,
                      const std::vector<double>& selected_locations,
                      const std::vector<double>& candidate_locations, const GlmFit& fit,
                      bool fit_ok) {
    const std::size_t s_true = spec.model.s();
    RepRecord rec;
    rec.rep = rep;
    rec.s_hat = s_hat;
    rec.tau_err.assign(s_true, kNaN);
    rec.coef.assign(1 + s_true, kNaN);
    rec.glm_converged = fit_ok && fit.converged;
    rec.mase_contrib = kNaN;

    const auto matched = match_candidates_idx(spec.model.taus, candidate_locations,
                                              spec.domain_a, spec.domain_b);
    for (std::size_t j = 0; j < s_true; ++j) {
        if (matched[j]) {
            rec.tau_err[j] =
                std::fabs(candidate_locations[*matched[j]] - spec.model.taus[j]);
        }
    }
    const auto matched_selected = match_candidates_idx(spec.model.taus, selected_locations,
                                                       spec.domain_a, spec.domain_b);
    if (rec.glm_converged && fit.beta.size() == 1 + selected_locations.size()) {
        rec.coef[0] = fit.beta[0];
        for (std::size_t j = 0; j < s_true; ++j) {
            if (matched_selected[j]) {
                rec.coef[1 + j] = fit.beta[1 + *matched_selected[j]];
            }
        }
    }
    if (spec.compute_mase) {
        rec.mase_contrib = nw_mase_contribution(data, selected_locations, spec.kernel, truth);
    }
    return rec;
}

RepRecord run_trh_rep(const ExperimentSpec& spec, const FunctionalDataset& data,
                      const std::vector<double>& truth, std::size_t rep) {
    PoiConfig cfg;
    cfg.delta = DeltaRule::rate(spec.c_delta);
    cfg.center = spec.center_curves;
    const PoiEstimate est = estimate_poi(data, cfg);

    std::vector<double> selected;
    std::size_t s_hat = est.s_hat;
    if (spec.known_s) {
        const std::size_t take = std::min(*spec.known_s, est.candidates.size());
        for (std::size_t l = 0; l < take; ++l) {
            selected.push_back(est.candidates[l].location);
        }
        s_hat = take;
    } else {
        for (const Candidate& c : est.selected) {
            selected.push_back(c.location);
        }
    }

    Matrix design(data.n(), 1 + selected.size(), 1.0);
    for (std::size_t c = 0; c < selected.size(); ++c) {
        const std::size_t col = spec.known_s ? est.candidates[c].grid_index
                                             : est.selected[c].grid_index;
        for (std::size_t i = 0; i < data.n(); ++i) {
            design(i, 1 + c) = data.x(i, col);
        }
    }
    GlmFit fit;
    bool fit_ok = true;
    try {
        fit = fisher_scoring(design, data.y, link_for(spec.model.response));
    } catch (const NumericError&) {
        fit_ok = false;
    }
    std::vector<double> candidates;
    candidates.reserve(est.candidates.size());
    for (const Candidate& c : est.candidates) {
        candidates.push_back(c.location);
    }
    return make_record(spec, data, truth, rep, s_hat, selected, candidates, fit, fit_ok);
}

RepRecord run_poi_rep(const ExperimentSpec& spec, const FunctionalDataset& data,
                      const std::vector<double>& truth, std::size_t rep) {
    SelectionLimits limits = spec.limits;
    if (spec.known_s) {
        limits.min_subset_size = *spec.known_s;
        limits.max_subset_size = *spec.known_s;
    }
    const std::vector<std::size_t> k_grid =
        spec.k_delta_grid ? *spec.k_delta_grid : default_k_delta_grid(data.grid);
    PoiConfig base;
    base.center = spec.center_curves;
    const SelectionResult sel = best_subset_over_delta(
        data, k_grid, link_for(spec.model.response), limits, base);
    std::vector<double> selected;
    for (const Candidate& c : sel.best_candidates) {
        selected.push_back(c.location);
    }
    // For the BIC route the chosen subset members are the location estimates.
    return make_record(spec, data, truth, rep, selected.size(), selected, selected, sel.fit,
                       !sel.all_nonconverged);
}

std::array<double, 5> quantiles_10_25_50_75_90(std::vector<double> values) {
    std::array<double, 5> out{kNaN, kNaN, kNaN, kNaN, kNaN};
    if (values.empty()) {
        return out;
    }
    std::sort(values.begin(), values.end());
    const std::array<double, 5> probs{0.10, 0.25, 0.50, 0.75, 0.90};
    const std::size_t n = values.size();
    for (std::size_t q = 0; q < probs.size(); ++q) {
        const double h = probs[q] * static_cast<double>(n - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, n - 1);
        const double w = h - static_cast<double>(lo);
        out[q] = (1.0 - w) * values[lo] + w * values[hi];
    }
    return out;
}

CellAggregates aggregate_cell(const ExperimentSpec& spec, const std::vector<RepRecord>& records) {
    const std::size_t s_true = spec.model.s();
    CellAggregates agg;
    agg.reps = records.size();
    agg.mse_per_tau_matched.assign(s_true, kNaN);
    agg.mse_per_tau_penalized.assign(s_true, kNaN);

    // Interval half-widths used for the unmatched penalty.
    std::vector<double> half_width(s_true, 0.0);
    if (s_true > 0) {
        std::vector<double> mid(s_true + 1);
        mid[0] = spec.domain_a;
        mid[s_true] = spec.domain_b;
        for (std::size_t j = 1; j < s_true; ++j) {
            mid[j] = 0.5 * (spec.model.taus[j - 1] + spec.model.taus[j]);
        }
        for (std::size_t j = 0; j < s_true; ++j) {
            half_width[j] = 0.5 * (mid[j + 1] - mid[j]);
        }
    }

    std::size_t ok = 0;
    std::size_t s_correct = 0;
    double mase_sum = 0.0;
    std::size_t mase_count = 0;
    std::vector<double> matched_sq(s_true, 0.0);
    std::vector<std::size_t> matched_cnt(s_true, 0);
    std::vector<double> penalized_sq(s_true, 0.0);
    std::vector<std::vector<double>> coef_samples(1 + s_true);

    for (const RepRecord& rec : records) {
        if (rec.failed) {
            ++agg.failure_count;
            continue;
        }
        ++ok;
        if (rec.s_hat == s_true) {
            ++s_correct;
        }
        bool fully_matched = true;
        for (std::size_t j = 0; j < s_true; ++j) {
            if (std::isnan(rec.tau_err[j])) {
                fully_matched = false;
                ++agg.unmatched_count;
                penalized_sq[j] += half_width[j] * half_width[j];
            } else {
                matched_sq[j] += rec.tau_err[j] * rec.tau_err[j];
                penalized_sq[j] += rec.tau_err[j] * rec.tau_err[j];
                ++matched_cnt[j];
            }
        }
        if (fully_matched && rec.glm_converged) {
            for (std::size_t c = 0; c < rec.coef.size(); ++c) {
                coef_samples[c].push_back(rec.coef[c]);
            }
        }
        if (!std::isnan(rec.mase_contrib)) {
            mase_sum += rec.mase_contrib;
            ++mase_count;
        }
    }

    agg.p_s_correct = ok > 0 ? static_cast<double>(s_correct) / static_cast<double>(ok) : kNaN;
    agg.mase = mase_count > 0 ? mase_sum / static_cast<double>(mase_count) : kNaN;
    double avg_matched = 0.0;
    double avg_penalized = 0.0;
    bool any_matched = s_true > 0;
    for (std::size_t j = 0; j < s_true; ++j) {
        agg.mse_per_tau_matched[j] =
            matched_cnt[j] > 0 ? matched_sq[j] / static_cast<double>(matched_cnt[j]) : kNaN;
        agg.mse_per_tau_penalized[j] =
            ok > 0 ? penalized_sq[j] / static_cast<double>(ok) : kNaN;
        if (matched_cnt[j] == 0) {
            any_matched = false;
        } else {
            avg_matched += agg.mse_per_tau_matched[j];
        }
        avg_penalized += ok > 0 ? agg.mse_per_tau_penalized[j] : 0.0;
    }
    agg.avg_mse_matched =
        (s_true > 0 && any_matched) ? avg_matched / static_cast<double>(s_true) : kNaN;
    agg.avg_mse_penalized = (s_true > 0 && ok > 0)
                                ? avg_penalized / static_cast<double>(s_true)
                                : kNaN;
    agg.coef_sample_count = coef_samples.empty() ? 0 : coef_samples[0].size();
    agg.coef_quantiles.resize(1 + s_true);
    for (std::size_t c = 0; c < coef_samples.size(); ++c) {
        agg.coef_quantiles[c] = quantiles_10_25_50_75_90(coef_samples[c]);
    }
    return agg;
}

}  // namespace

McReport run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const auto start = std::chrono::steady_clock::now();

    McReport report;
    report.seed = spec.seed;
    report.spec_hash = spec_hash(spec);

    std::size_t threads = spec.threads;
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }

    std::uint64_t cell_id = 0;
    for (const std::size_t n : spec.n_list) {
        for (const std::size_t p : spec.p_list) {
            ++cell_id;
            const GridSpec grid{spec.domain_a, spec.domain_b, p};

            std::vector<RepRecord> trh_records(spec.run_trh ? spec.reps : 0);
            std::vector<RepRecord> poi_records(spec.run_poi ? spec.reps : 0);

            std::atomic<std::size_t> next_rep{0};
            auto worker = [&]() {
                while (true) {
                    const std::size_t rep = next_rep.fetch_add(1);
                    if (rep >= spec.reps) {
                        return;
                    }
                    RngStream stream(spec.seed, (cell_id << 32) | rep);
                    const std::uint64_t path_seed = stream.next_u64();
                    const std::uint64_t resp_seed = stream.next_u64();
                    try {
                        const Matrix x = sample_paths(spec.process, grid, n, path_seed);
                        const ResponseDraw draw =
                            generate_responses(x, grid, spec.model, resp_seed);
                        FunctionalDataset data{grid, x, draw.y};
                        std::vector<double> truth(n);
                        for (std::size_t i = 0; i < n; ++i) {
                            truth[i] = response_mean(spec.model.response, draw.eta[i]);
                        }
                        if (spec.run_trh) {
                            trh_records[rep] = run_trh_rep(spec, data, truth, rep);
                            trh_records[rep].rep = rep;
                        }
                        if (spec.run_poi) {
                            poi_records[rep] = run_poi_rep(spec, data, truth, rep);
                            poi_records[rep].rep = rep;
                        }
                    } catch (const std::exception& e) {
                        RepRecord fail;
                        fail.rep = rep;
                        fail.failed = true;
                        fail.error = e.what();
                        fail.tau_err.assign(spec.model.s(), kNaN);
                        fail.coef.assign(1 + spec.model.s(), kNaN);
                        fail.mase_contrib = kNaN;
                        if (spec.run_trh) {
                            trh_records[rep] = fail;
                        }
                        if (spec.run_poi) {
                            poi_records[rep] = fail;
                        }
                    }
                }
            };

            std::vector<std::thread> pool;
            const std::size_t pool_size = std::min(threads, spec.reps);
            pool.reserve(pool_size);
            for (std::size_t t = 0; t < pool_size; ++t) {
                pool.emplace_back(worker);
            }
            for (auto& t : pool) {
                t.join();
            }

            if (spec.run_trh) {
                CellReport cell;
                cell.n = n;
                cell.p = p;
                cell.estimator = EstimatorKind::Trh;
                cell.aggregates = aggregate_cell(spec, trh_records);
                cell.records = std::move(trh_records);
                report.cells.push_back(std::move(cell));
            }
            if (spec.run_poi) {
                CellReport cell;
                cell.n = n;
                cell.p = p;
                cell.estimator = EstimatorKind::Poi;
                cell.aggregates = aggregate_cell(spec, poi_records);
                cell.records = std::move(poi_records);
                report.cells.push_back(std::move(cell));
            }
        }
    }

    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::pair<Matrix, Matrix> per_models(const FunctionalDataset& data) {
    data.validate();
    const std::size_t n = data.n();
    const std::size_t p = data.p();
    Matrix per1(n, 2);
    Matrix per2(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.x.row(i);
        std::size_t j_abs = 0;
        std::size_t j_pos = 0;
        std::size_t j_neg = 0;
        for (std::size_t j = 1; j < p; ++j) {
            if (std::fabs(row[j]) > std::fabs(row[j_abs])) {
                j_abs = j;
            }
            if (row[j] > row[j_pos]) {
                j_pos = j;
            }
            if (row[j] < row[j_neg]) {
                j_neg = j;
            }
        }
        per1(i, 0) = row[j_abs];
        per1(i, 1) = row[p - 1];
        per2(i, 0) = row[j_pos];
        per2(i, 1) = row[j_neg];
        per2(i, 2) = row[p - 1];
    }
    return {per1, per2};
}

FitQuality fit_quality(std::span<const double> y, std::span<const double> fitted_probs,
                       double loglik, double null_loglik) {
    if (y.size() != fitted_probs.size() || y.empty()) {
        throw ConfigError("fit_quality: length mismatch");
    }
    std::size_t ones = 0;
    for (double v : y) {
        if (v != 0.0 && v != 1.0) {
            throw ConfigError("fit_quality: response must be binary");
        }
        if (v == 1.0) {
            ++ones;
        }
    }
    if (ones == 0 || ones == y.size()) {
        throw DataError("fit_quality: Somers' D needs both response classes present");
    }

    FitQuality q;
    q.mcfadden_r2 = 1.0 - loglik / null_loglik;

    std::uint64_t concordant = 0;
    std::uint64_t discordant = 0;
    std::uint64_t pairs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 1.0) {
            continue;
        }
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] != 0.0) {
                continue;
            }
            ++pairs;
            if (fitted_probs[i] > fitted_probs[j]) {
                ++concordant;
            } else if (fitted_probs[i] < fitted_probs[j]) {
                ++discordant;
            }
        }
    }
    q.somers_dxy = (static_cast<double>(concordant) - static_cast<double>(discordant)) /
                   static_cast<double>(pairs);
    return q;
}

}  // namespace impact
