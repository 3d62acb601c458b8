#include "impact/process_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "impact/errors.hpp"

namespace impact {

double logistic(double eta) {
    if (eta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-eta));
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

double ScaleLaw::draw(RngStream& rng) const {
    double v = 0.0;
    switch (kind) {
        case Kind::Constant:
            v = value;
            break;
        case Kind::ShiftedAbsNormal:
            v = std::fabs(rng.normal()) + value;
            break;
    }
    if (!(v > 0.0)) {
        throw NumericError("ScaleLaw: drew a nonpositive multiplier");
    }
    return v;
}

void ScaleLaw::validate() const {
    if (kind == Kind::Constant && !(value > 0.0)) {
        throw ConfigError("ScaleLaw: constant multiplier must be positive");
    }
    if (kind == Kind::ShiftedAbsNormal && !(value > 0.0)) {
        throw ConfigError("ScaleLaw: shift must be positive to keep V away from zero");
    }
}

ProcessSpec ProcessSpec::ornstein_uhlenbeck(double theta, double sigma_u_sq) {
    ProcessSpec s;
    s.kind = ProcessKind::OrnsteinUhlenbeck;
    s.theta = theta;
    s.sigma_u_sq = sigma_u_sq;
    s.kappa = 1.0;
    return s;
}

ProcessSpec ProcessSpec::gaussian_covariance(double length_scale) {
    ProcessSpec s;
    s.kind = ProcessKind::GaussianCovarianceModel;
    s.length_scale = length_scale;
    s.kappa = std::nullopt;  // smooth covariance, outside the 0 < kappa < 2 class
    return s;
}

ProcessSpec ProcessSpec::brownian_motion(double scale) {
    ProcessSpec s;
    s.kind = ProcessKind::BrownianMotion;
    s.scale = scale;
    s.kappa = 1.0;
    return s;
}

ProcessSpec ProcessSpec::exponential_brownian() {
    ProcessSpec s;
    s.kind = ProcessKind::ExponentialBrownianMotion;
    s.kappa = 1.0;
    return s;
}

ProcessSpec ProcessSpec::elliptical(ProcessSpec base, ScaleLaw law) {
    if (base.kind == ProcessKind::Elliptical) {
        throw ConfigError("ProcessSpec: elliptical base must not itself be elliptical");
    }
    ProcessSpec s;
    s.kind = ProcessKind::Elliptical;
    s.base = std::make_shared<const ProcessSpec>(std::move(base));
    s.scale_law = law;
    s.kappa = s.base->kappa;
    return s;
}

double ProcessSpec::covariance_at(double s, double t) const {
    switch (kind) {
        case ProcessKind::OrnsteinUhlenbeck:
            return sigma_u_sq / (2.0 * theta) *
                   (std::exp(-theta * std::fabs(s - t)) - std::exp(-theta * (s + t)));
        case ProcessKind::GaussianCovarianceModel: {
            const double u = std::fabs(s - t) / length_scale;
            return std::exp(-u * u);
        }
        case ProcessKind::BrownianMotion:
            return scale * std::min(s, t);
        default:
            throw ConfigError("covariance_at: no closed-form covariance for kind " + name());
    }
}

void ProcessSpec::validate() const {
    switch (kind) {
        case ProcessKind::OrnsteinUhlenbeck:
            if (!(theta > 0.0) || !(sigma_u_sq > 0.0)) {
                throw ConfigError("ProcessSpec: OUP requires theta > 0 and sigma_u_sq > 0");
            }
            break;
        case ProcessKind::GaussianCovarianceModel:
            if (!(length_scale > 0.0)) {
                throw ConfigError("ProcessSpec: GCM requires length_scale > 0");
            }
            break;
        case ProcessKind::BrownianMotion:
            if (!(scale > 0.0)) {
                throw ConfigError("ProcessSpec: BM requires scale > 0");
            }
            break;
        case ProcessKind::ExponentialBrownianMotion:
            break;
        case ProcessKind::Elliptical:
            if (!base) {
                throw ConfigError("ProcessSpec: elliptical spec is missing its base process");
            }
            base->validate();
            scale_law.validate();
            break;
    }
    if (kappa && !(*kappa > 0.0 && *kappa < 2.0)) {
        throw ConfigError("ProcessSpec: kappa must lie in (0,2) when given");
    }
}

std::string ProcessSpec::name() const {
    switch (kind) {
        case ProcessKind::OrnsteinUhlenbeck:
            return "oup";
        case ProcessKind::GaussianCovarianceModel:
            return "gcm";
        case ProcessKind::BrownianMotion:
            return "bm";
        case ProcessKind::ExponentialBrownianMotion:
            return "ebm";
        case ProcessKind::Elliptical:
            return "elliptical(" + (base ? base->name() : std::string("?")) + ")";
    }
    return "?";
}

void ImpactModelSpec::validate() const {
    if (betas.size() != taus.size()) {
        throw ConfigError("ImpactModelSpec: betas and taus must have equal length");
    }
    for (std::size_t r = 1; r < taus.size(); ++r) {
        if (!(taus[r - 1] < taus[r])) {
            throw ConfigError("ImpactModelSpec: taus must be strictly increasing");
        }
    }
    if (response.kind == ResponseSpec::Kind::GaussianIdentity && response.sigma_eps < 0.0) {
        throw ConfigError("ImpactModelSpec: sigma_eps must be >= 0");
    }
}

void FunctionalDataset::validate() const {
    grid.validate();
    if (x.rows() < 1) {
        throw DataError("FunctionalDataset: needs at least one curve");
    }
    if (x.cols() != grid.p) {
        throw DataError("FunctionalDataset: curve length does not match the grid");
    }
    if (y.size() != x.rows()) {
        throw DataError("FunctionalDataset: responses and curves disagree in length");
    }
    for (double v : x.data()) {
        if (!std::isfinite(v)) {
            throw DataError("FunctionalDataset: non-finite curve value");
        }
    }
    for (double v : y) {
        if (!std::isfinite(v)) {
            throw DataError("FunctionalDataset: non-finite response value");
        }
    }
}

namespace {

// Nugget ladder: 1e-10 * max-diagonal, escalating x10 up to 1e-6 * max-diagonal.
Matrix cholesky_with_nugget(const Matrix& cov, double* nugget_used) {
    Matrix factor = cov;
    if (cholesky_in_place(factor)) {
        if (nugget_used) {
            *nugget_used = 0.0;
        }
        return factor;
    }
    double max_diag = 0.0;
    for (std::size_t j = 0; j < cov.rows(); ++j) {
        max_diag = std::max(max_diag, cov(j, j));
    }
    if (!(max_diag > 0.0)) {
        throw NumericError("sample_gaussian_paths: covariance has nonpositive diagonal");
    }
    for (double rel = 1e-10; rel <= 1e-6; rel *= 10.0) {
        const double nugget = rel * max_diag;
        factor = cov;
        for (std::size_t j = 0; j < cov.rows(); ++j) {
            factor(j, j) += nugget;
        }
        if (cholesky_in_place(factor)) {
            if (nugget_used) {
                *nugget_used = nugget;
            }
            return factor;
        }
    }
    std::ostringstream msg;
    msg << "sample_gaussian_paths: Cholesky failed for p=" << cov.rows()
        << " even with nugget 1e-6 * max-diagonal (max diag " << max_diag << ")";
    throw NumericError(msg.str());
}

void require_nonnegative_domain(const ProcessSpec& spec, const GridSpec& grid) {
    if (grid.a < 0.0) {
        throw ConfigError("process " + spec.name() + " requires a grid with a >= 0");
    }
}

Matrix sample_markov(const ProcessSpec& spec, const GridSpec& grid, std::size_t n,
                     std::uint64_t seed) {
    require_nonnegative_domain(spec, grid);
    const std::size_t p = grid.p;
    const double dt = grid.step();
    Matrix x(n, p);
    RngStream rng(seed);

    if (spec.kind == ProcessKind::OrnsteinUhlenbeck) {
        const double var_scale = spec.sigma_u_sq / (2.0 * spec.theta);
        const double sd0 = std::sqrt(var_scale * (1.0 - std::exp(-2.0 * spec.theta * grid.a)));
        const double decay = std::exp(-spec.theta * dt);
        const double sd_step = std::sqrt(var_scale * (1.0 - decay * decay));
        for (std::size_t i = 0; i < n; ++i) {
            auto row = x.row(i);
            row[0] = sd0 * rng.normal();
            for (std::size_t j = 1; j < p; ++j) {
                row[j] = decay * row[j - 1] + sd_step * rng.normal();
            }
        }
        return x;
    }
    if (spec.kind == ProcessKind::BrownianMotion) {
        const double sd0 = std::sqrt(spec.scale * grid.a);
        const double sd_step = std::sqrt(spec.scale * dt);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = x.row(i);
            row[0] = sd0 * rng.normal();
            for (std::size_t j = 1; j < p; ++j) {
                row[j] = row[j - 1] + sd_step * rng.normal();
            }
        }
        return x;
    }
    throw ConfigError("MarkovExact sampling supports only OUP and BM");
}

}  // namespace

Matrix covariance_matrix(const ProcessSpec& spec, const GridSpec& grid) {
    grid.validate();
    spec.validate();
    if (!spec.is_gaussian()) {
        throw ConfigError("covariance_matrix: unsupported process kind " + spec.name());
    }
    if (spec.kind != ProcessKind::GaussianCovarianceModel) {
        require_nonnegative_domain(spec, grid);
    }
    const std::vector<double> t = grid.points();
    Matrix cov(grid.p, grid.p);
    for (std::size_t i = 0; i < grid.p; ++i) {
        cov(i, i) = spec.covariance_at(t[i], t[i]);
        for (std::size_t j = 0; j < i; ++j) {
            const double v = spec.covariance_at(t[i], t[j]);
            cov(i, j) = v;
            cov(j, i) = v;
        }
    }
    return cov;
}

Matrix sample_gaussian_paths(const ProcessSpec& spec, const GridSpec& grid, std::size_t n,
                             std::uint64_t seed, SampleMethod method) {
    grid.validate();
    spec.validate();
    if (!spec.is_gaussian()) {
        throw ConfigError("sample_gaussian_paths: unsupported process kind " + spec.name());
    }
    if (n < 1) {
        throw ConfigError("sample_gaussian_paths: n must be >= 1");
    }
    const bool markov_capable = spec.kind == ProcessKind::OrnsteinUhlenbeck ||
                                spec.kind == ProcessKind::BrownianMotion;
    if (method == SampleMethod::Auto) {
        method = markov_capable ? SampleMethod::MarkovExact : SampleMethod::Cholesky;
    }
    if (method == SampleMethod::MarkovExact) {
        return sample_markov(spec, grid, n, seed);
    }

    const Matrix cov = covariance_matrix(spec, grid);
    const Matrix factor = cholesky_with_nugget(cov, nullptr);
    const std::size_t p = grid.p;
    Matrix x(n, p);
    RngStream rng(seed);
    std::vector<double> z(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : z) {
            v = rng.normal();
        }
        auto row = x.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k <= j; ++k) {
                s += factor(j, k) * z[k];
            }
            row[j] = s;
        }
    }
    return x;
}

Matrix sample_ebm_paths(const GridSpec& grid, std::size_t n, std::uint64_t seed) {
    grid.validate();
    if (grid.a < 0.0) {
        throw ConfigError("sample_ebm_paths: requires a grid with a >= 0");
    }
    if (n < 1) {
        throw ConfigError("sample_ebm_paths: n must be >= 1");
    }
    const double dt = grid.step();
    const double sd0 = std::sqrt(grid.a);
    const double sd_step = std::sqrt(dt);
    Matrix x(n, grid.p);
    RngStream rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        double b = sd0 * rng.normal();
        row[0] = std::exp(b);
        for (std::size_t j = 1; j < grid.p; ++j) {
            b += sd_step * rng.normal();
            row[j] = std::exp(b);
        }
    }
    return x;
}

Matrix apply_elliptical_scaling(const Matrix& x, const ScaleLaw& law, std::uint64_t seed) {
    law.validate();
    Matrix scaled = x;
    RngStream rng(seed);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double v = law.draw(rng);
        auto row = scaled.row(i);
        for (double& value : row) {
            value *= v;
        }
    }
    return scaled;
}

Matrix sample_paths(const ProcessSpec& spec, const GridSpec& grid, std::size_t n,
                    std::uint64_t seed) {
    spec.validate();
    switch (spec.kind) {
        case ProcessKind::OrnsteinUhlenbeck:
        case ProcessKind::GaussianCovarianceModel:
        case ProcessKind::BrownianMotion:
            return sample_gaussian_paths(spec, grid, n, seed);
        case ProcessKind::ExponentialBrownianMotion:
            return sample_ebm_paths(grid, n, seed);
        case ProcessKind::Elliptical: {
            // Distinct sub-streams for the Gaussian part and the multipliers.
            const Matrix base = sample_paths(*spec.base, grid, n, seed);
            RngStream derive(seed, 0x656c6c6970ULL);
            return apply_elliptical_scaling(base, spec.scale_law, derive.next_u64());
        }
    }
    throw ConfigError("sample_paths: unknown process kind");
}

ResponseDraw generate_responses(const Matrix& x, const GridSpec& grid,
                                const ImpactModelSpec& model, std::uint64_t seed) {
    grid.validate();
    model.validate();
    if (x.cols() != grid.p) {
        throw DataError("generate_responses: curve length does not match the grid");
    }

    ResponseDraw out;
    out.grid_indices.reserve(model.s());
    for (double tau : model.taus) {
        if (!(tau > grid.a && tau < grid.b)) {
            throw ConfigError("generate_responses: tau outside (a,b)");
        }
        out.grid_indices.push_back(grid.nearest_index(tau));
    }

    const std::size_t n = x.rows();
    out.eta.resize(n);
    out.y.resize(n);
    RngStream rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        double eta = model.alpha;
        for (std::size_t r = 0; r < model.s(); ++r) {
            eta += model.betas[r] * x(i, out.grid_indices[r]);
        }
        out.eta[i] = eta;
        switch (model.response.kind) {
            case ResponseSpec::Kind::BernoulliLogit:
                out.y[i] = rng.bernoulli(logistic(eta)) ? 1.0 : 0.0;
                break;
            case ResponseSpec::Kind::GaussianIdentity:
                out.y[i] = eta + model.response.sigma_eps * rng.normal();
                break;
        }
    }
    return out;
}

}  // namespace impact
