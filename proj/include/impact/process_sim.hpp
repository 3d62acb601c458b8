#ifndef IMPACT_PROCESS_SIM_HPP
#define IMPACT_PROCESS_SIM_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "impact/grid.hpp"
#include "impact/matrix.hpp"
#include "impact/rng.hpp"

namespace impact {

// Distribution of the per-curve multiplier V used by elliptical processes.
struct ScaleLaw {
    enum class Kind { Constant, ShiftedAbsNormal };

    Kind kind = Kind::Constant;
    double value = 1.0;  // Constant: V == value; ShiftedAbsNormal: V = |N(0,1)| + value

    [[nodiscard]] double draw(RngStream& rng) const;
    void validate() const;
};

enum class ProcessKind {
    OrnsteinUhlenbeck,        // sigma(s,t) = sigma_u^2/(2 theta) (e^{-theta|s-t|} - e^{-theta(s+t)})
    GaussianCovarianceModel,  // sigma(s,t) = exp(-(|s-t|/d)^2)
    BrownianMotion,           // sigma(s,t) = scale * min(s,t)
    ExponentialBrownianMotion,
    Elliptical,
};

struct ProcessSpec {
    ProcessKind kind = ProcessKind::OrnsteinUhlenbeck;
    double theta = 5.0;
    double sigma_u_sq = 3.5;
    double length_scale = 0.1;
    double scale = 1.0;
    std::shared_ptr<const ProcessSpec> base;  // Elliptical only
    ScaleLaw scale_law;                       // Elliptical only
    std::optional<double> kappa;              // known roughness exponent, informational

    static ProcessSpec ornstein_uhlenbeck(double theta, double sigma_u_sq);
    static ProcessSpec gaussian_covariance(double length_scale);
    static ProcessSpec brownian_motion(double scale);
    static ProcessSpec exponential_brownian();
    static ProcessSpec elliptical(ProcessSpec base, ScaleLaw law);

    [[nodiscard]] bool is_gaussian() const {
        return kind == ProcessKind::OrnsteinUhlenbeck ||
               kind == ProcessKind::GaussianCovarianceModel ||
               kind == ProcessKind::BrownianMotion;
    }

    // Closed-form covariance; valid for the Gaussian kinds only.
    [[nodiscard]] double covariance_at(double s, double t) const;

    void validate() const;
    [[nodiscard]] std::string name() const;
};

struct ResponseSpec {
    enum class Kind { BernoulliLogit, GaussianIdentity };
    Kind kind = Kind::BernoulliLogit;
    double sigma_eps = 0.0;  // GaussianIdentity noise standard deviation
};

// Scalar response model: eta_i = alpha + sum_r beta_r X_i(tau_r).
struct ImpactModelSpec {
    double alpha = 0.0;
    std::vector<double> betas;
    std::vector<double> taus;  // strictly increasing, inside (a,b)
    ResponseSpec response;

    void validate() const;
    [[nodiscard]] std::size_t s() const { return taus.size(); }
};

struct FunctionalDataset {
    GridSpec grid;
    Matrix x;               // n x p, one curve per row
    std::vector<double> y;  // length n

    [[nodiscard]] std::size_t n() const { return x.rows(); }
    [[nodiscard]] std::size_t p() const { return x.cols(); }
    void validate() const;
};

// Grid covariance of a Gaussian-kind process, exact closed form (no nugget).
// Throws ConfigError for non-Gaussian kinds.
Matrix covariance_matrix(const ProcessSpec& spec, const GridSpec& grid);

enum class SampleMethod {
    Auto,         // exact Markov recursion for OUP/BM, Cholesky otherwise
    Cholesky,     // dense factorization with escalating nugget
    MarkovExact,  // OUP/BM only
};

// n i.i.d. zero-mean Gaussian paths on the grid; deterministic given seed.
Matrix sample_gaussian_paths(const ProcessSpec& spec, const GridSpec& grid, std::size_t n,
                             std::uint64_t seed, SampleMethod method = SampleMethod::Auto);

// Exponential Brownian motion paths X(t) = exp(B(t)) with B(0) = 0.
Matrix sample_ebm_paths(const GridSpec& grid, std::size_t n, std::uint64_t seed);

// Multiplies each row by an independent positive draw V_i from the scale law.
Matrix apply_elliptical_scaling(const Matrix& x, const ScaleLaw& law, std::uint64_t seed);

// Dispatcher over all process kinds (sub-seeds are derived internally for
// the Gaussian component and the elliptical multipliers).
Matrix sample_paths(const ProcessSpec& spec, const GridSpec& grid, std::size_t n,
                    std::uint64_t seed);

struct ResponseDraw {
    std::vector<double> y;
    std::vector<std::size_t> grid_indices;  // grid index each tau_r mapped to
    std::vector<double> eta;                // realized linear predictors
};

ResponseDraw generate_responses(const Matrix& x, const GridSpec& grid,
                                const ImpactModelSpec& model, std::uint64_t seed);

// Logistic mean function g(eta) = exp(eta) / (1 + exp(eta)).
double logistic(double eta);

}  // namespace impact

#endif
