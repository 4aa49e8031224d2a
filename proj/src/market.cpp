#include "fbsde/market.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "fbsde/errors.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

Eigen::VectorXd MarketConfig::spots() const {
    Eigen::VectorXd s(dim());
    for (int i = 0; i < dim(); ++i) s[i] = assets[i].spot;
    return s;
}

void MarketConfig::validate() const {
    if (assets.empty()) throw ConfigError("market.assets: at least one asset required");
    for (std::size_t i = 0; i < assets.size(); ++i) {
        std::ostringstream field;
        field << "market.assets[" << i << "]";
        if (!(assets[i].spot > 0.0)) throw ConfigError(field.str() + ".spot: must be > 0");
        // zero vol is allowed as a degenerate case (deterministic drift paths)
        if (!(assets[i].vol >= 0.0)) throw ConfigError(field.str() + ".vol: must be >= 0");
    }
    const int d = dim();
    if (correlation.rows() != d || correlation.cols() != d)
        throw ConfigError("market.correlation: must be d x d");
    for (int i = 0; i < d; ++i) {
        if (std::abs(correlation(i, i) - 1.0) > 1e-12)
            throw ConfigError("market.correlation: diagonal entries must be 1");
        for (int j = 0; j < i; ++j) {
            if (std::abs(correlation(i, j) - correlation(j, i)) > 1e-12)
                throw ConfigError("market.correlation: must be symmetric");
            if (!(std::abs(correlation(i, j)) < 1.0))
                throw ConfigError("market.correlation: off-diagonal entries must satisfy |rho| < 1");
        }
    }
    cholesky_factor(correlation);  // throws NotPositiveDefinite if invalid
}

void TimeGrid::validate() const {
    if (!(maturity > 0.0)) throw ConfigError("grid.maturity: must be > 0");
    if (steps <= 0) throw ConfigError("grid.steps: must be > 0");
    int prev = 0;
    for (int idx : event_indices) {
        if (idx <= 0 || idx > steps)
            throw ConfigError("grid.event_indices: entries must lie in (0, steps]");
        if (idx <= prev) throw ConfigError("grid.event_indices: must be strictly increasing");
        prev = idx;
    }
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& correlation) {
    Eigen::LLT<Eigen::MatrixXd> llt(correlation);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("correlation matrix is not positive definite");
    return llt.matrixL();
}

PathBatch simulate_paths(const MarketConfig& market, const TimeGrid& grid, int num_paths,
                         std::uint64_t seed, EulerScheme scheme) {
    PathBatch batch;
    simulate_paths_into(batch, market, grid, num_paths, seed, scheme);
    return batch;
}

void simulate_paths_into(PathBatch& batch, const MarketConfig& market, const TimeGrid& grid,
                         int num_paths, std::uint64_t seed, EulerScheme scheme) {
    const int d = market.dim();
    const int n = grid.steps;
    const double h = grid.step_size();
    const double sqrt_h = std::sqrt(h);
    const Eigen::MatrixXd chol = cholesky_factor(market.correlation);

    batch.num_paths = num_paths;
    batch.seed = seed;
    batch.states.resize(n + 1);
    batch.increments.resize(n);
    for (int i = 0; i <= n; ++i) batch.states[i].resize(num_paths, d);
    for (int i = 0; i < n; ++i) batch.increments[i].resize(num_paths, d);

    Eigen::VectorXd drift(d), vol(d), spot(d);
    for (int a = 0; a < d; ++a) {
        drift[a] = market.rate - market.assets[a].dividend;
        vol[a] = market.assets[a].vol;
        spot[a] = market.assets[a].spot;
    }

    std::atomic<long long> negatives{0};

#pragma omp parallel for schedule(static)
    for (int j = 0; j < num_paths; ++j) {
        NormalStream stream(seed, static_cast<std::uint64_t>(j));
        Eigen::VectorXd xi(d), dw(d), x = spot;
        batch.states[0].row(j) = x.transpose();
        long long local_neg = 0;
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < d; ++a) xi[a] = stream.next();
            dw.noalias() = chol.template triangularView<Eigen::Lower>() * xi;
            dw *= sqrt_h;
            batch.increments[i].row(j) = dw.transpose();
            if (scheme == EulerScheme::levels) {
                for (int a = 0; a < d; ++a)
                    x[a] += drift[a] * x[a] * h + vol[a] * x[a] * dw[a];
            } else {
                for (int a = 0; a < d; ++a)
                    x[a] *= std::exp((drift[a] - 0.5 * vol[a] * vol[a]) * h + vol[a] * dw[a]);
            }
            for (int a = 0; a < d; ++a)
                if (x[a] < 0.0) ++local_neg;
            batch.states[i + 1].row(j) = x.transpose();
        }
        if (local_neg) negatives += local_neg;
    }

    batch.negative_state_count = negatives.load();
}

}  // namespace fbsde
