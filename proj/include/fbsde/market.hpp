#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace fbsde {

struct Asset {
    double spot = 0.0;      // X0
    double dividend = 0.0;  // continuously compounded yield q
    double vol = 0.0;       // annualized sigma
};

struct MarketConfig {
    double rate = 0.0;  // continuously compounded r
    std::vector<Asset> assets;
    Eigen::MatrixXd correlation;  // d x d, unit diagonal

    int dim() const { return static_cast<int>(assets.size()); }
    Eigen::VectorXd spots() const;

    // Throws ConfigError / NotPositiveDefinite on invalid data.
    void validate() const;
};

struct TimeGrid {
    double maturity = 0.0;            // T in years
    int steps = 0;                    // N uniform intervals
    std::vector<int> event_indices;   // sorted, in (0, N]

    double step_size() const { return maturity / steps; }
    double time_at(int i) const { return maturity * i / steps; }
    void validate() const;
};

// M correlated Euler paths on the grid plus the Brownian increments that
// produced them. Immutable after construction; safe to share across threads.
struct PathBatch {
    int num_paths = 0;
    std::vector<Eigen::MatrixXd> states;      // N+1 entries, each M x d
    std::vector<Eigen::MatrixXd> increments;  // N entries, each M x d
    std::uint64_t seed = 0;
    long long negative_state_count = 0;  // diagnostic, see simulate_paths
};

enum class EulerScheme { levels, log_euler };

// Lower-triangular L with L * L^T == correlation. Throws NotPositiveDefinite.
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& correlation);

// Correlated GBM paths: X_{i+1} = X_i + (r - q) X_i h + sigma X_i dW_i with
// dW_i = sqrt(h) L xi, xi iid standard normal. Path j draws from a Philox
// substream keyed (seed, j), so output is identical for any thread count.
// Negative Euler states are possible in principle and are not clamped; they
// are counted in negative_state_count (vanishing probability at desk
// vol/horizon levels).
PathBatch simulate_paths(const MarketConfig& market, const TimeGrid& grid, int num_paths,
                         std::uint64_t seed, EulerScheme scheme = EulerScheme::levels);

// Same, writing into an existing batch; a same-shaped batch is refilled
// without reallocating (training loops draw a fresh batch every iteration).
void simulate_paths_into(PathBatch& batch, const MarketConfig& market, const TimeGrid& grid,
                         int num_paths, std::uint64_t seed,
                         EulerScheme scheme = EulerScheme::levels);

}  // namespace fbsde
