#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ael/canonical.hpp"
#include "ael/rng.hpp"

namespace ael::bandits {

// Beta posterior over a Bernoulli-like reward in [0, 1].
struct BetaArm {
    std::string id;
    double alpha = 1.0;
    double beta = 1.0;

    double mean() const { return alpha / (alpha + beta); }
};

// alpha += r, beta += 1 - r. Throws ContractViolation when r is outside [0, 1].
BetaArm ts_update(BetaArm arm, double reward);

// Thompson Sampling over a growing pool of Beta arms. Selection is a pure
// function of (arms, rng state); ties go to the lowest index.
class ThompsonSelector {
public:
    ThompsonSelector() = default;
    ThompsonSelector(std::vector<BetaArm> arms, std::uint64_t seed);

    std::size_t select();
    const std::string& select_id() { return arms_.at(select()).id; }

    void update(std::size_t index, double reward);
    void add_arm(BetaArm arm);

    std::size_t index_of(const std::string& id) const;
    std::span<const BetaArm> arms() const { return arms_; }
    std::size_t size() const { return arms_.size(); }

    // Mean posterior reward across all arms.
    double mean_posterior() const;

    void reseed(std::uint64_t seed) { rng_.seed(seed); }
    Rng& rng() { return rng_; }

    // Once frozen, update/add_arm throw FrozenStateViolation; select keeps sampling.
    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    Json snapshot() const;

private:
    std::vector<BetaArm> arms_;
    Rng rng_;
    bool frozen_ = false;
};

// Index of the arm with the largest Beta sample; ConfigError when empty.
std::size_t ts_select(std::span<const BetaArm> arms, Rng& rng);

struct PerToolSelectorConfig {
    std::size_t k_initial = 12;
    std::size_t k_min = 6;
    std::size_t shrink_every = 40;
};

// K = max(K_min, K_initial - floor(episode / shrink_every)).
std::size_t per_tool_k(const PerToolSelectorConfig& config, std::size_t episode_index);

// Indices of the K highest-sampled arms, in ascending index order.
std::vector<std::size_t> per_tool_select(std::span<const BetaArm> tool_arms,
                                         const PerToolSelectorConfig& config,
                                         std::size_t episode_index, Rng& rng);

using ContextVector = Eigen::VectorXd;
inline constexpr int kContextDim = 7;

// Ridge-regression arm for LinUCB. A starts at identity and only grows by
// rank-one updates, so it stays symmetric positive-definite.
class LinUcbArm {
public:
    LinUcbArm() = default;
    LinUcbArm(std::string id, int dim);

    const std::string& id() const { return id_; }
    int dim() const { return static_cast<int>(b_.size()); }

    const Eigen::MatrixXd& a() const { return a_; }
    const Eigen::VectorXd& b() const { return b_; }
    const Eigen::VectorXd& theta() const { return theta_; }

    // phi' theta + alpha * sqrt(phi' A^-1 phi)
    double ucb(const ContextVector& phi, double alpha_explore) const;

    void update(const ContextVector& phi, double reward);

    // Test hook: overwrite b and re-solve theta.
    void set_b(const Eigen::VectorXd& b);

    Json snapshot() const;

private:
    void resolve();

    std::string id_;
    Eigen::MatrixXd a_;
    Eigen::VectorXd b_;
    Eigen::VectorXd theta_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
};

std::size_t linucb_select(std::span<const LinUcbArm> arms, const ContextVector& phi,
                          double alpha_explore);

LinUcbArm linucb_update(LinUcbArm arm, const ContextVector& phi, double reward);

}  // namespace ael::bandits
