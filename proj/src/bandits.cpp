#include "ael/bandits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ael/errors.hpp"

namespace ael::bandits {

namespace {

void check_reward(double reward) {
    if (!(reward >= 0.0 && reward <= 1.0)) {
        throw ContractViolation("bandit reward must lie in [0, 1], got " + std::to_string(reward));
    }
}

}  // namespace

BetaArm ts_update(BetaArm arm, double reward) {
    check_reward(reward);
    arm.alpha += reward;
    arm.beta += 1.0 - reward;
    return arm;
}

std::size_t ts_select(std::span<const BetaArm> arms, Rng& rng) {
    if (arms.empty()) {
        throw ConfigError("Thompson selection over an empty arm set");
    }
    std::size_t best = 0;
    double best_sample = -1.0;
    for (std::size_t i = 0; i < arms.size(); ++i) {
        const double sample = sample_beta(arms[i].alpha, arms[i].beta, rng);
        if (sample > best_sample) {
            best_sample = sample;
            best = i;
        }
    }
    return best;
}

ThompsonSelector::ThompsonSelector(std::vector<BetaArm> arms, std::uint64_t seed) : rng_(seed) {
    for (auto& arm : arms) {
        add_arm(std::move(arm));
    }
}

std::size_t ThompsonSelector::select() { return ts_select(arms_, rng_); }

void ThompsonSelector::update(std::size_t index, double reward) {
    if (frozen_) {
        throw FrozenStateViolation("posterior update on a frozen Thompson selector");
    }
    arms_.at(index) = ts_update(arms_.at(index), reward);
}

void ThompsonSelector::add_arm(BetaArm arm) {
    if (frozen_) {
        throw FrozenStateViolation("arm added to a frozen Thompson selector");
    }
    if (!(arm.alpha > 0.0) || !(arm.beta > 0.0)) {
        throw ContractViolation("Beta arm parameters must be positive");
    }
    for (const auto& existing : arms_) {
        if (existing.id == arm.id) {
            throw ConfigError("duplicate arm id: " + arm.id);
        }
    }
    arms_.push_back(std::move(arm));
}

std::size_t ThompsonSelector::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < arms_.size(); ++i) {
        if (arms_[i].id == id) {
            return i;
        }
    }
    throw ConfigError("unknown arm id: " + id);
}

double ThompsonSelector::mean_posterior() const {
    if (arms_.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& arm : arms_) {
        total += arm.mean();
    }
    return total / static_cast<double>(arms_.size());
}

Json ThompsonSelector::snapshot() const {
    Json arms = Json::array();
    for (const auto& arm : arms_) {
        arms.push_back({{"id", arm.id}, {"alpha", arm.alpha}, {"beta", arm.beta}});
    }
    return arms;
}

std::size_t per_tool_k(const PerToolSelectorConfig& config, std::size_t episode_index) {
    const std::size_t shrink = config.shrink_every == 0 ? 0 : episode_index / config.shrink_every;
    const std::size_t reduced = shrink >= config.k_initial ? 0 : config.k_initial - shrink;
    return std::max(config.k_min, reduced);
}

std::vector<std::size_t> per_tool_select(std::span<const BetaArm> tool_arms,
                                         const PerToolSelectorConfig& config,
                                         std::size_t episode_index, Rng& rng) {
    const std::size_t k = per_tool_k(config, episode_index);
    if (k > tool_arms.size()) {
        throw ContractViolation("per-tool K exceeds the number of tools");
    }
    std::vector<double> samples(tool_arms.size());
    for (std::size_t i = 0; i < tool_arms.size(); ++i) {
        samples[i] = sample_beta(tool_arms[i].alpha, tool_arms[i].beta, rng);
    }
    std::vector<std::size_t> order(tool_arms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t lhs, std::size_t rhs) { return samples[lhs] > samples[rhs]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

LinUcbArm::LinUcbArm(std::string id, int dim)
    : id_(std::move(id)),
      a_(Eigen::MatrixXd::Identity(dim, dim)),
      b_(Eigen::VectorXd::Zero(dim)),
      theta_(Eigen::VectorXd::Zero(dim)) {
    resolve();
}

void LinUcbArm::resolve() {
    chol_.compute(a_);
    if (chol_.info() != Eigen::Success) {
        throw std::runtime_error("LinUCB design matrix lost positive-definiteness");
    }
    theta_ = chol_.solve(b_);
}

double LinUcbArm::ucb(const ContextVector& phi, double alpha_explore) const {
    if (phi.size() != b_.size()) {
        throw ContractViolation("LinUCB context dimension mismatch");
    }
    const Eigen::VectorXd half = chol_.matrixL().solve(phi);
    return phi.dot(theta_) + alpha_explore * std::sqrt(half.squaredNorm());
}

void LinUcbArm::update(const ContextVector& phi, double reward) {
    check_reward(reward);
    if (phi.size() != b_.size()) {
        throw ContractViolation("LinUCB context dimension mismatch");
    }
    a_.noalias() += phi * phi.transpose();
    b_ += reward * phi;
    resolve();
}

void LinUcbArm::set_b(const Eigen::VectorXd& b) {
    if (b.size() != b_.size()) {
        throw ContractViolation("LinUCB b dimension mismatch");
    }
    b_ = b;
    resolve();
}

Json LinUcbArm::snapshot() const {
    Json a = Json::array();
    for (int r = 0; r < a_.rows(); ++r) {
        for (int c = 0; c < a_.cols(); ++c) {
            a.push_back(a_(r, c));
        }
    }
    Json b = Json::array();
    for (int i = 0; i < b_.size(); ++i) {
        b.push_back(b_(i));
    }
    return {{"id", id_}, {"A", a}, {"b", b}};
}

std::size_t linucb_select(std::span<const LinUcbArm> arms, const ContextVector& phi,
                          double alpha_explore) {
    if (arms.empty()) {
        throw ConfigError("LinUCB selection over an empty arm set");
    }
    std::size_t best = 0;
    double best_score = arms[0].ucb(phi, alpha_explore);
    for (std::size_t i = 1; i < arms.size(); ++i) {
        const double score = arms[i].ucb(phi, alpha_explore);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

LinUcbArm linucb_update(LinUcbArm arm, const ContextVector& phi, double reward) {
    arm.update(phi, reward);
    return arm;
}

}  // namespace ael::bandits
