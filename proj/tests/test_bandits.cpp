#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "ael/bandits.hpp"
#include "ael/errors.hpp"

using namespace ael;
using namespace ael::bandits;

TEST(ThompsonSelect, SingleArmIsAlwaysChosen) {
    ThompsonSelector sel({{"only", 1.0, 1.0}}, 7);
    for (int k = 0; k < 20; ++k) {
        EXPECT_EQ(sel.select_id(), "only");
    }
}

TEST(ThompsonSelect, EmptyPoolIsAConfigError) {
    Rng rng(1);
    std::vector<BetaArm> none;
    EXPECT_THROW(ts_select(none, rng), ConfigError);
}

TEST(ThompsonSelect, ConcentratedPosteriorWins) {
    ThompsonSelector sel({{"good", 1000.0, 1.0}, {"bad", 1.0, 1000.0}}, 11);
    int first = 0;
    for (int k = 0; k < 1000; ++k) {
        first += sel.select() == 0 ? 1 : 0;
    }
    EXPECT_GE(first, 990);
}

TEST(ThompsonSelect, SameSeedSameSequence) {
    ThompsonSelector a({{"x", 1, 1}, {"y", 1, 1}}, 99);
    ThompsonSelector b({{"x", 1, 1}, {"y", 1, 1}}, 99);
    for (int k = 0; k < 200; ++k) {
        ASSERT_EQ(a.select(), b.select());
    }
}

TEST(ThompsonSelect, DuplicateIdsRejected) {
    EXPECT_THROW(ThompsonSelector({{"x", 1, 1}, {"x", 1, 1}}, 1), ConfigError);
}

TEST(ThompsonUpdate, Substitution) {
    auto a = ts_update({"a", 1, 1}, 1.0);
    EXPECT_DOUBLE_EQ(a.alpha, 2.0);
    EXPECT_DOUBLE_EQ(a.beta, 1.0);
    a = ts_update({"a", 1, 1}, 0.0);
    EXPECT_DOUBLE_EQ(a.alpha, 1.0);
    EXPECT_DOUBLE_EQ(a.beta, 2.0);
    a = ts_update({"a", 2, 3}, 0.4);
    EXPECT_DOUBLE_EQ(a.alpha, 2.4);
    EXPECT_DOUBLE_EQ(a.beta, 3.6);
}

TEST(ThompsonUpdate, OutOfRangeRewardIsAContractViolation) {
    EXPECT_THROW(ts_update({"a", 1, 1}, 1.01), ContractViolation);
    EXPECT_THROW(ts_update({"a", 1, 1}, -0.01), ContractViolation);
    EXPECT_THROW(ts_update({"a", 1, 1}, std::nan("")), ContractViolation);
}

TEST(ThompsonUpdate, PosteriorMeanMovesWithReward) {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.1, 20.0);
    for (int k = 0; k < 200; ++k) {
        BetaArm arm{"a", u(rng), u(rng)};
        EXPECT_GT(ts_update(arm, 1.0).mean(), arm.mean());
        EXPECT_LT(ts_update(arm, 0.0).mean(), arm.mean());
    }
}

TEST(ThompsonSelector, FrozenRejectsWritesButKeepsSampling) {
    ThompsonSelector sel({{"x", 1, 1}, {"y", 1, 1}}, 3);
    sel.freeze();
    EXPECT_THROW(sel.update(0, 1.0), FrozenStateViolation);
    EXPECT_THROW(sel.add_arm({"z", 1, 1}), FrozenStateViolation);
    EXPECT_NO_THROW(sel.select());
}

TEST(PerTool, ScheduleSubstitution) {
    PerToolSelectorConfig cfg;
    EXPECT_EQ(per_tool_k(cfg, 0), 12u);
    EXPECT_EQ(per_tool_k(cfg, 39), 12u);
    EXPECT_EQ(per_tool_k(cfg, 40), 11u);
    EXPECT_EQ(per_tool_k(cfg, 200), 7u);
    EXPECT_EQ(per_tool_k(cfg, 100000), 6u);
}

TEST(PerTool, FullKSelectsEverything) {
    std::vector<BetaArm> arms;
    for (int k = 0; k < 12; ++k) {
        arms.push_back({"t" + std::to_string(k), 1, 1});
    }
    Rng rng(1);
    const auto picked = per_tool_select(arms, {}, 0, rng);
    ASSERT_EQ(picked.size(), 12u);
    for (std::size_t k = 0; k < 12; ++k) {
        EXPECT_EQ(picked[k], k);
    }
}

TEST(PerTool, DominantArmChosenAtKOne) {
    std::vector<BetaArm> arms = {{"best", 1000, 1}};
    for (int k = 0; k < 11; ++k) {
        arms.push_back({"t" + std::to_string(k), 1, 1000});
    }
    PerToolSelectorConfig cfg{1, 1, 40};
    Rng rng(17);
    int hits = 0;
    for (int k = 0; k < 500; ++k) {
        const auto picked = per_tool_select(arms, cfg, 0, rng);
        ASSERT_EQ(picked.size(), 1u);
        hits += picked[0] == 0 ? 1 : 0;
    }
    EXPECT_GE(hits, 495);
}

TEST(LinUcb, IdentityStateTiesGoToLowestIndex) {
    std::vector<LinUcbArm> arms = {LinUcbArm("a", 7), LinUcbArm("b", 7), LinUcbArm("c", 7)};
    ContextVector phi = ContextVector::Constant(7, 0.3);
    for (const auto& arm : arms) {
        EXPECT_NEAR(arm.ucb(phi, 1.0), phi.norm(), 1e-12);
    }
    EXPECT_EQ(linucb_select(arms, phi, 1.0), 0u);
    EXPECT_EQ(linucb_select(arms, ContextVector::Zero(7), 1.0), 0u);
}

TEST(LinUcb, HandEvaluatedScores) {
    // Arm 1 (index 0 here is the identity arm) carries theta = 10 phi, so
    // its score is 10 + 1 against 1 for the identity arm.
    ContextVector phi = ContextVector::Zero(7);
    phi(2) = 1.0;
    LinUcbArm fresh("fresh", 7);
    LinUcbArm learned("learned", 7);
    learned.set_b(10.0 * phi);
    EXPECT_NEAR(learned.ucb(phi, 1.0), 11.0, 1e-12);
    EXPECT_NEAR(fresh.ucb(phi, 1.0), 1.0, 1e-12);
    std::vector<LinUcbArm> arms = {fresh, learned};
    EXPECT_EQ(linucb_select(arms, phi, 1.0), 1u);
}

TEST(LinUcb, DimensionMismatchIsAContractViolation) {
    std::vector<LinUcbArm> arms = {LinUcbArm("a", 7)};
    EXPECT_THROW(linucb_select(arms, ContextVector::Zero(3), 1.0), ContractViolation);
    EXPECT_THROW(arms[0].update(ContextVector::Zero(3), 0.5), ContractViolation);
}

TEST(LinUcb, TwoByTwoUpdateByHand) {
    LinUcbArm arm("toy", 2);
    ContextVector phi(2);
    phi << 1.0, 0.0;
    arm = linucb_update(arm, phi, 1.0);
    EXPECT_DOUBLE_EQ(arm.a()(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(arm.a()(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(arm.a()(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(arm.b()(0), 1.0);
    EXPECT_DOUBLE_EQ(arm.b()(1), 0.0);
    EXPECT_NEAR(arm.theta()(0), 0.5, 1e-15);
    EXPECT_NEAR(arm.theta()(1), 0.0, 1e-15);
}

TEST(LinUcb, ZeroRewardAndZeroContext) {
    LinUcbArm arm("a", 7);
    ContextVector phi = ContextVector::Constant(7, 0.5);
    const auto after = linucb_update(arm, phi, 0.0);
    EXPECT_TRUE(after.b().isZero());
    EXPECT_TRUE(after.a().isApprox(Eigen::MatrixXd::Identity(7, 7) + phi * phi.transpose()));
    const auto same = linucb_update(arm, ContextVector::Zero(7), 0.9);
    EXPECT_TRUE(same.a().isApprox(arm.a()));
    EXPECT_TRUE(same.b().isZero());
}

TEST(LinUcb, ThetaMatchesDenseSolveAndStaysSpd) {
    Rng rng(2024);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LinUcbArm arm("a", 7);
    for (int k = 0; k < 300; ++k) {
        ContextVector phi(7);
        for (int d = 0; d < 7; ++d) {
            phi(d) = n01(rng);
        }
        arm.update(phi, u(rng));
        // Oracle: full-pivot LU on the raw normal equations.
        const Eigen::VectorXd oracle = arm.a().fullPivLu().solve(arm.b());
        ASSERT_LE((arm.theta() - oracle).norm(), 1e-10 * std::max(1.0, oracle.norm()));
        ASSERT_LE((arm.a() * arm.theta() - arm.b()).norm(), 1e-10 * std::max(1.0, arm.b().norm()));
        ASSERT_TRUE(arm.a().isApprox(arm.a().transpose()));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(arm.a());
    EXPECT_GE(eig.eigenvalues().minCoeff(), 1.0 - 1e-9);
}
