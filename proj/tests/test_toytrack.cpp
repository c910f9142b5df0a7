#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "mglab/toytrack/toytrack.hpp"

using namespace mglab;

namespace {

SceneDefaults short_scene()
{
    SceneDefaults d;
    d.frames = 6;
    return d;
}

}  // namespace

TEST(ToyLoss, HandValues)
{
    Tensor<float> a({2, 6}, 0.3f);
    EXPECT_EQ(toy_loss(a, a), 0.0);
    Tensor<float> zero({2, 6}), ones({2, 6}, 1.0f);
    EXPECT_DOUBLE_EQ(toy_loss(zero, ones), 1.0);
    EXPECT_THROW(toy_loss(zero, Tensor<float>({3, 6})), std::invalid_argument);
}

TEST(ToyLoss, GradientMatchesFiniteDifferences)
{
    GradCheckRegistry reg;
    register_toy_checks(reg);
    EXPECT_TRUE(reg.run("toy_loss").passed(1e-6));
}

TEST(ToyPredict, ZeroInitHeadAndShapeIndependentDims)
{
    ToyConfig cfg;
    ToyModel m;
    m.cfg = cfg;
    m.mg = toy_motionguide_config(cfg);
    m.params = motionguide_init<float>(m.mg, 1);
    auto spec = default_scene(2, short_scene());
    auto base = render_video(spec);
    auto big = make_positive_sample(spec, {ShapeKind::cube, {0.9, 0.9, 0.9}});
    auto p1 = toy_predict(m, base);
    auto p2 = toy_predict(m, big);
    EXPECT_EQ(p1.dims(), (Dims{6, 6}));
    EXPECT_EQ(p2.dims(), (Dims{6, 6}));
    EXPECT_EQ(p1.max_abs(), 0.0f);
}

TEST(TargetStats, StandardizedTargetsHaveUnitSpread)
{
    auto spec = default_scene(4);
    auto s = TargetStats::of(spec.trajectory);
    auto y = s.standardize<double>(spec.trajectory);
    // orbit keeps tz fixed; that column stays at zero with unit scale
    EXPECT_EQ(s.scale[2], 1.0);
    for (std::size_t j = 0; j < 6; ++j) {
        double m = 0, v = 0;
        for (std::size_t k = 0; k < 16; ++k) m += y[k * 6 + j];
        for (std::size_t k = 0; k < 16; ++k) v += y[k * 6 + j] * y[k * 6 + j];
        EXPECT_NEAR(m / 16, 0.0, 1e-12);
        EXPECT_NEAR(v / 16, j == 2 ? 0.0 : 1.0, 1e-12);
    }
    auto back = s.destandardize(y);
    auto raw = trajectory_matrix<double>(spec.trajectory);
    for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(back[i], raw[i], 1e-12);
}

TEST(TrainToy, InitialLossIsZeroPredictionAgainstStandardizedTargets)
{
    auto spec = default_scene(5, short_scene());
    auto video = render_video(spec);
    ToyConfig cfg;
    cfg.iterations = 1;
    auto r = train_toy(video, spec.trajectory, cfg);
    auto y = TargetStats::of(spec.trajectory).standardize<double>(spec.trajectory);
    double expected = 0;
    for (double v : y.data()) expected += v * v;
    expected /= static_cast<double>(y.size());
    EXPECT_NEAR(r.initial_mse(), expected, 1e-6);
    EXPECT_NEAR(r.initial_mse(), 5.0 / 6.0, 1e-6);
}

TEST(TrainToy, DeterministicCurvesAndSideEffectFreeEval)
{
    auto spec = default_scene(6, short_scene());
    auto video = render_video(spec);
    ToyConfig cfg;
    cfg.iterations = 15;
    cfg.seed = 3;
    auto a = train_toy(video, spec.trajectory, cfg);
    auto b = train_toy(video, spec.trajectory, cfg);
    ASSERT_EQ(a.curve.size(), b.curve.size());
    EXPECT_EQ(a.curve.size(), 16u);
    for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].mse, b.curve[i].mse);

    const auto before = a.model.params.value("mg.conv2.weight");
    const double e = eval_toy(a.model, video, spec.trajectory);
    EXPECT_EQ(e, a.final_mse());
    EXPECT_TRUE(before.bit_equal(a.model.params.value("mg.conv2.weight")));
}

TEST(TrainToy, LogStrideKeepsFinalEvaluation)
{
    auto spec = default_scene(6, short_scene());
    auto video = render_video(spec);
    ToyConfig cfg;
    cfg.iterations = 10;
    cfg.log_stride = 4;
    auto r = train_toy(video, spec.trajectory, cfg);
    ASSERT_EQ(r.curve.size(), 4u);
    EXPECT_EQ(r.curve[1].iter, 4u);
    EXPECT_EQ(r.curve.back().iter, 10u);
}

TEST(TrainToy, StaticTrajectoryConvergesToTheConstantPose)
{
    SceneSpec spec = default_scene(1, short_scene());
    TrajectoryParams p;
    p.centre = {0.3, -0.2, 6.0};
    p.rotation0 = {0.1, 0.2, 0.3};
    spec.trajectory = make_trajectory(TrajectoryKind::linear, 6, p);
    auto video = render_video(spec);
    ToyConfig cfg;
    cfg.iterations = 5;
    auto r = train_toy(video, spec.trajectory, cfg);
    auto pose = r.model.stats.destandardize(toy_predict(r.model, video));
    const auto expect = spec.trajectory.poses[0].values();
    for (std::size_t k = 0; k < 6; ++k)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(pose[k * 6 + j], expect[j], 1e-5);
}

TEST(TrainToy, RejectsBadInputs)
{
    auto spec = default_scene(1, short_scene());
    auto video = render_video(spec);
    ToyConfig cfg;
    cfg.iterations = 0;
    EXPECT_THROW(train_toy(video, spec.trajectory, cfg), std::invalid_argument);
    cfg.iterations = 2;
    cfg.lr = 0;
    EXPECT_THROW(train_toy(video, spec.trajectory, cfg), std::invalid_argument);
    cfg.lr = 5e-4;
    auto other = make_trajectory(TrajectoryKind::orbit, 5, spec.trajectory.params);
    EXPECT_THROW(train_toy(video, other, cfg), std::invalid_argument);
}

TEST(TrainToy, NonFiniteLossRaisesDivergence)
{
    auto spec = default_scene(1, short_scene());
    auto video = render_video(spec);
    ToyConfig cfg;
    cfg.iterations = 20;
    cfg.lr = 1e38;
    EXPECT_THROW(train_toy(video, spec.trajectory, cfg), DivergenceError);
    Trajectory target = spec.trajectory;
    target.poses[3].tx = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(train_toy(video, target, ToyConfig{}), std::invalid_argument);
}

TEST(TrainToy, DefaultVideoLearnsWithinBudget)
{
    auto spec = default_scene(0);
    auto video = render_video(spec);
    auto r = train_toy(video, spec.trajectory, ToyConfig{});
    for (const auto& p : r.curve) ASSERT_TRUE(std::isfinite(p.mse));
    EXPECT_LT(r.final_mse(), 0.1 * r.initial_mse());
}

TEST(InvarianceReport, ThresholdArithmetic)
{
    std::vector<LossPoint> curve{{0, 1.0}, {10, 0.1}};
    auto ok = invariance_report(curve, 0.1, 1.0);
    EXPECT_TRUE(ok.shape_invariant);
    EXPECT_TRUE(ok.motion_sensitive);
    auto bad = invariance_report(curve, 0.4, 1.0);
    EXPECT_FALSE(bad.shape_invariant);
    EXPECT_FALSE(bad.passed());
    EXPECT_FALSE(invariance_report(curve, 0.1, 0.4).motion_sensitive);
    EXPECT_THROW(invariance_report({}, 0, 0), std::invalid_argument);
}

TEST(InvarianceReport, CsvRoundTrip)
{
    auto dir = std::filesystem::temp_directory_path() / "mglab_toy_csv";
    std::filesystem::create_directories(dir);
    auto r = invariance_report({{0, 0.8}, {5, 0.0123456789012345}}, 0.01 / 3.0, 2.0 / 7.0);
    write_report_csv(dir / "report.csv", r);
    auto back = read_report_csv(dir / "report.csv");
    EXPECT_EQ(back.pos_mse, r.pos_mse);
    EXPECT_EQ(back.neg_mse, r.neg_mse);
    EXPECT_EQ(back.final_train_mse, r.final_train_mse);
    EXPECT_EQ(back.K, r.K);
    EXPECT_EQ(back.M, r.M);
    EXPECT_EQ(back.shape_invariant, r.shape_invariant);
    EXPECT_EQ(back.motion_sensitive, r.motion_sensitive);
    std::filesystem::remove_all(dir);
}
