#include <gtest/gtest.h>

#include <cmath>

#include "mglab/motionguide/motionguide.hpp"
#include "mglab/scene/samples.hpp"

using namespace mglab;

namespace {

MotionGuideConfig small_config(std::size_t d = 6)
{
    MotionGuideConfig c;
    c.out_dim = d;
    return c;
}

}  // namespace

TEST(Preprocess, ModesAndDownscale)
{
    Tensor<float> corr({3, 16, 16}, 0.5f), depth({1, 16, 16}, 0.4f);
    auto m = preprocess_input(corr, depth, 8, InputMode::multiply);
    EXPECT_EQ(m.dims(), (Dims{3, 2, 2}));
    EXPECT_NEAR(m[0], 0.2f, 1e-6);
    EXPECT_NEAR(preprocess_input(corr, depth, 8, InputMode::corr_only)[0], 0.5f, 1e-6);
    EXPECT_NEAR(preprocess_input(corr, depth, 8, InputMode::depth_only)[5], 0.4f, 1e-6);
    auto c = preprocess_input(corr, depth, 8, InputMode::concat);
    EXPECT_EQ(c.dim(0), 4u);
    EXPECT_NEAR(c.at(3, 1, 1), 0.4f, 1e-6);
    EXPECT_THROW(preprocess_input(corr, depth, 5, InputMode::multiply), std::invalid_argument);
    EXPECT_THROW(input_mode_from_string("sum"), std::invalid_argument);
}

TEST(Preprocess, DownscaleIsBlockMean)
{
    Tensor<double> x({1, 2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    auto y = downscale(x, 2);
    EXPECT_DOUBLE_EQ(y[0], 3.5);
    EXPECT_DOUBLE_EQ(y[1], 5.5);
}

TEST(PositionalEncoding, ShapeRangeAndDeterminism)
{
    auto a = positional_encoding<float>(8, 8);
    auto b = positional_encoding<float>(8, 8);
    EXPECT_EQ(a.dims(), (Dims{64, 8, 8}));
    EXPECT_TRUE(a.bit_equal(b));
    EXPECT_LE(a.max_abs(), 1.0f);
    // sin^2 + cos^2 = 1 per frequency pair
    for (std::size_t k = 0; k < 32; ++k) {
        const float s = a.at(2 * k, 3, 5), c = a.at(2 * k + 1, 3, 5);
        EXPECT_NEAR(s * s + c * c, 1.0f, 1e-6);
    }
}

TEST(PositionalEncoding, HorizontalFlipChangesOnlyXChannels)
{
    const std::size_t h = 8, w = 8;
    auto pe = positional_encoding<double>(h, w);
    bool x_changed = false;
    for (std::size_t c = 0; c < 64; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double a = pe.at(c, y, x), f = pe.at(c, y, w - 1 - x);
                if (c >= 32) EXPECT_EQ(a, f);
                else if (std::abs(a - f) > 1e-9) x_changed = true;
            }
    EXPECT_TRUE(x_changed);
}

TEST(MotionGuide, InitShapesAndWidths)
{
    auto p = motionguide_init<float>(small_config(), 1);
    EXPECT_EQ(p.value("mg.conv1.weight").dims(), (Dims{64, 3, 3, 3}));
    EXPECT_EQ(p.value("mg.conv2.weight").dims(), (Dims{256, 128, 3, 3}));
    EXPECT_EQ(p.value("mg.head.weight").dims(), (Dims{6, 256}));
    EXPECT_FALSE(p.contains("mg.head.bias"));
    EXPECT_EQ(p.value("mg.head.weight").max_abs(), 0.0f);
    auto q = motionguide_init<float>(small_config(), 1);
    EXPECT_TRUE(p.value("mg.conv2.weight").bit_equal(q.value("mg.conv2.weight")));
}

TEST(MotionGuide, ZeroHeadGivesZeroOutputAndZeroConvGrads)
{
    auto cfg = small_config();
    auto p = motionguide_init<float>(cfg, 2);
    MotionGuide<float> mg(cfg);
    Rng rng(4);
    auto x = random_uniform<float>({3, 3, 8, 8}, rng, 0.0, 1.0);
    std::vector<double> alpha{0.5, 0.25, 1.0};
    auto m = mg.forward(x, alpha, p);
    EXPECT_EQ(m.dims(), (Dims{3, 6}));
    EXPECT_EQ(m.max_abs(), 0.0f);
    mg.backward(Tensor<float>({3, 6}, 1.0f), p);
    EXPECT_EQ(p.grad("mg.conv1.weight").max_abs(), 0.0f);
    EXPECT_EQ(p.grad("mg.conv2.weight").max_abs(), 0.0f);
    EXPECT_GT(p.grad("mg.head.weight").max_abs(), 0.0f);
}

TEST(MotionGuide, FullOccupancyLeavesPoolingUnscaled)
{
    auto cfg = small_config();
    cfg.zero_init_head = false;
    auto p = motionguide_init<double>(cfg, 5);
    Rng rng(9);
    auto x = random_uniform<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
    MotionGuide<double> a(cfg), b(cfg);
    std::vector<double> one{1.0}, half{0.5};
    a.forward(x, one, p);
    b.forward(x, half, p);
    for (std::size_t i = 0; i < a.pre_head().size(); ++i) {
        EXPECT_NEAR(b.pre_head()[i], 2.0 * a.pre_head()[i], 1e-12);
    }
}

TEST(MotionGuide, OccupancyNormalizationCancelsObjectSize)
{
    // With the positional channels zeroed, two well separated copies of a
    // blob at twice the occupancy give the same normalized vector as one.
    auto cfg = small_config();
    auto p = motionguide_init<double>(cfg, 6);
    const std::size_t h = 16, w = 16;
    Tensor<double> one({1, 3, h, w}), two({1, 3, h, w});
    auto blob = [](Tensor<double>& t, std::size_t y0, std::size_t x0) {
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 2; ++y)
                for (std::size_t x = 0; x < 2; ++x) t.at(0, c, y0 + y, x0 + x) = 0.2 + 0.1 * static_cast<double>(c + y + 2 * x);
    };
    blob(one, 4, 4);
    blob(two, 4, 4);
    blob(two, 10, 10);
    MotionGuide<double> a(cfg), b(cfg);
    a.set_positional_encoding(Tensor<double>({64, h, w}));
    b.set_positional_encoding(Tensor<double>({64, h, w}));
    std::vector<double> a1{4.0 / 256}, a2{8.0 / 256};
    a.forward(one, a1, p);
    b.forward(two, a2, p);
    ASSERT_GT(a.pre_head().max_abs(), 0.0);
    for (std::size_t i = 0; i < a.pre_head().size(); ++i) EXPECT_NEAR(a.pre_head()[i], b.pre_head()[i], 1e-12);
}

TEST(MotionGuide, RejectsBadAlphaAndMissingContext)
{
    auto cfg = small_config();
    auto p = motionguide_init<float>(cfg, 1);
    MotionGuide<float> mg(cfg);
    EXPECT_THROW(mg.backward(Tensor<float>({1, 6}), p), std::logic_error);
    Tensor<float> x({2, 3, 8, 8});
    std::vector<double> bad{0.5, 0.0}, short_list{0.5};
    EXPECT_THROW(mg.forward(x, bad, p), std::invalid_argument);
    EXPECT_THROW(mg.forward(x, short_list, p), std::invalid_argument);
}

TEST(MotionGuide, FiniteDifferenceAgreement)
{
    GradCheckRegistry reg;
    register_motionguide_checks(reg);
    auto report = reg.run("motionguide");
    for (const auto& t : report.tensors) {
        EXPECT_GT(t.checked, 0u) << t.name;
        EXPECT_LT(t.max_rel_error, 1e-6) << t.name;
    }
    EXPECT_TRUE(report.passed(1e-6));
}

TEST(MotionGuide, ConcatModeUsesFourChannels)
{
    auto cfg = small_config();
    cfg.in_channels = input_channels(InputMode::concat);
    auto p = motionguide_init<float>(cfg, 1);
    EXPECT_EQ(p.value("mg.conv1.weight").dim(1), 4u);
}

TEST(MotionGuide, VideoInputsStackFrames)
{
    SceneDefaults d;
    d.frames = 4;
    auto video = render_video(default_scene(3, d));
    auto in = motion_inputs<float>(video, InputMode::multiply);
    EXPECT_EQ(in.frames.dims(), (Dims{4, 3, 8, 8}));
    ASSERT_EQ(in.alphas.size(), 4u);
    EXPECT_DOUBLE_EQ(in.alphas[2], video.frames[2].alpha);
}
