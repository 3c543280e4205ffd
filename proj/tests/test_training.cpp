#include <doctest.h>

#include <filesystem>
#include <limits>

#include "glpnet/training.hpp"
#include "oracles.hpp"

using namespace glpnet;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.backbone.stage_channels = {4, 8, 8, 8};
    cfg.decoder_channels = 8;
    cfg.gcfm.k_contexts = 2;
    cfg.num_classes = 3;
    cfg.normalize();
    return cfg;
}

RgbdSample make_sample(Rng& rng, std::int64_t h, std::int64_t w, std::int64_t classes) {
    RgbdSample s;
    s.rgb = oracle::rand_tensor<float>(rng, Shape{3, h, w}, 0.0, 1.0);
    s.depth = oracle::rand_tensor<float>(rng, Shape{1, h, w}, 0.0, 1.0);
    s.label = IntTensor(Shape{h, w});
    for (auto& lv : s.label.data)
        lv = rng.bernoulli(0.1) ? 255 : static_cast<std::int32_t>(rng.uniform_int(classes));
    return s;
}

Dataset make_dataset(std::uint64_t seed, std::int64_t n, std::int64_t h, std::int64_t w,
                     std::int64_t classes) {
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = classes;
    for (std::int64_t i = 0; i < n; ++i) ds.samples.push_back(make_sample(rng, h, w, classes));
    return ds;
}

// one single-class image per class, decidable from rgb alone; no spatial
// detail finer than the output stride, so a tiny model can reach near-zero
// loss
Dataset separable_dataset(std::int64_t n, std::int64_t h, std::int64_t w) {
    Dataset ds;
    ds.num_classes = 2;
    for (std::int64_t i = 0; i < n; ++i) {
        const bool hot = (i % 2) == 1;
        RgbdSample s;
        s.rgb = TensorT<float>(Shape{3, h, w});
        s.depth = TensorT<float>(Shape{1, h, w}, 0.5f);
        s.label = IntTensor(Shape{h, w}, hot ? 1 : 0);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                s.rgb.at3(0, y, x) = hot ? 0.9f : 0.1f;
                s.rgb.at3(1, y, x) = hot ? 0.1f : 0.9f;
                s.rgb.at3(2, y, x) = 0.5f;
            }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("poly schedule hand values") {
    CHECK(poly_lr(0.01, 0, 100, 0.9) == doctest::Approx(0.01));
    CHECK(poly_lr(0.01, 50, 100, 0.9) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-12));
    CHECK(poly_lr(0.01, 100, 100, 0.9) == doctest::Approx(0.0));
    CHECK(poly_lr(0.01, 30, 100, 1.0) == doctest::Approx(0.007).epsilon(1e-12));
    CHECK_THROWS_AS((void)poly_lr(0.01, 101, 100, 0.9), ContractError);
    CHECK_THROWS_AS((void)poly_lr(0.01, -1, 100, 0.9), ContractError);
    CHECK_THROWS_AS((void)poly_lr(0.01, 0, 0, 0.9), ContractError);
}

TEST_CASE("sgd two-step momentum oracle") {
    // constant gradient g, no weight decay:
    //   step 1: v = g,            p1 = p0 - lr*g
    //   step 2: v = m*g + g,      p2 = p1 - lr*(1+m)*g
    auto p = make_param(TensorT<double>(Shape{2}, {1.0, -2.0}), "p");
    const double lr = 0.1, m = 0.9, g = 0.5;
    SgdT<double> opt(lr, m, 0.0);
    for (int step = 0; step < 2; ++step) {
        p->ensure_grad();
        p->grad.fill(g);
        opt.step({p});
        p->zero_grad();
    }
    const double expected_delta = lr * g + lr * (1 + m) * g;
    CHECK(p->value.data[0] == doctest::Approx(1.0 - expected_delta).epsilon(1e-12));
    CHECK(p->value.data[1] == doctest::Approx(-2.0 - expected_delta).epsilon(1e-12));
}

TEST_CASE("sgd weight decay pulls toward zero") {
    auto p = make_param(TensorT<double>(Shape{1}, {2.0}), "p");
    SgdT<double> opt(0.1, 0.0, 0.5);
    p->ensure_grad();  // zero gradient, decay only
    opt.step({p});
    // v = 0 + 0.5*2 = 1; p = 2 - 0.1*1
    CHECK(p->value.data[0] == doctest::Approx(1.9).epsilon(1e-12));
}

TEST_CASE("sgd descends a quadratic") {
    auto p = make_param(TensorT<double>(Shape{2}, {3.0, -4.0}), "p");
    SgdT<double> opt(0.05, 0.9, 0.0);
    // heavy-ball rings, so check envelope decay per 20-iter block, not
    // per-step monotonicity
    std::vector<double> block_max(4, 0.0);
    for (int it = 0; it < 100; ++it) {
        p->zero_grad();
        backward(sum_all(mul(p, p)));
        opt.step({p});
        double f = p->value.data[0] * p->value.data[0] + p->value.data[1] * p->value.data[1];
        auto& m = block_max[static_cast<std::size_t>(it / 25)];
        m = std::max(m, f);
    }
    CHECK(block_max[1] < block_max[0]);
    CHECK(block_max[2] < block_max[1]);
    CHECK(block_max[3] < block_max[2]);
    CHECK(block_max[3] < 1e-1);
}

TEST_CASE("train config validation") {
    TrainConfig ok;
    ok.validate();
    TrainConfig bad = ok;
    bad.crop_h = 30;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.scale_min = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.scale_max = 0.4;  // below scale_min
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.lr = 0.0;  // allowed: freezes the model
    bad.validate();
}

TEST_CASE("augment identity settings are bitwise") {
    Rng data_rng(50);
    auto s = make_sample(data_rng, 32, 32, 3);
    TrainConfig cfg;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.crop_h = cfg.crop_w = 32;
    cfg.flip = false;
    Rng rng(51);
    auto out = augment(s, rng, cfg);
    CHECK(out.rgb.data == s.rgb.data);
    CHECK(out.depth.data == s.depth.data);
    CHECK(out.label.data == s.label.data);
}

TEST_CASE("augment output geometry matches the crop") {
    Rng data_rng(52);
    auto s = make_sample(data_rng, 64, 48, 3);
    TrainConfig cfg;
    cfg.crop_h = 32;
    cfg.crop_w = 16;
    Rng rng(53);
    for (int rep = 0; rep < 8; ++rep) {
        auto out = augment(s, rng, cfg);
        CHECK(out.rgb.shape == Shape{3, 32, 16});
        CHECK(out.depth.shape == Shape{1, 32, 16});
        CHECK(out.label.shape == Shape{32, 16});
    }
}

TEST_CASE("augment labels stay in the original alphabet plus ignore") {
    Rng data_rng(54);
    auto s = make_sample(data_rng, 32, 32, 3);
    TrainConfig cfg;
    cfg.crop_h = cfg.crop_w = 48;  // force padding
    cfg.scale_min = 0.5;
    cfg.scale_max = 1.5;
    Rng rng(55);
    for (int rep = 0; rep < 10; ++rep) {
        auto out = augment(s, rng, cfg);
        for (auto lv : out.label.data) CHECK((lv == 255 || (lv >= 0 && lv < 3)));
    }
}

TEST_CASE("augment transforms all three planes consistently") {
    // encode the x coordinate in rgb, depth, and label alike; any geometric
    // transform must keep them pointwise consistent
    const std::int64_t h = 32, w = 32;
    RgbdSample s;
    s.rgb = TensorT<float>(Shape{3, h, w});
    s.depth = TensorT<float>(Shape{1, h, w});
    s.label = IntTensor(Shape{h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const float v = x < w / 2 ? 0.25f : 0.75f;
            for (int c = 0; c < 3; ++c) s.rgb.at3(c, y, x) = v;
            s.depth.at3(0, y, x) = v;
            s.label.at2(y, x) = x < w / 2 ? 0 : 1;
        }
    TrainConfig cfg;
    cfg.crop_h = cfg.crop_w = 16;
    cfg.scale_min = 1.0;
    cfg.scale_max = 1.0;  // no resampling blur, pure crop+flip
    cfg.depth_scale_div = false;
    Rng rng(56);
    for (int rep = 0; rep < 12; ++rep) {
        auto out = augment(s, rng, cfg);
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 0; x < 16; ++x) {
                const float v = out.rgb.at3(0, y, x);
                const auto lab = out.label.at2(y, x);
                CHECK(out.depth.at3(0, y, x) == v);
                CHECK(lab == (v > 0.5f ? 1 : 0));
            }
    }
}

TEST_CASE("augment divides depth by the zoom factor") {
    RgbdSample s;
    s.rgb = TensorT<float>(Shape{3, 16, 16}, 0.5f);
    s.depth = TensorT<float>(Shape{1, 16, 16}, 0.8f);
    s.label = IntTensor(Shape{16, 16}, 1);
    TrainConfig cfg;
    cfg.scale_min = cfg.scale_max = 2.0;
    cfg.crop_h = cfg.crop_w = 16;
    cfg.flip = false;
    Rng rng(57);
    auto out = augment(s, rng, cfg);
    for (float dv : out.depth.data) CHECK(dv == doctest::Approx(0.4f));
    cfg.depth_scale_div = false;
    Rng rng2(57);
    auto out2 = augment(s, rng2, cfg);
    for (float dv : out2.depth.data) CHECK(dv == doctest::Approx(0.8f));
}

TEST_CASE("stack_batch concatenates and validates") {
    Rng rng(58);
    std::vector<RgbdSample> ss{make_sample(rng, 16, 16, 3), make_sample(rng, 16, 16, 3)};
    auto b = stack_batch(ss);
    CHECK(b.rgb.shape == Shape{2, 3, 16, 16});
    CHECK(b.depth.shape == Shape{2, 1, 16, 16});
    CHECK(b.label.shape == Shape{2, 16, 16});
    for (std::int64_t i = 0; i < 16 * 16 * 3; ++i)
        CHECK(b.rgb.data[static_cast<std::size_t>(3 * 16 * 16 + i)] == ss[1].rgb.data[static_cast<std::size_t>(i)]);
    ss.push_back(make_sample(rng, 8, 16, 3));
    CHECK_THROWS_AS((void)stack_batch(ss), DimensionError);
}

TEST_CASE("lr zero leaves parameters bitwise unchanged") {
    auto cfg = tiny_model_config();
    ModelT<float> model(cfg, 60);
    std::vector<std::vector<float>> before;
    for (const auto& [name, p] : model.store.entries) before.push_back(p->value.data);

    auto ds = make_dataset(61, 4, 32, 32, 3);
    TrainConfig tc;
    tc.lr = 0.0;
    tc.weight_decay = 0.0;
    tc.epochs = 1;
    tc.batch_size = 2;
    tc.crop_h = tc.crop_w = 32;
    tc.scale_min = tc.scale_max = 1.0;
    tc.flip = false;
    (void)train_loop(model, ds, nullptr, tc);

    std::size_t i = 0;
    bool same = true;
    for (const auto& [name, p] : model.store.entries) {
        // batch-norm running stats are buffers and do move in training mode
        if (name.find("running_") != std::string::npos) {
            ++i;
            continue;
        }
        if (p->value.data != before[i++]) same = false;
    }
    CHECK(same);
}

TEST_CASE("training is deterministic in the seed") {
    auto run = [&](std::uint64_t seed) {
        auto cfg = tiny_model_config();
        ModelT<float> model(cfg, seed);
        auto ds = make_dataset(62, 6, 32, 32, 3);
        TrainConfig tc;
        tc.epochs = 2;
        tc.batch_size = 2;
        tc.crop_h = tc.crop_w = 32;
        tc.seed = seed;
        return train_loop(model, ds, nullptr, tc).log_csv;
    };
    CHECK(run(7) == run(7));
    CHECK(run(7) != run(8));
}

TEST_CASE("csv log carries one row per epoch with the header") {
    auto cfg = tiny_model_config();
    ModelT<float> model(cfg, 63);
    auto train = make_dataset(64, 4, 32, 32, 3);
    auto val = make_dataset(65, 2, 32, 32, 3);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.crop_h = tc.crop_w = 32;
    auto res = train_loop(model, train, &val, tc);
    REQUIRE(res.log.size() == 2);
    CHECK(res.log[0].epoch == 1);
    CHECK(res.log[1].epoch == 2);
    CHECK(res.log[0].miou >= 0.0);
    CHECK(res.log_csv.rfind("epoch,iter,lr,loss,main,aux1,aux2,miou\n", 0) == 0);
    CHECK(std::count(res.log_csv.begin(), res.log_csv.end(), '\n') == 3);
    // lr decays across epochs under the poly schedule
    CHECK(res.log[1].lr < res.log[0].lr);
}

TEST_CASE("aux losses appear exactly with the decoder") {
    auto cfg = tiny_model_config();
    cfg.use_decoder = true;
    cfg.normalize();
    ModelT<float> model(cfg, 66);
    auto ds = make_dataset(67, 2, 32, 32, 3);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 2;
    tc.crop_h = tc.crop_w = 32;
    auto res = train_loop(model, ds, nullptr, tc);
    CHECK(res.log[0].aux1 > 0.0);
    CHECK(res.log[0].aux2 > 0.0);

    auto cfg2 = tiny_model_config();
    ModelT<float> plain(cfg2, 66);
    auto res2 = train_loop(plain, ds, nullptr, tc);
    CHECK(res2.log[0].aux1 == 0.0);
    CHECK(res2.log[0].aux2 == 0.0);
}

TEST_CASE("a tiny model overfits a separable scene") {
    auto cfg = tiny_model_config();
    cfg.num_classes = 2;
    cfg.backbone.stage_channels = {8, 16, 16, 16};
    cfg.normalize();
    ModelT<float> model(cfg, 68);
    auto ds = separable_dataset(2, 32, 32);
    TrainConfig tc;
    tc.lr = 0.05;
    tc.epochs = 200;  // two samples, batch 2 -> one iter per epoch
    tc.batch_size = 2;
    tc.crop_h = tc.crop_w = 32;
    tc.scale_min = tc.scale_max = 1.0;
    tc.flip = false;
    tc.weight_decay = 0.0;
    auto res = train_loop(model, ds, nullptr, tc);
    CHECK(res.log.back().loss < 0.05);
}

TEST_CASE("nan loss dumps the batch and raises") {
    auto cfg = tiny_model_config();
    ModelT<float> model(cfg, 69);
    // poison one classifier weight; the loss turns NaN on the first batch
    for (auto& [name, p] : model.store.entries)
        if (name.find("classifier") != std::string::npos)
            p->value.data[0] = std::numeric_limits<float>::quiet_NaN();
    auto ds = make_dataset(70, 2, 32, 32, 3);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 2;
    tc.crop_h = tc.crop_w = 32;
    auto diag = fs::temp_directory_path() / "glpnet_diag_test";
    fs::remove_all(diag);
    CHECK_THROWS_AS((void)train_loop(model, ds, nullptr, tc, diag.string()), NumericalError);
    CHECK(fs::exists(diag / "bad_batch_rgb.glt"));
    CHECK(fs::exists(diag / "bad_batch_depth.glt"));
    CHECK(fs::exists(diag / "bad_batch_label.glt"));
    fs::remove_all(diag);
}

TEST_CASE("multiscale at unit scale equals a plain forward") {
    auto cfg = tiny_model_config();
    ModelT<float> model(cfg, 71);
    Rng rng(72);
    auto rgb = oracle::rand_tensor<float>(rng, Shape{3, 32, 32}, 0.0, 1.0);
    auto depth = oracle::rand_tensor<float>(rng, Shape{1, 32, 32}, 0.0, 1.0);
    EvalConfig ec;
    ec.ms_scales = {1.0};
    ec.ms_flip = false;
    auto ms = multiscale_eval(model, rgb, depth, ec);

    NoGradGuard guard;
    TensorT<float> rgb4 = rgb, depth4 = depth;
    rgb4.shape = Shape{1, 3, 32, 32};
    depth4.shape = Shape{1, 1, 32, 32};
    auto plain = model.forward(make_var(rgb4), make_var(depth4), false).logits->value;
    REQUIRE(ms.shape == Shape{3, 32, 32});
    for (std::size_t i = 0; i < ms.data.size(); ++i) CHECK(ms.data[i] == plain.data[i]);
}

TEST_CASE("flip averaging is symmetric on mirror-symmetric input") {
    auto cfg = tiny_model_config();
    ModelT<float> model(cfg, 73);
    Rng rng(74);
    auto half = oracle::rand_tensor<float>(rng, Shape{3, 32, 16}, 0.0, 1.0);
    TensorT<float> rgb(Shape{3, 32, 32});
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < 32; ++y)
            for (std::int64_t x = 0; x < 16; ++x) {
                rgb.at3(c, y, x) = half.at3(c, y, x);
                rgb.at3(c, y, 31 - x) = half.at3(c, y, x);
            }
    TensorT<float> depth(Shape{1, 32, 32}, 0.5f);
    EvalConfig ec;
    ec.ms_scales = {1.0};
    ec.ms_flip = true;
    auto logits = multiscale_eval(model, rgb, depth, ec);
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < 32; ++y)
            for (std::int64_t x = 0; x < 16; ++x)
                CHECK(logits.at3(c, y, x) == doctest::Approx(logits.at3(c, y, 31 - x)).epsilon(1e-5));
}

TEST_CASE("multiscale averaging covers non-unit scales") {
    auto cfg = tiny_model_config();
    ModelT<float> model(cfg, 75);
    Rng rng(76);
    auto rgb = oracle::rand_tensor<float>(rng, Shape{3, 32, 32}, 0.0, 1.0);
    auto depth = oracle::rand_tensor<float>(rng, Shape{1, 32, 32}, 0.0, 1.0);
    EvalConfig ec;
    ec.ms_scales = {0.5, 1.0, 1.5};
    auto logits = multiscale_eval(model, rgb, depth, ec);
    CHECK(logits.shape == Shape{3, 32, 32});
    CHECK(all_finite(logits));
}

TEST_CASE("evaluate fills a confusion matrix over the dataset") {
    auto cfg = tiny_model_config();
    ModelT<float> model(cfg, 77);
    auto ds = make_dataset(78, 3, 32, 32, 3);
    EvalConfig ec;
    ec.ms_scales = {1.0};
    ec.ms_flip = false;
    ConfusionMatrix cm;
    auto m = evaluate(model, ds, ec, &cm);
    CHECK(cm.num_classes == 3);
    std::int64_t labeled = 0;
    for (const auto& s : ds.samples)
        for (auto lv : s.label.data) labeled += lv != 255;
    CHECK(cm.total() == labeled);
    CHECK(m.acc >= 0.0);
    CHECK(m.acc <= 1.0);
}

}  // TEST_SUITE
