#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "glpnet/checkpoint.hpp"
#include "glpnet/cli.hpp"
#include "glpnet/config.hpp"
#include "glpnet/gradcheck.hpp"
#include "glpnet/training.hpp"
#include "oracles.hpp"

using namespace glpnet;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// reporting: one PASS/FAIL line per criterion
// ---------------------------------------------------------------------------

struct Criterion {
    int n;
    std::string what;
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& why) {
        if (!cond) {
            ok = false;
            append("FAILED: " + why);
        }
    }
    void append(const std::string& s) {
        if (!detail.empty()) detail += "; ";
        detail += s;
    }
};

template <typename F>
void criterion(int n, const std::string& what, F&& body) {
    Criterion c{n, what};
    try {
        body(c);
    } catch (const std::exception& e) {
        c.ok = false;
        c.append(std::string("exception: ") + e.what());
    }
    std::cout << "ACCEPTANCE " << c.n << (c.ok ? " PASS" : " FAIL") << ": " << c.what
              << (c.detail.empty() ? "" : " [" + c.detail + "]") << "\n"
              << std::flush;
    CHECK_MESSAGE(c.ok, "criterion ", c.n, " failed: ", c.detail);
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string fmte(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// cached heavy runs, shared between criteria 5 and 6 and across re-runs
// ---------------------------------------------------------------------------

fs::path cache_root() {
    fs::path p = "glpnet_acceptance_cache";
    fs::create_directories(p);
    return p;
}

std::optional<double> cached_value(const std::string& tag) {
    std::ifstream in(cache_root() / (tag + ".val"));
    double v;
    if (in >> v) return v;
    return std::nullopt;
}

void store_value(const std::string& tag, double v) {
    std::ofstream out(cache_root() / (tag + ".val"));
    out.precision(12);
    out << v << "\n";
}

DatasetManifest ensure_synth(const fs::path& dir, const SynthConfig& cfg) {
    if (fs::exists(dir / "manifest.txt")) return load_manifest((dir / "manifest.txt").string());
    return synth_generate(cfg, dir.string());
}

// the directional-study recipe: small widths keep 18 runs inside the budget
struct StudyRow {
    std::string tag;
    bool lcfm = false, gcfm = false;
    bool lcfm_all_stages = false;
    GcfmVariant variant = GcfmVariant::full;
};

constexpr std::int64_t kStudyEpochs = 8;
constexpr double kStudyLr = 0.02;
constexpr int kStudyK = 2;

std::pair<Dataset, Dataset> study_data(std::uint64_t seed) {
    SynthConfig train_cfg;
    train_cfg.num_images = 200;
    train_cfg.misalignment_px = 2;
    train_cfg.seed = seed;
    train_cfg.split = "train";
    SynthConfig test_cfg = train_cfg;
    test_cfg.num_images = 50;
    test_cfg.seed = seed + 9999;
    test_cfg.split = "test";
    auto train_m = ensure_synth(cache_root() / ("data_s" + std::to_string(seed) + "_train"), train_cfg);
    auto test_m = ensure_synth(cache_root() / ("data_s" + std::to_string(seed) + "_test"), test_cfg);
    return {Dataset::from_manifest(train_m), Dataset::from_manifest(test_m)};
}

ModelConfig study_model_config(const StudyRow& row) {
    ModelConfig mc;
    mc.backbone.stage_channels = {8, 16, 32, 32};
    mc.decoder_channels = 32;
    mc.use_decoder = true;
    mc.num_classes = 4;
    mc.gcfm.k_contexts = kStudyK;
    mc.gcfm.variant = row.variant;
    mc.use_lcfm = row.lcfm;
    mc.use_gcfm = row.gcfm;
    if (row.lcfm_all_stages) mc.lcfm_stages = {1, 2, 3, 4};
    mc.normalize();
    return mc;
}

double study_miou(const StudyRow& row, std::uint64_t seed, const Dataset& train, const Dataset& test) {
    const std::string tag = "miou_" + row.tag + "_s" + std::to_string(seed);
    if (auto hit = cached_value(tag)) return *hit;

    ModelT<float> model(study_model_config(row), seed);
    TrainConfig tc;
    tc.lr = kStudyLr;
    tc.epochs = kStudyEpochs;
    tc.batch_size = 4;
    tc.crop_h = tc.crop_w = 64;
    tc.scale_min = tc.scale_max = 1.0;
    tc.flip = false;
    tc.seed = seed;
    (void)train_loop(model, train, nullptr, tc);

    EvalConfig ec;
    ec.ms_scales = {1.0};
    ec.ms_flip = false;
    const double miou = evaluate(model, test, ec).miou;
    store_value(tag, miou);
    return miou;
}

double study_mean(const StudyRow& row, Criterion& c) {
    double sum = 0;
    std::string per_seed;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto [train, test] = study_data(seed);
        const double m = study_miou(row, seed, train, test);
        sum += m;
        per_seed += (per_seed.empty() ? "" : "/") + fmt(m);
    }
    const double mean = sum / 3.0;
    c.append(row.tag + " " + fmt(mean) + " (" + per_seed + ")");
    return mean;
}

// ---------------------------------------------------------------------------
// shared tiny-pipeline helpers for criteria 9 and 10
// ---------------------------------------------------------------------------

std::vector<unsigned char> slurp_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::string slurp_text(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path pipeline_dir() { return cache_root() / "pipeline"; }

// trains the small G-CFM model twice through the CLI; returns the two run dirs
std::pair<fs::path, fs::path> ensure_pipeline_runs(Criterion& c) {
    const fs::path base = pipeline_dir();
    const fs::path data = base / "data";
    SynthConfig sc;
    sc.num_images = 6;
    sc.misalignment_px = 2;
    sc.seed = 21;
    ensure_synth(data, sc);

    const fs::path cfg_path = base / "train.cfg";
    if (!fs::exists(cfg_path)) {
        ConfigMap cfg{{"backbone.channels", "4,8,8,8"},
                      {"decoder_channels", "8"},
                      {"use_gcfm", "true"},
                      {"gcfm.k", "3"},
                      {"train.epochs", "1"},
                      {"train.batch_size", "4"},
                      {"train.crop_h", "64"},
                      {"train.crop_w", "64"},
                      {"train.scale_min", "1"},
                      {"train.scale_max", "1"},
                      {"train.flip", "false"},
                      {"train.lr", "0.01"},
                      {"eval.ms_scales", "1"},
                      {"eval.ms_flip", "false"}};
        std::ofstream out(cfg_path);
        out << serialize_config(cfg);
    }

    const std::string manifest = (data / "manifest.txt").string();
    for (const char* run : {"run_a", "run_b"}) {
        const fs::path dir = base / run;
        if (fs::exists(dir / "checkpoint.glt")) continue;
        const int rc = run_cli({"train", "--config", cfg_path.string(), "--out", dir.string(), "--data",
                                manifest, "--val", manifest, "--seed", "5"});
        c.expect(rc == 0, std::string("train run ") + run + " exited " + std::to_string(rc));
    }
    return {base / "run_a", base / "run_b"};
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("A1 gradient suite") {
    criterion(1, "finite-difference gradient suite, f64, < 60 s", [](Criterion& c) {
        const double t0 = now_s();
        auto report = run_gradcheck_suite<double>();
        const double elapsed = now_s() - t0;
        int failed = 0;
        double worst = 0;
        for (const auto& cs : report.cases) {
            worst = std::max(worst, cs.max_rel_err);
            c.expect(cs.threshold <= 1e-4, cs.name + " threshold " + fmt(cs.threshold, 6) + " too loose");
            if (!cs.passed) {
                ++failed;
                c.expect(false, cs.name + " rel err " + fmte(cs.max_rel_err));
            }
        }
        c.expect(report.cases.size() >= 30, "suite has only " + std::to_string(report.cases.size()) + " cases");
        c.expect(failed == 0, std::to_string(failed) + " cases failed");
        c.expect(elapsed < 60.0, "suite took " + fmt(elapsed, 1) + " s");
        c.append(std::to_string(report.cases.size()) + " cases, worst rel err " + fmt(worst, 8) + ", " +
                 fmt(elapsed, 1) + " s");
    });
}

TEST_CASE("A2 oracle equivalence") {
    criterion(2, "kernels match brute-force oracles on 20+ instances each", [](Criterion& c) {
        Rng rng(0x6f7261636cull);
        double worst_conv = 0, worst_samp = 0, worst_cxt = 0, worst_attn = 0;

        for (int i = 0; i < 20; ++i) {
            const std::int64_t n = 1 + rng.uniform_int(2), cin = 1 + rng.uniform_int(3);
            const std::int64_t cout = 1 + rng.uniform_int(3);
            const std::int64_t h = 5 + rng.uniform_int(4), w = 5 + rng.uniform_int(4);
            const int k = rng.bernoulli(0.3) ? 1 : 3;
            Conv2dSpec spec{1 + static_cast<int>(rng.uniform_int(2)), static_cast<int>(rng.uniform_int(2)),
                            1 + static_cast<int>(rng.uniform_int(2))};
            if (k == 1) spec.dilation = 1;
            auto x = oracle::rand_tensor<double>(rng, Shape{n, cin, h, w});
            auto wt = oracle::rand_tensor<double>(rng, Shape{cout, cin, k, k});
            auto b = oracle::rand_tensor<double>(rng, Shape{cout});
            auto got = conv2d(make_var(x), make_var(wt), make_var(b), spec)->value;
            auto want = oracle::conv2d(x, wt, &b, spec.stride, spec.pad, spec.dilation);
            worst_conv = std::max(worst_conv, oracle::max_rel_diff(got, want));
        }
        c.expect(worst_conv < 1e-5, "conv2d worst rel diff " + fmte(worst_conv));

        for (int i = 0; i < 20; ++i) {
            const std::int64_t h = 3 + rng.uniform_int(4), w = 3 + rng.uniform_int(4);
            auto x = oracle::rand_tensor<double>(rng, Shape{1 + rng.uniform_int(2), 1 + rng.uniform_int(3), h, w});
            auto coords = oracle::rand_tensor<double>(
                rng, Shape{x.dim(0), 2, 2 + rng.uniform_int(3), 2 + rng.uniform_int(3)}, -2.0,
                static_cast<double>(std::max(h, w)) + 2.0);
            auto got = bilinear_sample(make_var(x), make_var(coords))->value;
            auto want = oracle::bilinear_sample(x, coords);
            worst_samp = std::max(worst_samp, oracle::max_rel_diff(got, want));
        }
        c.expect(worst_samp < 1e-5, "bilinear_sample worst rel diff " + fmte(worst_samp));

        for (int i = 0; i < 20; ++i) {
            const std::int64_t ch = 4 * (1 + rng.uniform_int(2));
            const int k = 1 + static_cast<int>(rng.uniform_int(3));
            ParamStoreT<double> store;
            Rng init(rng.next_u64());
            GcfmT<double> mod(store, "g", ch, GcfmConfig{k, GcfmVariant::full}, init);
            RgbdFeatT<double> f{make_var(oracle::rand_tensor<double>(rng, Shape{1, ch, 4, 5})),
                                make_var(oracle::rand_tensor<double>(rng, Shape{1, ch, 4, 5}))};
            auto [masks, bank] = mod.extract_contexts(f);
            // independent mask path: loop conv then plane softmax
            auto raw = oracle::conv2d(f.rgb->value, mod.rgb_mask_conv.weight->value,
                                      &mod.rgb_mask_conv.bias->value, 1, 0, 1);
            auto mask_ref = oracle::spatial_softmax(raw);
            worst_cxt = std::max(worst_cxt, oracle::max_rel_diff(masks.rgb_mask->value, mask_ref));
            auto cxt_ref = oracle::pooled_contexts(mask_ref, f.rgb->value);
            worst_cxt = std::max(worst_cxt, oracle::max_rel_diff(bank.rgb_cxt->value, cxt_ref));
            auto d_ref = oracle::pooled_contexts(masks.d_mask->value, f.depth->value);
            worst_cxt = std::max(worst_cxt, oracle::max_rel_diff(bank.d_cxt->value, d_ref));
        }
        c.expect(worst_cxt < 1e-5, "gcfm_extract_contexts worst rel diff " + fmte(worst_cxt));

        for (int i = 0; i < 20; ++i) {
            const std::int64_t ch = 4 * (1 + rng.uniform_int(2));
            const int k = 1 + static_cast<int>(rng.uniform_int(3));
            ParamStoreT<double> store;
            Rng init(rng.next_u64());
            GcfmT<double> mod(store, "g", ch, GcfmConfig{k, GcfmVariant::full}, init);
            for (auto& v : mod.value_lin.weight->value.data) v = rng.uniform(-0.4, 0.4);
            auto rgb_in = make_var(oracle::rand_tensor<double>(rng, Shape{1, ch, 3, 4}));
            auto bank = make_var(oracle::rand_tensor<double>(rng, Shape{1, 2 * k, ch}));
            GcfmTraceT<double> trace;
            auto got = mod.attend(rgb_in, bank, &trace)->value;

            TensorT<double> keys(Shape{1, 2 * k, ch / 4}), values(Shape{1, 2 * k, ch});
            for (std::int64_t m = 0; m < 2 * k; ++m) {
                for (std::int64_t o = 0; o < ch / 4; ++o) {
                    double acc = 0;
                    for (std::int64_t cc = 0; cc < ch; ++cc)
                        acc += mod.key_lin.weight->value.at2(o, cc) * bank->value.at3(0, m, cc);
                    keys.at3(0, m, o) = acc;
                }
                for (std::int64_t o = 0; o < ch; ++o) {
                    double acc = 0;
                    for (std::int64_t cc = 0; cc < ch; ++cc)
                        acc += mod.value_lin.weight->value.at2(o, cc) * bank->value.at3(0, m, cc);
                    values.at3(0, m, o) = acc;
                }
            }
            auto attended = oracle::attention(trace.q->value, keys, values);
            TensorT<double> want(got.shape);
            for (std::size_t j = 0; j < want.data.size(); ++j)
                want.data[j] = attended.data[j] + rgb_in->value.data[j];
            worst_attn = std::max(worst_attn, oracle::max_rel_diff(got, want));
        }
        c.expect(worst_attn < 1e-5, "gcfm_attend worst rel diff " + fmte(worst_attn));

        for (int i = 0; i < 20; ++i) {
            const std::int64_t classes = 2 + rng.uniform_int(4);
            const std::int64_t h = 3 + rng.uniform_int(5), w = 3 + rng.uniform_int(5);
            IntTensor pred(Shape{1, h, w}), label(Shape{1, h, w});
            for (auto& v : pred.data) v = static_cast<std::int32_t>(rng.uniform_int(classes));
            for (auto& v : label.data)
                v = rng.bernoulli(0.15) ? 255 : static_cast<std::int32_t>(rng.uniform_int(classes));
            ConfusionMatrix cm(classes);
            cm.update(pred, label);
            auto ref = oracle::confusion_counts(pred, label, classes, 255);
            c.expect(cm.counts == ref, "cm_update mismatch at instance " + std::to_string(i));
        }
        c.append("worst rel: conv " + fmte(worst_conv) + ", sample " + fmte(worst_samp) + ", cxt " +
                 fmte(worst_cxt) + ", attn " + fmte(worst_attn));
    });
}

TEST_CASE("A3 normalization invariants") {
    criterion(3, "mask planes and attention rows sum to 1 across 500 training steps", [](Criterion& c) {
        SynthConfig sc;
        sc.num_images = 20;
        sc.height = sc.width = 32;
        sc.misalignment_px = 2;
        sc.seed = 31;
        auto m = ensure_synth(cache_root() / "data_a3", sc);
        auto ds = Dataset::from_manifest(m);

        ModelConfig mc;
        mc.backbone.stage_channels = {4, 8, 8, 8};
        mc.gcfm.k_contexts = 2;
        mc.use_lcfm = true;
        mc.use_gcfm = true;
        mc.num_classes = 4;
        mc.normalize();
        ModelT<double> model(mc, 32);

        TrainConfig tc;
        tc.epochs = 50;  // 20 samples / batch 2 -> 10 iters, 500 total
        tc.batch_size = 2;
        tc.crop_h = tc.crop_w = 32;
        tc.scale_min = tc.scale_max = 1.0;
        tc.seed = 33;

        std::int64_t steps = 0;
        double worst = 0;
        StepHook<double> hook = [&](const StepInfo<double>& info) {
            ++steps;
            const auto& out = *info.output;
            for (const VarT<double>* mask : {&out.masks.rgb_mask, &out.masks.d_mask}) {
                REQUIRE(*mask);
                const auto& t = (*mask)->value;
                for (std::int64_t n = 0; n < t.dim(0); ++n)
                    for (std::int64_t k = 0; k < t.dim(1); ++k) {
                        double s = 0;
                        for (std::int64_t y = 0; y < t.dim(2); ++y)
                            for (std::int64_t x = 0; x < t.dim(3); ++x) s += t.at4(n, k, y, x);
                        worst = std::max(worst, std::abs(s - 1.0));
                    }
            }
            REQUIRE(out.trace.attn);
            const auto& a = out.trace.attn->value;
            for (std::int64_t n = 0; n < a.dim(0); ++n)
                for (std::int64_t p = 0; p < a.dim(1); ++p) {
                    double s = 0;
                    for (std::int64_t mi = 0; mi < a.dim(2); ++mi) s += a.at3(n, p, mi);
                    worst = std::max(worst, std::abs(s - 1.0));
                }
        };
        (void)train_loop(model, ds, nullptr, tc, "", hook, /*hook_wants_trace=*/true);
        c.expect(steps == 500, "expected 500 steps, ran " + std::to_string(steps));
        c.expect(worst <= 1e-6, "worst deviation " + fmte(worst));
        c.append(std::to_string(steps) + " steps, worst |sum-1| " + fmte(worst));
    });
}

TEST_CASE("A4 identity at init") {
    criterion(4, "fresh L-CFM equals additive fusion, fresh G-CFM is identity on rgb, bitwise",
              [](Criterion& c) {
                  Rng rng(41);
                  for (std::int64_t ch : {4, 8, 16}) {
                      ParamStoreT<float> store;
                      Rng init(42 + static_cast<std::uint64_t>(ch));
                      LcfmT<float> lcfm(store, "l", ch, init);
                      GcfmT<float> gcfm(store, "g", ch, GcfmConfig{3, GcfmVariant::full}, init);
                      for (int rep = 0; rep < 3; ++rep) {
                          RgbdFeatT<float> f{
                              make_var(oracle::rand_tensor<float>(rng, Shape{2, ch, 6, 5})),
                              make_var(oracle::rand_tensor<float>(rng, Shape{2, ch, 6, 5}))};
                          auto lres = lcfm.forward(f)->value;
                          auto addv = additive_fuse(f)->value;
                          c.expect(lres.data == addv.data, "lcfm-vs-additive mismatch at C=" + std::to_string(ch));
                          auto gres = gcfm.forward(f)->value;
                          c.expect(gres.data == f.rgb->value.data, "gcfm-vs-rgb mismatch at C=" + std::to_string(ch));
                      }
                  }
                  c.append("channels {4,8,16}, 3 random inputs each, bitwise");
              });
}

TEST_CASE("A5 directional module study") {
    criterion(5, "baseline < +L-CFM, baseline < +G-CFM, both >= max(single) - 0.01", [](Criterion& c) {
        const double t0 = now_s();
        const StudyRow baseline{"baseline", false, false};
        const StudyRow lcfm_row{"lcfm", true, false};
        const StudyRow gcfm_row{"gcfm", false, true};
        const StudyRow both_row{"both", true, true};

        const double m_base = study_mean(baseline, c);
        const double m_lcfm = study_mean(lcfm_row, c);
        const double m_gcfm = study_mean(gcfm_row, c);
        const double m_both = study_mean(both_row, c);
        const double elapsed = now_s() - t0;

        c.expect(m_base < m_lcfm, "baseline " + fmt(m_base) + " !< lcfm " + fmt(m_lcfm));
        c.expect(m_base < m_gcfm, "baseline " + fmt(m_base) + " !< gcfm " + fmt(m_gcfm));
        c.expect(m_both >= std::max(m_lcfm, m_gcfm) - 0.01,
                 "both " + fmt(m_both) + " < max(single) - 0.01 = " +
                     fmt(std::max(m_lcfm, m_gcfm) - 0.01));
        c.expect(elapsed < 1800.0, "study took " + fmt(elapsed, 1) + " s");
        c.append(fmt(elapsed, 1) + " s");
    });
}

TEST_CASE("A6 context-source study") {
    criterion(6, "multi-modal G-CFM >= var1 and >= var2 in mean mIoU", [](Criterion& c) {
        const StudyRow full_row{"gcfm", false, true};
        const StudyRow var1_row{"var1", false, true, false, GcfmVariant::var1};
        const StudyRow var2_row{"var2", false, true, false, GcfmVariant::var2};

        const double m_full = study_mean(full_row, c);
        const double m_var1 = study_mean(var1_row, c);
        const double m_var2 = study_mean(var2_row, c);

        c.expect(m_full >= m_var1, "full " + fmt(m_full) + " < var1 " + fmt(m_var1));
        c.expect(m_full >= m_var2, "full " + fmt(m_full) + " < var2 " + fmt(m_var2));
    });
}

TEST_CASE("A7 overfit sanity") {
    criterion(7, "full model reaches loss < 0.05 on one sample within 200 iterations", [](Criterion& c) {
        SynthConfig sc;
        sc.num_images = 1;
        sc.height = sc.width = 32;
        sc.shapes_per_image = 2;
        sc.noise_rgb = sc.noise_depth = 0.0;
        sc.seed = 71;
        auto m = ensure_synth(cache_root() / "data_a7", sc);
        auto ds = Dataset::from_manifest(m);

        ModelConfig mc;
        mc.backbone.stage_channels = {8, 16, 32, 32};
        mc.decoder_channels = 32;
        mc.gcfm.k_contexts = 4;
        mc.use_lcfm = true;
        mc.use_gcfm = true;
        mc.use_decoder = true;
        mc.num_classes = 4;
        mc.normalize();
        ModelT<float> model(mc, 72);

        TrainConfig tc;
        tc.lr = 0.2;
        tc.weight_decay = 0.0;
        tc.epochs = 200;  // one iteration per epoch
        tc.batch_size = 1;
        tc.crop_h = tc.crop_w = 32;
        tc.scale_min = tc.scale_max = 1.0;
        tc.flip = false;
        tc.seed = 73;
        auto res = train_loop(model, ds, nullptr, tc);
        double best = 1e9;
        std::int64_t best_iter = 0;
        for (const auto& row : res.log)
            if (row.loss < best) {
                best = row.loss;
                best_iter = row.iter;
            }
        c.expect(best < 0.05, "best loss " + fmt(best) + " after " + std::to_string(best_iter) + " iters");
        const auto& last = res.log.back();
        c.append("best loss " + fmt(best) + " at iter " + std::to_string(best_iter) + ", final " +
                 fmt(last.loss) + " (main " + fmt(last.main) + ", aux " + fmt(last.aux1) + "/" +
                 fmt(last.aux2) + ")");
    });
}

TEST_CASE("A8 metric correctness") {
    criterion(8, "hand-derived confusion-matrix examples reproduce exactly", [](Criterion& c) {
        ConfusionMatrix cm(2);
        cm.at(0, 0) = 3;
        cm.at(0, 1) = 1;
        cm.at(1, 0) = 1;
        cm.at(1, 1) = 3;
        auto m = compute_metrics(cm);
        c.expect(m.acc == 0.75, "acc " + fmt(m.acc, 10) + " != 0.75");
        c.expect(m.miou == 0.6, "miou " + fmt(m.miou, 10) + " != 0.6");
        c.expect(m.macc == 0.75, "macc " + fmt(m.macc, 10) + " != 0.75");

        ConfusionMatrix cm2(2);
        cm2.at(0, 1) = 2;
        cm2.at(1, 1) = 2;
        auto m2 = compute_metrics(cm2);
        c.expect(m2.acc == 0.5, "degenerate acc " + fmt(m2.acc, 10));
        c.expect(m2.miou == 0.25, "degenerate miou " + fmt(m2.miou, 10));
        c.append("acc 0.75, miou 0.6; degenerate acc 0.5, miou 0.25");
    });
}

TEST_CASE("A9 determinism") {
    criterion(9, "identical (seed, config) gives bitwise-identical checkpoints and tables", [](Criterion& c) {
        auto [run_a, run_b] = ensure_pipeline_runs(c);
        if (!c.ok) return;
        for (const char* name : {"checkpoint.glt", "log.csv", "metrics.json", "config.resolved"}) {
            auto a = slurp_bytes(run_a / name);
            auto b = slurp_bytes(run_b / name);
            c.expect(!a.empty(), std::string(name) + " missing or empty in run_a");
            c.expect(a == b, std::string(name) + " differs between identical runs");
        }
        c.append("checkpoint.glt, log.csv, metrics.json, config.resolved byte-identical");
    });
}

TEST_CASE("A10 pooling mask heatmaps") {
    criterion(10, "vismasks emits 2K distinct heatmaps with unit pre-normalization sums", [](Criterion& c) {
        Criterion dummy{0, ""};
        auto [run_a, run_b] = ensure_pipeline_runs(c);
        (void)run_b;
        if (!c.ok) return;
        const fs::path out = pipeline_dir() / "masks";
        fs::remove_all(out);
        const int rc = run_cli({"vismasks", "--ckpt", (run_a / "checkpoint.glt").string(), "--data",
                                (pipeline_dir() / "data" / "manifest.txt").string(), "--sample", "0",
                                "--out", out.string()});
        c.expect(rc == 0, "vismasks exited " + std::to_string(rc));
        if (rc != 0) return;

        const int k = 3;  // gcfm.k in the pipeline config
        std::vector<std::vector<unsigned char>> rgb_maps, d_maps;
        for (int i = 0; i < k; ++i) {
            char rgb_name[32], d_name[32];
            std::snprintf(rgb_name, sizeof(rgb_name), "rgb_mask_%02d.pgm", i);
            std::snprintf(d_name, sizeof(d_name), "d_mask_%02d.pgm", i);
            rgb_maps.push_back(slurp_bytes(out / rgb_name));
            d_maps.push_back(slurp_bytes(out / d_name));
            c.expect(!rgb_maps.back().empty(), std::string(rgb_name) + " missing");
            c.expect(!d_maps.back().empty(), std::string(d_name) + " missing");
        }
        int heatmaps = 0;
        for (const auto& entry : fs::directory_iterator(out))
            if (entry.path().extension() == ".pgm") ++heatmaps;
        c.expect(heatmaps == 2 * k, "expected " + std::to_string(2 * k) + " heatmaps, found " +
                                        std::to_string(heatmaps));

        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j) {
                c.expect(rgb_maps[static_cast<std::size_t>(i)] != rgb_maps[static_cast<std::size_t>(j)],
                         "rgb masks " + std::to_string(i) + " and " + std::to_string(j) + " identical");
                c.expect(d_maps[static_cast<std::size_t>(i)] != d_maps[static_cast<std::size_t>(j)],
                         "d masks " + std::to_string(i) + " and " + std::to_string(j) + " identical");
            }

        // pre-normalization sums are logged; all must be 1 up to float rounding
        std::istringstream sums(slurp_text(out / "mask_sums.txt"));
        std::string tag;
        int kk;
        double sum;
        int rows = 0;
        double worst = 0;
        while (sums >> tag >> kk >> sum) {
            worst = std::max(worst, std::abs(sum - 1.0));
            ++rows;
        }
        c.expect(rows == 2 * k, "mask_sums.txt has " + std::to_string(rows) + " rows");
        c.expect(worst <= 1e-5, "logged sums deviate by " + fmte(worst));
        c.append(std::to_string(heatmaps) + " heatmaps, worst |sum-1| " + fmt(worst, 8));
    });
}
