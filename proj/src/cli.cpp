#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "glpnet/checkpoint.hpp"
#include "glpnet/cli.hpp"
#include "glpnet/gradcheck.hpp"
#include "glpnet/training.hpp"

namespace fs = std::filesystem;

namespace glpnet {

namespace {

struct Flags {
    std::string config_path, out, data, val, ckpt;
    std::int64_t seed = 1;
    std::int64_t epochs = 0;
    std::int64_t k = 0;
    bool use_lcfm = false, use_gcfm = false, use_decoder = false, mg = false;
    std::string lcfm_stages, ms_scales, precision = "f32";
    std::string suite, seeds_csv = "1,2,3";
    std::int64_t sample = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "key = value settings file");
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--k", f.k, "pooled context count per modality");
    cmd->add_flag("--use-lcfm", f.use_lcfm, "enable the local fusion module at stage 4");
    cmd->add_flag("--use-gcfm", f.use_gcfm, "enable the global fusion module");
    cmd->add_flag("--use-decoder", f.use_decoder, "enable the skip-connection decoder");
    cmd->add_option("--lcfm-stages", f.lcfm_stages, "comma-separated stages running local fusion");
    cmd->add_flag("--mg", f.mg, "multi-grid dilations 1,2,4 in the last stage");
    cmd->add_option("--ms-scales", f.ms_scales, "comma-separated multi-scale eval factors");
    cmd->add_option("--precision", f.precision, "compute precision")->check(CLI::IsMember({"f32", "f64"}));
}

ConfigMap cli_overrides(const CLI::App* cmd, const Flags& f) {
    ConfigMap o;
    if (cmd->count("--seed")) {
        o["train.seed"] = std::to_string(f.seed);
        o["synth.seed"] = std::to_string(f.seed);
    }
    if (cmd->count("--epochs")) o["train.epochs"] = std::to_string(f.epochs);
    if (cmd->count("--k")) o["gcfm.k"] = std::to_string(f.k);
    if (cmd->count("--use-lcfm")) o["use_lcfm"] = f.use_lcfm ? "true" : "false";
    if (cmd->count("--use-gcfm")) o["use_gcfm"] = f.use_gcfm ? "true" : "false";
    if (cmd->count("--use-decoder")) o["use_decoder"] = f.use_decoder ? "true" : "false";
    if (cmd->count("--lcfm-stages")) o["lcfm_stages"] = f.lcfm_stages;
    if (cmd->count("--mg")) o["backbone.dilations"] = f.mg ? "1,2,4" : "1,1,1";
    if (cmd->count("--ms-scales")) o["eval.ms_scales"] = f.ms_scales;
    if (cmd->count("--precision")) o["precision"] = f.precision;
    return o;
}

ConfigMap resolve(const Flags& f, const CLI::App* cmd) {
    ConfigMap base;
    apply_overrides(base, config_of(ModelConfig{}));
    apply_overrides(base, config_of(TrainConfig{}));
    apply_overrides(base, config_of(EvalConfig{}));
    apply_overrides(base, config_of(SynthConfig{}));
    base["precision"] = "f32";
    if (!f.config_path.empty()) {
        ConfigMap file = load_config_file(f.config_path);
        check_known_keys(file, f.config_path);
        apply_overrides(base, file);
    }
    apply_overrides(base, cli_overrides(cmd, f));
    check_known_keys(base, "resolved config");
    return base;
}

void write_text(const std::string& path, const std::string& text) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path);
    require_data(out.good(), path + ": cannot open for writing");
    out << text;
    require_data(out.good(), path + ": write failed");
}

void echo_config(const std::string& out_dir, const ConfigMap& resolved) {
    write_text((fs::path(out_dir) / "config.resolved").string(), serialize_config(resolved));
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// runs fn with T = float or double according to the precision string
template <typename F>
int with_precision(const std::string& precision, F&& fn) {
    require_config(precision == "f32" || precision == "f64", "precision must be f32 or f64");
    if (precision == "f64") return fn.template operator()<double>();
    return fn.template operator()<float>();
}

int cmd_synth(const Flags& f, const CLI::App* cmd) {
    ConfigMap resolved = resolve(f, cmd);
    SynthConfig sc = synth_config_from(resolved);
    DatasetManifest m = synth_generate(sc, f.out);
    echo_config(f.out, resolved);
    std::cout << "synth: wrote " << m.size() << " samples with " << m.num_classes << " classes to " << f.out
              << "\n";
    return 0;
}

int cmd_train(const Flags& f, const CLI::App* cmd) {
    ConfigMap resolved = resolve(f, cmd);
    std::string train_path = f.data.empty() ? get_str(resolved, "data.train_manifest", "") : f.data;
    require_config(!train_path.empty(), "train: pass --data or set data.train_manifest");
    std::string val_path = f.val.empty() ? get_str(resolved, "data.val_manifest", "") : f.val;
    resolved["data.train_manifest"] = train_path;
    if (!val_path.empty()) resolved["data.val_manifest"] = val_path;

    Dataset train = Dataset::from_manifest(load_manifest(train_path));
    Dataset val;
    if (!val_path.empty()) val = Dataset::from_manifest(load_manifest(val_path));

    // the manifest's class count is authoritative
    resolved["num_classes"] = std::to_string(train.num_classes);
    ModelConfig mcfg = model_config_from(resolved);
    TrainConfig tcfg = train_config_from(resolved);
    EvalConfig ecfg = eval_config_from(resolved);

    echo_config(f.out, resolved);
    return with_precision(get_str(resolved, "precision", "f32"), [&]<typename T>() {
        ModelT<T> model(mcfg, tcfg.seed);
        TrainResult res =
            train_loop(model, train, val_path.empty() ? nullptr : &val, tcfg, (fs::path(f.out) / "diag").string());
        write_text((fs::path(f.out) / "log.csv").string(), res.log_csv);
        const std::string ckpt = save_checkpoint(f.out, model, resolved);
        if (!val_path.empty()) {
            MetricsResult mr = evaluate(model, val, ecfg);
            write_text((fs::path(f.out) / "metrics.json").string(), metrics_to_json(mr) + "\n");
            std::cout << "train: final val miou " << fmt6(mr.miou) << "\n";
        }
        std::cout << "train: " << res.log.size() << " epochs, checkpoint " << ckpt << "\n";
        return 0;
    });
}

int cmd_eval(const Flags& f, const CLI::App* cmd) {
    ConfigMap resolved = checkpoint_config(f.ckpt);
    apply_overrides(resolved, cli_overrides(cmd, f));
    EvalConfig ecfg = eval_config_from(resolved);
    Dataset data = Dataset::from_manifest(load_manifest(f.data));

    return with_precision(get_str(resolved, "precision", "f32"), [&]<typename T>() {
        ModelT<T> model = load_checkpoint<T>(f.ckpt);
        require_data(model.cfg.num_classes == data.num_classes,
                     "eval: checkpoint expects " + std::to_string(model.cfg.num_classes) +
                         " classes, dataset has " + std::to_string(data.num_classes));
        MetricsResult mr = evaluate(model, data, ecfg);
        const std::string json = metrics_to_json(mr) + "\n";
        if (!f.out.empty()) {
            echo_config(f.out, resolved);
            write_text((fs::path(f.out) / "metrics.json").string(), json);
        }
        std::cout << json;
        std::cout << "eval: acc " << fmt6(mr.acc) << " macc " << fmt6(mr.macc) << " miou " << fmt6(mr.miou)
                  << "\n";
        return 0;
    });
}

int cmd_gradcheck(const Flags& f, const CLI::App* cmd) {
    ConfigMap resolved = resolve(f, cmd);
    return with_precision(get_str(resolved, "precision", "f32"), [&]<typename T>() {
        GradCheckReport report = run_gradcheck_suite<T>();
        const std::string text = report.to_text();
        std::cout << text;
        if (!f.out.empty()) {
            echo_config(f.out, resolved);
            write_text((fs::path(f.out) / "report.txt").string(), text);
        }
        return report.all_passed() ? 0 : 3;
    });
}

struct AblateRow {
    std::string name;
    ConfigMap deltas;
    bool ms_eval = false;
};

std::vector<AblateRow> suite_rows(const std::string& suite) {
    const ConfigMap off = {{"use_lcfm", "false"}, {"use_gcfm", "false"}, {"use_decoder", "false"},
                           {"lcfm_stages", ""},   {"backbone.dilations", "1,1,1"}};
    const auto with = [&](std::initializer_list<std::pair<std::string, std::string>> kv) {
        ConfigMap m = off;
        for (const auto& [k, v] : kv) m[k] = v;
        return m;
    };
    if (suite == "table1")
        return {
            {"baseline", off},
            {"+L-CFM", with({{"use_lcfm", "true"}})},
            {"+G-CFM", with({{"use_gcfm", "true"}})},
            {"+L-CFM+G-CFM", with({{"use_lcfm", "true"}, {"use_gcfm", "true"}})},
            {"+decoder", with({{"use_lcfm", "true"}, {"use_gcfm", "true"}, {"use_decoder", "true"}})},
            {"+MG", with({{"use_lcfm", "true"}, {"use_gcfm", "true"}, {"use_decoder", "true"},
                          {"backbone.dilations", "1,2,4"}})},
            {"+MS", with({{"use_lcfm", "true"}, {"use_gcfm", "true"}, {"use_decoder", "true"},
                          {"backbone.dilations", "1,2,4"}}), true},
        };
    if (suite == "table2")
        return {
            {"L-CFM S1", with({{"lcfm_stages", "1"}})},
            {"L-CFM S2", with({{"lcfm_stages", "2"}})},
            {"L-CFM S3", with({{"lcfm_stages", "3"}})},
            {"L-CFM S4", with({{"lcfm_stages", "4"}})},
            {"L-CFM S1-S4", with({{"lcfm_stages", "1,2,3,4"}})},
        };
    if (suite == "table3")
        return {
            {"G-CFM_var1 (K=15)", with({{"use_gcfm", "true"}, {"gcfm.variant", "var1"}, {"gcfm.k", "15"}})},
            {"G-CFM_var2 (K=15)", with({{"use_gcfm", "true"}, {"gcfm.variant", "var2"}, {"gcfm.k", "15"}})},
            {"G-CFM (K=15)", with({{"use_gcfm", "true"}, {"gcfm.variant", "full"}, {"gcfm.k", "15"}})},
            {"G-CFM (K=5)", with({{"use_gcfm", "true"}, {"gcfm.variant", "full"}, {"gcfm.k", "5"}})},
            {"G-CFM (K=10)", with({{"use_gcfm", "true"}, {"gcfm.variant", "full"}, {"gcfm.k", "10"}})},
            {"G-CFM (K=20)", with({{"use_gcfm", "true"}, {"gcfm.variant", "full"}, {"gcfm.k", "20"}})},
            {"G-CFM (K=25)", with({{"use_gcfm", "true"}, {"gcfm.variant", "full"}, {"gcfm.k", "25"}})},
        };
    throw ConfigError("ablate: unknown suite '" + suite + "' (expected table1, table2, or table3)");
}

int cmd_ablate(const Flags& f, const CLI::App* cmd) {
    ConfigMap resolved = resolve(f, cmd);
    std::vector<AblateRow> rows = suite_rows(f.suite);

    std::vector<std::uint64_t> seeds;
    if (cmd->count("--seed"))
        seeds = {static_cast<std::uint64_t>(f.seed)};
    else
        for (const auto& s : get_int_list({{"seeds", f.seeds_csv}}, "seeds", {}))
            seeds.push_back(static_cast<std::uint64_t>(s));
    require_config(!seeds.empty(), "ablate: empty seed list");

    // data: the given root must hold train/ and test/ manifests; otherwise a
    // misaligned synthetic pair is generated under <out>/data
    std::string train_path, test_path;
    if (!f.data.empty()) {
        train_path = (fs::path(f.data) / "train" / "manifest.txt").string();
        test_path = (fs::path(f.data) / "test" / "manifest.txt").string();
    } else {
        SynthConfig sc = synth_config_from(resolved);
        if (!cmd->count("--config") || !load_config_file(f.config_path).count("synth.misalignment_px"))
            sc.misalignment_px = 2;
        sc.split = "train";
        const std::string data_root = (fs::path(f.out) / "data").string();
        synth_generate(sc, data_root + "/train");
        SynthConfig tc = sc;
        tc.num_images = std::max<std::int64_t>(1, sc.num_images / 4);
        tc.seed = sc.seed + 9999;
        tc.split = "test";
        synth_generate(tc, data_root + "/test");
        train_path = data_root + "/train/manifest.txt";
        test_path = data_root + "/test/manifest.txt";
    }
    Dataset train = Dataset::from_manifest(load_manifest(train_path));
    Dataset test = Dataset::from_manifest(load_manifest(test_path));

    std::string md = "# ablate " + f.suite + "\n\n| config |";
    for (auto s : seeds) md += " seed " + std::to_string(s) + " |";
    md += " mean mIoU |\n|---|";
    for (std::size_t i = 0; i <= seeds.size(); ++i) md += "---|";
    md += "\n";

    const std::string precision = get_str(resolved, "precision", "f32");
    for (const auto& row : rows) {
        ConfigMap row_cfg = resolved;
        apply_overrides(row_cfg, row.deltas);
        row_cfg["num_classes"] = std::to_string(train.num_classes);
        ModelConfig mcfg = model_config_from(row_cfg);
        EvalConfig ecfg;
        if (row.ms_eval) {
            ecfg = eval_config_from(row_cfg);
        } else {
            ecfg.ms_scales = {1.0};
            ecfg.ms_flip = false;
        }

        md += "| " + row.name + " |";
        double sum = 0;
        for (auto seed : seeds) {
            TrainConfig tcfg = train_config_from(row_cfg);
            tcfg.seed = seed;
            const double miou = with_precision(precision, [&]<typename T>() {
                ModelT<T> model(mcfg, seed);
                train_loop(model, train, nullptr, tcfg);
                return evaluate(model, test, ecfg).miou;
            });
            sum += miou;
            md += " " + fmt6(miou) + " |";
        }
        md += " " + fmt6(sum / static_cast<double>(seeds.size())) + " |\n";
        std::cout << "ablate: " << row.name << " mean miou "
                  << fmt6(sum / static_cast<double>(seeds.size())) << "\n";
    }

    echo_config(f.out, resolved);
    write_text((fs::path(f.out) / "results.md").string(), md);
    std::cout << "ablate: wrote " << (fs::path(f.out) / "results.md").string() << "\n";
    return 0;
}

int cmd_vismasks(const Flags& f, const CLI::App* cmd) {
    ConfigMap resolved = checkpoint_config(f.ckpt);
    apply_overrides(resolved, cli_overrides(cmd, f));
    DatasetManifest manifest = load_manifest(f.data);
    RgbdSample sample = load_sample(manifest, f.sample);

    return with_precision(get_str(resolved, "precision", "f32"), [&]<typename T>() {
        ModelT<T> model = load_checkpoint<T>(f.ckpt);
        require_config(model.cfg.use_gcfm, "vismasks: the checkpoint was trained without the global fusion module");

        TensorT<T> rgb = tensor_cast<T>(sample.rgb);
        TensorT<T> depth = tensor_cast<T>(sample.depth);
        rgb.shape = Shape{1, 3, rgb.dim(1), rgb.dim(2)};
        depth.shape = Shape{1, 1, depth.dim(1), depth.dim(2)};

        NoGradGuard ng;
        auto out = model.forward(make_var(rgb, false), make_var(depth, false), false, true);
        require_contract(out.masks.rgb_mask != nullptr, "vismasks: no pooling masks were produced");

        fs::create_directories(f.out);
        std::string sums;
        std::int64_t files = 0;
        const auto dump = [&](const VarT<T>& mask, const std::string& tag) {
            if (!mask) return;
            const TensorT<T>& m = mask->value;  // [1,K,h,w]
            for (std::int64_t k = 0; k < m.dim(1); ++k) {
                TensorT<float> plane(Shape{m.dim(2), m.dim(3)});
                double sum = 0;
                for (std::int64_t y = 0; y < m.dim(2); ++y)
                    for (std::int64_t x = 0; x < m.dim(3); ++x) {
                        plane.at2(y, x) = static_cast<float>(m.at4(0, k, y, x));
                        sum += static_cast<double>(m.at4(0, k, y, x));
                    }
                char name[64];
                std::snprintf(name, sizeof(name), "%s_mask_%02lld.pgm", tag.c_str(),
                              static_cast<long long>(k));
                write_pgm_heatmap(plane, (fs::path(f.out) / name).string());
                sums += tag + " " + std::to_string(k) + " " + fmt6(sum) + "\n";
                ++files;
            }
        };
        dump(out.masks.rgb_mask, "rgb");
        dump(out.masks.d_mask, "d");
        write_text((fs::path(f.out) / "mask_sums.txt").string(), sums);
        echo_config(f.out, resolved);
        std::cout << "vismasks: wrote " << files << " heatmaps to " << f.out << "\n";
        return 0;
    });
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"two-stream RGB-D semantic segmentation with local/global fusion"};
    app.require_subcommand(1);

    Flags f;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic RGB-D dataset");
    add_common(synth, f);
    synth->add_option("--out", f.out, "dataset root to write")->required();

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_common(train, f);
    train->add_option("--out", f.out, "run directory")->required();
    train->add_option("--data", f.data, "training manifest.txt");
    train->add_option("--val", f.val, "validation manifest.txt");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, f);
    eval->add_option("--out", f.out, "output directory");
    eval->add_option("--ckpt", f.ckpt, "checkpoint.glt path")->required();
    eval->add_option("--data", f.data, "evaluation manifest.txt")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(gradcheck, f);
    gradcheck->add_option("--out", f.out, "output directory");

    CLI::App* ablate = app.add_subcommand("ablate", "run a named ablation grid");
    add_common(ablate, f);
    ablate->add_option("--out", f.out, "output directory")->required();
    ablate->add_option("--suite", f.suite, "table1, table2, or table3")->required();
    ablate->add_option("--seeds", f.seeds_csv, "comma-separated seeds (default 1,2,3)");
    ablate->add_option("--data", f.data, "dataset root holding train/ and test/");

    CLI::App* vismasks = app.add_subcommand("vismasks", "dump pooling-mask heatmaps");
    vismasks->alias("vis-masks");
    add_common(vismasks, f);
    vismasks->add_option("--out", f.out, "output directory")->required();
    vismasks->add_option("--ckpt", f.ckpt, "checkpoint.glt path")->required();
    vismasks->add_option("--data", f.data, "manifest.txt with the sample")->required();
    vismasks->add_option("--sample", f.sample, "sample index (default 0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(f, synth);
        if (train->parsed()) return cmd_train(f, train);
        if (eval->parsed()) return cmd_eval(f, eval);
        if (gradcheck->parsed()) return cmd_gradcheck(f, gradcheck);
        if (ablate->parsed()) return cmd_ablate(f, ablate);
        if (vismasks->parsed()) return cmd_vismasks(f, vismasks);
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("glpnet");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const auto& a : full) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace glpnet
