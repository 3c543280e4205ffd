#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "glpnet/cli.hpp"
#include "glpnet/config.hpp"
#include "oracles.hpp"

using namespace glpnet;
namespace fs = std::filesystem;

namespace {

struct WorkDir {
    fs::path path;
    explicit WorkDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("glpnet_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~WorkDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp_text(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
    CHECK(run_cli({"definitely-not-a-command"}) == 1);
    CHECK(run_cli({"train"}) == 1);                       // missing required --out/--data
    CHECK(run_cli({"synth"}) == 1);                       // missing --out
    CHECK(run_cli({"gradcheck", "--precision", "f16"}) == 1);
    CHECK(run_cli(std::vector<std::string>{}) == 1);
}

TEST_CASE("help exits 0") {
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({"synth", "--help"}) == 0);
}

TEST_CASE("synth writes a loadable dataset and echoes config") {
    WorkDir wd("synth");
    ConfigMap file{{"synth.num_images", "5"}, {"synth.height", "16"}, {"synth.width", "16"}};
    const std::string cfg_path = wd.sub("synth.cfg");
    {
        std::ofstream out(cfg_path);
        out << serialize_config(file);
    }
    CHECK(run_cli({"synth", "--config", cfg_path, "--out", wd.sub("ds"), "--seed", "9"}) == 0);
    auto m = load_manifest(wd.sub("ds") + "/manifest.txt");
    CHECK(m.size() == 5);
    auto resolved = parse_config_text(slurp_text(wd.sub("ds") + "/config.resolved"), "resolved");
    CHECK(resolved.at("synth.num_images") == "5");
    CHECK(resolved.at("synth.seed") == "9");
    check_known_keys(resolved, "resolved");
}

TEST_CASE("bad config file exits 2") {
    WorkDir wd("badcfg");
    const std::string cfg_path = wd.sub("bad.cfg");
    {
        std::ofstream out(cfg_path);
        out << "unknown_key = 1\n";
    }
    CHECK(run_cli({"synth", "--config", cfg_path, "--out", wd.sub("ds")}) == 2);
    {
        std::ofstream out(cfg_path);
        out << "synth.num_images = banana\n";
    }
    CHECK(run_cli({"synth", "--config", cfg_path, "--out", wd.sub("ds2")}) == 2);
    CHECK(run_cli({"synth", "--config", wd.sub("missing.cfg"), "--out", wd.sub("ds3")}) == 2);
}

TEST_CASE("train then eval then vismasks round trip") {
    WorkDir wd("pipeline");
    ConfigMap synth_cfg{{"synth.num_images", "8"},
                        {"synth.height", "32"},
                        {"synth.width", "32"}};
    const std::string synth_path = wd.sub("synth.cfg");
    {
        std::ofstream out(synth_path);
        out << serialize_config(synth_cfg);
    }
    REQUIRE(run_cli({"synth", "--config", synth_path, "--out", wd.sub("data"), "--seed", "3"}) == 0);

    ConfigMap train_cfg{{"backbone.channels", "4,8,8,8"},
                        {"decoder_channels", "8"},
                        {"gcfm.k", "2"},
                        {"train.epochs", "1"},
                        {"train.batch_size", "4"},
                        {"train.crop_h", "32"},
                        {"train.crop_w", "32"},
                        {"train.scale_min", "1"},
                        {"train.scale_max", "1"},
                        {"train.lr", "0.01"}};
    const std::string train_path = wd.sub("train.cfg");
    {
        std::ofstream out(train_path);
        out << serialize_config(train_cfg);
    }
    REQUIRE(run_cli({"train", "--config", train_path, "--out", wd.sub("run"), "--data",
                     wd.sub("data") + "/manifest.txt", "--use-lcfm", "--use-gcfm", "--seed", "4"}) == 0);
    CHECK(fs::exists(wd.sub("run") + "/checkpoint.glt"));
    CHECK(fs::exists(wd.sub("run") + "/config.resolved"));
    auto log = slurp_text(wd.sub("run") + "/log.csv");
    CHECK(log.rfind("epoch,iter,lr,loss,main,aux1,aux2,miou\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);

    auto resolved = parse_config_text(slurp_text(wd.sub("run") + "/config.resolved"), "resolved");
    CHECK(resolved.at("use_lcfm") == "true");
    CHECK(resolved.at("use_gcfm") == "true");
    CHECK(resolved.at("train.seed") == "4");

    // eval on the training data with single-scale
    REQUIRE(run_cli({"eval", "--ckpt", wd.sub("run") + "/checkpoint.glt", "--data",
                     wd.sub("data") + "/manifest.txt", "--out", wd.sub("evalout"), "--ms-scales", "1"}) == 0);
    CHECK(fs::exists(wd.sub("evalout") + "/metrics.json"));
    auto mj = slurp_text(wd.sub("evalout") + "/metrics.json");
    CHECK(mj.find("\"miou\"") != std::string::npos);

    // vismasks dumps one heatmap per context per modality
    REQUIRE(run_cli({"vismasks", "--ckpt", wd.sub("run") + "/checkpoint.glt", "--data",
                     wd.sub("data") + "/manifest.txt", "--sample", "0", "--out", wd.sub("masks")}) == 0);
    int rgb_masks = 0, d_masks = 0;
    for (const auto& entry : fs::directory_iterator(wd.sub("masks"))) {
        const auto name = entry.path().filename().string();
        if (name.rfind("rgb_mask_", 0) == 0) ++rgb_masks;
        if (name.rfind("d_mask_", 0) == 0) ++d_masks;
    }
    CHECK(rgb_masks == 2);
    CHECK(d_masks == 2);
    CHECK(fs::exists(wd.sub("masks") + "/mask_sums.txt"));

    // the hyphenated alias reaches the same command
    CHECK(run_cli({"vis-masks", "--ckpt", wd.sub("run") + "/checkpoint.glt", "--data",
                   wd.sub("data") + "/manifest.txt", "--sample", "0", "--out", wd.sub("masks2")}) == 0);
}

TEST_CASE("vismasks without gcfm is a config error") {
    WorkDir wd("nogcfm");
    ConfigMap synth_cfg{{"synth.num_images", "4"}, {"synth.height", "32"}, {"synth.width", "32"}};
    const std::string synth_path = wd.sub("synth.cfg");
    {
        std::ofstream out(synth_path);
        out << serialize_config(synth_cfg);
    }
    REQUIRE(run_cli({"synth", "--config", synth_path, "--out", wd.sub("data")}) == 0);
    ConfigMap train_cfg{{"backbone.channels", "4,8,8,8"}, {"decoder_channels", "8"},
                        {"train.epochs", "1"},           {"train.crop_h", "32"},
                        {"train.crop_w", "32"},          {"train.scale_min", "1"},
                        {"train.scale_max", "1"}};
    const std::string train_path = wd.sub("train.cfg");
    {
        std::ofstream out(train_path);
        out << serialize_config(train_cfg);
    }
    REQUIRE(run_cli({"train", "--config", train_path, "--out", wd.sub("run"), "--data",
                     wd.sub("data") + "/manifest.txt"}) == 0);
    CHECK(run_cli({"vismasks", "--ckpt", wd.sub("run") + "/checkpoint.glt", "--data",
                   wd.sub("data") + "/manifest.txt", "--sample", "0", "--out", wd.sub("masks")}) == 2);
}

TEST_CASE("eval class mismatch is a data error") {
    WorkDir wd("clsmismatch");
    ConfigMap s4{{"synth.num_images", "4"}, {"synth.height", "32"}, {"synth.width", "32"}};
    ConfigMap s2 = s4;
    s2["synth.num_classes"] = "2";
    {
        std::ofstream a(wd.sub("s4.cfg"));
        a << serialize_config(s4);
        std::ofstream b(wd.sub("s2.cfg"));
        b << serialize_config(s2);
    }
    REQUIRE(run_cli({"synth", "--config", wd.sub("s4.cfg"), "--out", wd.sub("d4")}) == 0);
    REQUIRE(run_cli({"synth", "--config", wd.sub("s2.cfg"), "--out", wd.sub("d2")}) == 0);
    ConfigMap train_cfg{{"backbone.channels", "4,8,8,8"}, {"train.epochs", "1"},
                        {"train.crop_h", "32"},          {"train.crop_w", "32"},
                        {"train.scale_min", "1"},        {"train.scale_max", "1"}};
    {
        std::ofstream out(wd.sub("t.cfg"));
        out << serialize_config(train_cfg);
    }
    REQUIRE(run_cli({"train", "--config", wd.sub("t.cfg"), "--out", wd.sub("run"), "--data",
                     wd.sub("d4") + "/manifest.txt"}) == 0);
    CHECK(run_cli({"eval", "--ckpt", wd.sub("run") + "/checkpoint.glt", "--data",
                   wd.sub("d2") + "/manifest.txt"}) == 2);
}

TEST_CASE("gradcheck command runs clean in f32") {
    WorkDir wd("gradcheck");
    CHECK(run_cli({"gradcheck", "--precision", "f32", "--out", wd.sub("report")}) == 0);
    auto report = slurp_text(wd.sub("report") + "/report.txt");
    CHECK(report.find("passed") != std::string::npos);
}

TEST_CASE("missing data path is a data error") {
    WorkDir wd("nodata");
    CHECK(run_cli({"eval", "--ckpt", wd.sub("none.glt"), "--data", wd.sub("none/manifest.txt")}) == 2);
}

}  // TEST_SUITE
