#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "lla/cli.hpp"
#include "lla/image.hpp"
#include "lla/manifest.hpp"

namespace fs = std::filesystem;
using namespace lla;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = fs::temp_directory_path() / ("lla_cli_" + tag + "_" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string operator/(const std::string& s) const { return (path / s).string(); }
};

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Synthetic images plus a fast tiny-network config in `dir`.
void setup_training(const TempDir& dir, const std::string& extra_train = "") {
    REQUIRE(cli({"make-synthetic", "--per-class", "2", "--size", "16", "--seed", "4", "--out", dir.path.string()})
                .code == kExitOk);
    write(dir.path / "run.json",
          R"({"seed": 5, "network": {"preset": "tiny"},
              "train": {"base_lr": 0.05, "batch_size": 7, "max_epochs": 3)" +
              extra_train + R"(},
              "data": {"train_manifest": "manifest.csv", "augment": true, "pad": 2, "train_crop": 16,
                       "eval_crop": 14, "tencrop": true}})");
}

}  // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"train"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("rebalance command") {
    TempDir dir("rebalance");
    DatasetManifest m;
    fixture::add_run(m, "n", 6, 0, 25);         // neutral: ceil(25/12) = 3
    fixture::add_run(m, "n", 6, 30, 1);         // separate run: 1
    fixture::add_run(m, "h", 3, 0, 5);          // happiness: ceil(5/2) = 3
    fixture::add_run(m, "a", 0, 0, 4);
    DatasetManifest supp;
    fixture::add_run(supp, "x", 0, 0, 10, 1, Source::external_a);
    save_manifest(dir.path / "in.csv", m);
    save_manifest(dir.path / "supp.csv", supp);

    SUBCASE("counts and report") {
        Run r = cli({"rebalance", "--manifest", dir / "in.csv", "--supplement", dir / "supp.csv", "--quota", "anger=6",
                     "--quota", "fear=2", "--out", dir / "out"});
        REQUIRE(r.code == kExitOk);
        const auto rep = nlohmann::json::parse(slurp(dir.path / "out" / "rebalance_report.json"));
        CHECK(rep["neutral"]["after"] == 4);
        CHECK(rep["happiness"]["after"] == 3);
        CHECK(rep["anger"]["added"] == 6);
        CHECK(rep["anger"]["after"] == 10);
        CHECK(rep["shortfall"]["fear"] == 2);
        CHECK(rep["total_after"] == 17);
        CHECK(load_manifest(dir.path / "out" / "manifest.csv").size() == 17);
        CHECK(r.out.find("total after: 17") != std::string::npos);
    }
    SUBCASE("k = 1 is the identity") {
        REQUIRE(cli({"rebalance", "--manifest", dir / "in.csv", "--k-neutral", "1", "--k-happy", "1", "--out",
                     dir / "id"})
                    .code == kExitOk);
        CHECK(slurp(dir.path / "id" / "manifest.csv") == slurp(dir.path / "in.csv"));
    }
    SUBCASE("bad inputs") {
        write(dir.path / "bad.csv", "sequence_id,frame_index,image_path,label,source\na,0,x.ppm,0,primary\na,zz,y.ppm,0,primary\n");
        Run r = cli({"rebalance", "--manifest", dir / "bad.csv", "--out", dir / "o"});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("line 3") != std::string::npos);
        CHECK(cli({"rebalance", "--manifest", dir / "missing.csv", "--out", dir / "o"}).code == kExitUsage);
        CHECK(cli({"rebalance", "--manifest", dir / "in.csv", "--quota", "joy=3", "--out", dir / "o"}).code ==
              kExitUsage);
        CHECK(cli({"rebalance", "--manifest", dir / "in.csv", "--k-neutral", "0", "--out", dir / "o"}).code ==
              kExitUsage);
    }
}

TEST_CASE("train, eval and dump-attention") {
    TempDir dir("train");
    setup_training(dir);
    Run a = cli({"train", "--config", dir / "run.json", "--out", dir / "a"});
    REQUIRE_MESSAGE(a.code == kExitOk, a.err);
    Run b = cli({"train", "--config", dir / "run.json", "--out", dir / "b"});
    REQUIRE(b.code == kExitOk);
    CHECK(slurp(dir.path / "a" / "metrics.json") == slurp(dir.path / "b" / "metrics.json"));
    CHECK(slurp(dir.path / "a" / "best.ckpt") == slurp(dir.path / "b" / "best.ckpt"));
    CHECK(slurp(dir.path / "a" / "train_log.jsonl") == slurp(dir.path / "b" / "train_log.jsonl"));
    const auto metrics = nlohmann::json::parse(slurp(dir.path / "a" / "metrics.json"));
    CHECK(metrics["epochs_run"] == 3);
    CHECK(metrics["selection_set"] == "train");

    std::istringstream log(slurp(dir.path / "a" / "train_log.jsonl"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* key : {"epoch", "lr", "train_loss", "train_acc", "val_acc", "val_f1", "val_score"})
            CHECK(j.contains(key));
        ++lines;
    }
    CHECK(lines == 3);

    SUBCASE("eval with and without TenCrop") {
        DatasetManifest one = load_manifest(dir.path / "manifest.csv");
        one.records.resize(1);
        save_manifest(dir.path / "one.csv", one);
        for (const char* flag : {"--tencrop", "--no-tencrop"}) {
            const std::string out = dir / (std::string("eval") + flag);
            Run r = cli({"eval", "--config", dir / "run.json", "--checkpoint", dir / "a/best.ckpt", "--manifest",
                         dir / "one.csv", flag, "--out", out});
            REQUIRE_MESSAGE(r.code == kExitOk, r.err);
            const auto m = nlohmann::json::parse(slurp(fs::path(out) / "metrics.json"));
            CHECK(m["images"] == 1);
            CHECK(m["tencrop"] == (std::string(flag) == "--tencrop"));
            std::istringstream preds(slurp(fs::path(out) / "predictions.jsonl"));
            std::size_t n = 0;
            while (std::getline(preds, line)) {
                CHECK(nlohmann::json::parse(line)["probabilities"].size() == 7);
                ++n;
            }
            CHECK(n == 1);
        }
        CHECK(cli({"eval", "--config", dir / "run.json", "--checkpoint", dir / "a/best.ckpt", "--tencrop",
                   "--no-tencrop", "--out", dir / "x"})
                  .code == kExitUsage);
    }
    SUBCASE("checkpoint from another layout is rejected") {
        write(dir.path / "micro.json", R"({"network": {"preset": "micro"}, "data": {"train_manifest": "manifest.csv"}})");
        Run r = cli({"eval", "--config", dir / "micro.json", "--checkpoint", dir / "a/best.ckpt", "--out", dir / "x"});
        CHECK(r.code == kExitUsage);
    }
    SUBCASE("dump-attention") {
        const std::string img = (dir.path / load_manifest(dir.path / "manifest.csv").records[0].image_path).string();
        Run r = cli({"dump-attention", "--config", dir / "run.json", "--checkpoint", dir / "a/best.ckpt", "--image",
                     img, "--module-index", "1", "--out", dir / "att"});
        REQUIRE_MESSAGE(r.code == kExitOk, r.err);
        // Module 1 is the first 16-channel module at stride 2: 16 maps of 8x8.
        for (int c = 0; c < 16; ++c) {
            const Image g = load_image(dir.path / "att" / ("attention_m1_c" + std::to_string(c) + ".pgm"));
            CHECK(g.channels == 1);
            CHECK(g.height == 8);
            CHECK(g.width == 8);
        }
        CHECK_FALSE(fs::exists(dir.path / "att" / "attention_m1_c16.pgm"));
        const std::string raw = slurp(dir.path / "att" / "attention_m1.bin");
        REQUIRE(raw.size() == 4 + 16 + 16 * 8 * 8 * 8);
        CHECK(raw.substr(0, 4) == "LLAM");
        for (std::size_t i = 0; i < 16 * 64; ++i) {
            double v;
            std::memcpy(&v, raw.data() + 20 + 8 * i, 8);
            CHECK((v > 0.0 && v < 1.0));
        }
        CHECK(cli({"dump-attention", "--config", dir / "run.json", "--checkpoint", dir / "a/best.ckpt", "--image", img,
                   "--module-index", "2", "--out", dir / "att"})
                  .code == kExitUsage);
    }
}

TEST_CASE("LLA_SEED overrides the config seed") {
    TempDir dir("seed");
    setup_training(dir);
    ::setenv("LLA_SEED", "5", 1);
    Run same = cli({"train", "--config", dir / "run.json", "--out", dir / "s5"});
    ::setenv("LLA_SEED", "6", 1);
    Run other = cli({"train", "--config", dir / "run.json", "--out", dir / "s6"});
    ::setenv("LLA_SEED", "six", 1);
    Run bad = cli({"train", "--config", dir / "run.json", "--out", dir / "sx"});
    ::unsetenv("LLA_SEED");
    Run base = cli({"train", "--config", dir / "run.json", "--out", dir / "base"});
    REQUIRE(same.code == kExitOk);
    REQUIRE(other.code == kExitOk);
    REQUIRE(base.code == kExitOk);
    CHECK(bad.code == kExitUsage);
    CHECK(slurp(dir.path / "s5" / "best.ckpt") == slurp(dir.path / "base" / "best.ckpt"));
    CHECK(slurp(dir.path / "s6" / "best.ckpt") != slurp(dir.path / "base" / "best.ckpt"));
    CHECK(nlohmann::json::parse(slurp(dir.path / "s6" / "config.json"))["seed"] == 6);
}

TEST_CASE("config validation errors carry a pointer and exit 2") {
    TempDir dir("config");
    setup_training(dir);
    auto check = [&](const std::string& body, const std::string& pointer) {
        write(dir.path / "c.json", body);
        Run r = cli({"train", "--config", dir / "c.json", "--out", dir / "o"});
        CHECK(r.code == kExitUsage);
        CHECK_MESSAGE(r.err.find(pointer) != std::string::npos, r.err);
    };
    check(R"({"train": {"momentum": 1.5}, "data": {"train_manifest": "manifest.csv"}})", "/train/momentum");
    check(R"({"network": {"preset": "huge"}, "data": {"train_manifest": "manifest.csv"}})", "/network/preset");
    check(R"({"trian": {}, "data": {"train_manifest": "manifest.csv"}})", "/trian");
    check(R"({"train": {"batch_size": 0}, "data": {"train_manifest": "manifest.csv"}})", "/train/batch_size");
    check("{not json", "c.json");
    check(R"({"network": {"preset": "tiny"}})", "/data/train_manifest");
}

TEST_CASE("gradcheck command") {
    Run r = cli({"gradcheck", "--preset", "ops"});
    CHECK_MESSAGE(r.code == kExitOk, r.out);
    CHECK(r.out.find("all checks passed") != std::string::npos);
    Run strict = cli({"gradcheck", "--preset", "ops", "--tolerance", "1e-30"});
    CHECK(strict.code == kExitRuntime);
    CHECK(strict.out.find("gradient check FAILED") != std::string::npos);
    CHECK(cli({"gradcheck", "--preset", "huge"}).code == kExitUsage);
}
