#include "lla/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "lla/checkpoint.hpp"
#include "lla/config.hpp"
#include "lla/gradcheck.hpp"
#include "lla/manifest.hpp"
#include "lla/metrics.hpp"
#include "lla/model_check.hpp"
#include "lla/synthetic.hpp"

namespace lla {

namespace {

namespace fs = std::filesystem;

// Input that fails validation; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class F>
auto validated(const std::string& context, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigValidationError& e) {
        std::string msg = context + ": invalid config";
        for (const auto& issue : e.issues()) msg += "\n  " + issue;
        throw UsageError(msg);
    } catch (const FormatError& e) {
        throw UsageError(context + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(context + ": " + e.what());
    } catch (const std::out_of_range& e) {
        throw UsageError(context + ": " + e.what());
    }
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("LLA_SEED");
    if (!s || !*s) return std::nullopt;
    std::uint64_t v = 0;
    std::istringstream is(s);
    if (!(is >> v) || !is.eof()) throw UsageError("LLA_SEED: expected a non-negative integer, got '" + std::string(s) + "'");
    return v;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

void prepare_out(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

RunConfig load_config(const fs::path& path) {
    const auto seed = env_seed();
    return validated(path.string(), [&] { return load_run_config(path, seed); });
}

DatasetManifest read_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError(path.string() + ": no such manifest");
    return validated(path.string(), [&] { return load_manifest(path); });
}

ParamStore read_checkpoint(const fs::path& path, const NetworkConfig& net, std::string& digest_hex) {
    if (!fs::exists(path)) throw UsageError(path.string() + ": no such checkpoint");
    ParamStore store = init_network(net);
    validated(path.string(), [&] { return load_checkpoint(path, store, net.digest()); });
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    digest_hex = hex64(fnv1a64(ss.str()));
    return store;
}

// ---- rebalance -----------------------------------------------------------

struct RebalanceArgs {
    std::string manifest;
    std::size_t k_neutral = 12;
    std::size_t k_happy = 2;
    std::string supplement;
    std::vector<std::string> quotas;
    std::string out;
};

int cmd_rebalance(const RebalanceArgs& a, std::ostream& out) {
    const DatasetManifest base = read_manifest(a.manifest);
    DatasetManifest supp;
    if (!a.supplement.empty()) supp = read_manifest(a.supplement);
    std::map<int, std::size_t> quota;
    for (const auto& q : a.quotas) {
        const auto eq = q.find('=');
        if (eq == std::string::npos) throw UsageError("--quota: expected class=N, got '" + q + "'");
        const int label = validated("--quota", [&] { return parse_class(q.substr(0, eq)); });
        std::size_t n = 0;
        std::istringstream is(q.substr(eq + 1));
        if (!(is >> n) || !is.eof()) throw UsageError("--quota: bad count in '" + q + "'");
        quota[label] = n;
    }
    const std::map<int, std::size_t> k{{static_cast<int>(Expression::neutral), a.k_neutral},
                                       {static_cast<int>(Expression::happiness), a.k_happy}};
    const RebalanceResult res = validated("rebalance", [&] { return rebalance(base, k, supp, quota); });

    prepare_out(a.out);
    save_manifest(fs::path(a.out) / "manifest.csv", res.manifest);
    write_text(fs::path(a.out) / "rebalance_report.json", res.report.to_json().dump(2) + "\n");

    out << std::left << std::setw(10) << "class" << std::right << std::setw(10) << "before" << std::setw(10)
        << "removed" << std::setw(10) << "added" << std::setw(10) << "after" << std::setw(11) << "shortfall"
        << "\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        out << std::left << std::setw(10) << class_name(static_cast<int>(c)) << std::right << std::setw(10)
            << res.report.before[c] << std::setw(10) << res.report.removed[c] << std::setw(10) << res.report.added[c]
            << std::setw(10) << res.report.after[c] << std::setw(11) << res.report.shortfall[c] << "\n";
    }
    out << "total after: " << res.report.total_after() << "\n";
    return kExitOk;
}

// ---- train ---------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir, std::ostream& out) {
    const RunConfig cfg = load_config(config_path);
    if (cfg.train_manifest.empty()) throw UsageError(config_path + ": /data/train_manifest is required");
    const DatasetManifest train = read_manifest(cfg.train_manifest);
    std::optional<DatasetManifest> val;
    if (cfg.val_manifest) val = read_manifest(*cfg.val_manifest);
    if (train.empty()) throw UsageError(cfg.train_manifest.string() + ": manifest has no records");

    const fs::path dir(out_dir);
    prepare_out(dir);
    write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");

    std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.jsonl").string());

    TrainConfig tc = cfg.train;
    const FitResult res = fit(init_network(cfg.network), cfg.network, tc, cfg.data, train, val ? &*val : nullptr,
                              disk_images(cfg.data.image_root), [&](const EpochLog& e) {
                                  log << e.to_json().dump() << "\n";
                                  log.flush();
                                  out << "epoch " << e.epoch << " loss " << e.train_loss << " train_acc "
                                      << e.train_acc;
                                  if (e.val_score) out << " val_score " << *e.val_score;
                                  out << "\n";
                              });
    if (!log) throw std::runtime_error("write failed for train_log.jsonl");

    const std::string ckpt = serialize_checkpoint(res.best, cfg.network.digest());
    write_text(dir / "best.ckpt", ckpt);

    nlohmann::ordered_json m;
    m["epochs_run"] = res.logs.size();
    m["best_epoch"] = res.best_epoch;
    m["train_loss"] = res.last_train.mean_loss;
    m["train_acc"] = res.last_train.accuracy;
    m["selection_set"] = val ? "validation" : "train";
    m["selection"] = metrics_report(res.best_eval.confusion);
    m["config_digest"] = hex64(cfg.network.digest());
    m["checkpoint_digest"] = hex64(fnv1a64(ckpt));
    m["parameter_count"] = res.best.parameter_count();
    write_text(dir / "metrics.json", m.dump(2) + "\n");
    out << "best epoch " << res.best_epoch << ", checkpoint digest " << hex64(fnv1a64(ckpt)) << "\n";
    return kExitOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
    std::string config;
    std::string checkpoint;
    std::string manifest;
    bool tencrop = false;
    bool no_tencrop = false;
    std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const RunConfig cfg = load_config(a.config);
    fs::path manifest_path = a.manifest;
    if (manifest_path.empty()) manifest_path = cfg.val_manifest ? *cfg.val_manifest : cfg.train_manifest;
    if (manifest_path.empty()) throw UsageError("eval: no manifest given and none in config");
    const DatasetManifest manifest = read_manifest(manifest_path);
    std::string digest;
    const ParamStore params = read_checkpoint(a.checkpoint, cfg.network, digest);
    const bool tencrop = a.tencrop ? true : (a.no_tencrop ? false : cfg.data.tencrop);

    const EvalResult res = evaluate(params, cfg.network, manifest, cfg.data, tencrop, disk_images(cfg.data.image_root));

    const fs::path dir(a.out);
    prepare_out(dir);
    nlohmann::ordered_json m = metrics_report(res.confusion);
    m["images"] = res.predictions.size();
    m["tencrop"] = tencrop;
    m["checkpoint_digest"] = digest;
    write_text(dir / "metrics.json", m.dump(2) + "\n");

    std::ostringstream cm;
    cm << "truth\\predicted";
    for (std::size_t j = 0; j < res.confusion.classes(); ++j) cm << "," << class_name(static_cast<int>(j));
    cm << "\n";
    for (std::size_t i = 0; i < res.confusion.classes(); ++i) {
        cm << class_name(static_cast<int>(i));
        for (std::size_t j = 0; j < res.confusion.classes(); ++j) cm << "," << res.confusion(i, j);
        cm << "\n";
    }
    write_text(dir / "confusion.csv", cm.str());

    std::ostringstream preds;
    for (const Prediction& p : res.predictions) {
        nlohmann::ordered_json j;
        j["index"] = p.index;
        j["image_path"] = manifest.records[p.index].image_path;
        j["truth"] = p.truth;
        j["predicted"] = p.predicted;
        j["probabilities"] = p.probabilities;
        preds << j.dump() << "\n";
    }
    write_text(dir / "predictions.jsonl", preds.str());

    const MetricSummary s = summarize(res.confusion);
    out << std::fixed << std::setprecision(4) << "images " << res.predictions.size() << " accuracy " << s.accuracy
        << " macro_f1 " << s.macro_f1 << " score " << challenge_score(s.accuracy, s.macro_f1) << "\n";
    return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------

struct CheckLine {
    std::string name;
    ad::GradCheckReport report;
    double seconds;
};

int cmd_gradcheck(const std::string& preset, double eps, double tol, std::ostream& out) {
    if (!(eps > 0.0)) throw UsageError("--eps must be > 0");
    if (!(tol > 0.0)) throw UsageError("--tolerance must be > 0");
    std::vector<std::pair<std::string, std::pair<ad::Program, std::vector<Tensor>>>> jobs;
    if (preset == "ops") {
        for (auto& c : ad::kernel_checks()) jobs.push_back({c.name, {c.program, c.params}});
    } else {
        for (auto& c : model_checks()) jobs.push_back({c.name, {c.program, c.params}});
    }
    bool ok = true;
    out << std::left << std::setw(24) << "check" << std::setw(12) << "elements" << std::setw(16) << "max_rel_err"
        << "status\n";
    for (auto& [name, job] : jobs) {
        const auto t0 = std::chrono::steady_clock::now();
        const ad::GradCheckReport r = ad::grad_check(job.first, job.second, eps);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = r.passed(tol);
        ok = ok && pass;
        std::ostringstream err;
        err << std::scientific << std::setprecision(3) << r.max_relative_error;
        out << std::left << std::setw(24) << name << std::setw(12) << r.elements_checked << std::setw(16)
            << (r.finite ? err.str() : "non-finite") << (pass ? "ok" : "FAIL") << std::fixed << std::setprecision(2)
            << "  (" << secs << " s)";
        if (!pass) out << "  worst at " << r.location();
        out << "\n";
    }
    out << std::defaultfloat << (ok ? "all checks passed" : "gradient check FAILED") << " (tolerance " << tol << ")\n";
    return ok ? kExitOk : kExitRuntime;
}

// ---- dump-attention ------------------------------------------------------

struct DumpArgs {
    std::string config;
    std::string checkpoint;
    std::string image;
    std::size_t module_index = 0;
    std::string out;
};

std::uint8_t to_gray(double m) {
    constexpr double kSaturation = 1.0 / 512.0;
    if (m < kSaturation) return 0;
    if (m > 1.0 - kSaturation) return 255;
    return static_cast<std::uint8_t>(std::clamp(std::lround(m * 255.0), 1L, 254L));
}

template <class T>
void put_le(std::string& buf, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

int cmd_dump_attention(const DumpArgs& a, std::ostream& out) {
    const RunConfig cfg = load_config(a.config);
    if (!cfg.network.use_llam) throw UsageError("dump-attention: network has LLAM disabled");
    const std::size_t modules = cfg.network.module_count();
    if (a.module_index >= modules) {
        throw UsageError("--module-index " + std::to_string(a.module_index) + " out of range (network has " +
                         std::to_string(modules) + " modules)");
    }
    std::string digest;
    ParamStore params = read_checkpoint(a.checkpoint, cfg.network, digest);
    if (!fs::exists(a.image)) throw UsageError(a.image + ": no such image");
    const Image img = validated(a.image, [&] { return load_image(a.image); });
    if (img.channels != cfg.network.in_channels) {
        throw UsageError(a.image + ": image has " + std::to_string(img.channels) + " channels, network expects " +
                         std::to_string(cfg.network.in_channels));
    }
    const Tensor batch = to_batch({img}, cfg.data.normalization);
    const Tensor m = attention_maps(batch, params, cfg.network).at(a.module_index);
    const Shape s = m.shape();

    const fs::path dir(a.out);
    prepare_out(dir);
    const std::string stem = "attention_m" + std::to_string(a.module_index);
    for (std::size_t c = 0; c < s.c; ++c) {
        Image gray(1, s.h, s.w);
        for (std::size_t y = 0; y < s.h; ++y) {
            for (std::size_t x = 0; x < s.w; ++x) gray.at(0, y, x) = to_gray(m.at(0, c, y, x));
        }
        save_image(dir / (stem + "_c" + std::to_string(c) + ".pgm"), gray);
    }
    // Raw dump: "LLAM", u32 n c h w, then n*c*h*w f64, all little-endian.
    std::string raw = "LLAM";
    for (std::size_t d : {s.n, s.c, s.h, s.w}) put_le(raw, static_cast<std::uint32_t>(d));
    for (double v : m.data()) put_le(raw, v);
    write_text(dir / (stem + ".bin"), raw);
    out << "wrote " << s.c << " channel maps of " << s.h << "x" << s.w << " to " << dir.string() << "\n";
    return kExitOk;
}

// ---- make-synthetic ------------------------------------------------------

int cmd_make_synthetic(std::size_t per_class, std::size_t size, std::uint64_t seed, const std::string& dir,
                       std::ostream& out) {
    if (per_class < 1) throw UsageError("--per-class must be >= 1");
    const SyntheticSet set = validated("make-synthetic", [&] { return make_synthetic(per_class, size, seed); });
    prepare_out(dir);
    write_synthetic(set, dir);
    out << "wrote " << set.manifest.size() << " images and manifest.csv to " << dir << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LLA-Net: lossless attention networks for expression recognition", "lla"};
    app.require_subcommand(1);

    RebalanceArgs rb;
    auto* rebal = app.add_subcommand("rebalance", "Undersample neutral/happy runs and merge external data");
    rebal->add_option("--manifest", rb.manifest, "Input manifest CSV")->required();
    rebal->add_option("--k-neutral", rb.k_neutral, "Keep every k-th neutral frame")->capture_default_str();
    rebal->add_option("--k-happy", rb.k_happy, "Keep every k-th happiness frame")->capture_default_str();
    rebal->add_option("--supplement", rb.supplement, "External manifest to draw from");
    rebal->add_option("--quota", rb.quotas, "Per-class external quota, class=N (repeatable)");
    rebal->add_option("--out", rb.out, "Output directory")->required();

    std::string train_config, train_out;
    auto* train = app.add_subcommand("train", "Train a network from a JSON config");
    train->add_option("--config", train_config, "Run config JSON")->required();
    train->add_option("--out", train_out, "Output directory")->required();

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--config", ev.config, "Run config JSON")->required();
    eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    eval->add_option("--manifest", ev.manifest, "Manifest to score (default: config validation set)");
    auto* tc = eval->add_flag("--tencrop", ev.tencrop, "Average predictions over ten crops");
    eval->add_flag("--no-tencrop", ev.no_tencrop, "Single center crop")->excludes(tc);
    eval->add_option("--out", ev.out, "Output directory")->required();

    std::string gc_preset = "ops";
    double gc_eps = 1e-5;
    double gc_tol = 1e-4;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gc->add_option("--preset", gc_preset, "ops: every kernel; tiny: LLAM block and the width-4 network")
        ->check(CLI::IsMember({"ops", "tiny"}))
        ->capture_default_str();
    gc->add_option("--eps", gc_eps, "Central-difference step")->capture_default_str();
    gc->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();

    DumpArgs da;
    auto* dump = app.add_subcommand("dump-attention", "Export one module's attention map for an image");
    dump->add_option("--config", da.config, "Run config JSON (network layout)")->required();
    dump->add_option("--checkpoint", da.checkpoint, "Checkpoint file")->required();
    dump->add_option("--image", da.image, "PGM/PPM image, fed at full size")->required();
    dump->add_option("--module-index", da.module_index, "Combined module index")->capture_default_str();
    dump->add_option("--out", da.out, "Output directory")->required();

    std::size_t syn_per_class = 10, syn_size = 32;
    std::uint64_t syn_seed = 1;
    std::string syn_out;
    auto* syn = app.add_subcommand("make-synthetic", "Write the deterministic 7-class toy dataset");
    syn->add_option("--per-class", syn_per_class, "Images per class")->capture_default_str();
    syn->add_option("--size", syn_size, "Image side length")->capture_default_str();
    syn->add_option("--seed", syn_seed, "Noise seed")->capture_default_str();
    syn->add_option("--out", syn_out, "Output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        if (!app.get_subcommands().empty()) {
            err << app.get_subcommands().front()->help();
        } else {
            err << app.help();
        }
        return kExitUsage;
    }

    try {
        if (*rebal) return cmd_rebalance(rb, out);
        if (*train) return cmd_train(train_config, train_out, out);
        if (*eval) return cmd_eval(ev, out);
        if (*gc) return cmd_gradcheck(gc_preset, gc_eps, gc_tol, out);
        if (*dump) return cmd_dump_attention(da, out);
        if (*syn) return cmd_make_synthetic(syn_per_class, syn_size, syn_seed, syn_out, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace lla
