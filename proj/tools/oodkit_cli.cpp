// oodkit command-line front end.
//
//   synth -> train -> calibrate -> detect -> eval
//
// plus forward / featurize / tta / ensemble helpers. Exit codes: 0 success,
// 1 runtime or data error, 2 usage error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "oodkit/oodkit.hpp"

namespace fs = std::filesystem;
using namespace oodkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Offset between the ID and OOD sampling streams of `synth`.
constexpr std::uint64_t kOodSeedOffset = 0x9E3779B97F4A7C15ull;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------------ helpers

LinearHead read_head(const std::string& prefix) {
    const auto w = read_fvec<WeightTag>(prefix + "_W.fvec");
    const auto b = read_fvec<FeatureTag>(prefix + "_b.fvec");
    if (b.rows() != 1) {
        throw ShapeError("bias file '" + prefix + "_b.fvec' must hold exactly one row");
    }
    return LinearHead(w, std::vector<double>(b.data().begin(), b.data().end()));
}

void write_head(const LinearHead& head, const std::string& prefix) {
    write_fvec(head.weights(), prefix + "_W.fvec");
    write_fvec(FeatureMatrix(1, head.num_classes(), std::vector<double>(head.bias().begin(), head.bias().end())),
               prefix + "_b.fvec");
}

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) {
        fs::create_directories(file.parent_path());
    }
}

/// Where the ReAct cutoff comes from, in priority order.
struct CutoffFlags {
    bool no_react = false;
    std::string react_c;
    std::string calibration;
};

void add_cutoff_flags(CLI::App* cmd, CutoffFlags& f) {
    cmd->add_flag("--no-react", f.no_react, "Disable activation clipping (cutoff = inf)");
    cmd->add_option("--react-c", f.react_c, "Explicit ReAct cutoff; 'inf' disables clipping");
    cmd->add_option("--calibration", f.calibration, "Calibration file providing cutoff_c and tau");
}

double resolve_cutoff(const CutoffFlags& f, const std::optional<CalibrationFile>& cal) {
    if (f.no_react) {
        return kInfinity;
    }
    if (!f.react_c.empty()) {
        double c = 0.0;
        try {
            c = parse_double(f.react_c);
        } catch (const ParseError&) {
            throw UsageError("--react-c must be a number or 'inf', got '" + f.react_c + "'");
        }
        if (std::isnan(c)) {
            throw UsageError("--react-c must not be NaN");
        }
        return c;
    }
    if (cal && cal->react.cutoff_c) {
        return *cal->react.cutoff_c;
    }
    return kInfinity;
}

std::optional<CalibrationFile> load_calibration(const CutoffFlags& f) {
    if (f.calibration.empty()) {
        return std::nullopt;
    }
    return read_calibration(f.calibration);
}

double parse_tau(const std::string& text) {
    try {
        return parse_double(text);
    } catch (const ParseError&) {
        throw UsageError("--tau must be a number, got '" + text + "'");
    }
}

LogitMatrix fused_logits(const FeatureMatrix& features, const std::vector<std::string>& heads, double cutoff) {
    std::vector<LogitMatrix> members;
    for (const auto& h : heads) {
        members.push_back(rectified_forward(features, read_head(h), cutoff));
    }
    return ensemble_logits(members);
}

std::vector<ImageBuffer> read_images(const std::vector<std::string>& paths) {
    std::vector<ImageBuffer> images;
    for (const auto& p : paths) {
        images.push_back(read_image(p));
    }
    return images;
}

// ------------------------------------------------------------------ config

/// `--config` values become option defaults, so explicit flags still win.
/// Keys are long option names with or without the dashes ('_' == '-').
void apply_config(CLI::App& app, const KeyValues& kv) {
    for (const auto& [raw_key, value] : kv) {
        std::string key = raw_key;
        for (auto& ch : key) {
            if (ch == '_') {
                ch = '-';
            }
        }
        if (key.rfind("--", 0) == 0) {
            key.erase(0, 2);
        }
        bool used = false;
        for (auto* sub : app.get_subcommands({})) {
            for (auto* opt : sub->get_options()) {
                if (opt->check_lname(key)) {
                    opt->default_val(value);
                    used = true;
                }
            }
        }
        if (!used) {
            throw UsageError("config key '" + raw_key + "' matches no option");
        }
    }
}

std::optional<std::string> scan_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            return std::string(argv[i + 1]);
        }
        if (a.rfind("--config=", 0) == 0) {
            return a.substr(9);
        }
    }
    return std::nullopt;
}

std::uint64_t seed_fallback() {
    const char* env = std::getenv("OODKIT_SEED");
    if (env == nullptr || *env == '\0') {
        return 0;
    }
    try {
        const auto v = parse_integer(env);
        if (v < 0) {
            throw ParseError(env);
        }
        return static_cast<std::uint64_t>(v);
    } catch (const ParseError&) {
        throw UsageError(std::string("OODKIT_SEED must be a non-negative integer, got '") + env + "'");
    }
}

void add_augment_flags(CLI::App* cmd, AugmentSpec& spec) {
    auto off = [cmd](const std::string& name, bool& target, const std::string& help) {
        cmd->add_flag_callback(name, [&target] { target = false; }, help);
    };
    off("--no-rotation", spec.rotation, "Disable random rotation");
    cmd->add_option("--max-rotation", spec.max_rotation_deg, "Largest |rotation| in degrees")->capture_default_str();
    off("--no-hflip", spec.flip_horizontal, "Disable horizontal flips");
    off("--no-vflip", spec.flip_vertical, "Disable vertical flips");
    off("--no-jitter", spec.jitter, "Disable brightness/contrast jitter");
    cmd->add_option("--brightness-min", spec.brightness_min)->capture_default_str();
    cmd->add_option("--brightness-max", spec.brightness_max)->capture_default_str();
    cmd->add_option("--contrast-min", spec.contrast_min)->capture_default_str();
    cmd->add_option("--contrast-max", spec.contrast_max)->capture_default_str();
    off("--no-crop", spec.crop, "Disable random crop");
    cmd->add_option("--crop-fraction", spec.crop_fraction, "Crop window side fraction")->capture_default_str();
    off("--no-cutout", spec.cutout, "Disable cutout");
    cmd->add_option("--cutout-fraction", spec.cutout_fraction, "Cutout hole side fraction of min(H, W)")
        ->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"oodkit: ReAct + energy-score OOD detection toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "key=value file of option defaults");

    std::uint64_t default_seed = 0;

    // synth ---------------------------------------------------------------
    struct {
        std::size_t classes = 3, dim = 8, per_class = 100;
        std::optional<std::size_t> ood_count;
        double stddev = 1.0, separation = 6.0;
        std::uint64_t seed = 0;
        std::string out_dir = ".";
    } synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write seeded Gaussian ID/OOD feature sets");
    synth_cmd->add_option("--classes", synth.classes)->check(CLI::PositiveNumber)->capture_default_str();
    synth_cmd->add_option("--dim", synth.dim)->check(CLI::PositiveNumber)->capture_default_str();
    synth_cmd->add_option("--per-class", synth.per_class)->check(CLI::PositiveNumber)->capture_default_str();
    synth_cmd->add_option("--ood-count", synth.ood_count, "OOD samples (default classes * per-class)");
    synth_cmd->add_option("--std", synth.stddev)->check(CLI::NonNegativeNumber)->capture_default_str();
    synth_cmd->add_option("--separation", synth.separation, "Distance of each class mean from the origin")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    auto* synth_seed = synth_cmd->add_option("--seed", synth.seed);
    synth_cmd->add_option("--out-dir", synth.out_dir)->capture_default_str();

    // train ---------------------------------------------------------------
    struct {
        std::string features, labels, out_dir = ".";
        TrainConfig cfg;
    } train;
    auto* train_cmd = app.add_subcommand("train", "Fit a linear softmax head with EMA weights");
    train_cmd->add_option("--features", train.features)->required();
    train_cmd->add_option("--labels", train.labels)->required();
    train_cmd->add_option("--out-dir", train.out_dir)->capture_default_str();
    train_cmd->add_option("--epochs", train.cfg.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    train_cmd->add_option("--lr", train.cfg.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
    train_cmd->add_option("--patience", train.cfg.lr_halving_patience)->check(CLI::PositiveNumber)->capture_default_str();
    train_cmd->add_option("--ema-decay", train.cfg.ema_decay)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    auto* train_seed = train_cmd->add_option("--seed", train.cfg.seed);

    // calibrate -----------------------------------------------------------
    struct {
        std::string features, head, out = "calibration.txt";
        double percentile = kDefaultPercentile, retention = kDefaultRetention;
        bool no_react = false;
    } calib;
    auto* calib_cmd = app.add_subcommand("calibrate", "Fit the ReAct cutoff and the energy threshold tau");
    calib_cmd->add_option("--features", calib.features)->required();
    calib_cmd->add_option("--head", calib.head, "Head prefix (<prefix>_W.fvec, <prefix>_b.fvec)")->required();
    calib_cmd->add_option("--percentile", calib.percentile)->check(CLI::Range(0.0, 100.0))->capture_default_str();
    calib_cmd->add_option("--retention", calib.retention)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    calib_cmd->add_flag("--no-react", calib.no_react, "Skip clipping (cutoff_c = inf)");
    calib_cmd->add_option("--out", calib.out)->capture_default_str();

    // detect --------------------------------------------------------------
    struct {
        std::string features, head, logits, scores, tau, score = "energy", out = "decisions.csv";
        CutoffFlags cutoff;
    } detect;
    auto* detect_cmd = app.add_subcommand("detect", "Score samples and emit ID/OOD decisions");
    detect_cmd->add_option("--features", detect.features);
    detect_cmd->add_option("--head", detect.head);
    detect_cmd->add_option("--logits", detect.logits, "Precomputed logits instead of --features/--head");
    detect_cmd->add_option("--scores", detect.scores, "Precomputed N x 1 scores");
    detect_cmd->add_option("--tau", detect.tau, "Threshold override");
    detect_cmd->add_option("--score", detect.score)->check(CLI::IsMember({"energy", "msp"}))->capture_default_str();
    add_cutoff_flags(detect_cmd, detect.cutoff);
    detect_cmd->add_option("--out", detect.out)->capture_default_str();

    // eval ----------------------------------------------------------------
    struct {
        std::string id_features, id_labels, ood_features, tau, report, confusion;
        std::vector<std::string> heads;
        double tpr = kDefaultTprTarget;
        CutoffFlags cutoff;
    } eval;
    auto* eval_cmd = app.add_subcommand("eval", "Accuracy, AUROC and FPR@TPR report");
    eval_cmd->add_option("--id-features", eval.id_features)->required();
    eval_cmd->add_option("--id-labels", eval.id_labels)->required();
    eval_cmd->add_option("--ood-features", eval.ood_features);
    eval_cmd->add_option("--head", eval.heads, "Head prefix; repeat to ensemble")->required();
    eval_cmd->add_option("--tau", eval.tau, "Threshold override");
    eval_cmd->add_option("--tpr", eval.tpr)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    add_cutoff_flags(eval_cmd, eval.cutoff);
    eval_cmd->add_option("--report", eval.report, "Write key=value report here (also printed)");
    eval_cmd->add_option("--confusion", eval.confusion, "Write confusion matrix CSV here");

    // forward -------------------------------------------------------------
    struct {
        std::string features, out = "logits.fvec";
        std::vector<std::string> heads;
        CutoffFlags cutoff;
    } fwd;
    auto* forward_cmd = app.add_subcommand("forward", "Rectified forward pass to logits");
    forward_cmd->add_option("--features", fwd.features)->required();
    forward_cmd->add_option("--head", fwd.heads, "Head prefix; repeat to ensemble")->required();
    add_cutoff_flags(forward_cmd, fwd.cutoff);
    forward_cmd->add_option("--out", fwd.out)->capture_default_str();

    // ensemble ------------------------------------------------------------
    struct {
        std::vector<std::string> logits;
        std::string out = "ensemble.fvec";
    } ens;
    auto* ensemble_cmd = app.add_subcommand("ensemble", "Average logit files");
    ensemble_cmd->add_option("--logits", ens.logits)->required();
    ensemble_cmd->add_option("--out", ens.out)->capture_default_str();

    // featurize -----------------------------------------------------------
    struct {
        std::vector<std::string> images;
        std::size_t grid = 2;
        std::string out = "features.fvec";
    } feat;
    auto* featurize_cmd = app.add_subcommand("featurize", "Grid-pool images into feature rows");
    featurize_cmd->add_option("--images", feat.images, ".pgm or .fvec images")->required();
    featurize_cmd->add_option("--grid", feat.grid)->check(CLI::PositiveNumber)->capture_default_str();
    featurize_cmd->add_option("--out", feat.out)->capture_default_str();

    // tta -----------------------------------------------------------------
    struct {
        std::vector<std::string> images;
        std::size_t grid = 2;
        std::string head, out = "tta_logits.fvec";
        TtaConfig cfg;
        bool no_identity = false;
        AugmentSpec spec;
        CutoffFlags cutoff;
    } tta;
    auto* tta_cmd = app.add_subcommand("tta", "Test-time augmentation with the grid-pool featurizer");
    tta_cmd->add_option("--images", tta.images, ".pgm or .fvec images")->required();
    tta_cmd->add_option("--grid", tta.grid)->check(CLI::PositiveNumber)->capture_default_str();
    tta_cmd->add_option("--head", tta.head)->required();
    tta_cmd->add_option("--iterations", tta.cfg.iterations)->check(CLI::PositiveNumber)->capture_default_str();
    tta_cmd->add_flag("--no-identity", tta.no_identity, "Augment every view, including the first");
    auto* tta_seed = tta_cmd->add_option("--seed", tta.cfg.seed);
    add_augment_flags(tta_cmd, tta.spec);
    add_cutoff_flags(tta_cmd, tta.cutoff);
    tta_cmd->add_option("--out", tta.out)->capture_default_str();

    try {
        default_seed = seed_fallback();
        for (auto* opt : {synth_seed, train_seed, tta_seed}) {
            opt->default_val(default_seed);
        }
        if (const auto path = scan_config_path(argc, argv)) {
            apply_config(app, read_key_values(*path));
        }
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }

    try {
        if (*synth_cmd) {
            SyntheticSpec spec;
            spec.means = axis_means(synth.classes, synth.dim, synth.separation);
            spec.stddev = synth.stddev;
            spec.per_class = synth.per_class;
            spec.seed = synth.seed;
            const auto id = generate_synthetic(spec);
            const std::vector<double> origin(synth.dim, 0.0);
            const auto ood = generate_ood(origin, synth.stddev, synth.ood_count.value_or(synth.classes * synth.per_class),
                                          synth.seed + kOodSeedOffset);
            const fs::path dir = synth.out_dir;
            fs::create_directories(dir);
            write_fvec(id.features, dir / "id_features.fvec");
            write_labels_csv(id.labels, dir / "id_labels.csv");
            write_fvec(ood, dir / "ood_features.fvec");
            std::cout << "id=" << id.features.rows() << 'x' << id.features.cols() << " ood=" << ood.rows() << 'x'
                      << ood.cols() << '\n';
        } else if (*train_cmd) {
            const auto features = read_fvec<FeatureTag>(train.features);
            const auto labels = read_labels_csv(train.labels);
            const auto result = train_head(features, labels, train.cfg);
            const fs::path dir = train.out_dir;
            fs::create_directories(dir);
            write_head(result.final_head, (dir / "head").string());
            write_head(result.ema_head, (dir / "ema").string());
            write_file_atomic(dir / "history.csv", encode_history_csv(result.history));
            const auto acc = accuracy(predict_classes(forward(features, result.final_head)), labels);
            const auto ema_acc = accuracy(predict_classes(forward(features, result.ema_head)), labels);
            std::cout << "final_accuracy=" << format_double(acc) << '\n'
                      << "ema_accuracy=" << format_double(ema_acc) << '\n';
            if (!result.history.empty()) {
                std::cout << "final_loss=" << format_double(result.history.back().loss) << '\n';
            }
        } else if (*calib_cmd) {
            const auto features = read_fvec<FeatureTag>(calib.features);
            const auto head = read_head(calib.head);
            CalibrationFile file;
            file.react.percentile_p = calib.percentile;
            if (features.empty()) {
                throw CalibrationError("feature file '" + calib.features + "' has no samples");
            }
            file.react.cutoff_c = calib.no_react ? kInfinity : fit_react_threshold(features, calib.percentile);
            const auto scores = energy_score(rectified_forward(features, head, *file.react.cutoff_c));
            file.calibration = calibrate_tau(scores, calib.retention);
            ensure_parent(calib.out);
            write_calibration(file, calib.out);
            std::cout << encode_calibration(file);
            if (file.calibration.warning) {
                std::cerr << "warning: achieved retention " << format_double(file.calibration.achieved_retention)
                          << " is below target " << format_double(calib.retention) << " (tied scores at tau)\n";
            }
        } else if (*detect_cmd) {
            const auto cal = load_calibration(detect.cutoff);
            LogitMatrix logits;
            if (!detect.logits.empty()) {
                if (!detect.features.empty() || !detect.head.empty()) {
                    throw UsageError("use either --logits or --features/--head, not both");
                }
                logits = read_fvec<LogitTag>(detect.logits);
            } else {
                if (detect.features.empty() || detect.head.empty()) {
                    throw UsageError("detect needs --features and --head, or --logits");
                }
                logits = rectified_forward(read_fvec<FeatureTag>(detect.features), read_head(detect.head),
                                           resolve_cutoff(detect.cutoff, cal));
            }
            ScoreVector scores;
            if (!detect.scores.empty()) {
                const auto s = read_fvec<FeatureTag>(detect.scores);
                if (s.cols() != 1) {
                    throw ShapeError("score file must have exactly one column");
                }
                scores = ScoreVector(std::vector<double>(s.data().begin(), s.data().end()));
            } else {
                scores = detect.score == "msp" ? max_softmax_score(logits) : energy_score(logits);
            }
            double tau = 0.0;
            if (!detect.tau.empty()) {
                tau = parse_tau(detect.tau);
            } else if (cal) {
                tau = cal->calibration.tau;
            } else {
                throw UsageError("detect needs --calibration or --tau");
            }
            const auto decisions = decide(scores, logits, tau);
            std::string csv = "id,score,verdict,class\n";
            for (std::size_t i = 0; i < decisions.size(); ++i) {
                const auto& d = decisions[i];
                const bool in = d.verdict == Verdict::InDistribution;
                csv += std::to_string(i) + ',' + format_double(d.score) + ',' + (in ? "ID" : "OOD") + ',' +
                       (in ? std::to_string(d.predicted_class) : std::string("-1")) + '\n';
            }
            ensure_parent(detect.out);
            write_file_atomic(detect.out, csv);
            const auto n_id = std::count_if(decisions.begin(), decisions.end(),
                                            [](const Decision& d) { return d.verdict == Verdict::InDistribution; });
            std::cout << "n=" << decisions.size() << " id=" << n_id << " ood=" << decisions.size() - n_id << '\n';
        } else if (*eval_cmd) {
            const auto cal = load_calibration(eval.cutoff);
            const double cutoff = resolve_cutoff(eval.cutoff, cal);
            const auto id_logits = fused_logits(read_fvec<FeatureTag>(eval.id_features), eval.heads, cutoff);
            const auto labels = read_labels_csv(eval.id_labels);
            std::optional<LogitMatrix> ood_logits;
            if (!eval.ood_features.empty()) {
                ood_logits = fused_logits(read_fvec<FeatureTag>(eval.ood_features), eval.heads, cutoff);
            }
            double tau = -kInfinity;
            if (!eval.tau.empty()) {
                tau = parse_tau(eval.tau);
            } else if (cal) {
                tau = cal->calibration.tau;
            }
            const auto report = evaluate({id_logits, labels, ood_logits ? &*ood_logits : nullptr, tau, eval.tpr});
            const auto text = encode_report(report);
            if (!eval.report.empty()) {
                ensure_parent(eval.report);
                write_file_atomic(eval.report, text);
            }
            if (!eval.confusion.empty()) {
                ensure_parent(eval.confusion);
                write_file_atomic(eval.confusion, encode_confusion_csv(report.confusion));
            }
            std::cout << text;
        } else if (*forward_cmd) {
            const auto cal = load_calibration(fwd.cutoff);
            const auto logits = fused_logits(read_fvec<FeatureTag>(fwd.features), fwd.heads, resolve_cutoff(fwd.cutoff, cal));
            ensure_parent(fwd.out);
            write_fvec(logits, fwd.out);
        } else if (*ensemble_cmd) {
            std::vector<LogitMatrix> members;
            for (const auto& p : ens.logits) {
                members.push_back(read_fvec<LogitTag>(p));
            }
            ensure_parent(ens.out);
            write_fvec(ensemble_logits(members), ens.out);
        } else if (*featurize_cmd) {
            const auto images = read_images(feat.images);
            ensure_parent(feat.out);
            write_fvec(featurize(images, GridPoolFeaturizer(feat.grid)), feat.out);
        } else if (*tta_cmd) {
            const auto cal = load_calibration(tta.cutoff);
            tta.cfg.include_identity = !tta.no_identity;
            const auto images = read_images(tta.images);
            const auto logits = tta_predict_batch(images, GridPoolFeaturizer(tta.grid), read_head(tta.head),
                                                  resolve_cutoff(tta.cutoff, cal), tta.cfg, tta.spec);
            ensure_parent(tta.out);
            write_fvec(logits, tta.out);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
