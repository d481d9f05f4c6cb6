// gppdet: growth-plate-plane detection pipeline.
// Subcommands: phantom, prep, train, detect, eval, rank.

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gpp/common.hpp"
#include "gpp/detect.hpp"
#include "gpp/evalrank.hpp"
#include "gpp/manifest.hpp"
#include "gpp/micronet.hpp"
#include "gpp/phantom.hpp"
#include "gpp/pipeline.hpp"
#include "gpp/prep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PhantomArgs {
    std::string out;
    int count = 20;
    std::uint64_t seed = 1;
    int nx = 96, ny = 96, nz = 192;
    int gppi = 160;
    int gppi_jitter = 15;
    double radius = 10.0;
    double radius_jitter = 2.0;
    int span = 24;
    double shaft_radius = 18.0;
    int bone_hu = 2000;
    int air_hu = -1000;
    double noise = 50.0;
};

struct PrepArgs {
    std::string input;
    std::string out;
    std::vector<int> clip;      // lo hi
    std::vector<int> crop_pad;  // tx ty
    int fill = -1000;
    std::vector<int> resize_xy;  // tx ty
    std::string mode = "area";
};

struct TrainArgs {
    std::string method;
    std::string data;
    std::string out;
    std::string out2;  // blob-refine regressor
    std::uint64_t seed = 1;
    int folds = 0;  // 0 = train on everything
    int fold = 0;
    std::optional<int> epochs;
    std::optional<int> batch;
    std::optional<double> lr;
    std::optional<int> window;
    std::optional<int> stride;
};

struct DetectArgs {
    std::string method;
    std::string input;
    std::string out;
    std::vector<std::string> models;
    std::vector<std::string> models2;
    std::optional<int> window;
    std::optional<int> stride;
};

struct EvalArgs {
    std::string pred;
    std::string truth;
    std::string out;
};

struct RankArgs {
    std::vector<std::string> preds;
    std::string truth;
    std::string out;
};

std::string manifest_default_for(const fs::path& output, bool is_dir) {
    if (is_dir) return (output / "manifest.json").string();
    fs::path p = output;
    p.replace_extension(".manifest.json");
    return p.string();
}

gpp::MethodParams resolved_params(const std::string& method, const std::optional<int>& window,
                                  const std::optional<int>& stride,
                                  const std::optional<int>& epochs, const std::optional<int>& batch,
                                  const std::optional<double>& lr) {
    gpp::MethodParams params = gpp::default_params(method);
    if (window) params.window_len = *window;
    if (stride) params.stride = *stride;
    if (epochs) params.epochs = *epochs;
    if (batch) params.batch = *batch;
    if (lr) params.lr = *lr;
    return params;
}

json params_json(const gpp::MethodParams& p) {
    json j;
    j["clip"] = {p.clip.lo, p.clip.hi};
    j["blob_threshold_hu"] = p.blob_threshold_hu;
    j["plane_hw"] = p.plane_hw;
    j["window_len"] = p.window_len;
    j["window_hw"] = p.window_hw;
    j["stride"] = p.stride;
    j["half_span"] = p.half_span;
    j["reg_hw"] = p.reg_hw;
    j["channels"] = p.channels;
    j["inner_frac"] = p.inner_frac;
    j["long_hw"] = p.long_hw;
    j["crop_len"] = p.crop_len;
    j["eval_stacks"] = p.eval_stacks;
    j["close_kernel"] = p.close_kernel;
    j["epochs"] = p.epochs;
    j["batch"] = p.batch;
    j["lr"] = p.lr;
    j["weight_decay"] = p.weight_decay;
    j["planes_per_volume"] = p.planes_per_volume;
    j["windows_per_volume"] = p.windows_per_volume;
    j["stacks_per_volume"] = p.stacks_per_volume;
    return j;
}

// Sorted GPV sidecar stems in a directory.
std::vector<fs::path> list_gpv_stems(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw gpp::InputError("not a directory: " + dir.string());
    std::vector<fs::path> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        if (entry.path().filename() == "manifest.json") continue;
        fs::path stem = entry.path();
        stem.replace_extension();
        fs::path raw = stem;
        raw += ".raw";
        if (fs::exists(raw)) stems.push_back(stem);
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw gpp::InputError("no GPV volumes in " + dir.string());
    return stems;
}

int run_phantom(const PhantomArgs& args, const std::string& manifest) {
    gpp::PhantomSpec base;
    base.nx = args.nx;
    base.ny = args.ny;
    base.nz = args.nz;
    base.gppi = args.gppi;
    base.protrusion_radius_vox = args.radius;
    base.protrusion_span = args.span;
    base.shaft_radius_vox = args.shaft_radius;
    base.bone_hu = args.bone_hu;
    base.air_hu = args.air_hu;
    base.noise_sigma = args.noise;

    gpp::PhantomJitter jitter;
    jitter.gppi_delta = args.gppi_jitter;
    jitter.radius_delta = args.radius_jitter;

    const auto items = gpp::generate_dataset(args.count, base, jitter, args.seed);
    const fs::path out_dir(args.out);
    const auto written = gpp::write_dataset(items, out_dir);

    json config;
    config["out"] = args.out;
    config["count"] = args.count;
    config["seed"] = args.seed;
    config["dims"] = {args.nx, args.ny, args.nz};
    config["gppi"] = args.gppi;
    config["gppi_jitter"] = args.gppi_jitter;
    config["radius"] = args.radius;
    config["radius_jitter"] = args.radius_jitter;
    config["span"] = args.span;
    config["shaft_radius"] = args.shaft_radius;
    config["bone_hu"] = args.bone_hu;
    config["air_hu"] = args.air_hu;
    config["noise"] = args.noise;

    std::vector<fs::path> outputs;
    for (const auto& name : written) outputs.push_back(out_dir / name);
    const fs::path manifest_path =
        manifest.empty() ? out_dir / "manifest.json" : fs::path(manifest);
    gpp::write_manifest(manifest_path, "phantom", config, outputs);
    std::cout << "wrote " << items.size() << " phantoms to " << args.out << "\n";
    return 0;
}

int run_prep(const PrepArgs& args, const std::string& manifest) {
    if (!args.clip.empty() && args.clip.size() != 2)
        throw gpp::InputError("--clip expects LO HI");
    if (!args.crop_pad.empty() && args.crop_pad.size() != 2)
        throw gpp::InputError("--crop-pad expects TX TY");
    if (!args.resize_xy.empty() && args.resize_xy.size() != 2)
        throw gpp::InputError("--resize expects TX TY");
    const gpp::ResizeMode mode = [&] {
        if (args.mode == "area") return gpp::ResizeMode::area;
        if (args.mode == "linear") return gpp::ResizeMode::linear;
        throw gpp::InputError("--mode must be area or linear");
    }();

    const fs::path in_dir(args.input);
    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);

    std::vector<fs::path> outputs;
    for (const auto& stem : list_gpv_stems(in_dir)) {
        gpp::Volume v = gpp::load_volume(stem);
        if (!args.clip.empty()) v = gpp::clip_hu(v, {args.clip[0], args.clip[1]});
        if (!args.crop_pad.empty())
            v = gpp::crop_or_pad_xy(v, args.crop_pad[0], args.crop_pad[1],
                                    static_cast<std::int16_t>(args.fill));
        if (!args.resize_xy.empty()) v = gpp::resize_xy(v, args.resize_xy[0], args.resize_xy[1], mode);
        gpp::save_volume(v, out_dir / stem.filename());
        fs::path sidecar = out_dir / stem.filename();
        sidecar += ".json";
        fs::path raw = out_dir / stem.filename();
        raw += ".raw";
        outputs.push_back(sidecar);
        outputs.push_back(raw);
    }
    if (fs::exists(in_dir / "truth.csv")) {
        gpp::write_file_text(out_dir / "truth.csv", gpp::read_file_text(in_dir / "truth.csv"));
        outputs.push_back(out_dir / "truth.csv");
    }

    json config;
    config["input"] = args.input;
    config["out"] = args.out;
    config["clip"] = args.clip;
    config["crop_pad"] = args.crop_pad;
    config["fill"] = args.fill;
    config["resize"] = args.resize_xy;
    config["mode"] = args.mode;
    const fs::path manifest_path =
        manifest.empty() ? out_dir / "manifest.json" : fs::path(manifest);
    gpp::write_manifest(manifest_path, "prep", config, outputs);
    std::cout << "prepared " << outputs.size() << " files into " << args.out << "\n";
    return 0;
}

int run_train(const TrainArgs& args, const std::string& manifest) {
    const auto params =
        resolved_params(args.method, args.window, args.stride, args.epochs, args.batch, args.lr);
    const auto dataset = gpp::load_labeled_dataset(args.data);

    std::vector<const gpp::LabeledVolume*> training;
    if (args.folds > 0) {
        if (args.fold < 0 || args.fold >= args.folds)
            throw gpp::InputError("--fold must be in [0, folds)");
        std::vector<std::pair<std::string, std::string>> ids;
        for (const auto& item : dataset) ids.emplace_back(item.volume.id, item.study);
        const auto assignment = gpp::kfold_split(ids, args.folds, args.seed);
        for (const auto& item : dataset)
            if (assignment.fold(item.volume.id) != args.fold) training.push_back(&item);
    } else {
        for (const auto& item : dataset) training.push_back(&item);
    }

    const auto models = gpp::train_method(args.method, training, params, args.seed);

    std::vector<fs::path> outputs;
    fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    gpp::save_model(models.nets.at(0), out_path);
    outputs.push_back(out_path);
    if (models.nets.size() > 1) {
        fs::path out2 = args.out2.empty() ? [&] {
            fs::path p = out_path;
            p.replace_extension(".reg.gpm");
            return p;
        }() : fs::path(args.out2);
        gpp::save_model(models.nets.at(1), out2);
        outputs.push_back(out2);
    }

    json config = params_json(params);
    config["method"] = args.method;
    config["data"] = args.data;
    config["seed"] = args.seed;
    config["folds"] = args.folds;
    config["fold"] = args.fold;
    config["training_volumes"] = training.size();
    json sizes = json::array();
    for (const auto& net : models.nets) sizes.push_back(net.params.size());
    config["model_params"] = sizes;

    const fs::path manifest_path =
        manifest.empty() ? manifest_default_for(out_path, false) : fs::path(manifest);
    gpp::write_manifest(manifest_path, "train", config, outputs);
    std::cout << "trained " << args.method << " on " << training.size() << " volumes -> "
              << args.out << "\n";
    return 0;
}

int run_detect(const DetectArgs& args, const std::string& manifest) {
    if (args.models.empty()) throw gpp::InputError("detect: at least one --model is required");
    const auto params =
        resolved_params(args.method, args.window, args.stride, std::nullopt, std::nullopt,
                        std::nullopt);

    std::vector<gpp::TrainedMethod> models;
    for (std::size_t i = 0; i < args.models.size(); ++i) {
        gpp::TrainedMethod tm;
        tm.method = args.method;
        tm.nets.push_back(gpp::load_model(args.models[i]));
        if (args.method == "blob-refine") {
            if (args.models2.size() != args.models.size())
                throw gpp::InputError("blob-refine needs one --model2 per --model");
            tm.nets.push_back(gpp::load_model(args.models2[i]));
        }
        models.push_back(std::move(tm));
    }

    const std::string model_id =
        models.size() == 1 ? fs::path(args.models[0]).stem().string()
                           : "ensemble" + std::to_string(models.size());

    std::vector<gpp::PredictionRow> preds;
    for (const auto& stem : list_gpv_stems(args.input)) {
        const gpp::Volume v = gpp::load_volume(stem);
        std::vector<int> votes;
        for (const auto& tm : models) votes.push_back(gpp::detect_volume(tm, v, params).gppi_pred);
        gpp::PredictionRow row;
        row.volume_id = v.id;
        row.gppi_pred = gpp::ensemble_predictions(votes);
        row.method = args.method;
        row.model_id = model_id;
        preds.push_back(std::move(row));
    }
    std::sort(preds.begin(), preds.end(),
              [](const gpp::PredictionRow& a, const gpp::PredictionRow& b) {
                  return a.volume_id < b.volume_id;
              });

    fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    gpp::write_predictions_csv(out_path, preds);

    json config = params_json(params);
    config["method"] = args.method;
    config["input"] = args.input;
    config["models"] = args.models;
    config["models2"] = args.models2;
    const fs::path manifest_path =
        manifest.empty() ? manifest_default_for(out_path, false) : fs::path(manifest);
    gpp::write_manifest(manifest_path, "detect", config, {out_path});
    std::cout << "detected " << preds.size() << " volumes -> " << args.out << "\n";
    return 0;
}

int run_eval(const EvalArgs& args, const std::string& manifest) {
    const auto preds = gpp::read_predictions_csv(args.pred);
    const auto truths = gpp::read_truth_csv(args.truth);
    const auto report = gpp::evaluate_predictions(preds, truths);

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);
    gpp::write_report_csv(out_dir / "report.csv", report);
    gpp::write_summary_csv(out_dir / "summary.csv", {report});

    json config;
    config["pred"] = args.pred;
    config["truth"] = args.truth;
    config["out"] = args.out;
    const fs::path manifest_path =
        manifest.empty() ? out_dir / "manifest.json" : fs::path(manifest);
    gpp::write_manifest(manifest_path, "eval", config,
                        {out_dir / "report.csv", out_dir / "summary.csv"});

    char line[128];
    std::snprintf(line, sizeof(line), "%s: mean %.3f, std %.3f, sum %.3f, mae %.2f\n",
                  report.method.c_str(), report.mean_score, report.std_score, report.sum_score,
                  report.mae);
    std::cout << line;
    return 0;
}

int run_rank(const RankArgs& args, const std::string& manifest) {
    const auto truths = gpp::read_truth_csv(args.truth);
    std::vector<gpp::ScoreReport> reports;
    for (const auto& pred_path : args.preds) {
        auto preds = gpp::read_predictions_csv(pred_path);
        auto report = gpp::evaluate_predictions(preds, truths);
        if (report.method.empty()) report.method = fs::path(pred_path).stem().string();
        reports.push_back(std::move(report));
    }
    const auto ranked = gpp::rank_teams(reports);

    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);
    gpp::write_summary_csv(out_dir / "summary.csv", ranked);
    const std::string board = gpp::leaderboard_text(ranked);
    gpp::write_file_text(out_dir / "leaderboard.txt", board);

    json config;
    config["preds"] = args.preds;
    config["truth"] = args.truth;
    config["out"] = args.out;
    const fs::path manifest_path =
        manifest.empty() ? out_dir / "manifest.json" : fs::path(manifest);
    gpp::write_manifest(manifest_path, "rank", config,
                        {out_dir / "summary.csv", out_dir / "leaderboard.txt"});
    std::cout << board;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"growth-plate-plane detection pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a config file");
    app.allow_config_extras(false);

    std::string manifest;
    app.add_option("--manifest", manifest, "manifest output path (default: next to the outputs)");

    PhantomArgs phantom;
    auto* cmd_phantom = app.add_subcommand("phantom", "generate a labeled synthetic dataset");
    cmd_phantom->add_option("--out", phantom.out, "output directory")->required();
    cmd_phantom->add_option("--count", phantom.count, "number of volumes");
    cmd_phantom->add_option("--seed", phantom.seed, "master seed");
    cmd_phantom->add_option("--nx", phantom.nx, "x dimension");
    cmd_phantom->add_option("--ny", phantom.ny, "y dimension");
    cmd_phantom->add_option("--nz", phantom.nz, "z dimension (bone long axis)");
    cmd_phantom->add_option("--gppi", phantom.gppi, "base growth plane index");
    cmd_phantom->add_option("--gppi-jitter", phantom.gppi_jitter, "uniform +- jitter on gppi");
    cmd_phantom->add_option("--radius", phantom.radius, "protrusion disk radius (voxels)");
    cmd_phantom->add_option("--radius-jitter", phantom.radius_jitter, "uniform +- jitter on radius");
    cmd_phantom->add_option("--span", phantom.span, "four-blob planes before the growth plane");
    cmd_phantom->add_option("--shaft-radius", phantom.shaft_radius, "shaft disk radius (voxels)");
    cmd_phantom->add_option("--bone-hu", phantom.bone_hu, "bone intensity");
    cmd_phantom->add_option("--air-hu", phantom.air_hu, "background intensity");
    cmd_phantom->add_option("--noise", phantom.noise, "gaussian noise sigma (HU)");

    PrepArgs prep;
    auto* cmd_prep = app.add_subcommand("prep", "clip / crop-pad / resize volumes");
    cmd_prep->add_option("--input", prep.input, "input directory")
        ->envname("GPP_DATA_DIR")
        ->required();
    cmd_prep->add_option("--out", prep.out, "output directory")->required();
    cmd_prep->add_option("--clip", prep.clip, "HU clip range LO HI")->expected(2);
    cmd_prep->add_option("--crop-pad", prep.crop_pad, "center crop/pad to TX TY")->expected(2);
    cmd_prep->add_option("--fill", prep.fill, "pad fill HU");
    cmd_prep->add_option("--resize", prep.resize_xy, "resize xy planes to TX TY")->expected(2);
    cmd_prep->add_option("--mode", prep.mode, "resize interpolation: area | linear");

    TrainArgs train;
    auto* cmd_train = app.add_subcommand("train", "train a detector");
    cmd_train->add_option("--method", train.method, "detector method")
        ->required()
        ->check(CLI::IsMember(gpp::method_names()));
    cmd_train->add_option("--data", train.data, "dataset directory (GPV + truth.csv)")
        ->envname("GPP_DATA_DIR")
        ->required();
    cmd_train->add_option("--out", train.out, "model output (.gpm)")->required();
    cmd_train->add_option("--out2", train.out2, "blob-refine regressor output (.gpm)");
    cmd_train->add_option("--seed", train.seed, "training seed");
    cmd_train->add_option("--folds", train.folds, "k for fold-complement training (0 = all data)");
    cmd_train->add_option("--fold", train.fold, "held-out fold index");
    cmd_train->add_option("--epochs", train.epochs, "override epochs");
    cmd_train->add_option("--batch", train.batch, "override batch size");
    cmd_train->add_option("--lr", train.lr, "override learning rate");
    cmd_train->add_option("--window", train.window, "override window length");
    cmd_train->add_option("--stride", train.stride, "override window stride");

    DetectArgs detect;
    auto* cmd_detect = app.add_subcommand("detect", "predict growth plane indices");
    cmd_detect->add_option("--method", detect.method, "detector method")
        ->required()
        ->check(CLI::IsMember(gpp::method_names()));
    cmd_detect->add_option("--input", detect.input, "directory of GPV volumes")
        ->envname("GPP_DATA_DIR")
        ->required();
    cmd_detect->add_option("--out", detect.out, "predictions CSV")->required();
    cmd_detect->add_option("--model", detect.models, "model file (repeat for an ensemble)")
        ->required();
    cmd_detect->add_option("--model2", detect.models2,
                           "blob-refine regressor file (one per --model)");
    cmd_detect->add_option("--window", detect.window, "override window length");
    cmd_detect->add_option("--stride", detect.stride, "override window stride");

    EvalArgs eval_args;
    auto* cmd_eval = app.add_subcommand("eval", "score predictions against truth");
    cmd_eval->add_option("--pred", eval_args.pred, "predictions CSV")->required();
    cmd_eval->add_option("--truth", eval_args.truth, "truth CSV")->required();
    cmd_eval->add_option("--out", eval_args.out, "report directory")->required();

    RankArgs rank;
    auto* cmd_rank = app.add_subcommand("rank", "rank several prediction sets");
    cmd_rank->add_option("--pred", rank.preds, "predictions CSV (repeatable)")->required();
    cmd_rank->add_option("--truth", rank.truth, "truth CSV")->required();
    cmd_rank->add_option("--out", rank.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (cmd_phantom->parsed()) return run_phantom(phantom, manifest);
        if (cmd_prep->parsed()) return run_prep(prep, manifest);
        if (cmd_train->parsed()) return run_train(train, manifest);
        if (cmd_detect->parsed()) return run_detect(detect, manifest);
        if (cmd_eval->parsed()) return run_eval(eval_args, manifest);
        if (cmd_rank->parsed()) return run_rank(rank, manifest);
        std::cerr << "no subcommand given\n";
        return 1;
    } catch (const gpp::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
