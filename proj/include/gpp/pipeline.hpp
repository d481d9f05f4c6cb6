#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpp/detect.hpp"
#include "gpp/evalrank.hpp"
#include "gpp/micronet.hpp"
#include "gpp/phantom.hpp"

namespace gpp {

inline const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names = {"axial-close", "blob-refine", "window-sn",
                                                   "window-bm", "long-axis"};
    return names;
}

struct LabeledVolume {
    Volume volume;
    int gppi = 0;
    std::string study;
};

// Reads every GPV pair listed in <dir>/truth.csv.
std::vector<LabeledVolume> load_labeled_dataset(const std::filesystem::path& dir);

// Desk-scale knobs for training and decoding one method. Defaults are
// sized for 96x96x192 phantoms and minutes-long CPU training.
struct MethodParams {
    ClipRange clip{-1000, 3000};
    int blob_threshold_hu = 500;  // bone/air separation for blob counting

    int plane_hw = 32;    // plane classifier input
    int window_len = 32;  // window methods
    int window_hw = 24;
    int stride = 1;       // bm decodes every shift; sn defaults to 16
    int half_span = 25;   // blob-refine refinement span
    int reg_hw = 24;      // blob-refine regressor input
    int channels = 9;     // long-axis slices per stack
    double inner_frac = 0.5;
    int long_hw = 48;
    int crop_len = 48;
    int eval_stacks = 3;
    int close_kernel = 5;

    int epochs = 10;
    int batch = 16;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int planes_per_volume = 24;
    int windows_per_volume = 12;
    int stacks_per_volume = 4;  // long-axis: half full-length, half crops
    double noise_sigma = 50.0;  // displacement-augment background
};

MethodParams default_params(const std::string& method);

// Three-stage conv trunk (8/16/24 channels) used by the desk-scale nets;
// hw must be divisible by 8.
MicroNetConfig micro_config(int hw, int in_c, int out, HeadKind head, bool squash);

struct TrainedMethod {
    std::string method;
    std::vector<MicroNet> nets;  // [net], or [classifier, regressor] for blob-refine
};

TrainedMethod train_method(const std::string& method, const std::vector<const LabeledVolume*>& train,
                           const MethodParams& params, std::uint64_t seed);

Detection detect_volume(const TrainedMethod& models, const Volume& v, const MethodParams& params);

// Per-method training sets, exposed for reuse and inspection.
std::vector<TrainSample> build_axial_close_samples(const std::vector<const LabeledVolume*>& train,
                                                   const MethodParams& params, std::uint64_t seed);
std::vector<TrainSample> build_blob_classifier_samples(const std::vector<const LabeledVolume*>& train,
                                                       const MethodParams& params, std::uint64_t seed);
std::vector<TrainSample> build_blob_regressor_samples(const std::vector<const LabeledVolume*>& train,
                                                      const MethodParams& params, std::uint64_t seed);
std::vector<TrainSample> build_window_samples(const std::vector<const LabeledVolume*>& train,
                                              const MethodParams& params, WindowScheme scheme,
                                              std::uint64_t seed);
std::vector<TrainSample> build_long_axis_samples(const std::vector<const LabeledVolume*>& train,
                                                 const MethodParams& params, std::uint64_t seed);

}  // namespace gpp
