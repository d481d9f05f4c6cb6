#include "gpp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gpp/common.hpp"
#include "gpp/csv.hpp"
#include "gpp/rng.hpp"

namespace gpp {

std::vector<LabeledVolume> load_labeled_dataset(const std::filesystem::path& dir) {
    const auto truths = read_truth_csv(dir / "truth.csv");
    std::vector<LabeledVolume> items;
    items.reserve(truths.size());
    for (const auto& t : truths) {
        LabeledVolume item;
        item.volume = load_volume(dir / t.volume_id);
        item.gppi = t.gppi;
        item.study = t.study;
        if (item.gppi < 0 || item.gppi >= item.volume.nz)
            throw InputError("truth gppi outside volume " + t.volume_id);
        items.push_back(std::move(item));
    }
    if (items.empty()) throw InputError("dataset is empty: " + dir.string());
    return items;
}

MethodParams default_params(const std::string& method) {
    MethodParams params;
    if (method == "axial-close") {
        params.epochs = 8;
    } else if (method == "blob-refine") {
        params.epochs = 8;  // classifier; the regressor trains 50% longer
        params.stacks_per_volume = 6;
    } else if (method == "window-bm") {
        params.epochs = 10;
        params.stride = 1;
    } else if (method == "window-sn") {
        params.epochs = 12;
        params.stride = 16;
    } else if (method == "long-axis") {
        params.epochs = 15;
        params.stacks_per_volume = 4;
    } else {
        throw InputError("unknown method: " + method);
    }
    return params;
}

MicroNetConfig micro_config(int hw, int in_c, int out, HeadKind head, bool squash) {
    if (hw % 8 != 0) throw std::invalid_argument("micro_config: hw must be divisible by 8");
    MicroNetConfig config;
    config.in_h = hw;
    config.in_w = hw;
    config.in_c = in_c;
    config.layers = {
        LayerSpec::conv(3, 8),  LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::conv(3, 16), LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::conv(3, 24), LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::flatten(),   LayerSpec::dense(out),
    };
    config.head = head;
    config.squash = squash;
    config.param_budget = 40000;
    return config;
}

namespace {

Tensor one_hot2(bool positive) {
    Tensor t({2});
    t.data[positive ? 1 : 0] = 1.0;
    return t;
}

Tensor scalar_tensor(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

// One of {identity, flip_h, flip_v, rot90}, drawn from rng. Square inputs
// only (all axial stacks here are square).
ChannelStack random_plane_augment(const ChannelStack& stack, Rng& rng) {
    switch (rng.uniform_int(0, 3)) {
        case 1: return geometric_augment(stack, GeomOp::flip_h, 0.0, rng);
        case 2: return geometric_augment(stack, GeomOp::flip_v, 0.0, rng);
        case 3: return geometric_augment(stack, GeomOp::rot90, 0.0, rng);
        default: return stack;
    }
}

int clamp_plane(int z, int nz) { return std::clamp(z, 0, nz - 1); }

TrainSchedule make_schedule(const MethodParams& params, LossKind loss, std::uint64_t seed,
                            int epochs) {
    TrainSchedule schedule;
    schedule.epochs = epochs;
    schedule.segments = {{(epochs * 2) / 3, params.lr}, {epochs, params.lr * 0.5}};
    schedule.batch = params.batch;
    schedule.seed = seed;
    schedule.decoupled_decay = params.weight_decay;
    schedule.loss.kind = loss;
    return schedule;
}

}  // namespace

std::vector<TrainSample> build_axial_close_samples(const std::vector<const LabeledVolume*>& train,
                                                   const MethodParams& params, std::uint64_t seed) {
    std::vector<TrainSample> samples;
    for (const auto* item : train) {
        Rng rng(derive_seed(seed, item->volume.id + ":axial-close"));
        const int nz = item->volume.nz;
        for (int i = 0; i < params.planes_per_volume; ++i) {
            const bool near = i % 2 == 0;
            const int z = near ? clamp_plane(item->gppi + static_cast<int>(rng.uniform_int(-8, 8)), nz)
                               : static_cast<int>(rng.uniform_int(0, nz - 1));
            ChannelStack stack =
                axial_window_stack(item->volume, z, 1, params.plane_hw, params.clip);
            stack = random_plane_augment(stack, rng);
            TrainSample sample;
            sample.x = stack_to_tensor(stack);
            sample.target = one_hot2(z <= item->gppi);  // 'before' includes the plane itself
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

std::vector<TrainSample> build_blob_classifier_samples(const std::vector<const LabeledVolume*>& train,
                                                       const MethodParams& params,
                                                       std::uint64_t seed) {
    std::vector<TrainSample> samples;
    for (const auto* item : train) {
        Rng rng(derive_seed(seed, item->volume.id + ":blob-cls"));
        const int nz = item->volume.nz;
        for (int i = 0; i < params.planes_per_volume; ++i) {
            // Boundary-heavy sampling; the label comes from counting blobs
            // on the full-resolution plane, not from the annotation.
            const bool near = i % 2 == 0;
            const int z = near ? clamp_plane(item->gppi + static_cast<int>(rng.uniform_int(-24, 8)), nz)
                               : static_cast<int>(rng.uniform_int(0, nz - 1));
            const bool four_blobs =
                count_blobs(extract_plane(item->volume, Axis::axial, z), params.blob_threshold_hu) == 4;
            ChannelStack stack =
                axial_window_stack(item->volume, z, 1, params.plane_hw, params.clip);
            stack = random_plane_augment(stack, rng);
            TrainSample sample;
            sample.x = stack_to_tensor(stack);
            sample.target = one_hot2(four_blobs);
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

std::vector<TrainSample> build_blob_regressor_samples(const std::vector<const LabeledVolume*>& train,
                                                      const MethodParams& params,
                                                      std::uint64_t seed) {
    const int count = 2 * params.half_span + 1;
    std::vector<TrainSample> samples;
    for (const auto* item : train) {
        Rng rng(derive_seed(seed, item->volume.id + ":blob-reg"));
        const int nz = item->volume.nz;
        if (count > nz) throw std::invalid_argument("blob regressor: span exceeds volume");
        for (int i = 0; i < params.stacks_per_volume; ++i) {
            const int center = item->gppi + static_cast<int>(
                                                rng.uniform_int(-params.half_span, params.half_span));
            const int start = std::clamp(center - params.half_span, 0, nz - count);
            const double label =
                static_cast<double>(item->gppi - start) / (2.0 * params.half_span);
            if (label < 0.0 || label > 1.0) continue;  // growth plane too close to a volume end
            ChannelStack stack =
                axial_window_stack(item->volume, start, count, params.reg_hw, params.clip);
            stack = random_plane_augment(stack, rng);
            TrainSample sample;
            sample.x = stack_to_tensor(stack);
            sample.target = scalar_tensor(label);
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

std::vector<TrainSample> build_window_samples(const std::vector<const LabeledVolume*>& train,
                                              const MethodParams& params, WindowScheme scheme,
                                              std::uint64_t seed) {
    const int len = params.window_len;
    std::vector<TrainSample> samples;
    for (const auto* item : train) {
        Rng rng(derive_seed(seed, item->volume.id + ":window"));
        const int nz = item->volume.nz;
        if (len > nz) throw std::invalid_argument("window samples: window longer than volume");
        for (int i = 0; i < params.windows_per_volume; ++i) {
            int start;
            if (i % 2 == 0) {  // containing window
                start = std::clamp(item->gppi - static_cast<int>(rng.uniform_int(0, len - 1)), 0,
                                   nz - len);
            } else {
                start = static_cast<int>(rng.uniform_int(0, nz - len));
                for (int tries = 0; tries < 64; ++tries) {
                    if (item->gppi < start || item->gppi >= start + len) break;
                    start = static_cast<int>(rng.uniform_int(0, nz - len));
                }
            }
            const WindowTarget target = encode_window_targets(item->gppi, start, len, scheme);
            ChannelStack stack =
                axial_window_stack(item->volume, start, len, params.window_hw, params.clip);
            stack = random_plane_augment(stack, rng);
            TrainSample sample;
            sample.x = stack_to_tensor(stack);
            if (scheme == WindowScheme::bm) {
                sample.target = scalar_tensor(target.p_linear);
            } else {
                sample.target = Tensor({2});
                sample.target.data[0] = target.contains ? 1.0 : 0.0;
                sample.target.data[1] = target.contains ? target.offset_frac : 0.0;
                sample.mask = target.contains ? 1.0 : 0.0;
            }
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

std::vector<TrainSample> build_long_axis_samples(const std::vector<const LabeledVolume*>& train,
                                                 const MethodParams& params, std::uint64_t seed) {
    std::vector<TrainSample> samples;
    const int n_full = params.stacks_per_volume / 2;
    const int n_crop = params.stacks_per_volume - n_full;
    for (const auto* item : train) {
        Rng rng(derive_seed(seed, item->volume.id + ":long-axis"));
        const int nz = item->volume.nz;
        if (params.crop_len >= nz) throw std::invalid_argument("long-axis: crop_len must be < nz");

        for (int i = 0; i < n_full; ++i) {
            // Half the full-length passes see an axially displaced copy so
            // the label distribution covers the whole z range.
            const Volume* vol = &item->volume;
            int gppi = item->gppi;
            Volume displaced;
            if (i % 2 == 1) {
                const int margin = nz / 8;
                const int lo = std::max(-margin, -item->gppi);
                const int hi = std::min(margin, nz - 1 - item->gppi);
                const int shift = static_cast<int>(rng.uniform_int(lo, hi));
                GppAnnotation ann{item->volume.id, item->gppi, "truth"};
                NoiseSpec background{static_cast<double>(params.clip.lo), params.noise_sigma};
                auto [vol_shifted, ann_shifted] =
                    axial_displace_augment(item->volume, ann, shift, background, rng);
                displaced = std::move(vol_shifted);
                gppi = ann_shifted.gppi;
                vol = &displaced;
            }
            ChannelStack stack = mh_channel_stack(*vol, gppi, params.channels, params.inner_frac, rng);
            if (rng.uniform() < 0.5) stack = geometric_augment(stack, GeomOp::flip_h, 0.0, rng);
            TrainSample sample;
            sample.x = stack_input(stack, 0, nz, params.long_hw, params.clip);
            sample.target = scalar_tensor(stack.label);
            samples.push_back(std::move(sample));
        }

        for (int i = 0; i < n_crop; ++i) {
            const int start = std::clamp(
                item->gppi - static_cast<int>(rng.uniform_int(0, params.crop_len - 1)), 0,
                nz - params.crop_len);
            ChannelStack stack =
                mh_channel_stack(item->volume, item->gppi, params.channels, params.inner_frac, rng);
            if (rng.uniform() < 0.5) stack = geometric_augment(stack, GeomOp::flip_h, 0.0, rng);
            TrainSample sample;
            sample.x = stack_input(stack, start, start + params.crop_len, params.long_hw, params.clip);
            sample.target =
                scalar_tensor(static_cast<double>(item->gppi - start) / params.crop_len);
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

TrainedMethod train_method(const std::string& method,
                           const std::vector<const LabeledVolume*>& training,
                           const MethodParams& params, std::uint64_t seed) {
    if (training.empty()) throw std::invalid_argument("train_method: empty training set");
    TrainedMethod out;
    out.method = method;

    if (method == "axial-close") {
        MicroNet net = build_micronet(
            micro_config(params.plane_hw, 1, 2, HeadKind::binary_classifier, false),
            derive_seed(seed, "axial-close-init"));
        const auto samples =
            build_axial_close_samples(training, params, derive_seed(seed, "axial-close-samples"));
        train(net, samples,
              make_schedule(params, LossKind::ce, derive_seed(seed, "axial-close-train"),
                            params.epochs));
        out.nets.push_back(std::move(net));
    } else if (method == "blob-refine") {
        MicroNet cls = build_micronet(
            micro_config(params.plane_hw, 1, 2, HeadKind::binary_classifier, false),
            derive_seed(seed, "blob-cls-init"));
        const auto cls_samples =
            build_blob_classifier_samples(training, params, derive_seed(seed, "blob-cls-samples"));
        train(cls, cls_samples,
              make_schedule(params, LossKind::ce, derive_seed(seed, "blob-cls-train"),
                            params.epochs));

        MicroNet reg = build_micronet(
            micro_config(params.reg_hw, 2 * params.half_span + 1, 1, HeadKind::scalar_regressor,
                         true),
            derive_seed(seed, "blob-reg-init"));
        const auto reg_samples =
            build_blob_regressor_samples(training, params, derive_seed(seed, "blob-reg-samples"));
        train(reg, reg_samples,
              make_schedule(params, LossKind::mse, derive_seed(seed, "blob-reg-train"),
                            params.epochs + params.epochs / 2));
        out.nets.push_back(std::move(cls));
        out.nets.push_back(std::move(reg));
    } else if (method == "window-bm") {
        MicroNet net = build_micronet(
            micro_config(params.window_hw, params.window_len, 1, HeadKind::binary_classifier, false),
            derive_seed(seed, "window-bm-init"));
        const auto samples = build_window_samples(training, params, WindowScheme::bm,
                                                  derive_seed(seed, "window-bm-samples"));
        train(net, samples,
              make_schedule(params, LossKind::bce, derive_seed(seed, "window-bm-train"),
                            params.epochs));
        out.nets.push_back(std::move(net));
    } else if (method == "window-sn") {
        MicroNet net = build_micronet(
            micro_config(params.window_hw, params.window_len, 2, HeadKind::scalar_regressor, false),
            derive_seed(seed, "window-sn-init"));
        const auto samples = build_window_samples(training, params, WindowScheme::sn,
                                                  derive_seed(seed, "window-sn-samples"));
        train(net, samples,
              make_schedule(params, LossKind::sn_combined, derive_seed(seed, "window-sn-train"),
                            params.epochs));
        out.nets.push_back(std::move(net));
    } else if (method == "long-axis") {
        MicroNet net = build_micronet(
            micro_config(params.long_hw, params.channels, 1, HeadKind::scalar_regressor, true),
            derive_seed(seed, "long-axis-init"));
        const auto samples =
            build_long_axis_samples(training, params, derive_seed(seed, "long-axis-samples"));
        train(net, samples,
              make_schedule(params, LossKind::mse, derive_seed(seed, "long-axis-train"),
                            params.epochs));
        out.nets.push_back(std::move(net));
    } else {
        throw InputError("unknown method: " + method);
    }
    return out;
}

Detection detect_volume(const TrainedMethod& models, const Volume& v, const MethodParams& params) {
    const std::string& method = models.method;
    if (method == "axial-close") {
        const MicroNet& net = models.nets.at(0);
        // Classification restricted to the z range that actually holds bone.
        const auto [z0, z1] =
            bone_extent_zrange(v, ClipRange{params.blob_threshold_hu, 32767}, 0.03);
        Detection det;
        det.volume_id = v.id;
        det.method = method;
        std::vector<int> before;
        for (int z = z0; z <= z1; ++z) {
            const Tensor out = forward(net, plane_input(v, z, net.config.in_h, params.clip));
            const double p_before = out.data[1];
            before.push_back(p_before >= 0.5 ? 1 : 0);
            det.trace.emplace_back(z, p_before);
        }
        const auto closed = close_binary_sequence(before, params.close_kernel);
        det.gppi_pred = z0 + decode_last_before(closed);
        return det;
    }
    if (method == "blob-refine")
        return blob_rough_then_refine(v, models.nets.at(0), models.nets.at(1), params.half_span,
                                      params.clip);
    if (method == "window-bm")
        return sliding_window_detect(v, models.nets.at(0), params.window_len, params.stride,
                                     WindowScheme::bm, params.clip);
    if (method == "window-sn")
        return sliding_window_detect(v, models.nets.at(0), params.window_len, params.stride,
                                     WindowScheme::sn, params.clip);
    if (method == "long-axis") {
        LongAxisParams lap;
        lap.clip = params.clip;
        lap.channels = params.channels;
        lap.inner_frac = params.inner_frac;
        lap.eval_stacks = params.eval_stacks;
        return coarse_to_fine_regress(v, models.nets.at(0), params.crop_len, lap);
    }
    throw InputError("unknown method: " + method);
}

}  // namespace gpp
