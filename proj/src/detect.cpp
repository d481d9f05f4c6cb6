#include "gpp/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gpp/rng.hpp"

namespace gpp {

namespace {

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline int round_half_away(double x) {
    return static_cast<int>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

}  // namespace

WindowTarget encode_window_targets(int gppi, int window_start, int window_len, WindowScheme scheme) {
    if (window_len < 1) throw std::invalid_argument("encode_window_targets: window_len must be >= 1");
    WindowTarget target;
    if (scheme == WindowScheme::sn) {
        target.contains = gppi >= window_start && gppi < window_start + window_len;
        if (target.contains)
            target.offset_frac = static_cast<double>(gppi - window_start) / window_len;
    } else {
        const double center = window_start + window_len / 2.0;
        const double half = window_len / 2.0;
        const bool inside = gppi >= window_start && gppi < window_start + window_len;
        if (inside) target.p_linear = std::max(0.0, 1.0 - std::abs(gppi - center) / half);
        target.contains = inside;
    }
    return target;
}

std::vector<int> window_starts(int nz, int window_len, int stride) {
    if (window_len > nz) throw std::invalid_argument("window_starts: window longer than volume");
    if (stride < 1) throw std::invalid_argument("window_starts: stride must be >= 1");
    std::vector<int> starts;
    for (int s = 0; s + window_len <= nz; s += stride) starts.push_back(s);
    if (starts.empty() || starts.back() != nz - window_len) starts.push_back(nz - window_len);
    return starts;
}

Detection sliding_window_detect(const Volume& v, const WindowScorer& scorer, int window_len,
                                int stride, WindowScheme scheme) {
    const auto starts = window_starts(v.nz, window_len, stride);

    Detection det;
    det.volume_id = v.id;
    det.method = scheme == WindowScheme::sn ? "window-sn" : "window-bm";

    double best = 0.0;
    double best_offset_logit = 0.0;
    int best_start = -1;
    for (const int start : starts) {
        const auto [score, offset_logit] = scorer(start, window_len);
        det.trace.emplace_back(start, score);
        if (best_start < 0 || score > best) {  // ties keep the lowest start
            best = score;
            best_offset_logit = offset_logit;
            best_start = start;
        }
    }

    if (scheme == WindowScheme::sn) {
        det.gppi_pred = best_start + round_half_away(sigmoid(best_offset_logit) * window_len);
    } else {
        det.gppi_pred = round_half_away(best_start + window_len / 2.0);
    }
    det.gppi_pred = std::clamp(det.gppi_pred, 0, v.nz - 1);
    return det;
}

Detection sliding_window_detect(const Volume& v, const MicroNet& net, int window_len, int stride,
                                WindowScheme scheme, const ClipRange& clip) {
    if (net.config.in_c != window_len)
        throw std::invalid_argument("sliding_window_detect: net channels != window_len");
    const int hw = net.config.in_h;
    const WindowScorer scorer = [&](int start, int len) -> std::array<double, 2> {
        const Tensor x = window_input(v, start, len, hw, clip);
        const Tensor out = forward(net, x);
        if (scheme == WindowScheme::bm) return {out.data[0], 0.0};
        return {out.data[0], out.data[1]};  // raw [objectness_logit, offset_logit]
    };
    return sliding_window_detect(v, scorer, window_len, stride, scheme);
}

std::vector<int> close_binary_sequence(const std::vector<int>& seq, int kernel) {
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("close_binary_sequence: kernel must be odd and >= 1");
    const int n = static_cast<int>(seq.size());
    if (n == 0) return {};
    const int h = kernel / 2;

    // dist[i] = distance to the nearest 1 (beyond any bound when none).
    const int inf = n + kernel;
    std::vector<int> dist(static_cast<std::size_t>(n), inf);
    for (int i = 0; i < n; ++i)
        if (seq[static_cast<std::size_t>(i)]) dist[static_cast<std::size_t>(i)] = 0;
    for (int i = 1; i < n; ++i)
        dist[static_cast<std::size_t>(i)] =
            std::min(dist[static_cast<std::size_t>(i)], dist[static_cast<std::size_t>(i - 1)] + 1);
    for (int i = n - 2; i >= 0; --i)
        dist[static_cast<std::size_t>(i)] =
            std::min(dist[static_cast<std::size_t>(i)], dist[static_cast<std::size_t>(i + 1)] + 1);

    // With replicated borders, the closed value at i is 1 exactly when every
    // position within h of i (clamped) has a 1 within h of it.
    std::vector<int> out(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - h);
        const int hi = std::min(n - 1, i + h);
        for (int j = lo; j <= hi; ++j) {
            if (dist[static_cast<std::size_t>(j)] > h) {
                out[static_cast<std::size_t>(i)] = 0;
                break;
            }
        }
    }
    return out;
}

int decode_last_before(const std::vector<int>& seq) {
    if (seq.empty()) throw std::invalid_argument("decode_last_before: empty sequence");
    for (int i = static_cast<int>(seq.size()) - 1; i >= 0; --i)
        if (seq[static_cast<std::size_t>(i)]) return i;
    throw std::runtime_error("decode_last_before: no plane classified as 'before'");
}

int count_blobs(const Plane2D& p, double hu_threshold) {
    const int w = p.width, h = p.height;
    std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
    std::vector<int> stack;
    int components = 0;
    for (int start = 0; start < w * h; ++start) {
        if (seen[static_cast<std::size_t>(start)] || p.values[static_cast<std::size_t>(start)] < hu_threshold)
            continue;
        ++components;
        stack.assign(1, start);
        seen[static_cast<std::size_t>(start)] = 1;
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            const int x = cur % w, y = cur / w;
            const int neighbors[4] = {cur - 1, cur + 1, cur - w, cur + w};
            const bool valid[4] = {x > 0, x < w - 1, y > 0, y < h - 1};
            for (int d = 0; d < 4; ++d) {
                if (!valid[d]) continue;
                const int nb = neighbors[d];
                if (!seen[static_cast<std::size_t>(nb)] &&
                    p.values[static_cast<std::size_t>(nb)] >= hu_threshold) {
                    seen[static_cast<std::size_t>(nb)] = 1;
                    stack.push_back(nb);
                }
            }
        }
    }
    return components;
}

Detection blob_rough_then_refine(const Volume& v, const PlanePredicate& plane_positive,
                                 const StackFraction& stack_fraction, int half_span) {
    const int count = 2 * half_span + 1;
    if (count > v.nz) throw std::invalid_argument("blob_rough_then_refine: span exceeds volume");

    Detection det;
    det.volume_id = v.id;
    det.method = "blob-refine";

    int rough = -1;
    for (int z = 0; z < v.nz; ++z) {
        const bool positive = plane_positive(v, z);
        det.trace.emplace_back(z, positive ? 1.0 : 0.0);
        if (positive) rough = z;
    }
    if (rough < 0) throw std::runtime_error("blob_rough_then_refine: no positive plane found");

    int start = rough - half_span;
    const int clamped = std::clamp(start, 0, v.nz - count);
    if (clamped != start) det.flag = "clamped";
    start = clamped;

    const double f = std::clamp(stack_fraction(v, start, count), 0.0, 1.0);
    det.gppi_pred = start + round_half_away(f * (2 * half_span));
    det.gppi_pred = std::clamp(det.gppi_pred, 0, v.nz - 1);
    return det;
}

Detection blob_rough_then_refine(const Volume& v, const MicroNet& classifier,
                                 const MicroNet& regressor, int half_span, const ClipRange& clip) {
    if (regressor.config.in_c != 2 * half_span + 1)
        throw std::invalid_argument("blob_rough_then_refine: regressor channels != 2*half_span+1");
    const int cls_hw = classifier.config.in_h;
    const int reg_hw = regressor.config.in_h;

    const PlanePredicate plane_positive = [&](const Volume& vol, int plane) {
        const Tensor x = plane_input(vol, plane, cls_hw, clip);
        const Tensor out = forward(classifier, x);
        // class 1 = four-blob plane
        return out.size() == 1 ? out.data[0] >= 0.5 : out.data[1] >= 0.5;
    };
    const StackFraction stack_fraction = [&](const Volume& vol, int start, int count) {
        const Tensor x = window_input(vol, start, count, reg_hw, clip);
        return forward(regressor, x).data[0];
    };
    return blob_rough_then_refine(v, plane_positive, stack_fraction, half_span);
}

Detection coarse_to_fine_regress(const Volume& v, const FractionScorer& scorer, int crop_len) {
    if (crop_len >= v.nz) throw std::invalid_argument("coarse_to_fine_regress: crop_len must be < nz");
    if (crop_len < 2) throw std::invalid_argument("coarse_to_fine_regress: degenerate crop");

    Detection det;
    det.volume_id = v.id;
    det.method = "long-axis";

    const double f1 = std::clamp(scorer(v, 0, v.nz), 0.0, 1.0);
    const int coarse = std::clamp(round_half_away(f1 * v.nz), 0, v.nz - 1);
    det.trace.emplace_back(coarse, f1);

    const int crop_start = std::clamp(coarse - crop_len / 2, 0, v.nz - crop_len);
    const double f2 = std::clamp(scorer(v, crop_start, crop_start + crop_len), 0.0, 1.0);
    det.trace.emplace_back(crop_start, f2);

    det.gppi_pred = std::clamp(crop_start + round_half_away(f2 * crop_len), 0, v.nz - 1);
    return det;
}

Detection coarse_to_fine_regress(const Volume& v, const MicroNet& net, int crop_len,
                                 const LongAxisParams& params) {
    if (net.config.in_c != params.channels)
        throw std::invalid_argument("coarse_to_fine_regress: net channels != params.channels");
    const int hw = net.config.in_h;

    const FractionScorer scorer = [&](const Volume& vol, int z0, int z1) {
        double acc = 0.0;
        for (int i = 0; i < params.eval_stacks; ++i) {
            Rng rng(derive_seed(params.seed, vol.id + ":long-axis:" + std::to_string(z0) + ":" +
                                                 std::to_string(z1),
                                i));
            const ChannelStack stack =
                mh_channel_stack(vol, std::nullopt, params.channels, params.inner_frac, rng);
            const Tensor x = stack_input(stack, z0, z1, hw, params.clip);
            acc += forward(net, x).data[0];
        }
        return acc / params.eval_stacks;
    };
    return coarse_to_fine_regress(v, scorer, crop_len);
}

int ensemble_predictions(const std::vector<int>& preds) {
    if (preds.empty()) throw std::invalid_argument("ensemble_predictions: empty input");
    double sum = 0.0;
    for (const int p : preds) sum += p;
    return round_half_away(sum / static_cast<double>(preds.size()));
}

Plane2D resize_to_square(const Plane2D& p, int hw) {
    if (p.width == hw && p.height == hw) return p;
    const bool area_ok = p.width % hw == 0 && p.height % hw == 0;
    return resize(p, hw, hw, area_ok ? ResizeMode::area : ResizeMode::linear);
}

Tensor stack_to_tensor(const ChannelStack& stack) {
    const int h = stack.height, w = stack.width;
    const int c = static_cast<int>(stack.channels.size());
    Tensor x({h, w, c});
    for (int ch = 0; ch < c; ++ch) {
        const auto& values = stack.channels[static_cast<std::size_t>(ch)];
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                x.data[(static_cast<std::size_t>(y) * w + xx) * c + ch] =
                    values[static_cast<std::size_t>(y) * w + xx];
    }
    return x;
}

ChannelStack axial_window_stack(const Volume& v, int start, int len, int hw, const ClipRange& clip) {
    if (start < 0 || len < 1 || start + len > v.nz)
        throw std::invalid_argument("axial_window_stack: window out of range");
    ChannelStack stack;
    stack.axis = Axis::axial;
    stack.width = hw;
    stack.height = hw;
    for (int z = start; z < start + len; ++z) {
        stack.source_indices.push_back(z);
        stack.channels.push_back(
            normalize_unit(resize_to_square(extract_plane(v, Axis::axial, z), hw), clip).values);
    }
    return stack;
}

Tensor plane_input(const Volume& v, int plane, int hw, const ClipRange& clip) {
    return stack_to_tensor(axial_window_stack(v, plane, 1, hw, clip));
}

Tensor window_input(const Volume& v, int start, int len, int hw, const ClipRange& clip) {
    return stack_to_tensor(axial_window_stack(v, start, len, hw, clip));
}

Tensor stack_input(const ChannelStack& stack, int z0, int z1, int hw, const ClipRange& clip) {
    if (z0 < 0 || z1 > stack.height || z1 - z0 < 1)
        throw std::invalid_argument("stack_input: bad z range");
    ChannelStack prepared;
    prepared.axis = stack.axis;
    prepared.width = hw;
    prepared.height = hw;
    prepared.source_indices = stack.source_indices;
    for (const auto& channel : stack.channels) {
        Plane2D p;
        p.width = stack.width;
        p.height = z1 - z0;
        p.axis = stack.axis;
        p.values.assign(channel.begin() + static_cast<std::ptrdiff_t>(z0) * stack.width,
                        channel.begin() + static_cast<std::ptrdiff_t>(z1) * stack.width);
        prepared.channels.push_back(normalize_unit(resize_to_square(p, hw), clip).values);
    }
    return stack_to_tensor(prepared);
}

}  // namespace gpp
