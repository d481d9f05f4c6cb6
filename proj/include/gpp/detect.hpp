#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gpp/micronet.hpp"
#include "gpp/prep.hpp"
#include "gpp/volume.hpp"

namespace gpp {

// Per-window supervision. The sn scheme pairs a containment flag with the
// fractional offset of the growth plane from the window start; the bm
// scheme uses a single value that is 1 for a centered growth plane and
// decays linearly to 0 at the window edge.
struct WindowTarget {
    bool contains = false;
    double offset_frac = 0.0;  // meaningful only when contains
    double p_linear = 0.0;
};

enum class WindowScheme { sn, bm };

WindowTarget encode_window_targets(int gppi, int window_start, int window_len, WindowScheme scheme);

struct Detection {
    std::string volume_id;
    int gppi_pred = 0;
    std::string method;
    std::vector<std::pair<int, double>> trace;  // per-plane or per-window scores
    std::string flag;                           // e.g. "clamped" near a volume end
};

// Window start positions: 0, stride, 2*stride, ... with a final window at
// nz - len appended when the stride pattern would leave the tail uncovered.
std::vector<int> window_starts(int nz, int window_len, int stride);

// Scores one window: [selection score, offset logit]. The bm scheme only
// reads the first slot; sn decodes the second through a logistic.
using WindowScorer = std::function<std::array<double, 2>(int start, int len)>;

Detection sliding_window_detect(const Volume& v, const WindowScorer& scorer, int window_len,
                                int stride, WindowScheme scheme);
// Net-backed variant; window planes are resized to the net input and
// normalized with `clip`. The net channel count must equal window_len.
Detection sliding_window_detect(const Volume& v, const MicroNet& net, int window_len, int stride,
                                WindowScheme scheme, const ClipRange& clip);

// 1-D morphological closing (dilation then erosion) with a centered flat
// element; borders replicate. Computed via the distance to the nearest
// positive rather than by composing the two half-operations.
std::vector<int> close_binary_sequence(const std::vector<int>& seq, int kernel);

// Largest index labeled 1 ('before'); throws when the sequence is all 0.
int decode_last_before(const std::vector<int>& seq);

// Number of 4-connected components with value >= hu_threshold.
int count_blobs(const Plane2D& p, double hu_threshold);

using PlanePredicate = std::function<bool(const Volume&, int plane)>;
using StackFraction = std::function<double(const Volume&, int start, int count)>;

// Rough estimate = last plane the classifier marks positive (four blobs);
// refined by a regressor reading the 2*half_span+1 planes around it. The
// stack window is clamped at the volume ends and the detection flagged.
Detection blob_rough_then_refine(const Volume& v, const PlanePredicate& plane_positive,
                                 const StackFraction& stack_fraction, int half_span);
Detection blob_rough_then_refine(const Volume& v, const MicroNet& classifier,
                                 const MicroNet& regressor, int half_span, const ClipRange& clip);

// Fraction of [z0, z1) where the scorer places the growth plane.
using FractionScorer = std::function<double(const Volume&, int z0, int z1)>;

Detection coarse_to_fine_regress(const Volume& v, const FractionScorer& scorer, int crop_len);

struct LongAxisParams {
    ClipRange clip{-1000, 3000};
    int channels = 9;
    double inner_frac = 0.5;
    int eval_stacks = 3;  // predictions averaged over several slice draws
    std::uint64_t seed = 7;
};

Detection coarse_to_fine_regress(const Volume& v, const MicroNet& net, int crop_len,
                                 const LongAxisParams& params);

// Rounded arithmetic mean, half away from zero.
int ensemble_predictions(const std::vector<int>& preds);

// Input construction shared by training and inference.
Plane2D resize_to_square(const Plane2D& p, int hw);  // area when divisible, else linear
Tensor stack_to_tensor(const ChannelStack& stack);   // channels-last (h, w, c)
ChannelStack axial_window_stack(const Volume& v, int start, int len, int hw, const ClipRange& clip);
Tensor plane_input(const Volume& v, int plane, int hw, const ClipRange& clip);
Tensor window_input(const Volume& v, int start, int len, int hw, const ClipRange& clip);
Tensor stack_input(const ChannelStack& stack, int z0, int z1, int hw, const ClipRange& clip);

}  // namespace gpp
