#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gpp/rng.hpp"
#include "gpp/volume.hpp"

namespace gpp {

// Hounsfield clipping window. lo < hi always.
struct ClipRange {
    int lo = 0;
    int hi = 0;
};

void validate_clip(const ClipRange& r);

// Every voxel clamped into [lo, hi]; dims unchanged. Idempotent.
Volume clip_hu(const Volume& v, const ClipRange& r);

// (clamp(v, lo, hi) - lo) / (hi - lo); every output in [0, 1].
FloatVolume normalize_unit(const Volume& v, const ClipRange& r);
Plane2D normalize_unit(const Plane2D& p, const ClipRange& r);

// Center crop when the source exceeds the target, symmetric pad with `fill`
// when smaller (the extra voxel goes on the high side for odd differences).
// The z extent is untouched.
Volume crop_or_pad_xy(const Volume& v, int tx, int ty, std::int16_t fill);

enum class ResizeMode { linear, area };

// linear: bilinear with corner-aligned sampling (a 1-wide target samples the
// source midpoint). area: mean over each s x s block; requires the source
// dims to be integer multiples of the target dims.
Plane2D resize(const Plane2D& p, int tx, int ty, ResizeMode mode);
FloatVolume resize_xy(const FloatVolume& v, int tx, int ty, ResizeMode mode);
Volume resize_xy(const Volume& v, int tx, int ty, ResizeMode mode);  // rounds back to i16

// First and last axial plane whose fraction of voxels inside bone_range
// reaches frac_threshold. Throws when no plane qualifies.
std::pair<int, int> bone_extent_zrange(const Volume& v, const ClipRange& bone_range,
                                       double frac_threshold);

struct NoiseSpec {
    double mean = -1000.0;  // air
    double sigma = 0.0;
};

// Shifts all planes by `shift` along z and fills the vacated planes with
// Gaussian background noise. The annotation moves with the planes; shifting
// it out of [0, nz) is an error.
std::pair<Volume, GppAnnotation> axial_displace_augment(const Volume& v, const GppAnnotation& ann,
                                                        int shift, const NoiseSpec& background,
                                                        Rng& rng);

enum class GeomOp { flip_h, flip_v, rot90, gauss_noise };

// c planes of equal size stacked as channels, plus the fractional gppi/nz
// label when the source annotation is known. For the two-view scheme the
// source indices are {sagittal x, coronal y, -1} with -1 marking the
// derived blend channel.
struct ChannelStack {
    int width = 0, height = 0;
    Axis axis = Axis::sagittal;
    std::vector<int> source_indices;
    std::vector<std::vector<double>> channels;
    double label = -1.0;  // gppi / nz, or -1 when unknown

    double at(int c, int row, int col) const {
        return channels[static_cast<std::size_t>(c)][static_cast<std::size_t>(row) * width + col];
    }
};

// Exact geometric transforms; rot90 is a quarter turn counterclockwise and
// requires square input. gauss_noise adds i.i.d. N(0, sigma) per element.
// In-plane ops leave an axial-plane label untouched.
Plane2D geometric_augment(const Plane2D& p, GeomOp op, double sigma, Rng& rng);
ChannelStack geometric_augment(const ChannelStack& s, GeomOp op, double sigma, Rng& rng);

// One stack of `c` distinct sorted sagittal slices drawn uniformly from the
// central inner_frac of the x extent.
ChannelStack mh_channel_stack(const Volume& v, std::optional<int> gppi, int c, double inner_frac,
                              Rng& rng);

// One 3-channel stack [sagittal, coronal, blend] per (sagittal offset,
// coronal offset) pair around the volume center; 7 offsets per axis yield
// 49 stacks. Requires nx == ny so the two views blend.
std::vector<ChannelStack> ek_channel_stacks(const Volume& v, std::optional<int> gppi,
                                            const std::vector<int>& offsets);

inline const std::vector<int>& ek_default_offsets() {
    static const std::vector<int> offsets = {-15, -10, -5, 0, 5, 10, 15};
    return offsets;
}

}  // namespace gpp
