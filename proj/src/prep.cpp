#include "gpp/prep.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gpp {

void validate_clip(const ClipRange& r) {
    if (r.lo >= r.hi) throw std::invalid_argument("clip range must have lo < hi");
}

Volume clip_hu(const Volume& v, const ClipRange& r) {
    validate_clip(r);
    Volume out = v;
    const auto lo = static_cast<std::int16_t>(r.lo);
    const auto hi = static_cast<std::int16_t>(r.hi);
    for (auto& voxel : out.voxels) voxel = std::clamp(voxel, lo, hi);
    return out;
}

FloatVolume normalize_unit(const Volume& v, const ClipRange& r) {
    validate_clip(r);
    FloatVolume out;
    out.id = v.id;
    out.nx = v.nx;
    out.ny = v.ny;
    out.nz = v.nz;
    out.spacing_um = v.spacing_um;
    out.voxels.resize(v.voxels.size());
    const double lo = r.lo;
    const double scale = 1.0 / (static_cast<double>(r.hi) - lo);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        const double clamped = std::clamp<double>(v.voxels[i], r.lo, r.hi);
        out.voxels[i] = static_cast<float>((clamped - lo) * scale);
    }
    return out;
}

Plane2D normalize_unit(const Plane2D& p, const ClipRange& r) {
    validate_clip(r);
    Plane2D out = p;
    const double lo = r.lo;
    const double scale = 1.0 / (static_cast<double>(r.hi) - lo);
    for (auto& value : out.values) value = (std::clamp<double>(value, r.lo, r.hi) - lo) * scale;
    return out;
}

Volume crop_or_pad_xy(const Volume& v, int tx, int ty, std::int16_t fill) {
    if (tx <= 0 || ty <= 0) throw std::invalid_argument("crop_or_pad_xy: target must be positive");
    Volume out;
    out.id = v.id;
    out.nx = tx;
    out.ny = ty;
    out.nz = v.nz;
    out.spacing_um = v.spacing_um;
    out.gppi = v.gppi;
    out.voxels.assign(out.voxel_count(), fill);

    // Source window start when cropping, destination offset when padding.
    const int sx = v.nx > tx ? (v.nx - tx) / 2 : 0;
    const int sy = v.ny > ty ? (v.ny - ty) / 2 : 0;
    const int dx = v.nx < tx ? (tx - v.nx) / 2 : 0;
    const int dy = v.ny < ty ? (ty - v.ny) / 2 : 0;
    const int copy_x = std::min(v.nx, tx);
    const int copy_y = std::min(v.ny, ty);

    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < copy_y; ++y)
            for (int x = 0; x < copy_x; ++x)
                out.at(dx + x, dy + y, z) = v.at(sx + x, sy + y, z);
    return out;
}

namespace {

// Corner-aligned source position for output index i of `dst` samples.
inline double sample_pos(int i, int src, int dst) {
    if (dst == 1) return (src - 1) / 2.0;
    return static_cast<double>(i) * (src - 1) / (dst - 1);
}

template <typename Get>
double bilinear_at(const Get& get, int src_w, int src_h, double fx, double fy) {
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x1 = std::min(x0 + 1, src_w - 1);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double ax = fx - x0;
    const double ay = fy - y0;
    const double top = get(y0, x0) * (1.0 - ax) + get(y0, x1) * ax;
    const double bot = get(y1, x0) * (1.0 - ax) + get(y1, x1) * ax;
    return top * (1.0 - ay) + bot * ay;
}

template <typename Get, typename Set>
void resize_grid(const Get& get, const Set& set, int src_w, int src_h, int tx, int ty,
                 ResizeMode mode) {
    if (tx <= 0 || ty <= 0) throw std::invalid_argument("resize: target must be positive");
    if (mode == ResizeMode::area) {
        if (src_w % tx != 0 || src_h % ty != 0)
            throw std::invalid_argument("resize(area): source dims must be integer multiples of target");
        const int bx = src_w / tx;
        const int by = src_h / ty;
        const double inv = 1.0 / (static_cast<double>(bx) * by);
        for (int oy = 0; oy < ty; ++oy)
            for (int ox = 0; ox < tx; ++ox) {
                double acc = 0.0;
                for (int y = oy * by; y < (oy + 1) * by; ++y)
                    for (int x = ox * bx; x < (ox + 1) * bx; ++x) acc += get(y, x);
                set(oy, ox, acc * inv);
            }
        return;
    }
    for (int oy = 0; oy < ty; ++oy) {
        const double fy = sample_pos(oy, src_h, ty);
        for (int ox = 0; ox < tx; ++ox) {
            const double fx = sample_pos(ox, src_w, tx);
            set(oy, ox, bilinear_at(get, src_w, src_h, fx, fy));
        }
    }
}

}  // namespace

Plane2D resize(const Plane2D& p, int tx, int ty, ResizeMode mode) {
    Plane2D out;
    out.width = tx;
    out.height = ty;
    out.axis = p.axis;
    out.index = p.index;
    out.values.resize(static_cast<std::size_t>(tx) * ty);
    resize_grid([&](int y, int x) { return p.at(y, x); },
                [&](int y, int x, double v) { out.at(y, x) = v; }, p.width, p.height, tx, ty, mode);
    return out;
}

FloatVolume resize_xy(const FloatVolume& v, int tx, int ty, ResizeMode mode) {
    FloatVolume out;
    out.id = v.id;
    out.nx = tx;
    out.ny = ty;
    out.nz = v.nz;
    out.spacing_um = v.spacing_um;
    out.voxels.resize(static_cast<std::size_t>(tx) * ty * v.nz);
    for (int z = 0; z < v.nz; ++z) {
        const std::size_t base = static_cast<std::size_t>(z) * tx * ty;
        resize_grid([&](int y, int x) { return static_cast<double>(v.at(x, y, z)); },
                    [&](int y, int x, double value) {
                        out.voxels[base + static_cast<std::size_t>(y) * tx + x] =
                            static_cast<float>(value);
                    },
                    v.nx, v.ny, tx, ty, mode);
    }
    return out;
}

Volume resize_xy(const Volume& v, int tx, int ty, ResizeMode mode) {
    Volume out;
    out.id = v.id;
    out.nx = tx;
    out.ny = ty;
    out.nz = v.nz;
    out.spacing_um = v.spacing_um;
    out.gppi = v.gppi;
    out.voxels.resize(static_cast<std::size_t>(tx) * ty * v.nz);
    for (int z = 0; z < v.nz; ++z) {
        const std::size_t base = static_cast<std::size_t>(z) * tx * ty;
        resize_grid([&](int y, int x) { return static_cast<double>(v.at(x, y, z)); },
                    [&](int y, int x, double value) {
                        const double r = std::round(value);
                        out.voxels[base + static_cast<std::size_t>(y) * tx + x] =
                            static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
                    },
                    v.nx, v.ny, tx, ty, mode);
    }
    return out;
}

std::pair<int, int> bone_extent_zrange(const Volume& v, const ClipRange& bone_range,
                                       double frac_threshold) {
    validate_clip(bone_range);
    if (frac_threshold <= 0.0 || frac_threshold >= 1.0)
        throw std::invalid_argument("bone_extent_zrange: threshold must be in (0, 1)");
    const double plane_area = static_cast<double>(v.nx) * v.ny;
    int z_first = -1, z_last = -1;
    for (int z = 0; z < v.nz; ++z) {
        std::size_t inside = 0;
        const std::size_t base = static_cast<std::size_t>(z) * v.nx * v.ny;
        for (std::size_t i = 0; i < static_cast<std::size_t>(v.nx) * v.ny; ++i) {
            const std::int16_t value = v.voxels[base + i];
            if (value >= bone_range.lo && value <= bone_range.hi) ++inside;
        }
        if (static_cast<double>(inside) / plane_area >= frac_threshold) {
            if (z_first < 0) z_first = z;
            z_last = z;
        }
    }
    if (z_first < 0) throw std::runtime_error("bone_extent_zrange: no plane reaches the threshold");
    return {z_first, z_last};
}

std::pair<Volume, GppAnnotation> axial_displace_augment(const Volume& v, const GppAnnotation& ann,
                                                        int shift, const NoiseSpec& background,
                                                        Rng& rng) {
    if (std::abs(shift) >= v.nz) throw std::invalid_argument("axial_displace_augment: |shift| >= nz");
    const int new_gppi = ann.gppi + shift;
    if (new_gppi < 0 || new_gppi >= v.nz)
        throw std::invalid_argument("axial_displace_augment: shifted gppi leaves [0, nz)");

    Volume out = v;
    const std::size_t plane = static_cast<std::size_t>(v.nx) * v.ny;
    for (int z = 0; z < v.nz; ++z) {
        const int src = z - shift;
        std::int16_t* dst_plane = out.voxels.data() + static_cast<std::size_t>(z) * plane;
        if (src >= 0 && src < v.nz) {
            const std::int16_t* src_plane = v.voxels.data() + static_cast<std::size_t>(src) * plane;
            std::copy(src_plane, src_plane + plane, dst_plane);
        } else {
            for (std::size_t i = 0; i < plane; ++i) {
                const double noise = rng.gaussian(background.mean, background.sigma);
                dst_plane[i] = static_cast<std::int16_t>(
                    std::clamp(std::round(noise), -32768.0, 32767.0));
            }
        }
    }
    if (out.gppi) out.gppi = new_gppi;
    GppAnnotation moved = ann;
    moved.gppi = new_gppi;
    return {std::move(out), std::move(moved)};
}

namespace {

template <typename GridLike>
void apply_geom(const GridLike& in, GridLike& out, int width, int height, GeomOp op, double sigma,
                Rng& rng) {
    switch (op) {
        case GeomOp::flip_h:
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    out[static_cast<std::size_t>(y) * width + x] =
                        in[static_cast<std::size_t>(y) * width + (width - 1 - x)];
            break;
        case GeomOp::flip_v:
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    out[static_cast<std::size_t>(y) * width + x] =
                        in[static_cast<std::size_t>(height - 1 - y) * width + x];
            break;
        case GeomOp::rot90:
            // quarter turn counterclockwise; square input enforced by caller
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    out[static_cast<std::size_t>(y) * width + x] =
                        in[static_cast<std::size_t>(x) * width + (width - 1 - y)];
            break;
        case GeomOp::gauss_noise:
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + rng.gaussian(0.0, sigma);
            break;
    }
}

}  // namespace

Plane2D geometric_augment(const Plane2D& p, GeomOp op, double sigma, Rng& rng) {
    if (op == GeomOp::rot90 && p.width != p.height)
        throw std::invalid_argument("rot90 requires a square plane");
    Plane2D out = p;
    apply_geom(p.values, out.values, p.width, p.height, op, sigma, rng);
    return out;
}

ChannelStack geometric_augment(const ChannelStack& s, GeomOp op, double sigma, Rng& rng) {
    if (op == GeomOp::rot90 && s.width != s.height)
        throw std::invalid_argument("rot90 requires a square stack");
    ChannelStack out = s;
    for (std::size_t c = 0; c < s.channels.size(); ++c)
        apply_geom(s.channels[c], out.channels[c], s.width, s.height, op, sigma, rng);
    return out;
}

ChannelStack mh_channel_stack(const Volume& v, std::optional<int> gppi, int c, double inner_frac,
                              Rng& rng) {
    if (c < 1) throw std::invalid_argument("mh_channel_stack: need at least one channel");
    if (inner_frac <= 0.0 || inner_frac > 1.0)
        throw std::invalid_argument("mh_channel_stack: inner_frac must be in (0, 1]");
    int window = static_cast<int>(std::lround(inner_frac * v.nx));
    window = std::clamp(window, 1, v.nx);
    if (c > window)
        throw std::invalid_argument("mh_channel_stack: more channels than available slices");
    const int lo = (v.nx - window) / 2;
    const int hi = lo + window - 1;

    ChannelStack stack;
    stack.axis = Axis::sagittal;
    stack.width = v.ny;
    stack.height = v.nz;
    stack.source_indices = rng.sample_sorted(lo, hi, c);
    for (const int x : stack.source_indices)
        stack.channels.push_back(extract_plane(v, Axis::sagittal, x).values);
    if (gppi) stack.label = static_cast<double>(*gppi) / v.nz;
    return stack;
}

std::vector<ChannelStack> ek_channel_stacks(const Volume& v, std::optional<int> gppi,
                                            const std::vector<int>& offsets) {
    if (offsets.empty()) throw std::invalid_argument("ek_channel_stacks: no offsets");
    if (v.nx != v.ny)
        throw std::invalid_argument("ek_channel_stacks: sagittal/coronal blend requires nx == ny");
    const int cx = v.nx / 2;
    const int cy = v.ny / 2;
    for (const int off : offsets) {
        if (cx + off < 0 || cx + off >= v.nx || cy + off < 0 || cy + off >= v.ny)
            throw std::invalid_argument("ek_channel_stacks: offset outside volume");
    }

    std::vector<ChannelStack> stacks;
    stacks.reserve(offsets.size() * offsets.size());
    for (const int so : offsets) {
        const Plane2D sag = extract_plane(v, Axis::sagittal, cx + so);
        for (const int co : offsets) {
            const Plane2D cor = extract_plane(v, Axis::coronal, cy + co);
            ChannelStack stack;
            stack.axis = Axis::sagittal;
            stack.width = sag.width;
            stack.height = sag.height;
            stack.source_indices = {cx + so, cy + co, -1};
            stack.channels.push_back(sag.values);
            stack.channels.push_back(cor.values);
            std::vector<double> blend(sag.values.size());
            for (std::size_t i = 0; i < blend.size(); ++i)
                blend[i] = 0.5 * (sag.values[i] + cor.values[i]);
            stack.channels.push_back(std::move(blend));
            if (gppi) stack.label = static_cast<double>(*gppi) / v.nz;
            stacks.push_back(std::move(stack));
        }
    }
    return stacks;
}

}  // namespace gpp
