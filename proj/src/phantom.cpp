#include "gpp/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gpp/evalrank.hpp"
#include "gpp/rng.hpp"

namespace gpp {

void validate_phantom_spec(const PhantomSpec& spec) {
    if (spec.nx <= 0 || spec.ny <= 0 || spec.nz <= 0)
        throw std::invalid_argument("phantom: dims must be positive");
    if (spec.gppi <= spec.protrusion_span || spec.gppi >= spec.nz)
        throw std::invalid_argument("phantom: need protrusion_span < gppi < nz");
    if (spec.protrusion_span < 1) throw std::invalid_argument("phantom: protrusion_span must be >= 1");
    if (spec.bone_hu <= spec.air_hu) throw std::invalid_argument("phantom: bone_hu must exceed air_hu");
    if (spec.protrusion_radius_vox <= 0 || spec.shaft_radius_vox <= 0)
        throw std::invalid_argument("phantom: radii must be positive");
    if (spec.noise_sigma < 0) throw std::invalid_argument("phantom: noise_sigma must be >= 0");

    // Four disks at (cx +- d, cy +- d) must stay separated and inside the
    // plane with a margin.
    const int d = std::min(spec.nx, spec.ny) / 4;
    const double r = spec.protrusion_radius_vox;
    if (r >= d) throw std::invalid_argument("phantom: protrusion disks would touch");
    const int cx = spec.nx / 2, cy = spec.ny / 2;
    if (cx - d - r < 0 || cx + d + r >= spec.nx || cy - d - r < 0 || cy + d + r >= spec.ny)
        throw std::invalid_argument("phantom: protrusion disks leave the plane");
    if (spec.shaft_radius_vox >= std::min(cx, cy))
        throw std::invalid_argument("phantom: shaft disk leaves the plane");
}

namespace {

inline bool in_disk(int x, int y, int cx, int cy, double r) {
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= r * r;
}

}  // namespace

std::pair<Volume, GppAnnotation> generate_phantom(const PhantomSpec& spec) {
    validate_phantom_spec(spec);

    Volume v;
    char name[32];
    std::snprintf(name, sizeof(name), "phantom-%016llx", static_cast<unsigned long long>(spec.seed));
    v.id = name;
    v.nx = spec.nx;
    v.ny = spec.ny;
    v.nz = spec.nz;
    v.gppi = spec.gppi;
    v.voxels.assign(v.voxel_count(), static_cast<std::int16_t>(spec.air_hu));

    const int cx = spec.nx / 2, cy = spec.ny / 2;
    const int d = std::min(spec.nx, spec.ny) / 4;
    const double rp = spec.protrusion_radius_vox;
    const int arm = std::max(2, static_cast<int>(std::lround(rp / 3.0)));  // frame half-width
    const int merged_hi = std::min(spec.nz - 1, spec.gppi + spec.protrusion_span);
    const double epiphysis_r = d + rp;

    for (int z = 0; z < spec.nz; ++z) {
        const std::size_t base = static_cast<std::size_t>(z) * spec.nx * spec.ny;
        for (int y = 0; y < spec.ny; ++y) {
            for (int x = 0; x < spec.nx; ++x) {
                bool bone = false;
                if (z < spec.gppi - spec.protrusion_span) {
                    bone = in_disk(x, y, cx, cy, spec.shaft_radius_vox);
                } else if (z < spec.gppi) {
                    bone = in_disk(x, y, cx - d, cy - d, rp) || in_disk(x, y, cx + d, cy - d, rp) ||
                           in_disk(x, y, cx - d, cy + d, rp) || in_disk(x, y, cx + d, cy + d, rp);
                } else if (z <= merged_hi) {
                    // Four disks joined by a square frame through their
                    // centers: one 4-connected component.
                    bone = in_disk(x, y, cx - d, cy - d, rp) || in_disk(x, y, cx + d, cy - d, rp) ||
                           in_disk(x, y, cx - d, cy + d, rp) || in_disk(x, y, cx + d, cy + d, rp);
                    if (!bone) {
                        const bool x_in = x >= cx - d && x <= cx + d;
                        const bool y_in = y >= cy - d && y <= cy + d;
                        bone = (x_in && (std::abs(y - (cy - d)) <= arm || std::abs(y - (cy + d)) <= arm)) ||
                               (y_in && (std::abs(x - (cx - d)) <= arm || std::abs(x - (cx + d)) <= arm));
                    }
                } else {
                    bone = in_disk(x, y, cx, cy, epiphysis_r);
                }
                if (bone)
                    v.voxels[base + static_cast<std::size_t>(y) * spec.nx + x] =
                        static_cast<std::int16_t>(spec.bone_hu);
            }
        }
    }

    if (spec.noise_sigma > 0) {
        Rng rng(derive_seed(spec.seed, "phantom-noise"));
        for (auto& voxel : v.voxels) {
            const double noisy = voxel + rng.gaussian(0.0, spec.noise_sigma);
            voxel = static_cast<std::int16_t>(std::clamp(std::round(noisy), -32768.0, 32767.0));
        }
    }

    GppAnnotation ann;
    ann.volume_id = v.id;
    ann.gppi = spec.gppi;
    ann.source = "phantom";
    return {std::move(v), std::move(ann)};
}

std::vector<PhantomItem> generate_dataset(int n, const PhantomSpec& base,
                                          const PhantomJitter& jitter, std::uint64_t master_seed) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    static const char* kStudies[] = {"A", "B", "C"};

    std::vector<PhantomItem> items;
    items.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint64_t item_seed = derive_seed(master_seed, "phantom-item", i);
        Rng rng(item_seed);
        PhantomSpec spec = base;
        spec.seed = item_seed;
        if (jitter.gppi_delta > 0)
            spec.gppi = base.gppi + static_cast<int>(rng.uniform_int(-jitter.gppi_delta, jitter.gppi_delta));
        if (jitter.radius_delta > 0)
            spec.protrusion_radius_vox =
                base.protrusion_radius_vox + rng.uniform(-jitter.radius_delta, jitter.radius_delta);
        validate_phantom_spec(spec);

        PhantomItem item;
        auto [vol, ann] = generate_phantom(spec);
        char name[32];
        std::snprintf(name, sizeof(name), "ph%04d", i);
        vol.id = name;
        ann.volume_id = name;
        item.volume = std::move(vol);
        item.annotation = std::move(ann);
        item.study = kStudies[i % 3];
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<std::string> write_dataset(const std::vector<PhantomItem>& items,
                                       const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    std::vector<TruthRow> truths;
    for (const auto& item : items) {
        save_volume(item.volume, dir / item.volume.id);
        written.push_back(item.volume.id + ".json");
        written.push_back(item.volume.id + ".raw");
        truths.push_back({item.volume.id, item.annotation.gppi, item.study});
    }
    std::sort(truths.begin(), truths.end(),
              [](const TruthRow& a, const TruthRow& b) { return a.volume_id < b.volume_id; });
    write_truth_csv(dir / "truth.csv", truths);
    written.push_back("truth.csv");
    return written;
}

}  // namespace gpp
