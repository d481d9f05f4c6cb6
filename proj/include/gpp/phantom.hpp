#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpp/volume.hpp"

namespace gpp {

// Synthetic femur: a shaft disk low on the z axis, four protrusion disks in
// the planes just before the growth plane, and a merged single component at
// and after it. Realism is a non-goal; the geometry only has to drive the
// detectors the way the real anatomy does.
struct PhantomSpec {
    int nx = 96, ny = 96, nz = 192;
    int gppi = 160;
    double protrusion_radius_vox = 10.0;
    int protrusion_span = 24;  // planes before gppi that show four blobs
    double shaft_radius_vox = 18.0;
    int bone_hu = 2000;
    int air_hu = -1000;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

void validate_phantom_spec(const PhantomSpec& spec);

std::pair<Volume, GppAnnotation> generate_phantom(const PhantomSpec& spec);

struct PhantomJitter {
    int gppi_delta = 0;       // uniform integer jitter, +-
    double radius_delta = 0;  // uniform real jitter on the protrusion radius, +-
};

struct PhantomItem {
    Volume volume;
    GppAnnotation annotation;
    std::string study;  // round-robin A/B/C, mimics the preclinical studies
};

std::vector<PhantomItem> generate_dataset(int n, const PhantomSpec& base,
                                          const PhantomJitter& jitter, std::uint64_t master_seed);

// Writes one GPV pair per item plus truth.csv (volume_id,gppi,study).
// Returns the files written, relative to `dir`.
std::vector<std::string> write_dataset(const std::vector<PhantomItem>& items,
                                       const std::filesystem::path& dir);

}  // namespace gpp
