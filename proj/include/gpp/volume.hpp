#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gpp {

enum class Axis { axial, sagittal, coronal };

const char* axis_name(Axis axis);
Axis axis_from_name(const std::string& name);

// A micro-CT scan: signed 16-bit HU voxels on a regular grid. Storage is
// z-major then row-major, i.e. voxel (x, y, z) lives at ((z*ny)+y)*nx+x.
// The z axis is the bone long axis; axial plane indices are 0-based, and
// they grow from the four-protrusion side toward the merged side.
struct Volume {
    std::string id;
    int nx = 0, ny = 0, nz = 0;
    std::array<double, 3> spacing_um = {10.0, 10.0, 10.0};
    std::vector<std::int16_t> voxels;
    std::optional<int> gppi;  // mirrors the optional sidecar field

    std::int16_t at(int x, int y, int z) const {
        return voxels[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
    std::int16_t& at(int x, int y, int z) {
        return voxels[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
    std::size_t voxel_count() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
};

// Real-valued volume with the same layout, produced by normalization.
struct FloatVolume {
    std::string id;
    int nx = 0, ny = 0, nz = 0;
    std::array<double, 3> spacing_um = {10.0, 10.0, 10.0};
    std::vector<float> voxels;

    float at(int x, int y, int z) const {
        return voxels[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
};

// Ground-truth growth-plate plane index for one volume, 0-based.
struct GppAnnotation {
    std::string volume_id;
    int gppi = 0;
    std::string source;
};

// One extracted plane. Row-major `values`, sized width*height:
//   axial k    -> width nx, height ny, values[y*nx + x] = vox(x, y, k)
//   sagittal i -> width ny, height nz, values[z*ny + y] = vox(i, y, z)
//   coronal j  -> width nx, height nz, values[z*nx + x] = vox(x, j, z)
struct Plane2D {
    int width = 0, height = 0;
    Axis axis = Axis::axial;
    int index = 0;
    std::vector<double> values;

    double at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * width + col];
    }
    double& at(int row, int col) {
        return values[static_cast<std::size_t>(row) * width + col];
    }
};

// GPV format: `<name>.json` sidecar + `<name>.raw` payload of
// nx*ny*nz little-endian int16 values, z-major then row-major.
// `path` names either file or the common stem.
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);

Plane2D extract_plane(const Volume& v, Axis axis, int index);
Plane2D extract_plane(const FloatVolume& v, Axis axis, int index);

void validate_volume(const Volume& v);

}  // namespace gpp
