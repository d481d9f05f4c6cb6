#include "gpp/volume.hpp"

#include <nlohmann/json.hpp>

#include "gpp/common.hpp"

namespace gpp {

using nlohmann::json;

const char* axis_name(Axis axis) {
    switch (axis) {
        case Axis::axial: return "axial";
        case Axis::sagittal: return "sagittal";
        case Axis::coronal: return "coronal";
    }
    throw std::invalid_argument("unknown axis");
}

Axis axis_from_name(const std::string& name) {
    if (name == "axial") return Axis::axial;
    if (name == "sagittal") return Axis::sagittal;
    if (name == "coronal") return Axis::coronal;
    throw std::invalid_argument("unknown axis: " + name);
}

void validate_volume(const Volume& v) {
    if (v.nx <= 0 || v.ny <= 0 || v.nz <= 0)
        throw std::invalid_argument("volume dims must be positive");
    if (v.voxels.size() != v.voxel_count())
        throw std::invalid_argument("voxel count does not match dims");
    if (v.gppi && (*v.gppi < 0 || *v.gppi >= v.nz))
        throw std::invalid_argument("gppi outside [0, nz)");
}

namespace {

std::pair<std::filesystem::path, std::filesystem::path> gpv_paths(const std::filesystem::path& path) {
    std::filesystem::path stem = path;
    const auto ext = path.extension();
    if (ext == ".json" || ext == ".raw") stem.replace_extension();
    std::filesystem::path sidecar = stem;
    sidecar += ".json";
    std::filesystem::path payload = stem;
    payload += ".raw";
    return {sidecar, payload};
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& path) {
    validate_volume(v);
    const auto [sidecar, payload] = gpv_paths(path);

    json meta;
    meta["id"] = v.id;
    meta["nx"] = v.nx;
    meta["ny"] = v.ny;
    meta["nz"] = v.nz;
    meta["spacing_um"] = {v.spacing_um[0], v.spacing_um[1], v.spacing_um[2]};
    meta["dtype"] = "i16le";
    meta["order"] = "zyx";
    if (v.gppi) meta["gppi"] = *v.gppi;  // 0-based axial plane index
    write_file_text(sidecar, meta.dump(2) + "\n");

    std::vector<std::uint8_t> bytes;
    bytes.reserve(v.voxels.size() * 2);
    for (const std::int16_t voxel : v.voxels) append_le16(bytes, voxel);
    write_file_bytes(payload, bytes.data(), bytes.size());
}

Volume load_volume(const std::filesystem::path& path) {
    const auto [sidecar, payload] = gpv_paths(path);

    json meta;
    try {
        meta = json::parse(read_file_text(sidecar));
    } catch (const json::exception& e) {
        throw InputError("corrupt GPV sidecar " + sidecar.string() + ": " + e.what());
    }

    Volume v;
    try {
        v.id = meta.at("id").get<std::string>();
        v.nx = meta.at("nx").get<int>();
        v.ny = meta.at("ny").get<int>();
        v.nz = meta.at("nz").get<int>();
        const auto spacing = meta.at("spacing_um");
        for (int i = 0; i < 3; ++i) v.spacing_um[i] = spacing.at(i).get<double>();
        if (meta.at("dtype").get<std::string>() != "i16le")
            throw InputError("unsupported GPV dtype in " + sidecar.string());
        if (meta.at("order").get<std::string>() != "zyx")
            throw InputError("unsupported GPV order in " + sidecar.string());
        if (meta.contains("gppi")) v.gppi = meta.at("gppi").get<int>();
    } catch (const json::exception& e) {
        throw InputError("corrupt GPV sidecar " + sidecar.string() + ": " + e.what());
    }
    if (v.nx <= 0 || v.ny <= 0 || v.nz <= 0)
        throw InputError("GPV sidecar declares non-positive dims: " + sidecar.string());

    const auto bytes = read_file_bytes(payload);
    const std::size_t expected = static_cast<std::size_t>(v.nx) * v.ny * v.nz * 2;
    if (bytes.size() != expected)
        throw InputError("GPV payload length mismatch for " + payload.string() + ": expected " +
                         std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
    v.voxels.resize(v.voxel_count());
    for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = read_le16(&bytes[i * 2]);
    validate_volume(v);
    return v;
}

namespace {

template <typename Vol>
Plane2D extract_plane_impl(const Vol& v, Axis axis, int index) {
    Plane2D p;
    p.axis = axis;
    p.index = index;
    switch (axis) {
        case Axis::axial: {
            if (index < 0 || index >= v.nz) throw std::invalid_argument("axial index out of range");
            p.width = v.nx;
            p.height = v.ny;
            p.values.resize(static_cast<std::size_t>(v.nx) * v.ny);
            for (int y = 0; y < v.ny; ++y)
                for (int x = 0; x < v.nx; ++x)
                    p.values[static_cast<std::size_t>(y) * v.nx + x] = v.at(x, y, index);
            break;
        }
        case Axis::sagittal: {
            if (index < 0 || index >= v.nx) throw std::invalid_argument("sagittal index out of range");
            p.width = v.ny;
            p.height = v.nz;
            p.values.resize(static_cast<std::size_t>(v.ny) * v.nz);
            for (int z = 0; z < v.nz; ++z)
                for (int y = 0; y < v.ny; ++y)
                    p.values[static_cast<std::size_t>(z) * v.ny + y] = v.at(index, y, z);
            break;
        }
        case Axis::coronal: {
            if (index < 0 || index >= v.ny) throw std::invalid_argument("coronal index out of range");
            p.width = v.nx;
            p.height = v.nz;
            p.values.resize(static_cast<std::size_t>(v.nx) * v.nz);
            for (int z = 0; z < v.nz; ++z)
                for (int x = 0; x < v.nx; ++x)
                    p.values[static_cast<std::size_t>(z) * v.nx + x] = v.at(x, index, z);
            break;
        }
    }
    return p;
}

}  // namespace

Plane2D extract_plane(const Volume& v, Axis axis, int index) {
    return extract_plane_impl(v, axis, index);
}

Plane2D extract_plane(const FloatVolume& v, Axis axis, int index) {
    return extract_plane_impl(v, axis, index);
}

}  // namespace gpp
