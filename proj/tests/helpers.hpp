#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "conebeam/dataset.hpp"

namespace testutil {

inline std::filesystem::path tmp_dir() {
    static const std::filesystem::path dir = [] {
        auto d = std::filesystem::temp_directory_path() /
                 ("conebeam-tests-" + std::to_string(::getpid()));
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

inline std::string tmp_file(const std::string& name) {
    return (tmp_dir() / name).string();
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

inline uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t hash = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        hash ^= p[i];
        hash *= 1099511628211ull;
    }
    return hash;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline conebeam::ProjectionStack random_stack(std::mt19937_64& rng, int max_dim = 8,
                                              int max_proj = 3, int max_edge = 6) {
    conebeam::ProjectionStack s;
    s.geometry.edge_voxels = uniform_int(rng, 1, max_edge);
    s.geometry.voxel_mm = uniform(rng, 0.1, 2.0);
    s.geometry.origin_mm = uniform(rng, -10.0, 10.0);

    const int width = uniform_int(rng, 1, max_dim);
    const int height = uniform_int(rng, 1, max_dim);
    const int count = uniform_int(rng, 1, max_proj);
    for (int i = 0; i < count; ++i) {
        conebeam::ProjectionMatrix m;
        for (auto& c : m.a)
            c = uniform(rng, -5.0, 5.0);
        s.matrices.push_back(m);

        conebeam::ProjectionImage img;
        img.width = width;
        img.height = height;
        img.data.resize(static_cast<std::size_t>(width) * height);
        for (auto& v : img.data)
            v = static_cast<float>(uniform(rng, -100.0, 100.0));
        s.images.push_back(img);
    }
    return s;
}

inline conebeam::Volume random_volume(std::mt19937_64& rng, int max_edge = 6) {
    conebeam::Volume v(conebeam::VolumeGeometry{uniform_int(rng, 1, max_edge),
                                                uniform(rng, 0.1, 2.0),
                                                uniform(rng, -10.0, 10.0)});
    for (auto& x : v.voxels)
        x = static_cast<float>(uniform(rng, -100.0, 100.0));
    return v;
}

/// Scan geometry whose detector either covers every voxel's footprint at
/// every angle (coverage > 1) or clips parts of the volume (coverage < 1).
inline conebeam::TrajectoryConfig random_scan_config(std::mt19937_64& rng, int edge_voxels,
                                                     double voxel_mm, double coverage,
                                                     int num_projections) {
    conebeam::TrajectoryConfig c;
    c.num_projections = num_projections;
    const double half_diag = 0.5 * std::sqrt(3.0) * (edge_voxels - 1) * voxel_mm;
    c.source_isocenter_mm = half_diag * uniform(rng, 2.5, 4.0) + voxel_mm;
    c.source_detector_mm = c.source_isocenter_mm * uniform(rng, 1.5, 2.2);
    c.pixel_size_mm = voxel_mm * uniform(rng, 0.8, 1.5);

    const double worst_mag =
        c.source_detector_mm / (c.source_isocenter_mm - half_diag);
    const double half_px = half_diag * worst_mag / c.pixel_size_mm;
    const int need = 2 * static_cast<int>(std::ceil(half_px)) + 8;
    const int dim = std::max(8, static_cast<int>(need * coverage));
    c.detector_width = dim;
    c.detector_height = dim;
    return c;
}

/// Independent per-voxel clip oracle: admitted iff the projected position,
/// computed with the kernels' single-precision arithmetic, lies in
/// [0, width-1) x [0, height-1) with w > 0. Deliberately parallel to (not
/// shared with) the library implementation.
inline bool oracle_admitted(const conebeam::ProjectionMatrix& m,
                            const conebeam::VolumeGeometry& g, int x, int y, int z,
                            int width, int height) {
    float a[12];
    for (int i = 0; i < 12; ++i)
        a[i] = static_cast<float>(m.a[i]);
    const float O = static_cast<float>(g.origin_mm);
    const float MM = static_cast<float>(g.voxel_mm);
    const float wx = O + x * MM;
    const float wy = O + y * MM;
    const float wz = O + z * MM;
    const float u = wx * a[0] + wy * a[3] + wz * a[6] + a[9];
    const float v = wx * a[1] + wy * a[4] + wz * a[7] + a[10];
    const float w = wx * a[2] + wy * a[5] + wz * a[8] + a[11];
    if (!(w > 0.0f))
        return false;
    const float ix = u / w;
    const float iy = v / w;
    return ix >= 0.0f && ix < static_cast<float>(width - 1) && iy >= 0.0f &&
           iy < static_cast<float>(height - 1);
}

struct OracleLine {
    std::vector<char> admitted;
    bool contiguous = true;
    int start = 0;
    int stop = 0; // half-open; {0, 0} when empty
};

inline OracleLine oracle_line(const conebeam::ProjectionMatrix& m,
                              const conebeam::VolumeGeometry& g, int y, int z, int width,
                              int height) {
    OracleLine line;
    const int L = g.edge_voxels;
    line.admitted.resize(static_cast<std::size_t>(L));
    int first = -1;
    int last = -1;
    for (int x = 0; x < L; ++x) {
        const bool in = oracle_admitted(m, g, x, y, z, width, height);
        line.admitted[static_cast<std::size_t>(x)] = in ? 1 : 0;
        if (in) {
            if (first < 0)
                first = x;
            last = x;
        }
    }
    if (first >= 0) {
        line.start = first;
        line.stop = last + 1;
        for (int x = first; x <= last; ++x)
            if (!line.admitted[static_cast<std::size_t>(x)])
                line.contiguous = false;
    }
    return line;
}

} // namespace testutil
