#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conebeam/geometry.hpp"

namespace conebeam {

/// Single-precision detector raster, row-major with linear index
/// iy * width + ix. A padded image records in (pad_du, pad_dv) the integer
/// offset of its pixel (0,0) relative to the unpadded detector origin
/// (negative when a left/top border was added; zero for unpadded images).
struct ProjectionImage {
    int32_t width = 0;
    int32_t height = 0;
    int32_t pad_du = 0;
    int32_t pad_dv = 0;
    std::vector<float> data;

    float at(int ix, int iy) const { return data[static_cast<std::size_t>(iy) * width + ix]; }
    bool padded() const { return pad_du != 0 || pad_dv != 0; }

    /// Throws validation_error on dimension/content violations.
    void validate() const;
};

/// Projection images with their matrices and the target volume geometry.
struct ProjectionStack {
    VolumeGeometry geometry;
    std::vector<ProjectionMatrix> matrices;
    std::vector<ProjectionImage> images;

    std::size_t count() const { return images.size(); }
    void validate() const;
};

/// Cubic single-precision voxel volume, linear index z*L*L + y*L + x.
struct Volume {
    VolumeGeometry geometry;
    std::vector<float> voxels;

    Volume() = default;
    explicit Volume(const VolumeGeometry& g) : geometry(g) {
        geometry.validate();
        voxels.assign(geometry.voxel_count(), 0.0f);
    }

    float& at(int x, int y, int z) {
        const auto l = static_cast<std::size_t>(geometry.edge_voxels);
        return voxels[(static_cast<std::size_t>(z) * l + y) * l + x];
    }
    float at(int x, int y, int z) const {
        const auto l = static_cast<std::size_t>(geometry.edge_voxels);
        return voxels[(static_cast<std::size_t>(z) * l + y) * l + x];
    }

    void validate() const;
};

// ---------------------------------------------------------------------------
// File formats (fixed little-endian; see README for the byte layout)
//
// Stack file:  magic "CBPS", u16 version=1, u16 reserved, u32 width,
//              u32 height, u32 count, f64 voxel_mm, f64 origin_mm, u32 L,
//              then per projection: 12 x f64 matrix coefficients in index
//              order a[0..11] followed by width*height x f32 intensities.
// Volume file: magic "CBPV", u16 version=1, u16 reserved, u32 L,
//              f64 voxel_mm, f64 origin_mm, then L^3 x f32 voxels (z-major).
// ---------------------------------------------------------------------------

/// Round-trip exact. Throws io_error / format_error / truncated_error.
void write_stack(const std::string& path, const ProjectionStack& s);
ProjectionStack read_stack(const std::string& path);

void write_volume(const std::string& path, const Volume& v);
Volume read_volume(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic projection fields
// ---------------------------------------------------------------------------

enum class FieldKind { constant, linear_ramp, gaussian_blob, checker };

/// Analytic per-pixel intensity function. Parameters left as NaN take
/// dimension-dependent defaults at evaluation time:
///   constant:   p0 = value (default 1)
///   ramp:       p0*ix + p1*iy + p2           (defaults 1, 2, 0)
///   gauss:      p0 * exp(-(r^2)/(2*p3^2)), r measured from center (p1, p2)
///               (defaults: amplitude 1, detector center, sigma = min(w,h)/16)
///   checker:    cells of size p1 alternating between 0 and p0
///               (defaults: amplitude 1, period 8)
struct FieldSpec {
    FieldKind kind = FieldKind::constant;
    double p0, p1, p2, p3;

    FieldSpec();
    double evaluate(int ix, int iy, int width, int height) const;
    std::string to_string() const;
};

/// Parses "constant:2.5", "ramp", "gauss:1,64,48,8", "checker:1,16", ...
/// Throws validation_error for unknown field ids or malformed parameters.
FieldSpec parse_field_spec(const std::string& spec);

/// Evaluates the field in double precision and rounds each pixel to single.
ProjectionImage synth_projection_image(int width, int height, const FieldSpec& field);

/// Synthetic dataset configuration. The seed participates in the config echo
/// and keeps generation reproducible by contract; the analytic fields above
/// are deterministic and do not consume it.
struct GenerateConfig {
    TrajectoryConfig trajectory;
    VolumeGeometry volume;
    FieldSpec field;
    uint64_t seed = 0;
};

/// Builds the trajectory matrices and synthetic images in memory.
ProjectionStack make_synthetic_stack(const GenerateConfig& cfg);

/// make_synthetic_stack + write_stack.
void generate_dataset(const GenerateConfig& cfg, const std::string& out_path);

} // namespace conebeam
