#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "conebeam/errors.hpp"

namespace conebeam {

/// Cubic voxel volume descriptor. Voxel index i maps to the world coordinate
/// origin_mm + i * voxel_mm along each axis, so the volume spans
/// [origin_mm, origin_mm + (edge_voxels - 1) * voxel_mm] per axis.
struct VolumeGeometry {
    int32_t edge_voxels = 0; ///< voxels per edge
    double voxel_mm = 1.0;   ///< voxel edge length in millimeters
    double origin_mm = 0.0;  ///< world coordinate of voxel index 0

    std::size_t voxel_count() const {
        const auto l = static_cast<std::size_t>(edge_voxels);
        return l * l * l;
    }

    /// Throws validation_error naming the offending field.
    void validate() const;

    /// Volume centered on the world origin: origin = -(L-1)/2 * voxel size.
    static VolumeGeometry centered(int32_t edge_voxels, double voxel_mm);

    bool operator==(const VolumeGeometry&) const = default;
};

/// Homogeneous detector coordinates produced by a forward projection.
struct Homogeneous {
    double u = 0.0;
    double v = 0.0;
    double w = 0.0;
};

/// Dehomogenized detector pixel coordinates (continuous).
struct PixelCoord {
    double ix = 0.0;
    double iy = 0.0;
};

/// 3x4 homogeneous forward-projection matrix. The twelve coefficients are
/// stored column-major so the kernels can index them directly:
///
///   u = wx*a[0] + wy*a[3] + wz*a[6] + a[9]
///   v = wx*a[1] + wy*a[4] + wz*a[7] + a[10]
///   w = wx*a[2] + wy*a[5] + wz*a[8] + a[11]
///
/// Matrices produced by make_circular_trajectory are scaled so that
/// w evaluates to exactly 1 at the isocenter (world origin); the kernels'
/// inverse-square weight 1/w^2 is then 1 there. This scale convention is a
/// choice of this library, documented in the README.
struct ProjectionMatrix {
    std::array<double, 12> a{};

    /// Throws validation_error if any coefficient is not finite.
    void validate() const;

    bool operator==(const ProjectionMatrix&) const = default;
};

/// Synthetic circular scan configuration. The source orbits the isocenter in
/// the z = 0 plane; the detector is perpendicular to the central ray, with its
/// u axis along the orbit tangent and its v axis along +z.
struct TrajectoryConfig {
    int32_t num_projections = 0;
    double source_isocenter_mm = 0.0; ///< orbit radius
    double source_detector_mm = 0.0;  ///< source-to-detector distance
    int32_t detector_width = 0;       ///< pixels
    int32_t detector_height = 0;      ///< pixels
    double pixel_size_mm = 0.0;
    double angular_range_rad = 6.283185307179586476925286766559; // full circle

    /// Throws validation_error naming the offending field.
    void validate() const;
};

/// World coordinate of voxel (x, y, z): origin + index * voxel size per axis.
std::array<double, 3> world_from_voxel(const VolumeGeometry& g, int x, int y, int z);

/// Applies the 3x4 matrix to the homogeneous world point (wx, wy, wz, 1).
Homogeneous forward_project(const ProjectionMatrix& m, double wx, double wy, double wz);

/// (u, v, w) -> (u/w, v/w). Throws geometry_error when w == 0 (the ray is
/// parallel to the detector plane).
PixelCoord dehomogenize(double u, double v, double w);
inline PixelCoord dehomogenize(const Homogeneous& h) { return dehomogenize(h.u, h.v, h.w); }

/// Generates one projection matrix per angle at uniform increments over the
/// angular range. Every matrix satisfies w(isocenter) == 1 and projects the
/// isocenter to the detector center ((width-1)/2, (height-1)/2).
std::vector<ProjectionMatrix> make_circular_trajectory(const TrajectoryConfig& c);

} // namespace conebeam
