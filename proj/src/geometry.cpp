#include "conebeam/geometry.hpp"

#include <cmath>
#include <string>

namespace conebeam {

namespace {

[[noreturn]] void bad_field(const std::string& type, const std::string& field,
                            const std::string& why) {
    throw validation_error(type + ": field '" + field + "' " + why);
}

} // namespace

void VolumeGeometry::validate() const {
    if (edge_voxels < 1)
        bad_field("VolumeGeometry", "edge_voxels", "must be >= 1");
    if (!(voxel_mm > 0.0) || !std::isfinite(voxel_mm))
        bad_field("VolumeGeometry", "voxel_mm", "must be positive and finite");
    if (!std::isfinite(origin_mm))
        bad_field("VolumeGeometry", "origin_mm", "must be finite");
}

VolumeGeometry VolumeGeometry::centered(int32_t edge_voxels, double voxel_mm) {
    VolumeGeometry g;
    g.edge_voxels = edge_voxels;
    g.voxel_mm = voxel_mm;
    g.origin_mm = -0.5 * static_cast<double>(edge_voxels - 1) * voxel_mm;
    g.validate();
    return g;
}

void ProjectionMatrix::validate() const {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i]))
            bad_field("ProjectionMatrix", "a[" + std::to_string(i) + "]", "must be finite");
}

void TrajectoryConfig::validate() const {
    if (num_projections < 1)
        bad_field("TrajectoryConfig", "num_projections", "must be >= 1");
    if (!(source_isocenter_mm > 0.0) || !std::isfinite(source_isocenter_mm))
        bad_field("TrajectoryConfig", "source_isocenter_mm", "must be positive and finite");
    if (!(source_detector_mm > 0.0) || !std::isfinite(source_detector_mm))
        bad_field("TrajectoryConfig", "source_detector_mm", "must be positive and finite");
    if (source_detector_mm <= source_isocenter_mm)
        bad_field("TrajectoryConfig", "source_detector_mm", "must exceed source_isocenter_mm");
    if (detector_width < 1)
        bad_field("TrajectoryConfig", "detector_width", "must be >= 1");
    if (detector_height < 1)
        bad_field("TrajectoryConfig", "detector_height", "must be >= 1");
    if (!(pixel_size_mm > 0.0) || !std::isfinite(pixel_size_mm))
        bad_field("TrajectoryConfig", "pixel_size_mm", "must be positive and finite");
    if (!(angular_range_rad > 0.0) || !std::isfinite(angular_range_rad))
        bad_field("TrajectoryConfig", "angular_range_rad", "must be positive and finite");
}

std::array<double, 3> world_from_voxel(const VolumeGeometry& g, int x, int y, int z) {
    return {g.origin_mm + x * g.voxel_mm,
            g.origin_mm + y * g.voxel_mm,
            g.origin_mm + z * g.voxel_mm};
}

Homogeneous forward_project(const ProjectionMatrix& m, double wx, double wy, double wz) {
    const auto& a = m.a;
    return {wx * a[0] + wy * a[3] + wz * a[6] + a[9],
            wx * a[1] + wy * a[4] + wz * a[7] + a[10],
            wx * a[2] + wy * a[5] + wz * a[8] + a[11]};
}

PixelCoord dehomogenize(double u, double v, double w) {
    if (w == 0.0)
        throw geometry_error("dehomogenize: w == 0, ray parallel to the detector plane");
    return {u / w, v / w};
}

std::vector<ProjectionMatrix> make_circular_trajectory(const TrajectoryConfig& c) {
    c.validate();

    const double radius = c.source_isocenter_mm;
    const double focal_px = c.source_detector_mm / c.pixel_size_mm;
    const double cu = 0.5 * static_cast<double>(c.detector_width - 1);
    const double cv = 0.5 * static_cast<double>(c.detector_height - 1);

    std::vector<ProjectionMatrix> matrices(c.num_projections);
    for (int32_t i = 0; i < c.num_projections; ++i) {
        const double angle = c.angular_range_rad * static_cast<double>(i) /
                             static_cast<double>(c.num_projections);
        const double cs = std::cos(angle);
        const double sn = std::sin(angle);

        // Source at radius*(cs, sn, 0); principal ray d = (-cs, -sn, 0);
        // detector axes e_u = (-sn, cs, 0), e_v = (0, 0, 1). Rows are scaled
        // by 1/radius so that w(0,0,0) == 1 exactly.
        auto& a = matrices[i].a;
        a[0] = (-focal_px * sn - cu * cs) / radius; // u <- wx
        a[3] = (focal_px * cs - cu * sn) / radius;  // u <- wy
        a[6] = 0.0;                                 // u <- wz
        a[9] = cu;                                  // u translation (cu*radius/radius)

        a[1] = (-cv * cs) / radius; // v <- wx
        a[4] = (-cv * sn) / radius; // v <- wy
        a[7] = focal_px / radius;   // v <- wz
        a[10] = cv;                 // v translation

        a[2] = -cs / radius; // w <- wx
        a[5] = -sn / radius; // w <- wy
        a[8] = 0.0;          // w <- wz
        a[11] = 1.0;         // w translation

        matrices[i].validate();
    }
    return matrices;
}

} // namespace conebeam
