#include "conebeam/kernel_ref.hpp"

namespace conebeam {

void backproject_reference(Volume& vol, const ProjectionImage& img, const ProjectionMatrix& m) {
    img.validate();
    vol.validate();
    if (img.padded())
        throw validation_error("backproject_reference requires an unpadded image");

    float a[12];
    for (int i = 0; i < 12; ++i)
        a[i] = static_cast<float>(m.a[i]);
    const float O = static_cast<float>(vol.geometry.origin_mm);
    const float MM = static_cast<float>(vol.geometry.voxel_mm);
    const int L = vol.geometry.edge_voxels;

    float* out = vol.voxels.data();
    std::size_t idx = 0;
    for (int z = 0; z < L; ++z) {
        const float wz = O + z * MM;
        for (int y = 0; y < L; ++y) {
            const float wy = O + y * MM;
            for (int x = 0; x < L; ++x) {
                const float wx = O + x * MM;
                out[idx++] += detail::reference_sample(img, a, wx, wy, wz);
            }
        }
    }
}

void reconstruct_reference(Volume& vol, const ProjectionStack& stack) {
    stack.validate();
    if (vol.geometry != stack.geometry)
        throw geometry_error("reconstruct_reference: volume and stack geometries differ");
    for (std::size_t i = 0; i < stack.count(); ++i)
        backproject_reference(vol, stack.images[i], stack.matrices[i]);
}

} // namespace conebeam
