#pragma once

#include <cmath>

#include "conebeam/dataset.hpp"

namespace conebeam {

/// Guarded bilinear sampler of the scalar benchmark kernel. The continuous
/// coordinate is truncated toward zero (C cast semantics, not floor), the four
/// taps (iix,iiy), (iix+1,iiy), (iix,iiy+1), (iix+1,iiy+1) each contribute
/// their pixel when inside bounds and zero otherwise, and the result is the
/// usual two-stage lerp. All arithmetic is single precision.
///
/// The upstream scalar kernel compares the x index against the image height
/// and the y index against the width; that only works for square detectors,
/// so the comparisons here use the matching dimensions. Both versions agree
/// wherever clipping has already restricted sampling to the detector.
inline float bilinear_sample_guarded(const ProjectionImage& img, float ix, float iy) {
    // Far outside any raster; also keeps the int casts below defined.
    if (!(std::fabs(ix) < 1.0e9f) || !(std::fabs(iy) < 1.0e9f))
        return 0.0f;

    const int iix = static_cast<int>(ix);
    const int iiy = static_cast<int>(iy);
    const float scalex = ix - static_cast<float>(iix);
    const float scaley = iy - static_cast<float>(iiy);

    const int w = img.width;
    const int h = img.height;
    const float* I = img.data.data();

    float valbl = 0.0f;
    float valbr = 0.0f;
    float valtl = 0.0f;
    float valtr = 0.0f;
    if (iiy >= 0 && iiy < h && iix >= 0 && iix < w)
        valbl = I[iiy * w + iix];
    if (iiy >= 0 && iiy < h && iix + 1 >= 0 && iix + 1 < w)
        valbr = I[iiy * w + iix + 1];
    if (iiy + 1 >= 0 && iiy + 1 < h && iix >= 0 && iix < w)
        valtl = I[(iiy + 1) * w + iix];
    if (iiy + 1 >= 0 && iiy + 1 < h && iix + 1 >= 0 && iix + 1 < w)
        valtr = I[(iiy + 1) * w + iix + 1];

    const float valb = (1 - scalex) * valbl + scalex * valbr;
    const float valt = (1 - scalex) * valtl + scalex * valtr;
    return (1 - scaley) * valb + scaley * valt;
}

namespace detail {

/// One voxel of the scalar reference kernel: forward projection, division
/// dehomogenization, guarded bilinear sample, inverse-square weighting.
/// Shared by backproject_reference and the optimized kernel's single-lane
/// fidelity mode so the two are bitwise identical by construction. The image
/// pad offset is subtracted so padded rasters can be sampled; it is exactly
/// zero for unpadded images and leaves the arithmetic unchanged there.
inline float reference_sample(const ProjectionImage& img, const float a[12],
                              float wx, float wy, float wz) {
    const float u = wx * a[0] + wy * a[3] + wz * a[6] + a[9];
    const float v = wx * a[1] + wy * a[4] + wz * a[7] + a[10];
    const float w = wx * a[2] + wy * a[5] + wz * a[8] + a[11];
    if (w == 0.0f)
        throw geometry_error("backprojection hit a voxel with w == 0");
    const float ix = u / w - static_cast<float>(img.pad_du);
    const float iy = v / w - static_cast<float>(img.pad_dv);
    const float val = bilinear_sample_guarded(img, ix, iy);
    return val / (w * w);
}

} // namespace detail

/// Accumulates one projection into the volume, iterating z, then y, then x,
/// entirely in single precision. The image must be unpadded. Deliberately
/// unoptimized; this is the oracle every optimized kernel is tested against.
void backproject_reference(Volume& vol, const ProjectionImage& img, const ProjectionMatrix& m);

/// backproject_reference for every (image, matrix) pair of the stack in order.
void reconstruct_reference(Volume& vol, const ProjectionStack& stack);

} // namespace conebeam
