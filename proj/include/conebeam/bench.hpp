#pragma once

#include <cstdint>
#include <string>

#include "conebeam/dataset.hpp"
#include "conebeam/kernel_opt.hpp"

namespace conebeam {

struct QualityMetrics {
    double mse = 0.0;
    double psnr_db = 0.0; ///< +infinity when the volumes are identical
};

/// MSE (double accumulation) and PSNR = 10*log10(max_ref^2 / mse) against the
/// reference volume's peak value. Throws geometry_error on mismatched
/// geometries.
QualityMetrics quality_metrics(const Volume& test, const Volume& reference);

/// Giga voxel updates per second.
double gups(double voxel_updates, double seconds);

/// Largest |test - ref| / (|ref| + denom_floor) over all voxels.
double max_relative_error(const Volume& test, const Volume& reference, double denom_floor);

/// Worker-count resolution for the harness: the CONEBEAM_THREADS environment
/// variable overrides any requested value; otherwise the request is passed
/// through (0 = hardware concurrency).
int effective_workers(int requested);

struct BenchOptions {
    OptOptions opt;
    bool include_precompute = false; ///< fold mask/pad time into the GUp/s basis
    bool use_reference_cache = true;
};

/// One benchmark run. gups is always recomputable as
/// voxel_updates / wall_seconds / 1e9.
struct BenchResult {
    std::string stack_path;
    int32_t edge_voxels = 0;
    uint64_t projections = 0;
    int32_t detector_width = 0;
    int32_t detector_height = 0;
    int32_t lanes = 0;
    int32_t chunk_size = 0;
    int32_t workers = 0;
    bool use_clip = false;
    bool use_pad = false;
    bool include_precompute = false;

    double kernel_seconds = 0.0;
    double precompute_seconds = 0.0;
    double wall_seconds = 0.0; ///< kernel_seconds (+ precompute when included)
    uint64_t voxel_updates = 0;
    std::string voxel_updates_basis; ///< "clipped" or "full"
    double gups = 0.0;
    double mse = 0.0;
    double psnr_db = 0.0;
};

std::string bench_result_json(const BenchResult& r);
BenchResult bench_result_from_json(const std::string& text);
std::string bench_result_text(const BenchResult& r);

/// Loads the stack, times reconstruct_optimized (dataset I/O always excluded;
/// mask/pad precompute excluded unless include_precompute), and scores the
/// result against a reference reconstruction. The reference volume is cached
/// next to the stack, keyed by a hash of the stack file's bytes.
BenchResult run_benchmark(const std::string& stack_path, const BenchOptions& options);

} // namespace conebeam
