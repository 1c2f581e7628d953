#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "conebeam/dataset.hpp"

namespace conebeam {

/// Half-open x-range of one voxel line. Empty ranges are canonicalized to
/// {0, 0}.
struct LineRange {
    int32_t start = 0;
    int32_t stop = 0;

    bool empty() const { return start >= stop; }
    int32_t count() const { return empty() ? 0 : stop - start; }
    bool operator==(const LineRange&) const = default;
};

/// Per-projection clipping mask: for every voxel line (z, y) the maximal
/// x-interval whose voxels project with their full bilinear footprint inside
/// the unpadded detector, i.e. whose continuous detector position lies in
/// [0, width-1) x [0, height-1). Positions in (-1, 0) are excluded even
/// though truncation would index in-bounds taps. Lines are stored in
/// collapsed order z * L + y.
struct ClipMask {
    int32_t edge_voxels = 0;
    std::vector<LineRange> lines;

    const LineRange& line(int z, int y) const {
        return lines[static_cast<std::size_t>(z) * edge_voxels + y];
    }
    uint64_t admitted_count() const;
};

/// Zero border sizes in pixels.
struct PadSpec {
    int32_t left = 0;
    int32_t right = 0;
    int32_t top = 0;
    int32_t bottom = 0;

    void validate() const;
    bool operator==(const PadSpec&) const = default;
};

/// Static schedule over the collapsed z*y line index space: chunk i is owned
/// by worker i mod workers. Chunks partition [0, L^2) exactly.
struct ChunkPlan {
    struct Chunk {
        int64_t first_line = 0;
        int32_t count = 0;
    };

    int32_t chunk_size = 0;
    int32_t workers = 0;
    int64_t line_count = 0;
    std::vector<Chunk> chunks;

    int32_t worker_of(std::size_t chunk_index) const {
        return static_cast<int32_t>(chunk_index % workers);
    }
};

/// Throws geometry_error when w <= 0 anywhere over the volume. Clip ranges
/// are found from the projected line endpoints (the projected coordinates are
/// monotone along a line while w keeps its sign) and verified against the
/// same single-precision per-voxel predicate the kernels observe; lines where
/// the estimate cannot be trusted fall back to a per-voxel scan.
ClipMask compute_clip_mask(const ProjectionMatrix& m, const VolumeGeometry& g,
                           int width, int height);

/// Copies the image into an enlarged raster with a zero border and records
/// the pad offset in pad_du/pad_dv.
ProjectionImage zero_pad(const ProjectionImage& img, const PadSpec& p);

/// Minimal pads such that every voxel admitted by any mask has all four taps
/// inside the padded raster, with a minimum of 1 on the right/bottom where
/// the +1 taps can touch the detector edge.
PadSpec compute_pad_spec(const ProjectionStack& s, const std::vector<ClipMask>& masks);

/// Partitions [0, L^2) into chunks of chunk_size lines (last chunk short).
ChunkPlan make_chunk_plan(int32_t edge_voxels, int32_t chunk_size, int32_t workers);

/// Number of distinct cache lines touched by a group of byte offsets; this is
/// the number of trips a hardware gather loop would take for that group.
int count_cacheline_splits(std::span<const int64_t> byte_offsets, int cl_bytes = 64);

/// Gather instrumentation accumulated over lane groups. Tap groups are
/// indexed bl, br, tl, tr.
struct GatherStats {
    std::array<uint64_t, 4> cacheline_sum{}; ///< sum of distinct-CL counts per tap group
    uint64_t groups = 0;                     ///< lane groups observed

    std::array<double, 4> mean_cachelines() const;
    uint64_t gather_trips() const;
    void merge(const GatherStats& other);
};

std::string gather_stats_text(const GatherStats& s);
std::string gather_stats_json(const GatherStats& s);

/// Branch-free line update kernel: updates voxels [x_start, x_stop) of line
/// (z, y) in groups of `lanes` (4, 8, or 16) with a scalar tail, substituting
/// a reciprocal for the two divides. Every tap of every updated voxel must
/// lie inside the image raster (clip range + zero padding contract); no
/// per-tap guards are executed.
void backproject_line(Volume& vol, const ProjectionImage& img_padded,
                      const ProjectionMatrix& m, int z, int y,
                      int x_start, int x_stop, int lanes,
                      GatherStats* stats = nullptr);

/// Options for reconstruct_optimized. lanes == 1 selects a scalar fidelity
/// mode that runs the reference kernel's per-voxel body (division, guarded
/// taps) over the scheduled lines; it is bitwise-identical to the reference
/// when clipping and padding are disabled.
struct OptOptions {
    int32_t lanes = 16;
    int32_t chunk_size = 262; ///< voxel lines per chunk; the default was tuned
                              ///< for a 240-thread machine, adjust per host
    int32_t workers = 0;      ///< 0 = hardware concurrency
    bool use_clip = true;
    bool use_pad = true; ///< taps run guard-free only when use_pad and
                         ///< use_clip are both enabled; any other combination
                         ///< keeps per-tap bounds guards
    bool instrument = false;

    void validate() const;
};

struct ReconstructStats {
    double precompute_seconds = 0.0; ///< masks, pad sizing, padded copies
    double kernel_seconds = 0.0;     ///< line update kernels only
    uint64_t voxel_updates = 0;      ///< admitted voxels when clipping, L^3 per projection otherwise
    GatherStats gather;              ///< filled when instrumenting
};

/// Per projection: clip (optional), pad (optional), then run the chunk plan
/// across workers. Workers write disjoint voxel lines, so the result is
/// bitwise independent of the worker count. Matches reconstruct_reference
/// within 1e-5 relative per voxel.
void reconstruct_optimized(Volume& vol, const ProjectionStack& stack,
                           const OptOptions& options, ReconstructStats* stats = nullptr);

} // namespace conebeam
