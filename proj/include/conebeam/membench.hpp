#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conebeam/errors.hpp"

namespace conebeam {

/// One point of the streaming-update sweep: every element of a shared buffer
/// is loaded, incremented, and stored back, with threads owning disjoint
/// contiguous slices. Bytes moved count the load and the store.
struct StreamResult {
    uint64_t buffer_bytes = 0;
    int32_t threads = 0;
    int32_t reps = 0;
    double seconds = 0.0;
    double bytes_moved = 0.0;
    double gib_per_s = 0.0;
};

/// Runs the update kernel with the given thread count. Warm-up repetitions
/// run before the timed region; timing is wall clock bracketing a barrier so
/// the slowest worker bounds it. The buffer should be several times larger
/// than the last-level cache to measure memory bandwidth.
StreamResult stream_update_bench(uint64_t buffer_bytes, int threads, int reps,
                                 int warmup_reps = 3);

struct StreamSweep {
    std::vector<StreamResult> points;
    double best_gib_per_s() const;
};

StreamSweep stream_update_sweep(uint64_t buffer_bytes, const std::vector<int>& thread_counts,
                                int reps, int warmup_reps = 3);

/// Gather-pattern benchmark configuration. Working-set sizes are
/// host-dependent and therefore supplied by the caller; the defaults suit a
/// 32 KiB L1 / 512 KiB L2 core. A non-zero clock adds a cycles column.
struct GatherBenchConfig {
    uint64_t l1_bytes = 16 * 1024;
    uint64_t l2_bytes = 256 * 1024;
    int32_t reps = 50;
    int32_t warmup_reps = 3;
    double clock_ghz = 0.0;
};

struct GatherPoint {
    int32_t elements_per_cl = 0;
    bool l2 = false; ///< false = L1-sized working set
    double ns_per_group = 0.0;
    double cycles_per_group = 0.0; ///< 0 when no clock was supplied
};

struct GatherTable {
    GatherBenchConfig config;
    std::vector<GatherPoint> points; ///< 5 distributions x 2 levels
};

/// Times 16-element indexed-load groups laid out so each group touches
/// exactly ceil(16 / elements_per_cl) distinct cache lines, for L1- and
/// L2-sized working sets. Offsets are generated on the fly so the working
/// set holds payload only; only the loop-total cost per group is observable
/// this way (a per-instruction split needs hardware gather counters).
GatherTable gather_pattern_bench(const GatherBenchConfig& cfg);

/// Byte offsets of one 16-element group for the given distribution class,
/// relative to the group base. Exposed so tests can check the layout.
std::vector<int64_t> gather_group_offsets(int elements_per_cl);

std::string stream_text(const StreamSweep& s);
std::string stream_json(const StreamSweep& s);
std::string gather_table_text(const GatherTable& t);
std::string gather_table_json(const GatherTable& t);

} // namespace conebeam
