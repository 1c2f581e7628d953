#include "conebeam/membench.hpp"

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace conebeam {

namespace {

using clock_type = std::chrono::steady_clock;
using nlohmann::json;

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;
constexpr int kLanesPerGroup = 16;
constexpr int kFloatsPerCl = 16; // 64-byte lines

double elapsed_seconds(clock_type::time_point a, clock_type::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

} // namespace

// ---------------------------------------------------------------------------
// Streaming update
// ---------------------------------------------------------------------------

StreamResult stream_update_bench(uint64_t buffer_bytes, int threads, int reps,
                                 int warmup_reps) {
    if (threads < 1)
        throw validation_error("stream_update_bench: threads must be >= 1");
    if (reps < 1)
        throw validation_error("stream_update_bench: reps must be >= 1");
    if (warmup_reps < 0)
        throw validation_error("stream_update_bench: warmup_reps must be >= 0");
    // Slices are cache-line aligned; require at least one line per thread.
    if (buffer_bytes < static_cast<uint64_t>(threads) * 64)
        throw validation_error("stream_update_bench: buffer too small for thread count");
    if (warmup_reps + reps > (1 << 24) - 1)
        throw validation_error("stream_update_bench: too many repetitions for an exact "
                               "float checksum");

    const std::size_t n = static_cast<std::size_t>(buffer_bytes / sizeof(float)) /
                          kFloatsPerCl * kFloatsPerCl;
    std::vector<float> buffer(n, 0.0f);

    // Disjoint contiguous per-thread slices, aligned to cache lines.
    std::vector<std::size_t> bound(static_cast<std::size_t>(threads) + 1, 0);
    const std::size_t lines = n / kFloatsPerCl;
    for (int t = 0; t <= threads; ++t)
        bound[t] = (lines * t / threads) * kFloatsPerCl;

    std::barrier sync(threads + 1);
    clock_type::time_point t0;
    clock_type::time_point t1;

    auto body = [&](int tid) {
        float* p = buffer.data() + bound[tid];
        float* end = buffer.data() + bound[tid + 1];
        for (int r = 0; r < warmup_reps; ++r)
            for (float* q = p; q != end; ++q)
                *q += 1.0f;
        sync.arrive_and_wait();
        for (int r = 0; r < reps; ++r)
            for (float* q = p; q != end; ++q)
                *q += 1.0f;
        sync.arrive_and_wait();
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
        pool.emplace_back(body, t);
    sync.arrive_and_wait();
    t0 = clock_type::now();
    sync.arrive_and_wait();
    t1 = clock_type::now();
    for (auto& t : pool)
        t.join();

    // Every element must have been incremented exactly warmup+reps times.
    const float expect = static_cast<float>(warmup_reps + reps);
    for (std::size_t i = 0; i < n; ++i)
        if (buffer[i] != expect)
            throw error("stream_update_bench: checksum mismatch, slices overlapped or "
                        "were skipped");

    StreamResult res;
    res.buffer_bytes = static_cast<uint64_t>(n) * sizeof(float);
    res.threads = threads;
    res.reps = reps;
    res.seconds = elapsed_seconds(t0, t1);
    res.bytes_moved = 2.0 * static_cast<double>(res.buffer_bytes) * reps;
    res.gib_per_s = res.bytes_moved / kGiB / res.seconds;
    return res;
}

StreamSweep stream_update_sweep(uint64_t buffer_bytes, const std::vector<int>& thread_counts,
                                int reps, int warmup_reps) {
    if (thread_counts.empty())
        throw validation_error("stream_update_sweep: no thread counts given");
    StreamSweep sweep;
    sweep.points.reserve(thread_counts.size());
    for (int t : thread_counts)
        sweep.points.push_back(stream_update_bench(buffer_bytes, t, reps, warmup_reps));
    return sweep;
}

double StreamSweep::best_gib_per_s() const {
    double best = 0.0;
    for (const auto& p : points)
        best = std::max(best, p.gib_per_s);
    return best;
}

// ---------------------------------------------------------------------------
// Gather pattern
// ---------------------------------------------------------------------------

std::vector<int64_t> gather_group_offsets(int elements_per_cl) {
    if (elements_per_cl != 1 && elements_per_cl != 2 && elements_per_cl != 4 &&
        elements_per_cl != 8 && elements_per_cl != 16)
        throw validation_error("gather_group_offsets: elements_per_cl must be one of "
                               "1, 2, 4, 8, 16");
    std::vector<int64_t> offsets(kLanesPerGroup);
    for (int l = 0; l < kLanesPerGroup; ++l)
        offsets[l] = (static_cast<int64_t>(l / elements_per_cl) * kFloatsPerCl +
                      l % elements_per_cl) *
                     static_cast<int64_t>(sizeof(float));
    return offsets;
}

namespace {

// One pass over all groups; E distinct template instances keep the lane
// offsets as compile-time constants, as a vectorized gather loop would.
template <int E>
float gather_pass(const float* data, std::size_t groups) {
    constexpr int cls_per_group = kLanesPerGroup / E;
    float sum = 0.0f;
    for (std::size_t g = 0; g < groups; ++g) {
        const float* base = data + g * (cls_per_group * kFloatsPerCl);
        for (int l = 0; l < kLanesPerGroup; ++l)
            sum += base[(l / E) * kFloatsPerCl + (l % E)];
    }
    return sum;
}

float run_gather_pass(int elements_per_cl, const float* data, std::size_t groups) {
    switch (elements_per_cl) {
    case 1: return gather_pass<1>(data, groups);
    case 2: return gather_pass<2>(data, groups);
    case 4: return gather_pass<4>(data, groups);
    case 8: return gather_pass<8>(data, groups);
    case 16: return gather_pass<16>(data, groups);
    }
    throw validation_error("gather_pattern_bench: bad distribution class");
}

volatile float g_gather_sink = 0.0f;

GatherPoint gather_level(int elements_per_cl, uint64_t working_set_bytes, bool l2,
                         const GatherBenchConfig& cfg) {
    const int cls_per_group = kLanesPerGroup / elements_per_cl;
    const uint64_t group_bytes = static_cast<uint64_t>(cls_per_group) * 64;
    const std::size_t groups = std::max<std::size_t>(1, working_set_bytes / group_bytes);

    std::vector<float> data(groups * cls_per_group * kFloatsPerCl, 1.0f);

    for (int r = 0; r < cfg.warmup_reps; ++r)
        g_gather_sink = g_gather_sink + run_gather_pass(elements_per_cl, data.data(), groups);

    const auto t0 = clock_type::now();
    float sum = 0.0f;
    for (int r = 0; r < cfg.reps; ++r)
        sum += run_gather_pass(elements_per_cl, data.data(), groups);
    const auto t1 = clock_type::now();
    g_gather_sink = g_gather_sink + sum;

    GatherPoint p;
    p.elements_per_cl = elements_per_cl;
    p.l2 = l2;
    p.ns_per_group = elapsed_seconds(t0, t1) * 1.0e9 /
                     (static_cast<double>(cfg.reps) * static_cast<double>(groups));
    if (cfg.clock_ghz > 0.0)
        p.cycles_per_group = p.ns_per_group * cfg.clock_ghz;
    return p;
}

} // namespace

GatherTable gather_pattern_bench(const GatherBenchConfig& cfg) {
    if (cfg.reps < 1)
        throw validation_error("gather_pattern_bench: reps must be >= 1");
    if (cfg.warmup_reps < 0)
        throw validation_error("gather_pattern_bench: warmup_reps must be >= 0");
    if (cfg.l1_bytes < 1024 || cfg.l2_bytes <= cfg.l1_bytes)
        throw validation_error("gather_pattern_bench: working sets must satisfy "
                               "1 KiB <= l1_bytes < l2_bytes");

    GatherTable table;
    table.config = cfg;
    for (const bool l2 : {false, true})
        for (const int e : {16, 8, 4, 2, 1})
            table.points.push_back(
                gather_level(e, l2 ? cfg.l2_bytes : cfg.l1_bytes, l2, cfg));
    return table;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string stream_text(const StreamSweep& s) {
    std::ostringstream os;
    char buf[96];
    os << "streaming update kernel (load + add + store)\n";
    os << "  threads    GiB/s    seconds\n";
    for (const auto& p : s.points) {
        std::snprintf(buf, sizeof buf, "  %7d  %7.2f  %9.4f\n", p.threads, p.gib_per_s,
                      p.seconds);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "  sustained_bw_gibs: %.2f\n", s.best_gib_per_s());
    os << buf;
    return os.str();
}

std::string stream_json(const StreamSweep& s) {
    json j;
    j["points"] = json::array();
    for (const auto& p : s.points) {
        j["points"].push_back({{"threads", p.threads},
                               {"buffer_bytes", p.buffer_bytes},
                               {"reps", p.reps},
                               {"seconds", p.seconds},
                               {"bytes_moved", p.bytes_moved},
                               {"gib_per_s", p.gib_per_s}});
    }
    j["sustained_bw_gibs"] = s.best_gib_per_s();
    return j.dump(2);
}

std::string gather_table_text(const GatherTable& t) {
    const bool cycles = t.config.clock_ghz > 0.0;
    std::ostringstream os;
    char buf[128];
    os << "gather pattern benchmark, loop total per 16-element group\n";
    os << (cycles ? "  distribution     L1 [ns]   L2 [ns]   L1 [cy]   L2 [cy]\n"
                  : "  distribution     L1 [ns]   L2 [ns]\n");
    for (const int e : {16, 8, 4, 2, 1}) {
        const GatherPoint* l1 = nullptr;
        const GatherPoint* l2 = nullptr;
        for (const auto& p : t.points) {
            if (p.elements_per_cl != e)
                continue;
            (p.l2 ? l2 : l1) = &p;
        }
        if (cycles)
            std::snprintf(buf, sizeof buf, "  %2d per CL       %8.2f  %8.2f  %8.1f  %8.1f\n",
                          e, l1->ns_per_group, l2->ns_per_group, l1->cycles_per_group,
                          l2->cycles_per_group);
        else
            std::snprintf(buf, sizeof buf, "  %2d per CL       %8.2f  %8.2f\n", e,
                          l1->ns_per_group, l2->ns_per_group);
        os << buf;
    }
    return os.str();
}

std::string gather_table_json(const GatherTable& t) {
    json j;
    j["working_set_bytes"] = {{"l1", t.config.l1_bytes}, {"l2", t.config.l2_bytes}};
    j["reps"] = t.config.reps;
    for (const auto& p : t.points) {
        const char* level = p.l2 ? "l2" : "l1";
        j["gather_table_ns"][level][std::to_string(p.elements_per_cl)] = p.ns_per_group;
        if (t.config.clock_ghz > 0.0)
            j["gather_latency_cycles"][level][std::to_string(p.elements_per_cl)] =
                p.cycles_per_group;
    }
    if (t.config.clock_ghz > 0.0)
        j["clock_ghz"] = t.config.clock_ghz;
    return j.dump(2);
}

} // namespace conebeam
