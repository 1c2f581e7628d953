#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "conebeam/errors.hpp"

namespace conebeam {

enum class CacheLevel { l1, l2 };

/// Machine description for the analytical model. The gather tables map the
/// number of elements fetched per cache line (1, 2, 4, 8, 16) to the latency
/// of a single gather instruction in cycles, for data resident in L1 or L2.
///
/// Two clocks are carried because published accountings sometimes quote the
/// nominal clock in the bandwidth stage and a slightly different effective
/// clock in the runtime stage; runtime_clock_ghz defaults to clock_ghz.
struct MachineModel {
    std::string name;
    int32_t cores = 0;
    double clock_ghz = 0.0;
    double runtime_clock_ghz = 0.0;
    int32_t cache_line_bytes = 64;
    int32_t issue_slots_per_thread = 2; ///< a single thread issues every issue_slots cycles
    double sustained_bw_gibs = 0.0;     ///< measured streaming-update bandwidth
    std::map<int, double> gather_l1;
    std::map<int, double> gather_l2;

    void validate() const;
    static MachineModel from_json_text(const std::string& text);
    static MachineModel from_file(const std::string& path);
};

/// Kernel description: per-iteration instruction and traffic counts, where
/// one iteration updates the voxels of a single cache line.
struct KernelModel {
    std::string name;
    double gatherless_cycles = 0.0;     ///< iteration cost with gather loops removed
    int32_t gathers_per_iteration = 0;  ///< gather instructions per iteration
    int32_t elements_per_cacheline = 0; ///< observed distribution class for the gather table
    double l1_hit_fraction = 0.0;       ///< fraction of projection-data gathers served by L1
    double bytes_mem_per_iteration = 0.0; ///< volume CL in + out
    int32_t voxels_per_iteration = 0;
    double overhead_seconds = 0.0; ///< runtime outside the line update kernel
    double total_voxel_updates = 0.0;
    std::optional<double> measured_seconds;

    void validate() const;
    static KernelModel from_json_text(const std::string& text);
    static KernelModel from_file(const std::string& path);
};

/// Full model output. Cycle components are unrounded; the bandwidth and
/// runtime stages consume the whole-cycle rounding of the total, which is
/// how such accountings are conventionally quoted.
struct ModelReport {
    std::string machine_name;
    std::string kernel_name;
    double core_cycles = 0.0;   ///< gather-less execution
    double gather_cycles = 0.0; ///< gather constructs with data in L1
    double mem_cycles = 0.0;    ///< non-overlapping L2->L1 projection traffic
    double total_cycles = 0.0;  ///< sum of the three components
    double cycles_rounded = 0.0;
    double required_bw_gibs = 0.0;
    double sustained_bw_gibs = 0.0;
    bool bandwidth_feasible = false;
    double kernel_seconds = 0.0;
    double overhead_seconds = 0.0;
    double total_seconds = 0.0;
    std::optional<double> measured_seconds;
    std::optional<double> model_error_fraction;
};

/// Latency in cycles of one gather instruction for the given distribution
/// class and cache level. Throws validation_error for keys missing from the
/// machine's table.
double gather_latency(const MachineModel& m, int elements_per_cl, CacheLevel level);

/// Total cycles of a full gather loop construct filling a vector register:
/// per-instruction latency times (vector_width / elements_per_cl).
double gather_loop_cycles(const MachineModel& m, int elements_per_cl, CacheLevel level,
                          int vector_width = 16);

/// Gather-less cycles plus all gather instructions served from L1.
double core_execution_cycles(const KernelModel& k, const MachineModel& m);

/// Effective L2 bandwidth seen by the gather construct, in bytes per cycle:
/// cache line size divided by the L2/L1 latency difference of one gather.
double effective_l2_bandwidth(const MachineModel& m, int elements_per_cl);

/// Cycles spent moving the L1-missing fraction of projection data from L2.
double memory_subsystem_cycles(const KernelModel& k, const MachineModel& m);

/// core_execution_cycles + memory_subsystem_cycles.
double total_cycles_per_iteration(const KernelModel& k, const MachineModel& m);

/// Main-memory bandwidth demand of all cores in GiB/s, from the per-iteration
/// volume traffic and the rounded cycle total.
double required_bandwidth_gibs(const KernelModel& k, const MachineModel& m);

/// Full report: cycle decomposition, bandwidth feasibility, kernel and total
/// runtime, and the model error against the kernel's measured_seconds.
ModelReport predict_runtime(const KernelModel& k, const MachineModel& m);

double seconds_from_cycles(double cycles, double clock_ghz);
double cycles_from_seconds(double seconds, double clock_ghz);

std::string model_report_json(const ModelReport& r);
std::string model_report_text(const ModelReport& r);

} // namespace conebeam
