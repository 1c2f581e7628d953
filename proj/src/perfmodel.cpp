#include "conebeam/perfmodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace conebeam {

namespace {

using nlohmann::json;

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

json parse_json(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw format_error(std::string(what) + ": malformed JSON");
    return j;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("cannot open '" + path + "' for reading");
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

const json& require(const json& j, const char* key, const char* what) {
    const auto it = j.find(key);
    if (it == j.end())
        throw validation_error(std::string(what) + ": missing field '" + key + "'");
    return *it;
}

std::map<int, double> parse_gather_level(const json& j, const char* what) {
    std::map<int, double> table;
    for (const auto& [key, value] : j.items()) {
        int elements = 0;
        try {
            elements = std::stoi(key);
        } catch (const std::exception&) {
            throw validation_error(std::string(what) + ": bad gather table key '" + key + "'");
        }
        table[elements] = value.get<double>();
    }
    return table;
}

} // namespace

void MachineModel::validate() const {
    if (cores < 1)
        throw validation_error("machine model: cores must be >= 1");
    if (!(clock_ghz > 0.0))
        throw validation_error("machine model: clock_ghz must be positive");
    if (!(runtime_clock_ghz > 0.0))
        throw validation_error("machine model: runtime_clock_ghz must be positive");
    if (cache_line_bytes < 1)
        throw validation_error("machine model: cache_line_bytes must be >= 1");
    if (issue_slots_per_thread < 1)
        throw validation_error("machine model: issue_slots_per_thread must be >= 1");
    if (!(sustained_bw_gibs > 0.0))
        throw validation_error("machine model: sustained_bw_gibs must be positive");
    for (const int e : {1, 2, 4, 8, 16}) {
        const auto l1 = gather_l1.find(e);
        const auto l2 = gather_l2.find(e);
        if (l1 == gather_l1.end() || l2 == gather_l2.end())
            throw validation_error("machine model: gather table is missing the " +
                                   std::to_string(e) + "-per-CL row");
        if (!(l1->second > 0.0) || !(l2->second > 0.0))
            throw validation_error("machine model: gather latencies must be positive");
        if (l2->second < l1->second)
            throw validation_error("machine model: L2 gather latency below L1 for the " +
                                   std::to_string(e) + "-per-CL row");
    }
}

MachineModel MachineModel::from_json_text(const std::string& text) {
    const json j = parse_json(text, "machine model");
    MachineModel m;
    m.name = j.value("name", "unnamed machine");
    m.cores = require(j, "cores", "machine model").get<int32_t>();
    m.clock_ghz = require(j, "clock_ghz", "machine model").get<double>();
    m.runtime_clock_ghz = j.value("runtime_clock_ghz", m.clock_ghz);
    m.cache_line_bytes = j.value("cache_line_bytes", 64);
    m.issue_slots_per_thread = j.value("issue_slots_per_thread", 2);
    m.sustained_bw_gibs = require(j, "sustained_bw_gibs", "machine model").get<double>();
    const json& table = require(j, "gather_latency_cycles", "machine model");
    m.gather_l1 = parse_gather_level(require(table, "l1", "machine model"), "machine model");
    m.gather_l2 = parse_gather_level(require(table, "l2", "machine model"), "machine model");
    m.validate();
    return m;
}

MachineModel MachineModel::from_file(const std::string& path) {
    return from_json_text(slurp(path));
}

void KernelModel::validate() const {
    if (!(gatherless_cycles >= 0.0))
        throw validation_error("kernel model: gatherless_cycles must be >= 0");
    if (gathers_per_iteration < 0)
        throw validation_error("kernel model: gathers_per_iteration must be >= 0");
    if (elements_per_cacheline < 1)
        throw validation_error("kernel model: elements_per_cacheline must be >= 1");
    if (!(l1_hit_fraction >= 0.0) || !(l1_hit_fraction <= 1.0))
        throw validation_error("kernel model: l1_hit_fraction must be in [0, 1]");
    if (!(bytes_mem_per_iteration >= 0.0))
        throw validation_error("kernel model: bytes_mem_per_iteration must be >= 0");
    if (voxels_per_iteration < 1)
        throw validation_error("kernel model: voxels_per_iteration must be >= 1");
    if (!(overhead_seconds >= 0.0))
        throw validation_error("kernel model: overhead_seconds must be >= 0");
    if (!(total_voxel_updates >= 0.0))
        throw validation_error("kernel model: total_voxel_updates must be >= 0");
    if (measured_seconds && !(*measured_seconds > 0.0))
        throw validation_error("kernel model: measured_seconds must be positive");
}

KernelModel KernelModel::from_json_text(const std::string& text) {
    const json j = parse_json(text, "kernel model");
    KernelModel k;
    k.name = j.value("name", "unnamed kernel");
    k.gatherless_cycles = require(j, "gatherless_cycles", "kernel model").get<double>();
    k.gathers_per_iteration =
        require(j, "gathers_per_iteration", "kernel model").get<int32_t>();
    k.elements_per_cacheline =
        require(j, "elements_per_cacheline", "kernel model").get<int32_t>();
    k.l1_hit_fraction = require(j, "l1_hit_fraction", "kernel model").get<double>();
    k.bytes_mem_per_iteration =
        require(j, "bytes_mem_per_iteration", "kernel model").get<double>();
    k.voxels_per_iteration = require(j, "voxels_per_iteration", "kernel model").get<int32_t>();
    k.overhead_seconds = require(j, "overhead_seconds", "kernel model").get<double>();
    k.total_voxel_updates = require(j, "total_voxel_updates", "kernel model").get<double>();
    if (j.contains("measured_seconds"))
        k.measured_seconds = j["measured_seconds"].get<double>();
    k.validate();
    return k;
}

KernelModel KernelModel::from_file(const std::string& path) {
    return from_json_text(slurp(path));
}

double gather_latency(const MachineModel& m, int elements_per_cl, CacheLevel level) {
    const auto& table = level == CacheLevel::l1 ? m.gather_l1 : m.gather_l2;
    const auto it = table.find(elements_per_cl);
    if (it == table.end())
        throw validation_error("gather table has no " + std::to_string(elements_per_cl) +
                               "-per-CL row");
    return it->second;
}

double gather_loop_cycles(const MachineModel& m, int elements_per_cl, CacheLevel level,
                          int vector_width) {
    if (vector_width < 1 || vector_width % elements_per_cl != 0)
        throw validation_error("gather_loop_cycles: vector width must be a multiple of "
                               "elements_per_cl");
    return gather_latency(m, elements_per_cl, level) *
           static_cast<double>(vector_width / elements_per_cl);
}

double core_execution_cycles(const KernelModel& k, const MachineModel& m) {
    return k.gatherless_cycles +
           k.gathers_per_iteration * gather_latency(m, k.elements_per_cacheline, CacheLevel::l1);
}

double effective_l2_bandwidth(const MachineModel& m, int elements_per_cl) {
    const double l1 = gather_latency(m, elements_per_cl, CacheLevel::l1);
    const double l2 = gather_latency(m, elements_per_cl, CacheLevel::l2);
    if (l2 == l1)
        throw validation_error("effective_l2_bandwidth: equal L1/L2 gather latencies");
    return m.cache_line_bytes / (l2 - l1);
}

double memory_subsystem_cycles(const KernelModel& k, const MachineModel& m) {
    const double l2_bytes = static_cast<double>(k.gathers_per_iteration) *
                            m.cache_line_bytes * (1.0 - k.l1_hit_fraction);
    if (l2_bytes == 0.0)
        return 0.0;
    return l2_bytes / effective_l2_bandwidth(m, k.elements_per_cacheline);
}

double total_cycles_per_iteration(const KernelModel& k, const MachineModel& m) {
    return core_execution_cycles(k, m) + memory_subsystem_cycles(k, m);
}

double required_bandwidth_gibs(const KernelModel& k, const MachineModel& m) {
    const double cycles = std::round(total_cycles_per_iteration(k, m));
    return m.clock_ghz * 1.0e9 / cycles * m.cores * k.bytes_mem_per_iteration / kGiB;
}

double seconds_from_cycles(double cycles, double clock_ghz) {
    return cycles / (clock_ghz * 1.0e9);
}

double cycles_from_seconds(double seconds, double clock_ghz) {
    return seconds * clock_ghz * 1.0e9;
}

ModelReport predict_runtime(const KernelModel& k, const MachineModel& m) {
    k.validate();
    m.validate();

    ModelReport r;
    r.machine_name = m.name;
    r.kernel_name = k.name;
    r.core_cycles = k.gatherless_cycles;
    r.gather_cycles = k.gathers_per_iteration *
                      gather_latency(m, k.elements_per_cacheline, CacheLevel::l1);
    r.mem_cycles = memory_subsystem_cycles(k, m);
    r.total_cycles = r.core_cycles + r.gather_cycles + r.mem_cycles;
    r.cycles_rounded = std::round(r.total_cycles);
    r.required_bw_gibs = required_bandwidth_gibs(k, m);
    r.sustained_bw_gibs = m.sustained_bw_gibs;
    r.bandwidth_feasible = r.required_bw_gibs <= m.sustained_bw_gibs;

    const double iterations = k.total_voxel_updates / k.voxels_per_iteration;
    r.kernel_seconds = iterations *
                       seconds_from_cycles(r.cycles_rounded, m.runtime_clock_ghz) / m.cores;
    r.overhead_seconds = k.overhead_seconds;
    r.total_seconds = r.kernel_seconds + r.overhead_seconds;
    if (k.measured_seconds) {
        r.measured_seconds = k.measured_seconds;
        r.model_error_fraction =
            std::fabs(*k.measured_seconds - r.total_seconds) / *k.measured_seconds;
    }
    return r;
}

std::string model_report_json(const ModelReport& r) {
    json j;
    j["machine"] = r.machine_name;
    j["kernel"] = r.kernel_name;
    j["cycles"]["core"] = r.core_cycles;
    j["cycles"]["gather"] = r.gather_cycles;
    j["cycles"]["memory"] = r.mem_cycles;
    j["cycles"]["total"] = r.total_cycles;
    j["cycles"]["total_rounded"] = r.cycles_rounded;
    j["bandwidth_gibs"]["required"] = r.required_bw_gibs;
    j["bandwidth_gibs"]["sustained"] = r.sustained_bw_gibs;
    j["bandwidth_gibs"]["feasible"] = r.bandwidth_feasible;
    j["runtime_seconds"]["kernel"] = r.kernel_seconds;
    j["runtime_seconds"]["overhead"] = r.overhead_seconds;
    j["runtime_seconds"]["total"] = r.total_seconds;
    if (r.measured_seconds) {
        j["runtime_seconds"]["measured"] = *r.measured_seconds;
        j["model_error_fraction"] = *r.model_error_fraction;
    }
    return j.dump(2);
}

std::string model_report_text(const ModelReport& r) {
    char buf[128];
    std::ostringstream os;
    os << "analytical performance model\n";
    os << "  kernel:  " << r.kernel_name << "\n";
    os << "  machine: " << r.machine_name << "\n";
    os << "  cycles per cache-line update\n";
    std::snprintf(buf, sizeof buf, "    core execution (gather-less)  %8.1f\n", r.core_cycles);
    os << buf;
    std::snprintf(buf, sizeof buf, "    gather constructs (L1)        %8.1f\n", r.gather_cycles);
    os << buf;
    std::snprintf(buf, sizeof buf, "    memory subsystem (L2 -> L1)   %8.1f\n", r.mem_cycles);
    os << buf;
    std::snprintf(buf, sizeof buf, "    total                         %8.1f  (rounded: %.0f)\n",
                  r.total_cycles, r.cycles_rounded);
    os << buf;
    os << "  bandwidth\n";
    std::snprintf(buf, sizeof buf, "    required                      %8.1f GiB/s\n",
                  r.required_bw_gibs);
    os << buf;
    std::snprintf(buf, sizeof buf, "    sustained (measured)          %8.1f GiB/s\n",
                  r.sustained_bw_gibs);
    os << buf;
    os << "    feasible                      " << (r.bandwidth_feasible ? "     yes" : "      NO")
       << "\n";
    os << "  runtime\n";
    std::snprintf(buf, sizeof buf, "    kernel                        %8.2f s\n",
                  r.kernel_seconds);
    os << buf;
    std::snprintf(buf, sizeof buf, "    overhead                      %8.2f s\n",
                  r.overhead_seconds);
    os << buf;
    std::snprintf(buf, sizeof buf, "    total                         %8.2f s\n",
                  r.total_seconds);
    os << buf;
    if (r.measured_seconds) {
        std::snprintf(buf, sizeof buf, "    measured                      %8.2f s\n",
                      *r.measured_seconds);
        os << buf;
        std::snprintf(buf, sizeof buf, "    model error                   %8.1f %%\n",
                      *r.model_error_fraction * 100.0);
        os << buf;
    }
    return os.str();
}

} // namespace conebeam
