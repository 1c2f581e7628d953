#include "conebeam/bench.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "conebeam/kernel_ref.hpp"

namespace conebeam {

namespace {

using nlohmann::json;

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("cannot open '" + path + "' for reading");
    uint64_t hash = 1469598103934665603ull;
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        const auto n = static_cast<std::size_t>(is.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ull;
        }
        if (!is)
            break;
    }
    return hash;
}

std::string hex16(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// JSON has no infinity; PSNR of identical volumes round-trips as a string.
json psnr_to_json(double psnr) {
    if (std::isinf(psnr))
        return psnr > 0 ? "inf" : "-inf";
    return psnr;
}

double psnr_from_json(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
        throw format_error("bench result: bad psnr_db value '" + s + "'");
    }
    return j.get<double>();
}

} // namespace

QualityMetrics quality_metrics(const Volume& test, const Volume& reference) {
    if (test.geometry != reference.geometry)
        throw geometry_error("quality_metrics: volume geometries differ");

    double sum_sq = 0.0;
    double max_ref = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < reference.voxels.size(); ++i) {
        const double d = static_cast<double>(test.voxels[i]) - reference.voxels[i];
        sum_sq += d * d;
        max_ref = std::max(max_ref, static_cast<double>(reference.voxels[i]));
    }

    QualityMetrics q;
    q.mse = sum_sq / static_cast<double>(reference.voxels.size());
    q.psnr_db = q.mse == 0.0 ? std::numeric_limits<double>::infinity()
                             : 10.0 * std::log10(max_ref * max_ref / q.mse);
    return q;
}

double gups(double voxel_updates, double seconds) {
    if (!(seconds > 0.0))
        throw validation_error("gups: seconds must be positive");
    if (!(voxel_updates >= 0.0))
        throw validation_error("gups: voxel_updates must be non-negative");
    return voxel_updates / seconds / 1.0e9;
}

double max_relative_error(const Volume& test, const Volume& reference, double denom_floor) {
    if (test.geometry != reference.geometry)
        throw geometry_error("max_relative_error: volume geometries differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < reference.voxels.size(); ++i) {
        const double r = reference.voxels[i];
        const double d = std::fabs(static_cast<double>(test.voxels[i]) - r);
        worst = std::max(worst, d / (std::fabs(r) + denom_floor));
    }
    return worst;
}

int effective_workers(int requested) {
    if (const char* env = std::getenv("CONEBEAM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0)
            return static_cast<int>(v);
    }
    return requested;
}

std::string bench_result_json(const BenchResult& r) {
    json j;
    j["config"] = {{"stack", r.stack_path},
                   {"edge_voxels", r.edge_voxels},
                   {"projections", r.projections},
                   {"detector_width", r.detector_width},
                   {"detector_height", r.detector_height},
                   {"lanes", r.lanes},
                   {"chunk_size", r.chunk_size},
                   {"workers", r.workers},
                   {"use_clip", r.use_clip},
                   {"use_pad", r.use_pad},
                   {"include_precompute", r.include_precompute}};
    j["kernel_seconds"] = r.kernel_seconds;
    j["precompute_seconds"] = r.precompute_seconds;
    j["wall_seconds"] = r.wall_seconds;
    j["voxel_updates"] = r.voxel_updates;
    j["voxel_updates_basis"] = r.voxel_updates_basis;
    j["gups"] = r.gups;
    j["mse"] = r.mse;
    j["psnr_db"] = psnr_to_json(r.psnr_db);
    return j.dump(2);
}

BenchResult bench_result_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw format_error("bench result: malformed JSON");
    BenchResult r;
    const json& c = j.at("config");
    r.stack_path = c.at("stack").get<std::string>();
    r.edge_voxels = c.at("edge_voxels").get<int32_t>();
    r.projections = c.at("projections").get<uint64_t>();
    r.detector_width = c.at("detector_width").get<int32_t>();
    r.detector_height = c.at("detector_height").get<int32_t>();
    r.lanes = c.at("lanes").get<int32_t>();
    r.chunk_size = c.at("chunk_size").get<int32_t>();
    r.workers = c.at("workers").get<int32_t>();
    r.use_clip = c.at("use_clip").get<bool>();
    r.use_pad = c.at("use_pad").get<bool>();
    r.include_precompute = c.at("include_precompute").get<bool>();
    r.kernel_seconds = j.at("kernel_seconds").get<double>();
    r.precompute_seconds = j.at("precompute_seconds").get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.voxel_updates = j.at("voxel_updates").get<uint64_t>();
    r.voxel_updates_basis = j.at("voxel_updates_basis").get<std::string>();
    r.gups = j.at("gups").get<double>();
    r.mse = j.at("mse").get<double>();
    r.psnr_db = psnr_from_json(j.at("psnr_db"));
    return r;
}

std::string bench_result_text(const BenchResult& r) {
    char buf[160];
    std::ostringstream os;
    os << "benchmark: " << r.stack_path << "\n";
    std::snprintf(buf, sizeof buf,
                  "  volume %d^3, %llu projections of %dx%d, lanes=%d workers=%d "
                  "clip=%s pad=%s\n",
                  r.edge_voxels, static_cast<unsigned long long>(r.projections),
                  r.detector_width, r.detector_height, r.lanes, r.workers,
                  r.use_clip ? "on" : "off", r.use_pad ? "on" : "off");
    os << buf;
    std::snprintf(buf, sizeof buf, "  kernel %.4f s, precompute %.4f s (timed basis: %s)\n",
                  r.kernel_seconds, r.precompute_seconds,
                  r.include_precompute ? "kernel+precompute" : "kernel only");
    os << buf;
    std::snprintf(buf, sizeof buf, "  %llu voxel updates (%s), %.1f GUp/s\n",
                  static_cast<unsigned long long>(r.voxel_updates),
                  r.voxel_updates_basis.c_str(), r.gups);
    os << buf;
    if (std::isinf(r.psnr_db))
        std::snprintf(buf, sizeof buf, "  vs reference: mse %.6g, psnr inf dB\n", r.mse);
    else
        std::snprintf(buf, sizeof buf, "  vs reference: mse %.6g, psnr %.2f dB\n", r.mse,
                      r.psnr_db);
    os << buf;
    return os.str();
}

BenchResult run_benchmark(const std::string& stack_path, const BenchOptions& options) {
    const ProjectionStack stack = read_stack(stack_path);
    const uint64_t stack_hash = fnv1a64_file(stack_path);
    const std::string cache_path = stack_path + ".ref-" + hex16(stack_hash) + ".cbpv";

    Volume reference;
    bool have_reference = false;
    if (options.use_reference_cache && std::filesystem::exists(cache_path)) {
        try {
            reference = read_volume(cache_path);
            have_reference = reference.geometry == stack.geometry;
        } catch (const error&) {
            have_reference = false; // stale or damaged cache entry, rebuild
        }
    }
    if (!have_reference) {
        reference = Volume(stack.geometry);
        reconstruct_reference(reference, stack);
        if (options.use_reference_cache)
            write_volume(cache_path, reference);
    }

    Volume out(stack.geometry);
    ReconstructStats rs;
    reconstruct_optimized(out, stack, options.opt, &rs);

    const QualityMetrics q = quality_metrics(out, reference);

    BenchResult r;
    r.stack_path = stack_path;
    r.edge_voxels = stack.geometry.edge_voxels;
    r.projections = stack.count();
    r.detector_width = stack.images.front().width;
    r.detector_height = stack.images.front().height;
    r.lanes = options.opt.lanes;
    r.chunk_size = options.opt.chunk_size;
    r.workers = options.opt.workers;
    r.use_clip = options.opt.use_clip;
    r.use_pad = options.opt.use_pad;
    r.include_precompute = options.include_precompute;
    r.kernel_seconds = rs.kernel_seconds;
    r.precompute_seconds = rs.precompute_seconds;
    r.wall_seconds = options.include_precompute ? rs.kernel_seconds + rs.precompute_seconds
                                                : rs.kernel_seconds;
    r.voxel_updates = rs.voxel_updates;
    r.voxel_updates_basis = options.opt.use_clip ? "clipped" : "full";
    r.gups = gups(static_cast<double>(r.voxel_updates), r.wall_seconds);
    r.mse = q.mse;
    r.psnr_db = q.psnr_db;
    return r;
}

} // namespace conebeam
