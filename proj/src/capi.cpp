#include "conebeam/capi.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "conebeam/bench.hpp"
#include "conebeam/dataset.hpp"
#include "conebeam/kernel_opt.hpp"
#include "conebeam/kernel_ref.hpp"
#include "conebeam/membench.hpp"
#include "conebeam/perfmodel.hpp"

struct cb_stack_s {
    conebeam::ProjectionStack v;
};

struct cb_volume_s {
    conebeam::Volume v;
};

namespace {

thread_local std::string g_last_error;

void set_error(const char* what) { g_last_error = what ? what : "unknown error"; }

template <typename Fn>
cb_status guarded(Fn&& fn) noexcept {
    try {
        fn();
        return CB_OK;
    } catch (const conebeam::truncated_error& e) {
        set_error(e.what());
        return CB_ERR_TRUNCATED;
    } catch (const conebeam::format_error& e) {
        set_error(e.what());
        return CB_ERR_FORMAT;
    } catch (const conebeam::io_error& e) {
        set_error(e.what());
        return CB_ERR_IO;
    } catch (const conebeam::geometry_error& e) {
        set_error(e.what());
        return CB_ERR_GEOMETRY;
    } catch (const conebeam::validation_error& e) {
        set_error(e.what());
        return CB_ERR_INVALID;
    } catch (const std::bad_alloc&) {
        set_error("out of memory");
        return CB_ERR_NOMEM;
    } catch (const std::exception& e) {
        set_error(e.what());
        return CB_ERR_INTERNAL;
    } catch (...) {
        set_error("unknown error");
        return CB_ERR_INTERNAL;
    }
}

cb_status require_arg(bool ok, const char* message) {
    if (!ok) {
        set_error(message);
        return CB_ERR_INVALID;
    }
    return CB_OK;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out)
        throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

conebeam::OptOptions to_cpp(const cb_opt_options& o) {
    conebeam::OptOptions opt;
    opt.lanes = o.lanes;
    opt.chunk_size = o.chunk_size;
    opt.workers = o.workers;
    opt.use_clip = o.use_clip != 0;
    opt.use_pad = o.use_pad != 0;
    opt.instrument = o.instrument != 0;
    return opt;
}

} // namespace

extern "C" {

const char* cb_status_name(cb_status status) {
    switch (status) {
    case CB_OK: return "ok";
    case CB_ERR_INVALID: return "invalid argument";
    case CB_ERR_IO: return "i/o error";
    case CB_ERR_FORMAT: return "format error";
    case CB_ERR_TRUNCATED: return "truncated file";
    case CB_ERR_GEOMETRY: return "geometry error";
    case CB_ERR_NOMEM: return "out of memory";
    case CB_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* cb_last_error(void) { return g_last_error.c_str(); }

void cb_string_free(char* s) { std::free(s); }

void cb_generate_config_defaults(cb_generate_config* cfg) {
    if (!cfg)
        return;
    cfg->num_projections = 32;
    cfg->source_isocenter_mm = 400.0;
    cfg->source_detector_mm = 800.0;
    cfg->detector_width = 192;
    cfg->detector_height = 192;
    cfg->pixel_size_mm = 1.0;
    cfg->angular_range_rad = 0.0; // full circle
    cfg->volume_edge_voxels = 64;
    cfg->voxel_size_mm = 1.0;
    cfg->volume_origin_mm = std::nan("");
    cfg->field_spec = "constant:1";
    cfg->seed = 0;
}

cb_status cb_generate(const cb_generate_config* cfg, cb_stack** out) {
    if (cb_status s = require_arg(cfg && out, "cb_generate: null argument"))
        return s;
    return guarded([&] {
        conebeam::GenerateConfig g;
        g.trajectory.num_projections = cfg->num_projections;
        g.trajectory.source_isocenter_mm = cfg->source_isocenter_mm;
        g.trajectory.source_detector_mm = cfg->source_detector_mm;
        g.trajectory.detector_width = cfg->detector_width;
        g.trajectory.detector_height = cfg->detector_height;
        g.trajectory.pixel_size_mm = cfg->pixel_size_mm;
        if (cfg->angular_range_rad > 0.0)
            g.trajectory.angular_range_rad = cfg->angular_range_rad;
        if (std::isnan(cfg->volume_origin_mm)) {
            g.volume = conebeam::VolumeGeometry::centered(cfg->volume_edge_voxels,
                                                          cfg->voxel_size_mm);
        } else {
            g.volume.edge_voxels = cfg->volume_edge_voxels;
            g.volume.voxel_mm = cfg->voxel_size_mm;
            g.volume.origin_mm = cfg->volume_origin_mm;
        }
        g.field = conebeam::parse_field_spec(cfg->field_spec ? cfg->field_spec : "constant:1");
        g.seed = cfg->seed;
        *out = new cb_stack_s{conebeam::make_synthetic_stack(g)};
    });
}

cb_status cb_stack_read(const char* path, cb_stack** out) {
    if (cb_status s = require_arg(path && out, "cb_stack_read: null argument"))
        return s;
    return guarded([&] { *out = new cb_stack_s{conebeam::read_stack(path)}; });
}

cb_status cb_stack_write(const cb_stack* stack, const char* path) {
    if (cb_status s = require_arg(stack && path, "cb_stack_write: null argument"))
        return s;
    return guarded([&] { conebeam::write_stack(path, stack->v); });
}

void cb_stack_free(cb_stack* stack) { delete stack; }

cb_status cb_stack_get_info(const cb_stack* stack, cb_stack_info* out) {
    if (cb_status s = require_arg(stack && out, "cb_stack_get_info: null argument"))
        return s;
    out->edge_voxels = stack->v.geometry.edge_voxels;
    out->voxel_size_mm = stack->v.geometry.voxel_mm;
    out->origin_mm = stack->v.geometry.origin_mm;
    out->projections = stack->v.count();
    out->detector_width = stack->v.images.front().width;
    out->detector_height = stack->v.images.front().height;
    return CB_OK;
}

cb_status cb_volume_for_stack(const cb_stack* stack, cb_volume** out) {
    if (cb_status s = require_arg(stack && out, "cb_volume_for_stack: null argument"))
        return s;
    return guarded([&] { *out = new cb_volume_s{conebeam::Volume(stack->v.geometry)}; });
}

cb_status cb_volume_read(const char* path, cb_volume** out) {
    if (cb_status s = require_arg(path && out, "cb_volume_read: null argument"))
        return s;
    return guarded([&] { *out = new cb_volume_s{conebeam::read_volume(path)}; });
}

cb_status cb_volume_write(const cb_volume* volume, const char* path) {
    if (cb_status s = require_arg(volume && path, "cb_volume_write: null argument"))
        return s;
    return guarded([&] { conebeam::write_volume(path, volume->v); });
}

void cb_volume_free(cb_volume* volume) { delete volume; }

const float* cb_volume_data(const cb_volume* volume, uint64_t* count) {
    if (!volume)
        return nullptr;
    if (count)
        *count = volume->v.voxels.size();
    return volume->v.voxels.data();
}

void cb_opt_options_defaults(cb_opt_options* options) {
    if (!options)
        return;
    const conebeam::OptOptions d;
    options->lanes = d.lanes;
    options->chunk_size = d.chunk_size;
    options->workers = d.workers;
    options->use_clip = d.use_clip ? 1 : 0;
    options->use_pad = d.use_pad ? 1 : 0;
    options->instrument = d.instrument ? 1 : 0;
}

cb_status cb_reconstruct_reference(cb_volume* volume, const cb_stack* stack) {
    if (cb_status s = require_arg(volume && stack, "cb_reconstruct_reference: null argument"))
        return s;
    return guarded([&] { conebeam::reconstruct_reference(volume->v, stack->v); });
}

cb_status cb_reconstruct_optimized(cb_volume* volume, const cb_stack* stack,
                                   const cb_opt_options* options, cb_run_stats* stats) {
    if (cb_status s =
            require_arg(volume && stack && options, "cb_reconstruct_optimized: null argument"))
        return s;
    return guarded([&] {
        conebeam::ReconstructStats rs;
        conebeam::reconstruct_optimized(volume->v, stack->v, to_cpp(*options),
                                        stats ? &rs : nullptr);
        if (stats) {
            stats->precompute_seconds = rs.precompute_seconds;
            stats->kernel_seconds = rs.kernel_seconds;
            stats->voxel_updates = rs.voxel_updates;
            const auto mean = rs.gather.mean_cachelines();
            for (int t = 0; t < 4; ++t)
                stats->gather_mean_cachelines[t] = mean[t];
            stats->gather_trips = rs.gather.gather_trips();
            stats->gather_groups = rs.gather.groups;
        }
    });
}

cb_status cb_quality_metrics(const cb_volume* test, const cb_volume* reference, double* mse,
                             double* psnr_db) {
    if (cb_status s = require_arg(test && reference && mse && psnr_db,
                                  "cb_quality_metrics: null argument"))
        return s;
    return guarded([&] {
        const auto q = conebeam::quality_metrics(test->v, reference->v);
        *mse = q.mse;
        *psnr_db = q.psnr_db;
    });
}

cb_status cb_max_relative_error(const cb_volume* test, const cb_volume* reference,
                                double denom_floor, double* max_rel) {
    if (cb_status s = require_arg(test && reference && max_rel,
                                  "cb_max_relative_error: null argument"))
        return s;
    return guarded([&] {
        *max_rel = conebeam::max_relative_error(test->v, reference->v, denom_floor);
    });
}

double cb_gups(double voxel_updates, double seconds) {
    return voxel_updates / seconds / 1.0e9;
}

int32_t cb_effective_workers(int32_t requested) {
    return conebeam::effective_workers(requested);
}

cb_status cb_run_benchmark(const char* stack_path, const cb_opt_options* options,
                           int32_t include_precompute, char** json_out, char** text_out) {
    if (cb_status s = require_arg(stack_path && options && json_out,
                                  "cb_run_benchmark: null argument"))
        return s;
    return guarded([&] {
        conebeam::BenchOptions b;
        b.opt = to_cpp(*options);
        b.include_precompute = include_precompute != 0;
        const auto result = conebeam::run_benchmark(stack_path, b);
        *json_out = dup_string(conebeam::bench_result_json(result));
        if (text_out)
            *text_out = dup_string(conebeam::bench_result_text(result));
    });
}

cb_status cb_model_report(const char* machine_json_path, const char* kernel_json_path,
                          char** json_out, char** text_out) {
    if (cb_status s = require_arg(machine_json_path && kernel_json_path && json_out,
                                  "cb_model_report: null argument"))
        return s;
    return guarded([&] {
        const auto machine = conebeam::MachineModel::from_file(machine_json_path);
        const auto kernel = conebeam::KernelModel::from_file(kernel_json_path);
        const auto report = conebeam::predict_runtime(kernel, machine);
        *json_out = dup_string(conebeam::model_report_json(report));
        if (text_out)
            *text_out = dup_string(conebeam::model_report_text(report));
    });
}

cb_status cb_membench_stream(uint64_t buffer_bytes, const int32_t* thread_counts,
                             int32_t num_thread_counts, int32_t reps, char** json_out,
                             char** text_out) {
    if (cb_status s = require_arg(thread_counts && num_thread_counts > 0 && json_out,
                                  "cb_membench_stream: null or empty argument"))
        return s;
    return guarded([&] {
        std::vector<int> counts(thread_counts, thread_counts + num_thread_counts);
        const auto sweep = conebeam::stream_update_sweep(buffer_bytes, counts, reps);
        *json_out = dup_string(conebeam::stream_json(sweep));
        if (text_out)
            *text_out = dup_string(conebeam::stream_text(sweep));
    });
}

cb_status cb_membench_gather(uint64_t l1_bytes, uint64_t l2_bytes, int32_t reps,
                             double clock_ghz, char** json_out, char** text_out) {
    if (cb_status s = require_arg(json_out != nullptr, "cb_membench_gather: null argument"))
        return s;
    return guarded([&] {
        conebeam::GatherBenchConfig cfg;
        cfg.l1_bytes = l1_bytes;
        cfg.l2_bytes = l2_bytes;
        cfg.reps = reps;
        cfg.clock_ghz = clock_ghz;
        const auto table = conebeam::gather_pattern_bench(cfg);
        *json_out = dup_string(conebeam::gather_table_json(table));
        if (text_out)
            *text_out = dup_string(conebeam::gather_table_text(table));
    });
}

} // extern "C"
