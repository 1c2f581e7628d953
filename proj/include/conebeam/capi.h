/*
 * C API of the cone-beam back-projection library.
 *
 * All functions return a cb_status; every non-OK status leaves a
 * human-readable message retrievable with cb_last_error() (thread-local).
 * Objects are created behind opaque handles and released with the matching
 * *_free function. Strings returned through char** out-parameters are
 * heap-allocated and must be released with cb_string_free().
 */

#ifndef CONEBEAM_CAPI_H
#define CONEBEAM_CAPI_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cb_status {
    CB_OK = 0,
    CB_ERR_INVALID = 1,   /* bad arguments or configuration */
    CB_ERR_IO = 2,        /* open/read/write failure */
    CB_ERR_FORMAT = 3,    /* bad magic, version, or trailing bytes */
    CB_ERR_TRUNCATED = 4, /* payload shorter than the header promises */
    CB_ERR_GEOMETRY = 5,  /* degenerate or mismatched geometry */
    CB_ERR_NOMEM = 6,
    CB_ERR_INTERNAL = 7
} cb_status;

const char* cb_status_name(cb_status status);
const char* cb_last_error(void);
void cb_string_free(char* s);

typedef struct cb_stack_s cb_stack;
typedef struct cb_volume_s cb_volume;

/* --- dataset generation and I/O ----------------------------------------- */

typedef struct cb_generate_config {
    int32_t num_projections;
    double source_isocenter_mm;
    double source_detector_mm;
    int32_t detector_width;
    int32_t detector_height;
    double pixel_size_mm;
    double angular_range_rad; /* <= 0 selects a full circle */
    int32_t volume_edge_voxels;
    double voxel_size_mm;
    double volume_origin_mm; /* NaN selects the centered default */
    const char* field_spec;  /* "constant:1", "ramp", "gauss:...", "checker:..." */
    uint64_t seed;
} cb_generate_config;

void cb_generate_config_defaults(cb_generate_config* cfg);
cb_status cb_generate(const cb_generate_config* cfg, cb_stack** out);

cb_status cb_stack_read(const char* path, cb_stack** out);
cb_status cb_stack_write(const cb_stack* stack, const char* path);
void cb_stack_free(cb_stack* stack);

typedef struct cb_stack_info {
    int32_t edge_voxels;
    double voxel_size_mm;
    double origin_mm;
    uint64_t projections;
    int32_t detector_width;
    int32_t detector_height;
} cb_stack_info;

cb_status cb_stack_get_info(const cb_stack* stack, cb_stack_info* out);

cb_status cb_volume_for_stack(const cb_stack* stack, cb_volume** out);
cb_status cb_volume_read(const char* path, cb_volume** out);
cb_status cb_volume_write(const cb_volume* volume, const char* path);
void cb_volume_free(cb_volume* volume);

/* Borrowing view of the voxel buffer (z-major); valid until the volume is
 * freed or written to by a reconstruction. */
const float* cb_volume_data(const cb_volume* volume, uint64_t* count);

/* --- reconstruction ------------------------------------------------------ */

typedef struct cb_opt_options {
    int32_t lanes;      /* 4, 8, 16, or 1 for the scalar fidelity mode */
    int32_t chunk_size; /* voxel lines per scheduling chunk */
    int32_t workers;    /* 0 = hardware concurrency */
    int32_t use_clip;
    int32_t use_pad;
    int32_t instrument; /* collect gather cache-line statistics */
} cb_opt_options;

void cb_opt_options_defaults(cb_opt_options* options);

typedef struct cb_run_stats {
    double precompute_seconds;
    double kernel_seconds;
    uint64_t voxel_updates;
    double gather_mean_cachelines[4]; /* taps bl, br, tl, tr; zero unless instrumented */
    uint64_t gather_trips;
    uint64_t gather_groups;
} cb_run_stats;

cb_status cb_reconstruct_reference(cb_volume* volume, const cb_stack* stack);
cb_status cb_reconstruct_optimized(cb_volume* volume, const cb_stack* stack,
                                   const cb_opt_options* options,
                                   cb_run_stats* stats /* nullable */);

/* --- metrics and benchmark harness --------------------------------------- */

cb_status cb_quality_metrics(const cb_volume* test, const cb_volume* reference,
                             double* mse, double* psnr_db);
cb_status cb_max_relative_error(const cb_volume* test, const cb_volume* reference,
                                double denom_floor, double* max_rel);
double cb_gups(double voxel_updates, double seconds);

/* Worker-count resolution for harness entry points: the CONEBEAM_THREADS
 * environment variable overrides the requested value. */
int32_t cb_effective_workers(int32_t requested);

cb_status cb_run_benchmark(const char* stack_path, const cb_opt_options* options,
                           int32_t include_precompute, char** json_out,
                           char** text_out /* nullable */);

/* --- analytical performance model ---------------------------------------- */

cb_status cb_model_report(const char* machine_json_path, const char* kernel_json_path,
                          char** json_out, char** text_out /* nullable */);

/* --- micro-benchmarks ------------------------------------------------------ */

cb_status cb_membench_stream(uint64_t buffer_bytes, const int32_t* thread_counts,
                             int32_t num_thread_counts, int32_t reps,
                             char** json_out, char** text_out /* nullable */);
cb_status cb_membench_gather(uint64_t l1_bytes, uint64_t l2_bytes, int32_t reps,
                             double clock_ghz /* 0 = no cycles column */,
                             char** json_out, char** text_out /* nullable */);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CONEBEAM_CAPI_H */
