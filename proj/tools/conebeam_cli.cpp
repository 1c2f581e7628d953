// Command-line front end. Everything goes through the shared library's C API;
// this translation unit includes no C++ library headers.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conebeam/capi.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

int exit_code_for(cb_status status) {
    switch (status) {
    case CB_OK:
        return kExitOk;
    case CB_ERR_IO:
    case CB_ERR_FORMAT:
    case CB_ERR_TRUNCATED:
        return kExitIo;
    default:
        return kExitValidation;
    }
}

int fail(cb_status status) {
    std::fprintf(stderr, "error (%s): %s\n", cb_status_name(status), cb_last_error());
    return exit_code_for(status);
}

struct OptFlags {
    int32_t lanes = 0;
    int32_t chunk_size = 0;
    int32_t workers = 0;
    bool no_clip = false;
    bool no_pad = false;
    bool instrument = false;

    void attach(CLI::App* cmd) {
        cb_opt_options defaults;
        cb_opt_options_defaults(&defaults);
        lanes = defaults.lanes;
        chunk_size = defaults.chunk_size;
        workers = defaults.workers;
        cmd->add_option("--lanes", lanes, "Vector lane width: 4, 8, 16, or 1 (scalar)")
            ->capture_default_str();
        cmd->add_option("--chunk-size", chunk_size, "Voxel lines per scheduling chunk")
            ->capture_default_str();
        cmd->add_option("--workers", workers,
                        "Worker threads (0 = all cores; the CONEBEAM_THREADS environment "
                        "variable overrides this)")
            ->capture_default_str();
        cmd->add_flag("--no-clip", no_clip, "Disable the clipping mask");
        cmd->add_flag("--no-pad", no_pad, "Disable zero padding (keeps per-tap guards)");
        cmd->add_flag("--instrument", instrument, "Collect gather cache-line statistics");
    }

    cb_opt_options resolve() const {
        cb_opt_options o;
        cb_opt_options_defaults(&o);
        o.lanes = lanes;
        o.chunk_size = chunk_size;
        o.workers = cb_effective_workers(workers);
        o.use_clip = no_clip ? 0 : 1;
        o.use_pad = no_pad ? 0 : 1;
        o.instrument = instrument ? 1 : 0;
        return o;
    }
};

void print_gather_stats(const cb_run_stats& stats) {
    std::printf("gather instrumentation (%llu lane groups)\n",
                static_cast<unsigned long long>(stats.gather_groups));
    static const char* tap_names[4] = {"bl", "br", "tl", "tr"};
    for (int t = 0; t < 4; ++t)
        std::printf("  %-3s mean distinct CLs: %.3f\n", tap_names[t],
                    stats.gather_mean_cachelines[t]);
    std::printf("  gather trips total: %llu\n",
                static_cast<unsigned long long>(stats.gather_trips));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cone-beam CT back-projection benchmark toolkit"};
    app.require_subcommand(1);

    // generate ---------------------------------------------------------------
    cb_generate_config gen;
    cb_generate_config_defaults(&gen);
    std::string gen_out;
    std::string gen_field = gen.field_spec;
    double gen_origin = std::nan("");
    auto* generate = app.add_subcommand("generate", "Write a synthetic projection stack");
    generate->add_option("--out", gen_out, "Output stack path (.cbps)")->required();
    generate->add_option("--projections", gen.num_projections, "Number of projections")
        ->capture_default_str();
    generate->add_option("--sid", gen.source_isocenter_mm, "Source-isocenter distance [mm]")
        ->capture_default_str();
    generate->add_option("--sdd", gen.source_detector_mm, "Source-detector distance [mm]")
        ->capture_default_str();
    generate->add_option("--width", gen.detector_width, "Detector width [px]")
        ->capture_default_str();
    generate->add_option("--height", gen.detector_height, "Detector height [px]")
        ->capture_default_str();
    generate->add_option("--pixel-size", gen.pixel_size_mm, "Detector pixel size [mm]")
        ->capture_default_str();
    generate->add_option("--angular-range", gen.angular_range_rad,
                         "Angular range [rad] (0 = full circle)");
    generate->add_option("--volume", gen.volume_edge_voxels, "Volume edge length [voxels]")
        ->capture_default_str();
    generate->add_option("--voxel-size", gen.voxel_size_mm, "Voxel edge length [mm]")
        ->capture_default_str();
    generate->add_option("--origin", gen_origin,
                         "World coordinate of voxel 0 [mm] (default: centered volume)");
    generate->add_option("--field", gen_field,
                         "Analytic field: constant:c | ramp[:a,b,c] | "
                         "gauss[:amp,cx,cy,sigma] | checker[:amp,period]")
        ->capture_default_str();
    generate->add_option("--seed", gen.seed, "Generation seed (reserved; analytic fields "
                                             "are deterministic)");

    // reconstruct -------------------------------------------------------------
    std::string rec_stack;
    std::string rec_out;
    std::string rec_impl = "opt";
    OptFlags rec_flags;
    auto* reconstruct = app.add_subcommand("reconstruct", "Back-project a stack to a volume");
    reconstruct->add_option("--stack", rec_stack, "Input stack path")->required();
    reconstruct->add_option("--out", rec_out, "Output volume path (.cbpv)")->required();
    reconstruct->add_option("--impl", rec_impl, "Implementation: ref | opt")
        ->check(CLI::IsMember({"ref", "opt"}))
        ->capture_default_str();
    rec_flags.attach(reconstruct);

    // bench ---------------------------------------------------------------------
    std::string bench_stack;
    std::string bench_json_path;
    bool bench_precompute = false;
    bool bench_text = false;
    OptFlags bench_flags;
    auto* bench = app.add_subcommand("bench", "Run the benchmark and emit a JSON result");
    bench->add_option("--stack", bench_stack, "Input stack path")->required();
    bench->add_flag("--include-precompute", bench_precompute,
                    "Fold mask/pad precompute into the timed basis");
    bench->add_option("--json", bench_json_path, "Also write the JSON result to this path");
    bench->add_flag("--text", bench_text, "Print a human-readable summary instead of JSON");
    bench_flags.attach(bench);

    // verify -------------------------------------------------------------------
    std::string verify_stack;
    double verify_tolerance = 1.0e-5;
    OptFlags verify_flags;
    auto* verify = app.add_subcommand(
        "verify", "Compare the optimized kernel against the reference kernel");
    verify->add_option("--stack", verify_stack, "Input stack path")->required();
    verify->add_option("--tolerance", verify_tolerance, "Maximum per-voxel relative error")
        ->capture_default_str();
    verify_flags.attach(verify);

    // model ---------------------------------------------------------------------
    std::string model_machine;
    std::string model_kernel;
    bool model_json = false;
    auto* model = app.add_subcommand("model", "Evaluate the analytical performance model");
    model->add_option("--machine", model_machine, "Machine model JSON file")->required();
    model->add_option("--kernel", model_kernel, "Kernel model JSON file")->required();
    model->add_flag("--json", model_json, "Print JSON instead of the text report");

    // membench ---------------------------------------------------------------------
    auto* membench = app.add_subcommand("membench", "Memory micro-benchmarks");
    membench->require_subcommand(1);

    double stream_buffer_mib = 256.0;
    std::string stream_threads = "1";
    int32_t stream_reps = 5;
    bool stream_json_flag = false;
    auto* stream = membench->add_subcommand("stream", "Streaming update bandwidth sweep");
    stream->add_option("--buffer-mib", stream_buffer_mib,
                       "Buffer size [MiB]; use several times the last-level cache")
        ->capture_default_str();
    stream->add_option("--threads", stream_threads, "Comma-separated thread counts")
        ->capture_default_str();
    stream->add_option("--reps", stream_reps, "Timed repetitions")->capture_default_str();
    stream->add_flag("--json", stream_json_flag, "Print JSON instead of text");

    double gather_l1_kib = 16.0;
    double gather_l2_kib = 256.0;
    int32_t gather_reps = 50;
    double gather_clock = 0.0;
    bool gather_json_flag = false;
    auto* gather = membench->add_subcommand("gather", "Gather-pattern cost by CL distribution");
    gather->add_option("--l1-kib", gather_l1_kib, "L1-sized working set [KiB]")
        ->capture_default_str();
    gather->add_option("--l2-kib", gather_l2_kib, "L2-sized working set [KiB]")
        ->capture_default_str();
    gather->add_option("--reps", gather_reps, "Timed repetitions")->capture_default_str();
    gather->add_option("--clock-ghz", gather_clock, "Optional clock for a cycles column");
    gather->add_flag("--json", gather_json_flag, "Print JSON instead of text");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        std::fprintf(stderr, "%s", app.help().c_str());
        return kExitValidation;
    }

    if (generate->parsed()) {
        gen.volume_origin_mm = gen_origin;
        gen.field_spec = gen_field.c_str();
        cb_stack* stack = nullptr;
        if (cb_status s = cb_generate(&gen, &stack))
            return fail(s);
        const cb_status s = cb_stack_write(stack, gen_out.c_str());
        cb_stack_free(stack);
        if (s)
            return fail(s);
        std::printf("wrote %s (%d projections of %dx%d, volume %d^3)\n", gen_out.c_str(),
                    gen.num_projections, gen.detector_width, gen.detector_height,
                    gen.volume_edge_voxels);
        return kExitOk;
    }

    if (reconstruct->parsed()) {
        cb_stack* stack = nullptr;
        if (cb_status s = cb_stack_read(rec_stack.c_str(), &stack))
            return fail(s);
        cb_volume* volume = nullptr;
        cb_status s = cb_volume_for_stack(stack, &volume);
        if (!s) {
            if (rec_impl == "ref") {
                s = cb_reconstruct_reference(volume, stack);
            } else {
                const cb_opt_options opt = rec_flags.resolve();
                cb_run_stats stats{};
                s = cb_reconstruct_optimized(volume, stack, &opt, &stats);
                if (!s && opt.instrument)
                    print_gather_stats(stats);
            }
        }
        if (!s)
            s = cb_volume_write(volume, rec_out.c_str());
        cb_volume_free(volume);
        cb_stack_free(stack);
        if (s)
            return fail(s);
        std::printf("wrote %s\n", rec_out.c_str());
        return kExitOk;
    }

    if (bench->parsed()) {
        const cb_opt_options opt = bench_flags.resolve();
        char* json = nullptr;
        char* text = nullptr;
        if (cb_status s = cb_run_benchmark(bench_stack.c_str(), &opt,
                                           bench_precompute ? 1 : 0, &json, &text))
            return fail(s);
        std::printf("%s\n", bench_text ? text : json);
        int code = kExitOk;
        if (!bench_json_path.empty()) {
            std::FILE* f = std::fopen(bench_json_path.c_str(), "w");
            if (f) {
                std::fprintf(f, "%s\n", json);
                std::fclose(f);
            } else {
                std::fprintf(stderr, "error: cannot write %s\n", bench_json_path.c_str());
                code = kExitIo;
            }
        }
        cb_string_free(json);
        cb_string_free(text);
        return code;
    }

    if (verify->parsed()) {
        cb_stack* stack = nullptr;
        if (cb_status s = cb_stack_read(verify_stack.c_str(), &stack))
            return fail(s);
        cb_volume* ref = nullptr;
        cb_volume* opt_vol = nullptr;
        double max_rel = 0.0;
        cb_status s = cb_volume_for_stack(stack, &ref);
        if (!s)
            s = cb_volume_for_stack(stack, &opt_vol);
        if (!s)
            s = cb_reconstruct_reference(ref, stack);
        if (!s) {
            const cb_opt_options opt = verify_flags.resolve();
            s = cb_reconstruct_optimized(opt_vol, stack, &opt, nullptr);
            if (!s)
                s = cb_max_relative_error(opt_vol, ref, 1.0e-6, &max_rel);
        }
        cb_volume_free(ref);
        cb_volume_free(opt_vol);
        cb_stack_free(stack);
        if (s)
            return fail(s);
        if (max_rel <= verify_tolerance) {
            std::printf("PASS max_rel_err %.3e <= %.1e\n", max_rel, verify_tolerance);
            return kExitOk;
        }
        std::printf("FAIL max_rel_err %.3e > %.1e\n", max_rel, verify_tolerance);
        return kExitValidation;
    }

    if (model->parsed()) {
        char* json = nullptr;
        char* text = nullptr;
        if (cb_status s =
                cb_model_report(model_machine.c_str(), model_kernel.c_str(), &json, &text))
            return fail(s);
        std::printf("%s", model_json ? json : text);
        if (model_json)
            std::printf("\n");
        cb_string_free(json);
        cb_string_free(text);
        return kExitOk;
    }

    if (stream->parsed()) {
        std::vector<int32_t> counts;
        std::string token;
        for (char c : stream_threads + ",") {
            if (c == ',') {
                if (!token.empty()) {
                    counts.push_back(static_cast<int32_t>(std::atoi(token.c_str())));
                    token.clear();
                }
            } else {
                token += c;
            }
        }
        const auto bytes = static_cast<uint64_t>(stream_buffer_mib * 1024.0 * 1024.0);
        char* json = nullptr;
        char* text = nullptr;
        if (cb_status s = cb_membench_stream(bytes, counts.data(),
                                             static_cast<int32_t>(counts.size()), stream_reps,
                                             &json, &text))
            return fail(s);
        std::printf("%s", stream_json_flag ? json : text);
        if (stream_json_flag)
            std::printf("\n");
        cb_string_free(json);
        cb_string_free(text);
        return kExitOk;
    }

    if (gather->parsed()) {
        char* json = nullptr;
        char* text = nullptr;
        if (cb_status s = cb_membench_gather(
                static_cast<uint64_t>(gather_l1_kib * 1024.0),
                static_cast<uint64_t>(gather_l2_kib * 1024.0), gather_reps, gather_clock,
                &json, &text))
            return fail(s);
        std::printf("%s", gather_json_flag ? json : text);
        if (gather_json_flag)
            std::printf("\n");
        cb_string_free(json);
        cb_string_free(text);
        return kExitOk;
    }

    return kExitValidation;
}
