#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "conebeam/kernel_opt.hpp"
#include "conebeam/kernel_ref.hpp"
#include "helpers.hpp"

using namespace conebeam;
using namespace testutil;

namespace {

float bilinear_unguarded(const ProjectionImage& img, float ix, float iy) {
    const int iix = static_cast<int>(ix);
    const int iiy = static_cast<int>(iy);
    const float sx = ix - static_cast<float>(iix);
    const float sy = iy - static_cast<float>(iiy);
    const float* I = img.data.data();
    const int w = img.width;
    const float valb = (1 - sx) * I[iiy * w + iix] + sx * I[iiy * w + iix + 1];
    const float valt = (1 - sx) * I[(iiy + 1) * w + iix] + sx * I[(iiy + 1) * w + iix + 1];
    return (1 - sy) * valb + sy * valt;
}

ProjectionStack blob_stack(std::mt19937_64& rng, int edge_voxels, double coverage,
                           int num_projections) {
    GenerateConfig cfg;
    cfg.trajectory = random_scan_config(rng, edge_voxels, 1.0, coverage, num_projections);
    cfg.volume = VolumeGeometry::centered(edge_voxels, 1.0);
    // The blob decays to ~0 well inside the detector border, so voxels whose
    // footprint leaves the detector carry negligible intensity; see the
    // acceptance suite for why partial-coverage comparisons need this.
    const double sigma = std::min(cfg.trajectory.detector_width,
                                  cfg.trajectory.detector_height) / 16.0;
    cfg.field.kind = FieldKind::gaussian_blob;
    cfg.field.p0 = 1e-3;
    cfg.field.p3 = sigma;
    return make_synthetic_stack(cfg);
}

void compare_masks(const ProjectionMatrix& m, const VolumeGeometry& g, int width,
                   int height) {
    const ClipMask mask = compute_clip_mask(m, g, width, height);
    REQUIRE(mask.lines.size() == static_cast<std::size_t>(g.edge_voxels) * g.edge_voxels);
    for (int z = 0; z < g.edge_voxels; ++z) {
        for (int y = 0; y < g.edge_voxels; ++y) {
            const auto oracle = oracle_line(m, g, y, z, width, height);
            REQUIRE(oracle.contiguous);
            const LineRange& r = mask.line(z, y);
            if (oracle.stop == oracle.start) {
                CHECK(r.empty());
            } else {
                CHECK(r.start == oracle.start);
                CHECK(r.stop == oracle.stop);
            }
        }
    }
}

} // namespace

TEST_CASE("clip mask: fully covered volume admits every line completely") {
    std::mt19937_64 rng(31);
    const auto g = VolumeGeometry::centered(16, 1.0);
    const auto cfg = random_scan_config(rng, 16, 1.0, 1.25, 3);
    for (const auto& m : make_circular_trajectory(cfg)) {
        const auto mask = compute_clip_mask(m, g, cfg.detector_width, cfg.detector_height);
        for (const auto& r : mask.lines) {
            CHECK(r.start == 0);
            CHECK(r.stop == 16);
        }
        CHECK(mask.admitted_count() == 16ull * 16 * 16);
    }
}

TEST_CASE("clip mask: volume projecting entirely off-detector is empty") {
    const auto g = VolumeGeometry::centered(8, 1.0);
    ProjectionMatrix m;
    m.a[0] = 1.0;
    m.a[4] = 1.0;
    m.a[9] = 10000.0; // shifts every ray far right of the detector
    m.a[10] = 10.0;
    m.a[11] = 1.0;
    const auto mask = compute_clip_mask(m, g, 64, 64);
    for (const auto& r : mask.lines) {
        CHECK(r.start == 0);
        CHECK(r.stop == 0);
    }
}

TEST_CASE("clip mask: degenerate matrices (w <= 0 over the volume) are rejected") {
    const auto g = VolumeGeometry::centered(8, 1.0);
    ProjectionMatrix m;
    m.a[0] = 1.0;
    m.a[4] = 1.0; // w row all zero
    CHECK_THROWS_AS(compute_clip_mask(m, g, 64, 64), geometry_error);

    ProjectionMatrix flip;
    flip.a[0] = 1.0;
    flip.a[4] = 1.0;
    flip.a[2] = 1.0; // w = wx + 0.1 changes sign inside a centered volume
    flip.a[11] = 0.1;
    CHECK_THROWS_AS(compute_clip_mask(flip, g, 64, 64), geometry_error);
}

TEST_CASE("clip mask matches the exhaustive per-voxel oracle") {
    std::mt19937_64 rng(20240906);
    for (const int L : {16, 32}) {
        const auto g = VolumeGeometry::centered(L, 1.0);
        for (int trial = 0; trial < 6; ++trial) {
            // Partial coverage produces a mix of full, clipped, and empty lines.
            const auto cfg = random_scan_config(rng, L, 1.0, uniform(rng, 0.55, 0.85), 2);
            for (const auto& m : make_circular_trajectory(cfg))
                compare_masks(m, g, cfg.detector_width, cfg.detector_height);
        }
    }
}

TEST_CASE("zero_pad: all-zero spec is an identity copy") {
    auto img = synth_projection_image(5, 4, parse_field_spec("ramp"));
    const auto padded = zero_pad(img, PadSpec{});
    CHECK(padded.width == img.width);
    CHECK(padded.height == img.height);
    CHECK(padded.pad_du == 0);
    CHECK(padded.pad_dv == 0);
    CHECK(padded.data == img.data);
}

TEST_CASE("zero_pad: 2x2 image with pad 1 is centered in a 4x4 zero frame") {
    ProjectionImage img;
    img.width = 2;
    img.height = 2;
    img.data = {1.0f, 2.0f, 3.0f, 4.0f};
    const auto padded = zero_pad(img, PadSpec{1, 1, 1, 1});
    REQUIRE(padded.width == 4);
    REQUIRE(padded.height == 4);
    CHECK(padded.pad_du == -1);
    CHECK(padded.pad_dv == -1);
    for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 4; ++ix) {
            const bool inner = ix >= 1 && ix <= 2 && iy >= 1 && iy <= 2;
            CHECK(padded.at(ix, iy) == (inner ? img.at(ix - 1, iy - 1) : 0.0f));
        }
}

TEST_CASE("zero_pad: guarded sampling equals unguarded sampling on the padded raster") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        ProjectionImage img;
        img.width = uniform_int(rng, 2, 9);
        img.height = uniform_int(rng, 2, 9);
        img.data.resize(static_cast<std::size_t>(img.width) * img.height);
        for (auto& v : img.data)
            v = static_cast<float>(uniform(rng, -4.0, 4.0));
        const PadSpec pad{uniform_int(rng, 0, 3), uniform_int(rng, 1, 3),
                          uniform_int(rng, 0, 3), uniform_int(rng, 1, 3)};
        const auto padded = zero_pad(img, pad);

        // Eighth-integer coordinates keep the pad shift exact in float. The
        // sweep covers the raster plus the right/bottom overhang; negative
        // positions extrapolate under truncation semantics and are excluded
        // by the clip mask, so they carry no equivalence contract.
        for (int num_x = 0; num_x < 8 * (img.width - 1 + pad.right); ++num_x) {
            for (int num_y = 0; num_y < 8 * (img.height - 1 + pad.bottom); num_y += 3) {
                const float ix = num_x / 8.0f;
                const float iy = num_y / 8.0f;
                const float guarded = bilinear_sample_guarded(img, ix, iy);
                const float unguarded =
                    bilinear_unguarded(padded, ix + pad.left, iy + pad.top);
                CHECK(guarded == unguarded);
            }
        }
    }
}

TEST_CASE("compute_pad_spec: fully interior footprints need only the +1 margin") {
    std::mt19937_64 rng(43);
    const auto g = VolumeGeometry::centered(16, 1.0);
    GenerateConfig cfg;
    cfg.trajectory = random_scan_config(rng, 16, 1.0, 1.3, 4);
    cfg.volume = g;
    const auto stack = make_synthetic_stack(cfg);

    std::vector<ClipMask> masks;
    for (std::size_t p = 0; p < stack.count(); ++p)
        masks.push_back(compute_clip_mask(stack.matrices[p], g, stack.images[p].width,
                                          stack.images[p].height));
    CHECK(compute_pad_spec(stack, masks) == PadSpec{0, 1, 0, 1});
}

TEST_CASE("compute_pad_spec equals a brute-force tap extreme scan") {
    std::mt19937_64 rng(20240907);
    const int L = 32;
    const auto g = VolumeGeometry::centered(L, 1.0);
    GenerateConfig cfg;
    cfg.trajectory = random_scan_config(rng, L, 1.0, 0.7, 4);
    cfg.volume = g;
    const auto stack = make_synthetic_stack(cfg);

    std::vector<ClipMask> masks;
    for (std::size_t p = 0; p < stack.count(); ++p)
        masks.push_back(compute_clip_mask(stack.matrices[p], g, stack.images[p].width,
                                          stack.images[p].height));

    const int width = stack.images.front().width;
    const int height = stack.images.front().height;
    int min_iix = 0;
    int max_tap_x = width - 1;
    int min_iiy = 0;
    int max_tap_y = height - 1;
    for (std::size_t p = 0; p < stack.count(); ++p) {
        float a[12];
        for (int i = 0; i < 12; ++i)
            a[i] = static_cast<float>(stack.matrices[p].a[i]);
        const float O = static_cast<float>(g.origin_mm);
        const float MM = static_cast<float>(g.voxel_mm);
        for (int z = 0; z < L; ++z)
            for (int y = 0; y < L; ++y) {
                const auto r = masks[p].line(z, y);
                for (int x = r.start; x < r.stop; ++x) {
                    const float wx = O + x * MM;
                    const float wy = O + y * MM;
                    const float wz = O + z * MM;
                    const float u = wx * a[0] + wy * a[3] + wz * a[6] + a[9];
                    const float v = wx * a[1] + wy * a[4] + wz * a[7] + a[10];
                    const float w = wx * a[2] + wy * a[5] + wz * a[8] + a[11];
                    const int iix = static_cast<int>(u / w);
                    const int iiy = static_cast<int>(v / w);
                    min_iix = std::min(min_iix, iix);
                    max_tap_x = std::max(max_tap_x, iix + 1);
                    min_iiy = std::min(min_iiy, iiy);
                    max_tap_y = std::max(max_tap_y, iiy + 1);
                }
            }
    }
    const PadSpec expect{-min_iix, std::max(1, max_tap_x - (width - 1)), -min_iiy,
                         std::max(1, max_tap_y - (height - 1))};
    CHECK(compute_pad_spec(stack, masks) == expect);
}

TEST_CASE("chunk plan: 512^2 lines at chunk 262 gives 1000 full chunks plus 144") {
    const auto plan = make_chunk_plan(512, 262, 8);
    REQUIRE(plan.chunks.size() == 1001);
    for (std::size_t i = 0; i + 1 < plan.chunks.size(); ++i)
        CHECK(plan.chunks[i].count == 262);
    CHECK(plan.chunks.back().count == 512 * 512 - 1000 * 262);
    CHECK(plan.chunks.back().count == 144);
    CHECK(plan.worker_of(0) == 0);
    CHECK(plan.worker_of(9) == 1);
}

TEST_CASE("chunk plan: degenerate shapes and exact partition") {
    const auto single = make_chunk_plan(16, 16 * 16, 4);
    REQUIRE(single.chunks.size() == 1);
    CHECK(single.chunks[0].count == 256);

    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        const int L = uniform_int(rng, 1, 40);
        const int chunk = uniform_int(rng, 1, L * L + 3);
        const int workers = uniform_int(rng, 1, 9);
        const auto plan = make_chunk_plan(L, chunk, workers);
        std::vector<int> seen(static_cast<std::size_t>(L) * L, 0);
        for (std::size_t ci = 0; ci < plan.chunks.size(); ++ci) {
            CHECK(plan.worker_of(ci) == static_cast<int32_t>(ci % workers));
            const auto& c = plan.chunks[ci];
            for (int64_t li = c.first_line; li < c.first_line + c.count; ++li)
                seen[static_cast<std::size_t>(li)] += 1;
        }
        for (int v : seen)
            CHECK(v == 1); // every collapsed line exactly once
    }

    CHECK_THROWS_AS(make_chunk_plan(0, 1, 1), validation_error);
    CHECK_THROWS_AS(make_chunk_plan(4, 0, 1), validation_error);
    CHECK_THROWS_AS(make_chunk_plan(4, 1, 0), validation_error);
}

TEST_CASE("count_cacheline_splits") {
    std::vector<int64_t> consecutive;
    for (int i = 0; i < 16; ++i)
        consecutive.push_back(4 * i);
    CHECK(count_cacheline_splits(consecutive) == 1);

    std::vector<int64_t> strided;
    for (int i = 0; i < 16; ++i)
        strided.push_back(64 * i);
    CHECK(count_cacheline_splits(strided) == 16);

    const int64_t straddle[] = {60, 64};
    CHECK(count_cacheline_splits(straddle) == 2);

    const int64_t negative[] = {-4};
    CHECK_THROWS_AS(count_cacheline_splits(negative), validation_error);

    // Brute-force distinct-quotient oracle on random groups.
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<int64_t> offs(static_cast<std::size_t>(uniform_int(rng, 1, 16)));
        for (auto& o : offs)
            o = uniform_int(rng, 0, 4096);
        std::vector<int64_t> quotients;
        for (auto o : offs)
            quotients.push_back(o / 64);
        std::sort(quotients.begin(), quotients.end());
        quotients.erase(std::unique(quotients.begin(), quotients.end()), quotients.end());
        CHECK(count_cacheline_splits(offs) == static_cast<int>(quotients.size()));
    }
}

TEST_CASE("backproject_line: empty range is a no-op, tails update exactly their voxels") {
    std::mt19937_64 rng(20240908);
    const int L = 32;
    const auto g = VolumeGeometry::centered(L, 1.0);
    const auto cfg = random_scan_config(rng, L, 1.0, 1.2, 1);
    const auto m = make_circular_trajectory(cfg)[0];
    const auto img = synth_projection_image(cfg.detector_width, cfg.detector_height,
                                            parse_field_spec("constant:1"));
    const auto mask = compute_clip_mask(m, g, img.width, img.height);
    ProjectionStack stack;
    stack.geometry = g;
    stack.matrices = {m};
    stack.images = {img};
    const auto padded = zero_pad(img, compute_pad_spec(stack, {mask}));

    Volume vol(g);
    backproject_line(vol, padded, m, 5, 7, 3, 3, 16); // empty
    for (float v : vol.voxels)
        CHECK(v == 0.0f);

    backproject_line(vol, padded, m, 5, 7, 3, 8, 16); // five voxels, one short group
    int updated = 0;
    for (int z = 0; z < L; ++z)
        for (int y = 0; y < L; ++y)
            for (int x = 0; x < L; ++x)
                if (vol.at(x, y, z) != 0.0f) {
                    ++updated;
                    CHECK(z == 5);
                    CHECK(y == 7);
                    CHECK(x >= 3);
                    CHECK(x < 8);
                }
    CHECK(updated == 5);
}

TEST_CASE("backproject_line matches the reference kernel per voxel") {
    std::mt19937_64 rng(20240909);
    const int L = 64;
    const auto g = VolumeGeometry::centered(L, 1.0);
    const auto cfg = random_scan_config(rng, L, 1.0, 1.2, 1);
    const auto m = make_circular_trajectory(cfg)[0];
    FieldSpec blob;
    blob.kind = FieldKind::gaussian_blob;
    const auto img =
        synth_projection_image(cfg.detector_width, cfg.detector_height, blob);
    const auto mask = compute_clip_mask(m, g, img.width, img.height);
    ProjectionStack stack;
    stack.geometry = g;
    stack.matrices = {m};
    stack.images = {img};
    const auto padded = zero_pad(img, compute_pad_spec(stack, {mask}));

    Volume ref_vol(g);
    backproject_reference(ref_vol, img, m);

    Volume opt_vol(g);
    for (int z = 0; z < L; ++z)
        for (int y = 0; y < L; ++y) {
            const auto r = mask.line(z, y);
            backproject_line(opt_vol, padded, m, z, y, r.start, r.stop, 16);
        }

    for (std::size_t i = 0; i < ref_vol.voxels.size(); ++i) {
        const double r = ref_vol.voxels[i];
        const double o = opt_vol.voxels[i];
        CHECK(std::fabs(o - r) / (std::fabs(r) + 1e-6) <= 1e-5);
    }
}

TEST_CASE("reconstruct_optimized: degenerate options are bitwise-equal to the reference") {
    std::mt19937_64 rng(20240910);
    const auto stack = blob_stack(rng, 16, 0.75, 4);
    Volume ref_vol(stack.geometry);
    reconstruct_reference(ref_vol, stack);

    OptOptions opt;
    opt.lanes = 1;
    opt.workers = 1;
    opt.use_clip = false;
    opt.use_pad = false;
    Volume opt_vol(stack.geometry);
    reconstruct_optimized(opt_vol, stack, opt);
    CHECK(opt_vol.voxels == ref_vol.voxels);
}

TEST_CASE("reconstruct_optimized stays within 1e-5 of the reference across options") {
    std::mt19937_64 rng(20240911);
    for (const double coverage : {1.2, 0.7}) {
        const auto stack = blob_stack(rng, 32, coverage, 4);
        Volume ref_vol(stack.geometry);
        reconstruct_reference(ref_vol, stack);

        for (const int lanes : {4, 16}) {
            for (const bool clip : {true, false}) {
                for (const bool pad : {true, false}) {
                    OptOptions opt;
                    opt.lanes = lanes;
                    opt.workers = 2;
                    opt.chunk_size = 37;
                    opt.use_clip = clip;
                    opt.use_pad = pad;
                    Volume opt_vol(stack.geometry);
                    reconstruct_optimized(opt_vol, stack, opt);
                    double worst = 0.0;
                    for (std::size_t i = 0; i < ref_vol.voxels.size(); ++i) {
                        const double r = ref_vol.voxels[i];
                        const double o = opt_vol.voxels[i];
                        worst =
                            std::max(worst, std::fabs(o - r) / (std::fabs(r) + 1e-6));
                    }
                    INFO("coverage ", coverage, " lanes ", lanes, " clip ", clip,
                         " pad ", pad);
                    CHECK(worst <= 1e-5);
                }
            }
        }
    }
}

TEST_CASE("reconstruct_optimized: lane widths 4, 8, 16 agree bitwise") {
    std::mt19937_64 rng(20240912);
    const auto stack = blob_stack(rng, 16, 0.8, 3);
    Volume v4(stack.geometry);
    Volume v8(stack.geometry);
    Volume v16(stack.geometry);
    for (auto [vol, lanes] : {std::pair<Volume*, int>{&v4, 4}, {&v8, 8}, {&v16, 16}}) {
        OptOptions opt;
        opt.lanes = lanes;
        opt.workers = 2;
        reconstruct_optimized(*vol, stack, opt);
    }
    CHECK(v4.voxels == v8.voxels);
    CHECK(v4.voxels == v16.voxels);
}

TEST_CASE("reconstruct_optimized: worker count does not change a single bit") {
    std::mt19937_64 rng(20240913);
    const auto stack = blob_stack(rng, 32, 0.8, 3);
    Volume v1(stack.geometry);
    Volume v2(stack.geometry);
    Volume v8(stack.geometry);
    for (auto [vol, workers] : {std::pair<Volume*, int>{&v1, 1}, {&v2, 2}, {&v8, 8}}) {
        OptOptions opt;
        opt.workers = workers;
        opt.chunk_size = 19;
        reconstruct_optimized(*vol, stack, opt);
    }
    CHECK(v1.voxels == v2.voxels);
    CHECK(v1.voxels == v8.voxels);
}

TEST_CASE("instrumented runs report per-tap means inside [1, lanes]") {
    std::mt19937_64 rng(20240914);
    const auto stack = blob_stack(rng, 16, 1.2, 2);
    OptOptions opt;
    opt.lanes = 16;
    opt.workers = 2;
    opt.instrument = true;
    Volume vol(stack.geometry);
    ReconstructStats stats;
    reconstruct_optimized(vol, stack, opt, &stats);

    CHECK(stats.gather.groups > 0);
    CHECK(stats.gather.gather_trips() > 0);
    for (double mean : stats.gather.mean_cachelines()) {
        CHECK(mean >= 1.0);
        CHECK(mean <= 16.0);
    }
    CHECK(stats.voxel_updates == 2ull * 16 * 16 * 16); // covering scan admits everything

    const auto text = gather_stats_text(stats.gather);
    CHECK(text.find("gather trips") != std::string::npos);
    const auto json = gather_stats_json(stats.gather);
    CHECK(json.find("mean_cachelines") != std::string::npos);

    OptOptions bad = opt;
    bad.lanes = 1;
    CHECK_THROWS_AS(reconstruct_optimized(vol, stack, bad), validation_error);
}

TEST_CASE("reconstruct_optimized validates inputs") {
    std::mt19937_64 rng(20240915);
    const auto stack = blob_stack(rng, 16, 1.2, 2);
    Volume wrong(VolumeGeometry::centered(8, 1.0));
    OptOptions opt;
    CHECK_THROWS_AS(reconstruct_optimized(wrong, stack, opt), geometry_error);

    Volume vol(stack.geometry);
    OptOptions bad_lanes;
    bad_lanes.lanes = 5;
    CHECK_THROWS_AS(reconstruct_optimized(vol, stack, bad_lanes), validation_error);
}
