#include "conebeam/kernel_opt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "conebeam/kernel_ref.hpp"

namespace conebeam {

namespace {

// ---------------------------------------------------------------------------
// Clip mask
// ---------------------------------------------------------------------------

// Per-voxel predicate in the kernels' single-precision arithmetic: the full
// bilinear footprint lies inside [0, width-1) x [0, height-1).
inline bool footprint_interior(const float a[12], float O, float MM,
                               int x, int y, int z, int width, int height) {
    const float wx = O + x * MM;
    const float wy = O + y * MM;
    const float wz = O + z * MM;
    const float u = wx * a[0] + wy * a[3] + wz * a[6] + a[9];
    const float v = wx * a[1] + wy * a[4] + wz * a[7] + a[10];
    const float w = wx * a[2] + wy * a[5] + wz * a[8] + a[11];
    if (!(w > 0.0f))
        return false;
    const float ix = u / w;
    const float iy = v / w;
    return ix >= 0.0f && ix < static_cast<float>(width - 1) &&
           iy >= 0.0f && iy < static_cast<float>(height - 1);
}

// Longest contiguous run of admitted voxels (first one on ties).
template <typename Pred>
LineRange scan_line(const Pred& pred, int length) {
    LineRange best;
    int run_start = -1;
    for (int x = 0; x <= length; ++x) {
        const bool inside = x < length && pred(x);
        if (inside && run_start < 0)
            run_start = x;
        if (!inside && run_start >= 0) {
            if (x - run_start > best.count())
                best = {run_start, x};
            run_start = -1;
        }
    }
    return best;
}

// Nudges the double-precision estimate [s, e) until it agrees with the
// predicate at both boundaries; falls back to a scan when the estimate is
// off by more than a few voxels.
template <typename Pred>
LineRange refine_range(const Pred& pred, int length, int s, int e) {
    constexpr int kMaxNudge = 8;
    int nudges = 0;

    if (s >= e) {
        const int probe_lo = std::max(0, std::min(s, length) - 2);
        const int probe_hi = std::min(length, std::max(e, 0) + 2);
        for (int x = probe_lo; x < probe_hi; ++x)
            if (pred(x))
                return scan_line(pred, length);
        return {};
    }

    while (s < e && !pred(s)) {
        ++s;
        if (++nudges > kMaxNudge)
            return scan_line(pred, length);
    }
    if (s == e)
        return scan_line(pred, length);
    while (s > 0 && pred(s - 1)) {
        --s;
        if (++nudges > kMaxNudge)
            return scan_line(pred, length);
    }
    while (e > s && !pred(e - 1)) {
        --e;
        if (++nudges > kMaxNudge)
            return scan_line(pred, length);
    }
    while (e < length && pred(e)) {
        ++e;
        if (++nudges > kMaxNudge)
            return scan_line(pred, length);
    }
    if (s >= e)
        return {};
    return {s, e};
}

// One linear inequality p + q*x >= 0 intersected into [lo, hi].
inline bool intersect_halfline(double p, double q, double& lo, double& hi) {
    if (q > 0.0)
        lo = std::max(lo, -p / q);
    else if (q < 0.0)
        hi = std::min(hi, -p / q);
    else if (p < 0.0)
        return false;
    return lo <= hi;
}

} // namespace

uint64_t ClipMask::admitted_count() const {
    uint64_t n = 0;
    for (const auto& r : lines)
        n += static_cast<uint64_t>(r.count());
    return n;
}

ClipMask compute_clip_mask(const ProjectionMatrix& m, const VolumeGeometry& g,
                           int width, int height) {
    m.validate();
    g.validate();
    if (width < 1 || height < 1)
        throw validation_error("compute_clip_mask: detector dimensions must be >= 1");

    const int L = g.edge_voxels;

    // w is affine in (x, y, z), so its minimum over the volume is attained at
    // a corner; any non-positive corner makes the matrix degenerate here.
    for (int corner = 0; corner < 8; ++corner) {
        const auto p = world_from_voxel(g, (corner & 1) ? L - 1 : 0,
                                        (corner & 2) ? L - 1 : 0,
                                        (corner & 4) ? L - 1 : 0);
        if (!(forward_project(m, p[0], p[1], p[2]).w > 0.0))
            throw geometry_error("compute_clip_mask: w <= 0 over the volume");
    }

    float a[12];
    for (int i = 0; i < 12; ++i)
        a[i] = static_cast<float>(m.a[i]);
    const float Of = static_cast<float>(g.origin_mm);
    const float MMf = static_cast<float>(g.voxel_mm);

    const double O = g.origin_mm;
    const double MM = g.voxel_mm;
    const double wlim = static_cast<double>(width - 1);
    const double hlim = static_cast<double>(height - 1);

    ClipMask mask;
    mask.edge_voxels = L;
    mask.lines.resize(static_cast<std::size_t>(L) * L);

    for (int z = 0; z < L; ++z) {
        const double wz = O + z * MM;
        for (int y = 0; y < L; ++y) {
            const double wy = O + y * MM;

            // u(x), v(x), w(x) are affine in the voxel index x.
            const double du = MM * m.a[0];
            const double u0 = O * m.a[0] + wy * m.a[3] + wz * m.a[6] + m.a[9];
            const double dv = MM * m.a[1];
            const double v0 = O * m.a[1] + wy * m.a[4] + wz * m.a[7] + m.a[10];
            const double dw = MM * m.a[2];
            const double w0 = O * m.a[2] + wy * m.a[5] + wz * m.a[8] + m.a[11];

            const auto pred = [&](int x) {
                return footprint_interior(a, Of, MMf, x, y, z, width, height);
            };

            double lo = 0.0;
            double hi = static_cast<double>(L - 1);
            const bool nonempty = intersect_halfline(u0, du, lo, hi) &&
                                  intersect_halfline(wlim * w0 - u0, wlim * dw - du, lo, hi) &&
                                  intersect_halfline(v0, dv, lo, hi) &&
                                  intersect_halfline(hlim * w0 - v0, hlim * dw - dv, lo, hi);

            LineRange r;
            if (!nonempty) {
                r = refine_range(pred, L, 0, 0);
            } else {
                // Near-flat projected coordinates close to a bound can make
                // the estimate unreliable; scan those lines outright.
                const double ix_lo = (u0 + du * lo) / (w0 + dw * lo);
                const double ix_hi = (u0 + du * hi) / (w0 + dw * hi);
                const double iy_lo = (v0 + dv * lo) / (w0 + dw * lo);
                const double iy_hi = (v0 + dv * hi) / (w0 + dw * hi);
                const bool flat_u = std::fabs(ix_hi - ix_lo) < 0.5 &&
                                    (std::min(ix_lo, ix_hi) < 1.0 ||
                                     std::max(ix_lo, ix_hi) > wlim - 1.0);
                const bool flat_v = std::fabs(iy_hi - iy_lo) < 0.5 &&
                                    (std::min(iy_lo, iy_hi) < 1.0 ||
                                     std::max(iy_lo, iy_hi) > hlim - 1.0);
                if (flat_u || flat_v) {
                    r = scan_line(pred, L);
                } else {
                    const int s = std::clamp(static_cast<int>(std::ceil(lo)), 0, L);
                    const int e = std::clamp(static_cast<int>(std::floor(hi)) + 1, 0, L);
                    r = refine_range(pred, L, s, e);
                }
            }
            mask.lines[static_cast<std::size_t>(z) * L + y] = r;
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Zero padding
// ---------------------------------------------------------------------------

void PadSpec::validate() const {
    if (left < 0 || right < 0 || top < 0 || bottom < 0)
        throw validation_error("PadSpec: pads must be non-negative");
}

ProjectionImage zero_pad(const ProjectionImage& img, const PadSpec& p) {
    img.validate();
    p.validate();
    if (img.padded())
        throw validation_error("zero_pad: image is already padded");

    ProjectionImage out;
    out.width = img.width + p.left + p.right;
    out.height = img.height + p.top + p.bottom;
    out.pad_du = -p.left;
    out.pad_dv = -p.top;
    out.data.assign(static_cast<std::size_t>(out.width) * out.height, 0.0f);
    for (int iy = 0; iy < img.height; ++iy) {
        const float* src = img.data.data() + static_cast<std::size_t>(iy) * img.width;
        float* dst = out.data.data() +
                     (static_cast<std::size_t>(iy + p.top) * out.width + p.left);
        std::copy(src, src + img.width, dst);
    }
    return out;
}

PadSpec compute_pad_spec(const ProjectionStack& s, const std::vector<ClipMask>& masks) {
    s.validate();
    if (masks.size() != s.count())
        throw validation_error("compute_pad_spec: one mask per projection required");

    const int width = s.images.front().width;
    const int height = s.images.front().height;
    const int L = s.geometry.edge_voxels;
    const float O = static_cast<float>(s.geometry.origin_mm);
    const float MM = static_cast<float>(s.geometry.voxel_mm);

    int min_iix = 0;
    int max_tap_x = width - 1;
    int min_iiy = 0;
    int max_tap_y = height - 1;

    for (std::size_t p = 0; p < s.count(); ++p) {
        if (masks[p].edge_voxels != L)
            throw validation_error("compute_pad_spec: mask geometry mismatch");
        float a[12];
        for (int i = 0; i < 12; ++i)
            a[i] = static_cast<float>(s.matrices[p].a[i]);

        for (int z = 0; z < L; ++z) {
            for (int y = 0; y < L; ++y) {
                const LineRange& r = masks[p].line(z, y);
                if (r.empty())
                    continue;
                // The projected coordinates are monotone along the line, so
                // the tap extremes occur at the range endpoints.
                for (int x : {r.start, r.stop - 1}) {
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
    }

    PadSpec pad;
    pad.left = -min_iix;
    pad.right = std::max(1, max_tap_x - (width - 1));
    pad.top = -min_iiy;
    pad.bottom = std::max(1, max_tap_y - (height - 1));
    return pad;
}

// ---------------------------------------------------------------------------
// Chunk plan
// ---------------------------------------------------------------------------

ChunkPlan make_chunk_plan(int32_t edge_voxels, int32_t chunk_size, int32_t workers) {
    if (edge_voxels < 1)
        throw validation_error("make_chunk_plan: edge_voxels must be >= 1");
    if (chunk_size < 1)
        throw validation_error("make_chunk_plan: chunk_size must be >= 1");
    if (workers < 1)
        throw validation_error("make_chunk_plan: workers must be >= 1");

    ChunkPlan plan;
    plan.chunk_size = chunk_size;
    plan.workers = workers;
    plan.line_count = static_cast<int64_t>(edge_voxels) * edge_voxels;
    plan.chunks.reserve(static_cast<std::size_t>((plan.line_count + chunk_size - 1) / chunk_size));
    for (int64_t first = 0; first < plan.line_count; first += chunk_size) {
        ChunkPlan::Chunk c;
        c.first_line = first;
        c.count = static_cast<int32_t>(std::min<int64_t>(chunk_size, plan.line_count - first));
        plan.chunks.push_back(c);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Cache line accounting
// ---------------------------------------------------------------------------

int count_cacheline_splits(std::span<const int64_t> byte_offsets, int cl_bytes) {
    if (cl_bytes < 1)
        throw validation_error("count_cacheline_splits: cl_bytes must be >= 1");
    int64_t lines[64];
    std::vector<int64_t> spill;
    int64_t* buf = lines;
    if (byte_offsets.size() > 64) {
        spill.resize(byte_offsets.size());
        buf = spill.data();
    }
    std::size_t n = 0;
    for (int64_t off : byte_offsets) {
        if (off < 0)
            throw validation_error("count_cacheline_splits: offsets must be non-negative");
        buf[n++] = off / cl_bytes;
    }
    std::sort(buf, buf + n);
    return static_cast<int>(std::unique(buf, buf + n) - buf);
}

std::array<double, 4> GatherStats::mean_cachelines() const {
    std::array<double, 4> m{};
    if (groups == 0)
        return m;
    for (int t = 0; t < 4; ++t)
        m[t] = static_cast<double>(cacheline_sum[t]) / static_cast<double>(groups);
    return m;
}

uint64_t GatherStats::gather_trips() const {
    uint64_t n = 0;
    for (const auto s : cacheline_sum)
        n += s;
    return n;
}

void GatherStats::merge(const GatherStats& other) {
    for (int t = 0; t < 4; ++t)
        cacheline_sum[t] += other.cacheline_sum[t];
    groups += other.groups;
}

std::string gather_stats_text(const GatherStats& s) {
    static const char* kTapNames[4] = {"bl", "br", "tl", "tr"};
    const auto mean = s.mean_cachelines();
    std::ostringstream os;
    os << "gather instrumentation (" << s.groups << " lane groups)\n";
    os << "  tap   mean distinct CLs\n";
    for (int t = 0; t < 4; ++t) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "  %-4s  %.3f\n", kTapNames[t], mean[t]);
        os << buf;
    }
    os << "  gather trips total: " << s.gather_trips() << "\n";
    return os.str();
}

std::string gather_stats_json(const GatherStats& s) {
    static const char* kTapNames[4] = {"bl", "br", "tl", "tr"};
    nlohmann::json j;
    const auto mean = s.mean_cachelines();
    for (int t = 0; t < 4; ++t) {
        j["mean_cachelines"][kTapNames[t]] = mean[t];
        j["cacheline_sum"][kTapNames[t]] = s.cacheline_sum[t];
    }
    j["groups"] = s.groups;
    j["gather_trips"] = s.gather_trips();
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Line update kernel
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxLanes = 16;

// Updates voxels [x0, x0 + n) of line (z, y); n <= kMaxLanes. Lane groups and
// the scalar tail both run this body, so results are independent of the lane
// grouping by construction. The guarded variant checks each tap against the
// raster bounds (used when zero padding is disabled); the unguarded variant
// requires every tap to be in bounds.
template <bool Guarded>
void update_span(float* vox_line, const ProjectionImage& img, const float a[12],
                 float O, float MM, int z, int y, int x0, int n, GatherStats* stats) {
    const float wy = O + y * MM;
    const float wz = O + z * MM;
    const float shift_u = -static_cast<float>(img.pad_du);
    const float shift_v = -static_cast<float>(img.pad_dv);
    const int width = img.width;
    const int height = img.height;
    const float* I = img.data.data();

    float px[kMaxLanes];
    float py[kMaxLanes];
    float rw2[kMaxLanes];
    bool zero_w = false;
    for (int l = 0; l < n; ++l) {
        const float wx = O + (x0 + l) * MM;
        const float u = wx * a[0] + wy * a[3] + wz * a[6] + a[9];
        const float v = wx * a[1] + wy * a[4] + wz * a[7] + a[10];
        const float w = wx * a[2] + wy * a[5] + wz * a[8] + a[11];
        zero_w |= (w == 0.0f);
        const float rw = 1.0f / w;
        px[l] = u * rw + shift_u;
        py[l] = v * rw + shift_v;
        rw2[l] = rw * rw;
    }
    if (Guarded && zero_w)
        throw geometry_error("backprojection hit a voxel with w == 0");

    int iix[kMaxLanes];
    int iiy[kMaxLanes];
    float sx[kMaxLanes];
    float sy[kMaxLanes];
    for (int l = 0; l < n; ++l) {
        float cx = px[l];
        float cy = py[l];
        if (Guarded) {
            // Rays far off the detector: force all taps out of bounds and
            // keep the int casts defined.
            if (!(std::fabs(cx) < 1.0e9f))
                cx = -1.0e9f;
            if (!(std::fabs(cy) < 1.0e9f))
                cy = -1.0e9f;
        }
        iix[l] = static_cast<int>(cx);
        iiy[l] = static_cast<int>(cy);
        sx[l] = cx - static_cast<float>(iix[l]);
        sy[l] = cy - static_cast<float>(iiy[l]);
    }

    float bl[kMaxLanes];
    float br[kMaxLanes];
    float tl[kMaxLanes];
    float tr[kMaxLanes];
    int64_t base[kMaxLanes];
    if constexpr (Guarded) {
        for (int l = 0; l < n; ++l) {
            const int ix = iix[l];
            const int iy = iiy[l];
            base[l] = static_cast<int64_t>(iy) * width + ix;
            bl[l] = (iy >= 0 && iy < height && ix >= 0 && ix < width)
                        ? I[iy * width + ix] : 0.0f;
            br[l] = (iy >= 0 && iy < height && ix + 1 >= 0 && ix + 1 < width)
                        ? I[iy * width + ix + 1] : 0.0f;
            tl[l] = (iy + 1 >= 0 && iy + 1 < height && ix >= 0 && ix < width)
                        ? I[(iy + 1) * width + ix] : 0.0f;
            tr[l] = (iy + 1 >= 0 && iy + 1 < height && ix + 1 >= 0 && ix + 1 < width)
                        ? I[(iy + 1) * width + ix + 1] : 0.0f;
        }
    } else {
        for (int l = 0; l < n; ++l)
            base[l] = static_cast<int64_t>(iiy[l]) * width + iix[l];
        for (int l = 0; l < n; ++l) {
            bl[l] = I[base[l]];
            br[l] = I[base[l] + 1];
            tl[l] = I[base[l] + width];
            tr[l] = I[base[l] + width + 1];
        }
    }

    if (stats) {
        // Tap byte offsets relative to the raster start; in the guarded
        // variant only in-bounds taps would be gathered.
        const int64_t tap_delta[4] = {0, 1, width, width + 1};
        for (int tap = 0; tap < 4; ++tap) {
            int64_t offs[kMaxLanes];
            std::size_t m = 0;
            for (int l = 0; l < n; ++l) {
                const int64_t idx = base[l] + tap_delta[tap];
                if (Guarded) {
                    const int ix = iix[l] + ((tap == 1 || tap == 3) ? 1 : 0);
                    const int iy = iiy[l] + ((tap == 2 || tap == 3) ? 1 : 0);
                    if (!(iy >= 0 && iy < height && ix >= 0 && ix < width))
                        continue;
                }
                offs[m++] = idx * static_cast<int64_t>(sizeof(float));
            }
            stats->cacheline_sum[tap] += static_cast<uint64_t>(
                count_cacheline_splits(std::span<const int64_t>(offs, m)));
        }
        stats->groups += 1;
    }

    for (int l = 0; l < n; ++l) {
        const float valb = (1 - sx[l]) * bl[l] + sx[l] * br[l];
        const float valt = (1 - sx[l]) * tl[l] + sx[l] * tr[l];
        const float val = (1 - sy[l]) * valb + sy[l] * valt;
        if (Guarded) {
            // Matches the reference: a zero sample contributes exactly zero
            // even when the weight overflows.
            vox_line[x0 + l] += (val != 0.0f) ? val * rw2[l] : 0.0f;
        } else {
            vox_line[x0 + l] += val * rw2[l];
        }
    }
}

void validate_lanes(int lanes) {
    if (lanes != 4 && lanes != 8 && lanes != 16)
        throw validation_error("lane width must be 4, 8, or 16");
}

} // namespace

void backproject_line(Volume& vol, const ProjectionImage& img_padded,
                      const ProjectionMatrix& m, int z, int y,
                      int x_start, int x_stop, int lanes, GatherStats* stats) {
    validate_lanes(lanes);
    const int L = vol.geometry.edge_voxels;
    if (z < 0 || z >= L || y < 0 || y >= L || x_start < 0 || x_stop > L)
        throw validation_error("backproject_line: line out of volume bounds");
    if (x_start >= x_stop)
        return;

    float a[12];
    for (int i = 0; i < 12; ++i)
        a[i] = static_cast<float>(m.a[i]);
    const float O = static_cast<float>(vol.geometry.origin_mm);
    const float MM = static_cast<float>(vol.geometry.voxel_mm);

    float* vox = vol.voxels.data() +
                 (static_cast<std::size_t>(z) * L + y) * static_cast<std::size_t>(L);
    for (int x0 = x_start; x0 < x_stop; x0 += lanes) {
        const int n = std::min(lanes, x_stop - x0);
        update_span<false>(vox, img_padded, a, O, MM, z, y, x0, n, stats);
    }
}

// ---------------------------------------------------------------------------
// Full optimized reconstruction
// ---------------------------------------------------------------------------

void OptOptions::validate() const {
    if (lanes != 1)
        validate_lanes(lanes);
    if (chunk_size < 1)
        throw validation_error("OptOptions: chunk_size must be >= 1");
    if (workers < 0)
        throw validation_error("OptOptions: workers must be >= 0");
    if (instrument && lanes == 1)
        throw validation_error("OptOptions: instrumentation requires a vector lane width");
}

namespace {

int default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

struct ProjectionJob {
    const ProjectionImage* img = nullptr;
    float a[12];
    const ClipMask* mask = nullptr;
};

void run_projection(Volume& vol, const ProjectionJob& job, const ChunkPlan& plan,
                    const OptOptions& opt, int workers, GatherStats* stats_out) {
    const int L = vol.geometry.edge_voxels;
    const float O = static_cast<float>(vol.geometry.origin_mm);
    const float MM = static_cast<float>(vol.geometry.voxel_mm);
    // Branch-free taps require both the padded raster and the clip ranges;
    // without clipping, unadmitted voxels can project outside even the
    // padded raster and must be guarded.
    const bool guarded = !(opt.use_pad && opt.use_clip);

    std::vector<GatherStats> worker_stats(stats_out ? workers : 0);
    std::vector<std::exception_ptr> errors(workers);

    auto body = [&](int wid) {
        try {
            GatherStats* st = stats_out ? &worker_stats[wid] : nullptr;
            for (std::size_t ci = static_cast<std::size_t>(wid); ci < plan.chunks.size();
                 ci += static_cast<std::size_t>(workers)) {
                const auto& chunk = plan.chunks[ci];
                for (int64_t li = chunk.first_line; li < chunk.first_line + chunk.count; ++li) {
                    const int z = static_cast<int>(li / L);
                    const int y = static_cast<int>(li % L);
                    LineRange r{0, L};
                    if (job.mask && opt.use_clip)
                        r = job.mask->lines[static_cast<std::size_t>(li)];
                    if (r.empty())
                        continue;
                    float* vox = vol.voxels.data() +
                                 static_cast<std::size_t>(li) * static_cast<std::size_t>(L);
                    if (opt.lanes == 1) {
                        const float wy = O + y * MM;
                        const float wz = O + z * MM;
                        for (int x = r.start; x < r.stop; ++x)
                            vox[x] += detail::reference_sample(*job.img, job.a,
                                                               O + x * MM, wy, wz);
                    } else {
                        for (int x0 = r.start; x0 < r.stop; x0 += opt.lanes) {
                            const int n = std::min(opt.lanes, r.stop - x0);
                            if (guarded)
                                update_span<true>(vox, *job.img, job.a, O, MM, z, y, x0, n, st);
                            else
                                update_span<false>(vox, *job.img, job.a, O, MM, z, y, x0, n, st);
                        }
                    }
                }
            }
        } catch (...) {
            errors[wid] = std::current_exception();
        }
    };

    if (workers == 1) {
        body(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers) - 1);
        for (int wid = 1; wid < workers; ++wid)
            pool.emplace_back(body, wid);
        body(0);
        for (auto& t : pool)
            t.join();
    }

    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    if (stats_out)
        for (const auto& ws : worker_stats)
            stats_out->merge(ws);
}

} // namespace

void reconstruct_optimized(Volume& vol, const ProjectionStack& stack,
                           const OptOptions& options, ReconstructStats* stats) {
    using clock = std::chrono::steady_clock;

    options.validate();
    stack.validate();
    vol.validate();
    if (vol.geometry != stack.geometry)
        throw geometry_error("reconstruct_optimized: volume and stack geometries differ");

    const int L = stack.geometry.edge_voxels;
    const int workers = options.workers > 0 ? options.workers : default_workers();
    const bool need_masks = options.use_clip || options.use_pad;

    const auto t_pre = clock::now();

    std::vector<ClipMask> masks;
    if (need_masks) {
        masks.reserve(stack.count());
        for (std::size_t p = 0; p < stack.count(); ++p)
            masks.push_back(compute_clip_mask(stack.matrices[p], stack.geometry,
                                              stack.images[p].width,
                                              stack.images[p].height));
    }

    std::vector<ProjectionImage> padded;
    if (options.use_pad) {
        const PadSpec pad = compute_pad_spec(stack, masks);
        padded.reserve(stack.count());
        for (const auto& img : stack.images)
            padded.push_back(zero_pad(img, pad));
    }

    const ChunkPlan plan = make_chunk_plan(L, options.chunk_size, workers);

    const auto t_kernel = clock::now();

    uint64_t updates = 0;
    GatherStats gather;
    for (std::size_t p = 0; p < stack.count(); ++p) {
        ProjectionJob job;
        job.img = options.use_pad ? &padded[p] : &stack.images[p];
        for (int i = 0; i < 12; ++i)
            job.a[i] = static_cast<float>(stack.matrices[p].a[i]);
        job.mask = need_masks ? &masks[p] : nullptr;
        run_projection(vol, job, plan, options, workers,
                       options.instrument ? &gather : nullptr);
        updates += options.use_clip ? masks[p].admitted_count()
                                    : static_cast<uint64_t>(plan.line_count) * L;
    }

    const auto t_end = clock::now();
    if (stats) {
        stats->precompute_seconds = std::chrono::duration<double>(t_kernel - t_pre).count();
        stats->kernel_seconds = std::chrono::duration<double>(t_end - t_kernel).count();
        stats->voxel_updates = updates;
        stats->gather = gather;
    }
}

} // namespace conebeam
