#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "conebeam/geometry.hpp"

using namespace conebeam;

namespace {

// Independent 3x4 matrix-vector oracle: row-major matrix applied to the
// homogeneous point, kept separate from the library's coefficient layout.
struct Mat34 {
    double row_u[4];
    double row_v[4];
    double row_w[4];

    Homogeneous apply(double x, double y, double z) const {
        const double p[4] = {x, y, z, 1.0};
        double out[3] = {0.0, 0.0, 0.0};
        const double* rows[3] = {row_u, row_v, row_w};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c)
                out[r] += rows[r][c] * p[c];
        return {out[0], out[1], out[2]};
    }

    static Mat34 from_library_layout(const ProjectionMatrix& m) {
        Mat34 o{};
        for (int c = 0; c < 4; ++c) {
            o.row_u[c] = m.a[3 * c + 0];
            o.row_v[c] = m.a[3 * c + 1];
            o.row_w[c] = m.a[3 * c + 2];
        }
        return o;
    }
};

TrajectoryConfig small_config() {
    TrajectoryConfig c;
    c.num_projections = 4;
    c.source_isocenter_mm = 400.0;
    c.source_detector_mm = 800.0;
    c.detector_width = 1248;
    c.detector_height = 960;
    c.pixel_size_mm = 1.0;
    return c;
}

} // namespace

TEST_CASE("world_from_voxel evaluates origin + index * voxel size") {
    VolumeGeometry g{512, 1.0, -255.5};
    auto p = world_from_voxel(g, 0, 0, 0);
    CHECK(p[0] == -255.5);
    CHECK(p[1] == -255.5);
    CHECK(p[2] == -255.5);

    p = world_from_voxel(g, 255, 255, 255);
    CHECK(p[0] == -0.5);

    VolumeGeometry fine{64, 0.25, -7.875};
    p = world_from_voxel(fine, 63, 0, 0);
    CHECK(p[0] == doctest::Approx(7.875).epsilon(1e-15));
    CHECK(p[1] == -7.875);
    CHECK(p[2] == -7.875);
}

TEST_CASE("VolumeGeometry::centered matches -(L-1)/2 * MM") {
    const auto g = VolumeGeometry::centered(512, 1.0);
    CHECK(g.origin_mm == -255.5);
    const auto g2 = VolumeGeometry::centered(64, 0.25);
    CHECK(g2.origin_mm == doctest::Approx(-7.875));
}

TEST_CASE("forward_project trivial matrices") {
    ProjectionMatrix m;
    m.a[0] = 1.0;
    m.a[4] = 1.0;
    m.a[11] = 1.0;
    const auto h = forward_project(m, 3.0, 5.0, 7.0);
    CHECK(h.u == 3.0);
    CHECK(h.v == 5.0);
    CHECK(h.w == 1.0);

    ProjectionMatrix t;
    t.a[9] = 2.0;
    t.a[10] = 4.0;
    t.a[11] = 1.0;
    const auto ht = forward_project(t, -12.0, 99.0, 0.25);
    CHECK(ht.u == 2.0);
    CHECK(ht.v == 4.0);
    CHECK(ht.w == 1.0);
}

TEST_CASE("forward_project agrees with an independent matrix-vector oracle") {
    std::mt19937_64 rng(20240901);
    std::uniform_real_distribution<double> coeff(-2.0, 2.0);
    std::uniform_real_distribution<double> coord(-100.0, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
        ProjectionMatrix m;
        for (auto& c : m.a)
            c = coeff(rng);
        const Mat34 oracle = Mat34::from_library_layout(m);
        const double x = coord(rng);
        const double y = coord(rng);
        const double z = coord(rng);
        const auto got = forward_project(m, x, y, z);
        const auto want = oracle.apply(x, y, z);
        CHECK(got.u == doctest::Approx(want.u).epsilon(1e-12));
        CHECK(got.v == doctest::Approx(want.v).epsilon(1e-12));
        CHECK(got.w == doctest::Approx(want.w).epsilon(1e-12));
    }
}

TEST_CASE("forward_project is affine: finite differences recover coefficients") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> coeff(-1.0, 1.0);
    ProjectionMatrix m;
    for (auto& c : m.a)
        c = coeff(rng);

    const double h = 1.0;
    const auto at = [&](double x, double y, double z) { return forward_project(m, x, y, z); };
    const auto base = at(0, 0, 0);
    CHECK((at(h, 0, 0).u - base.u) / h == doctest::Approx(m.a[0]).epsilon(1e-6));
    CHECK((at(0, h, 0).u - base.u) / h == doctest::Approx(m.a[3]).epsilon(1e-6));
    CHECK((at(0, 0, h).u - base.u) / h == doctest::Approx(m.a[6]).epsilon(1e-6));
    CHECK(base.u == doctest::Approx(m.a[9]).epsilon(1e-12));
    CHECK((at(h, 0, 0).v - base.v) / h == doctest::Approx(m.a[1]).epsilon(1e-6));
    CHECK((at(h, 0, 0).w - base.w) / h == doctest::Approx(m.a[2]).epsilon(1e-6));
}

TEST_CASE("dehomogenize") {
    auto p = dehomogenize(3.0, 5.0, 1.0);
    CHECK(p.ix == 3.0);
    CHECK(p.iy == 5.0);

    p = dehomogenize(6.0, 10.0, 2.0);
    CHECK(p.ix == 3.0);
    CHECK(p.iy == 5.0);

    p = dehomogenize(1.0, 1.0, 3.0);
    CHECK(p.ix == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(p.iy == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    CHECK_THROWS_AS(dehomogenize(1.0, 1.0, 0.0), geometry_error);
}

TEST_CASE("dehomogenize is invariant under homogeneous scaling") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> val(-50.0, 50.0);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double u = val(rng);
        const double v = val(rng);
        double w = val(rng);
        if (w == 0.0)
            w = 1.0;
        double s = scale(rng);
        if (trial % 2)
            s = -s;
        const auto a = dehomogenize(u, v, w);
        const auto b = dehomogenize(s * u, s * v, s * w);
        CHECK(b.ix == doctest::Approx(a.ix).epsilon(1e-12));
        CHECK(b.iy == doctest::Approx(a.iy).epsilon(1e-12));
    }
}

TEST_CASE("circular trajectory: isocenter normalization and centering") {
    auto c = small_config();
    c.num_projections = 1;
    const auto ms = make_circular_trajectory(c);
    REQUIRE(ms.size() == 1);
    const auto h = forward_project(ms[0], 0.0, 0.0, 0.0);
    CHECK(h.w == doctest::Approx(1.0).epsilon(1e-9));
    const auto p = dehomogenize(h);
    CHECK(p.ix == doctest::Approx(623.5).epsilon(1e-9));
    CHECK(p.iy == doctest::Approx(479.5).epsilon(1e-9));
}

TEST_CASE("circular trajectory: every matrix is normalized and centered") {
    auto c = small_config();
    c.num_projections = 17;
    for (const auto& m : make_circular_trajectory(c)) {
        const auto h = forward_project(m, 0.0, 0.0, 0.0);
        CHECK(std::fabs(h.w - 1.0) <= 1e-9);
        const auto p = dehomogenize(h);
        CHECK(std::fabs(p.ix - 623.5) <= 1e-6);
        CHECK(std::fabs(p.iy - 479.5) <= 1e-6);
    }
}

TEST_CASE("circular trajectory: rotation-axis points stay on one detector column") {
    auto c = small_config();
    c.num_projections = 4; // angles 0, pi/2, pi, 3pi/2
    const auto ms = make_circular_trajectory(c);
    REQUIRE(ms.size() == 4);
    for (const double z : {-30.0, 0.0, 55.0}) {
        const auto p0 = dehomogenize(forward_project(ms[0], 0.0, 0.0, z));
        for (const auto& m : ms) {
            const auto p = dehomogenize(forward_project(m, 0.0, 0.0, z));
            CHECK(p.ix == doctest::Approx(p0.ix).epsilon(1e-9));
            CHECK(p.iy == doctest::Approx(p0.iy).epsilon(1e-9));
        }
    }
}

TEST_CASE("circular trajectory matches a hand-built pinhole camera oracle") {
    auto c = small_config();
    c.num_projections = 5;
    c.angular_range_rad = 3.0;
    const auto ms = make_circular_trajectory(c);

    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> coord(-80.0, 80.0);
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const double angle = c.angular_range_rad * static_cast<double>(i) /
                             static_cast<double>(c.num_projections);
        const double cs = std::cos(angle);
        const double sn = std::sin(angle);
        const double R = c.source_isocenter_mm;
        const double f = c.source_detector_mm / c.pixel_size_mm;
        const double cu = 0.5 * (c.detector_width - 1);
        const double cv = 0.5 * (c.detector_height - 1);

        // Intrinsics x extrinsics: K [Rot | t], t = -Rot * source.
        const double rot[3][3] = {{-sn, cs, 0.0}, {0.0, 0.0, 1.0}, {-cs, -sn, 0.0}};
        const double source[3] = {R * cs, R * sn, 0.0};
        Mat34 oracle{};
        double* rows[3] = {oracle.row_u, oracle.row_v, oracle.row_w};
        const double K[3][3] = {{f, 0.0, cu}, {0.0, f, cv}, {0.0, 0.0, 1.0}};
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k)
                    acc += K[r][k] * rot[k][col];
                rows[r][col] = acc;
            }
            double t = 0.0;
            for (int k = 0; k < 3; ++k)
                t -= K[r][k] * (rot[k][0] * source[0] + rot[k][1] * source[1] +
                                rot[k][2] * source[2]);
            rows[r][3] = t;
        }
        // Normalize like the library: w(0, 0, 0) == 1.
        const double w0 = oracle.row_w[3];
        for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 4; ++col)
                rows[r][col] /= w0;

        // Magnification sanity point on the source axis at angle 0.
        if (i == 0) {
            const auto h = forward_project(ms[0], R / 2.0, 0.0, 0.0);
            CHECK(h.w == doctest::Approx(0.5).epsilon(1e-12));
        }

        for (int trial = 0; trial < 50; ++trial) {
            const double x = coord(rng);
            const double y = coord(rng);
            const double z = coord(rng);
            const auto got = forward_project(ms[i], x, y, z);
            const auto want = oracle.apply(x, y, z);
            CHECK(got.u == doctest::Approx(want.u).epsilon(1e-9));
            CHECK(got.v == doctest::Approx(want.v).epsilon(1e-9));
            CHECK(got.w == doctest::Approx(want.w).epsilon(1e-9));
        }
    }
}

TEST_CASE("trajectory validation names the offending field") {
    auto c = small_config();
    c.detector_width = 0;
    try {
        make_circular_trajectory(c);
        FAIL("expected validation_error");
    } catch (const validation_error& e) {
        CHECK(std::string(e.what()).find("detector_width") != std::string::npos);
    }

    c = small_config();
    c.source_detector_mm = c.source_isocenter_mm; // must exceed SID
    CHECK_THROWS_AS(make_circular_trajectory(c), validation_error);

    c = small_config();
    c.num_projections = 0;
    CHECK_THROWS_AS(make_circular_trajectory(c), validation_error);

    VolumeGeometry g{0, 1.0, 0.0};
    CHECK_THROWS_AS(g.validate(), validation_error);
    VolumeGeometry g2{8, -1.0, 0.0};
    CHECK_THROWS_AS(g2.validate(), validation_error);
}
