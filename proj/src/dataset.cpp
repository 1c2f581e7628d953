#include "conebeam/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace conebeam {

namespace {

constexpr char kStackMagic[4] = {'C', 'B', 'P', 'S'};
constexpr char kVolumeMagic[4] = {'C', 'B', 'P', 'V'};
constexpr uint16_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

// --- little-endian primitives ---------------------------------------------

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T value) {
    static_assert(std::is_integral_v<T>);
    unsigned char buf[sizeof(T)];
    auto u = static_cast<std::make_unsigned_t<T>>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>(u >> (8 * i));
    put_bytes(os, buf, sizeof(T));
}

void put_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<uint32_t>(v)); }
void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<uint64_t>(v)); }

void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw truncated_error(std::string("file ends inside ") + what);
}

template <typename T>
T get_le(std::istream& is, const char* what) {
    unsigned char buf[sizeof(T)];
    get_bytes(is, buf, sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
    return static_cast<T>(u);
}

float get_f32(std::istream& is, const char* what) {
    return std::bit_cast<float>(get_le<uint32_t>(is, what));
}
double get_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(get_le<uint64_t>(is, what));
}

void put_f32_array(std::ostream& os, const float* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        put_bytes(os, p, n * sizeof(float));
    } else {
        for (std::size_t i = 0; i < n; ++i)
            put_f32(os, p[i]);
    }
}

void get_f32_array(std::istream& is, float* p, std::size_t n, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
        get_bytes(is, p, n * sizeof(float), what);
    } else {
        for (std::size_t i = 0; i < n; ++i)
            p[i] = get_f32(is, what);
    }
}

void check_magic(std::istream& is, const char (&magic)[4], const char* kind) {
    char buf[4];
    get_bytes(is, buf, 4, "magic");
    if (std::memcmp(buf, magic, 4) != 0)
        throw format_error(std::string("not a ") + kind + " file (magic mismatch)");
    const auto version = get_le<uint16_t>(is, "version");
    if (version != kFormatVersion)
        throw format_error(std::string(kind) + " file version " + std::to_string(version) +
                           " not supported (expected " + std::to_string(kFormatVersion) + ")");
    get_le<uint16_t>(is, "reserved");
}

void expect_eof(std::istream& is, const char* kind) {
    if (is.peek() != std::char_traits<char>::eof())
        throw format_error(std::string(kind) + " file has trailing bytes after payload");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw io_error("cannot open '" + path + "' for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("cannot open '" + path + "' for reading");
    return is;
}

void require_finite(const std::vector<float>& v, const char* what) {
    for (float x : v)
        if (!std::isfinite(x))
            throw validation_error(std::string(what) + " contains non-finite values");
}

} // namespace

// --- type invariants --------------------------------------------------------

void ProjectionImage::validate() const {
    if (width < 1 || height < 1)
        throw validation_error("ProjectionImage: dimensions must be >= 1");
    if (data.size() != static_cast<std::size_t>(width) * height)
        throw validation_error("ProjectionImage: intensity buffer length != width*height");
    require_finite(data, "ProjectionImage");
}

void ProjectionStack::validate() const {
    geometry.validate();
    if (images.empty())
        throw validation_error("ProjectionStack: at least one projection required");
    if (images.size() != matrices.size())
        throw validation_error("ProjectionStack: images and matrices differ in length");
    for (const auto& m : matrices)
        m.validate();
    for (const auto& img : images) {
        img.validate();
        if (img.width != images.front().width || img.height != images.front().height)
            throw validation_error("ProjectionStack: images differ in dimensions");
    }
}

void Volume::validate() const {
    geometry.validate();
    if (voxels.size() != geometry.voxel_count())
        throw validation_error("Volume: voxel buffer length != L^3");
    require_finite(voxels, "Volume");
}

// --- stack file --------------------------------------------------------------

void write_stack(const std::string& path, const ProjectionStack& s) {
    s.validate();
    for (const auto& img : s.images)
        if (img.padded())
            throw validation_error("write_stack: padded images cannot be serialized");

    auto os = open_out(path);
    put_bytes(os, kStackMagic, 4);
    put_le(os, kFormatVersion);
    put_le<uint16_t>(os, 0);
    put_le<uint32_t>(os, static_cast<uint32_t>(s.images.front().width));
    put_le<uint32_t>(os, static_cast<uint32_t>(s.images.front().height));
    put_le<uint32_t>(os, static_cast<uint32_t>(s.images.size()));
    put_f64(os, s.geometry.voxel_mm);
    put_f64(os, s.geometry.origin_mm);
    put_le<uint32_t>(os, static_cast<uint32_t>(s.geometry.edge_voxels));
    for (std::size_t i = 0; i < s.images.size(); ++i) {
        for (double c : s.matrices[i].a)
            put_f64(os, c);
        put_f32_array(os, s.images[i].data.data(), s.images[i].data.size());
    }
    os.flush();
    if (!os)
        throw io_error("write failure on '" + path + "'");
}

ProjectionStack read_stack(const std::string& path) {
    auto is = open_in(path);
    check_magic(is, kStackMagic, "stack");

    const auto width = get_le<uint32_t>(is, "width");
    const auto height = get_le<uint32_t>(is, "height");
    const auto count = get_le<uint32_t>(is, "count");
    ProjectionStack s;
    s.geometry.voxel_mm = get_f64(is, "voxel_mm");
    s.geometry.origin_mm = get_f64(is, "origin_mm");
    s.geometry.edge_voxels = static_cast<int32_t>(get_le<uint32_t>(is, "edge_voxels"));

    if (width < 1 || height < 1 || count < 1)
        throw format_error("stack header has zero width, height, or count");
    s.geometry.validate();

    s.matrices.resize(count);
    s.images.resize(count);
    const std::size_t pixels = static_cast<std::size_t>(width) * height;
    for (uint32_t i = 0; i < count; ++i) {
        for (double& c : s.matrices[i].a)
            c = get_f64(is, "matrix coefficients");
        auto& img = s.images[i];
        img.width = static_cast<int32_t>(width);
        img.height = static_cast<int32_t>(height);
        img.data.resize(pixels);
        get_f32_array(is, img.data.data(), pixels, "projection intensities");
    }
    expect_eof(is, "stack");
    s.validate();
    return s;
}

// --- volume file ---------------------------------------------------------------

void write_volume(const std::string& path, const Volume& v) {
    v.validate();
    auto os = open_out(path);
    put_bytes(os, kVolumeMagic, 4);
    put_le(os, kFormatVersion);
    put_le<uint16_t>(os, 0);
    put_le<uint32_t>(os, static_cast<uint32_t>(v.geometry.edge_voxels));
    put_f64(os, v.geometry.voxel_mm);
    put_f64(os, v.geometry.origin_mm);
    put_f32_array(os, v.voxels.data(), v.voxels.size());
    os.flush();
    if (!os)
        throw io_error("write failure on '" + path + "'");
}

Volume read_volume(const std::string& path) {
    auto is = open_in(path);
    check_magic(is, kVolumeMagic, "volume");

    Volume v;
    v.geometry.edge_voxels = static_cast<int32_t>(get_le<uint32_t>(is, "edge_voxels"));
    v.geometry.voxel_mm = get_f64(is, "voxel_mm");
    v.geometry.origin_mm = get_f64(is, "origin_mm");
    v.geometry.validate();

    v.voxels.resize(v.geometry.voxel_count());
    get_f32_array(is, v.voxels.data(), v.voxels.size(), "voxel payload");
    expect_eof(is, "volume");
    v.validate();
    return v;
}

// --- synthetic fields ------------------------------------------------------------

FieldSpec::FieldSpec() {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    p0 = p1 = p2 = p3 = nan;
}

double FieldSpec::evaluate(int ix, int iy, int width, int height) const {
    const auto dflt = [](double v, double d) { return std::isnan(v) ? d : v; };
    const double x = ix;
    const double y = iy;
    switch (kind) {
    case FieldKind::constant:
        return dflt(p0, 1.0);
    case FieldKind::linear_ramp:
        return dflt(p0, 1.0) * x + dflt(p1, 2.0) * y + dflt(p2, 0.0);
    case FieldKind::gaussian_blob: {
        const double amp = dflt(p0, 1.0);
        const double cx = dflt(p1, 0.5 * (width - 1));
        const double cy = dflt(p2, 0.5 * (height - 1));
        const double sigma = dflt(p3, std::min(width, height) / 16.0);
        const double dx = x - cx;
        const double dy = y - cy;
        return amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
    case FieldKind::checker: {
        const double amp = dflt(p0, 1.0);
        const double period = dflt(p1, 8.0);
        const auto cell = static_cast<long>(std::floor(x / period)) +
                          static_cast<long>(std::floor(y / period));
        return (cell & 1) ? amp : 0.0;
    }
    }
    throw validation_error("FieldSpec: unknown field kind");
}

std::string FieldSpec::to_string() const {
    const char* name = "";
    switch (kind) {
    case FieldKind::constant: name = "constant"; break;
    case FieldKind::linear_ramp: name = "ramp"; break;
    case FieldKind::gaussian_blob: name = "gauss"; break;
    case FieldKind::checker: name = "checker"; break;
    }
    std::ostringstream os;
    os << name;
    const double ps[4] = {p0, p1, p2, p3};
    int last = -1;
    for (int i = 0; i < 4; ++i)
        if (!std::isnan(ps[i]))
            last = i;
    for (int i = 0; i <= last; ++i)
        os << (i == 0 ? ':' : ',') << ps[i];
    return os.str();
}

FieldSpec parse_field_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);

    FieldSpec f;
    if (name == "constant")
        f.kind = FieldKind::constant;
    else if (name == "ramp")
        f.kind = FieldKind::linear_ramp;
    else if (name == "gauss")
        f.kind = FieldKind::gaussian_blob;
    else if (name == "checker")
        f.kind = FieldKind::checker;
    else
        throw validation_error("unknown field id '" + name +
                               "' (expected constant, ramp, gauss, or checker)");

    if (colon == std::string::npos)
        return f;

    double* params[4] = {&f.p0, &f.p1, &f.p2, &f.p3};
    std::istringstream is(spec.substr(colon + 1));
    std::string token;
    int n = 0;
    while (std::getline(is, token, ',')) {
        if (n >= 4)
            throw validation_error("field spec '" + spec + "' has more than 4 parameters");
        try {
            std::size_t used = 0;
            *params[n] = std::stod(token, &used);
            if (used != token.size())
                throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw validation_error("field spec '" + spec + "': bad number '" + token + "'");
        }
        ++n;
    }
    return f;
}

ProjectionImage synth_projection_image(int width, int height, const FieldSpec& field) {
    if (width < 1 || height < 1)
        throw validation_error("synth_projection_image: dimensions must be >= 1");
    ProjectionImage img;
    img.width = width;
    img.height = height;
    img.data.resize(static_cast<std::size_t>(width) * height);
    for (int iy = 0; iy < height; ++iy)
        for (int ix = 0; ix < width; ++ix)
            img.data[static_cast<std::size_t>(iy) * width + ix] =
                static_cast<float>(field.evaluate(ix, iy, width, height));
    img.validate();
    return img;
}

ProjectionStack make_synthetic_stack(const GenerateConfig& cfg) {
    cfg.trajectory.validate();
    cfg.volume.validate();

    ProjectionStack s;
    s.geometry = cfg.volume;
    s.matrices = make_circular_trajectory(cfg.trajectory);
    const ProjectionImage img = synth_projection_image(
        cfg.trajectory.detector_width, cfg.trajectory.detector_height, cfg.field);
    s.images.assign(s.matrices.size(), img);
    s.validate();
    return s;
}

void generate_dataset(const GenerateConfig& cfg, const std::string& out_path) {
    write_stack(out_path, make_synthetic_stack(cfg));
}

} // namespace conebeam
