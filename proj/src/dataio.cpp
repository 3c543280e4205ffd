#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "glpnet/dataio.hpp"

static_assert(std::endian::native == std::endian::little, "GLT1 stores little-endian values");

namespace fs = std::filesystem;

namespace glpnet {

namespace {

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require_data(in.good(), path + ": cannot open");
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    require_data(out.good(), path + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require_data(out.good(), path + ": write failed");
}

// cursor over a loaded file that reports byte offsets in parse errors
struct ByteReader {
    const std::string& path;
    const std::vector<char>& buf;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError(path + ": " + msg + " at byte " + std::to_string(pos));
    }

    bool eof() const { return pos >= buf.size(); }
    char peek() const { return buf[pos]; }
    char take() {
        if (eof()) fail("unexpected end of file");
        return buf[pos++];
    }

    // PNM whitespace: blanks plus '#' comments to end of line
    void skip_space() {
        while (!eof()) {
            char c = peek();
            if (c == '#') {
                while (!eof() && take() != '\n') {
                }
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    std::int64_t read_int() {
        skip_space();
        if (eof() || !std::isdigit(static_cast<unsigned char>(peek()))) fail("expected an integer");
        std::int64_t v = 0;
        while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
            v = v * 10 + (take() - '0');
            if (v > (std::int64_t(1) << 40)) fail("integer out of range");
        }
        return v;
    }

    void expect(char c, const std::string& what) {
        if (eof() || peek() != c) fail("expected " + what);
        ++pos;
    }

    const char* raw(std::size_t n) {
        if (pos + n > buf.size()) fail("truncated payload, needs " + std::to_string(n) + " more bytes");
        const char* p = buf.data() + pos;
        pos += n;
        return p;
    }
};

struct PnmHeader {
    std::int64_t w, h, maxval;
};

PnmHeader read_pnm_header(ByteReader& r, char kind) {
    if (r.eof() || r.take() != 'P') r.fail("expected PNM magic");
    if (r.eof() || r.take() != kind) r.fail(std::string("expected P") + kind + " magic");
    PnmHeader hd;
    hd.w = r.read_int();
    hd.h = r.read_int();
    hd.maxval = r.read_int();
    if (hd.w < 1 || hd.h < 1) r.fail("non-positive image extents");
    if (hd.maxval < 1 || hd.maxval > 65535) r.fail("maxval out of range");
    // single whitespace byte separates header from payload
    if (r.eof() || !(r.peek() == '\n' || r.peek() == ' ' || r.peek() == '\t' || r.peek() == '\r'))
        r.fail("expected whitespace before payload");
    r.take();
    return hd;
}

int to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<int>(std::lround(c * 255.0f));
}

}  // namespace

void write_ppm(const std::string& path, const TensorT<float>& rgb01) {
    require_dim(rgb01.ndim() == 3 && rgb01.dim(0) == 3, "write_ppm: expects [3,H,W], got " + shape_str(rgb01.shape));
    const std::int64_t h = rgb01.dim(1), w = rgb01.dim(2);
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(3 * h * w));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                out.push_back(static_cast<char>(to_byte(rgb01.at3(c, y, x))));
    write_file(path, out);
}

TensorT<float> read_ppm(const std::string& path) {
    const auto buf = read_file(path);
    ByteReader r{path, buf};
    const PnmHeader hd = read_pnm_header(r, '6');
    if (hd.maxval != 255) r.fail("only 8-bit PPM is supported");
    TensorT<float> out(Shape{3, hd.h, hd.w});
    const unsigned char* p = reinterpret_cast<const unsigned char*>(r.raw(static_cast<std::size_t>(3 * hd.h * hd.w)));
    for (std::int64_t y = 0; y < hd.h; ++y)
        for (std::int64_t x = 0; x < hd.w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                out.at3(c, y, x) = static_cast<float>(*p++) / 255.0f;
    return out;
}

void write_pgm16(const std::string& path, const TensorT<float>& depth_m) {
    require_dim(depth_m.ndim() == 2 || (depth_m.ndim() == 3 && depth_m.dim(0) == 1),
                "write_pgm16: expects [H,W] or [1,H,W], got " + shape_str(depth_m.shape));
    const std::int64_t h = depth_m.dim(depth_m.ndim() - 2), w = depth_m.dim(depth_m.ndim() - 1);
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
    out.reserve(out.size() + static_cast<std::size_t>(2 * h * w));
    for (std::int64_t i = 0; i < h * w; ++i) {
        const long mm = std::clamp(std::lround(static_cast<double>(depth_m.data[static_cast<std::size_t>(i)]) * 1000.0),
                                   0L, 65535L);
        const auto v = static_cast<unsigned>(mm);
        out.push_back(static_cast<char>(v >> 8));  // big-endian per PNM
        out.push_back(static_cast<char>(v & 0xff));
    }
    write_file(path, out);
}

TensorT<float> read_pgm16(const std::string& path) {
    const auto buf = read_file(path);
    ByteReader r{path, buf};
    const PnmHeader hd = read_pnm_header(r, '5');
    if (hd.maxval < 256) r.fail("expected a 16-bit PGM");
    TensorT<float> out(Shape{1, hd.h, hd.w});
    const unsigned char* p = reinterpret_cast<const unsigned char*>(r.raw(static_cast<std::size_t>(2 * hd.h * hd.w)));
    for (std::int64_t i = 0; i < hd.h * hd.w; ++i) {
        const unsigned v = (static_cast<unsigned>(p[0]) << 8) | p[1];
        p += 2;
        out.data[static_cast<std::size_t>(i)] = static_cast<float>(v) / 1000.0f;
    }
    return out;
}

void write_pgm8(const std::string& path, const IntTensor& labels) {
    require_dim(labels.ndim() == 2, "write_pgm8: expects [H,W], got " + shape_str(labels.shape));
    const std::int64_t h = labels.dim(0), w = labels.dim(1);
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::int64_t i = 0; i < h * w; ++i) {
        const std::int32_t v = labels.data[static_cast<std::size_t>(i)];
        require_data(v >= 0 && v <= 255, path + ": label " + std::to_string(v) + " does not fit 8 bits");
        out.push_back(static_cast<char>(v));
    }
    write_file(path, out);
}

IntTensor read_pgm8(const std::string& path) {
    const auto buf = read_file(path);
    ByteReader r{path, buf};
    const PnmHeader hd = read_pnm_header(r, '5');
    if (hd.maxval > 255) r.fail("expected an 8-bit PGM");
    IntTensor out(Shape{hd.h, hd.w});
    const unsigned char* p = reinterpret_cast<const unsigned char*>(r.raw(static_cast<std::size_t>(hd.h * hd.w)));
    for (std::int64_t i = 0; i < hd.h * hd.w; ++i) out.data[static_cast<std::size_t>(i)] = p[i];
    return out;
}

void write_pgm_heatmap(const TensorT<float>& x, const std::string& path) {
    require_dim(x.ndim() == 2, "write_pgm_heatmap: expects [H,W], got " + shape_str(x.shape));
    float lo = x.data[0], hi = x.data[0];
    for (float v : x.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    IntTensor img(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        img.data[i] = hi > lo ? static_cast<std::int32_t>(std::lround((x.data[i] - lo) / (hi - lo) * 255.0f)) : 128;
    write_pgm8(path, img);
}

// ---------------------------------------------------------------------------
// GLT1
// ---------------------------------------------------------------------------

namespace {

template <typename T>
const char* glt_dtype();
template <>
const char* glt_dtype<float>() {
    return "f32";
}
template <>
const char* glt_dtype<double>() {
    return "f64";
}

template <typename V>
std::string glt_record(const Shape& shape, const std::vector<V>& data, const char* dtype) {
    std::string out = "GLT1 ";
    out += dtype;
    out += ' ';
    out += std::to_string(shape.size());
    for (auto d : shape) out += ' ' + std::to_string(d);
    out += '\n';
    const std::size_t bytes = data.size() * sizeof(V);
    out.append(reinterpret_cast<const char*>(data.data()), bytes);
    return out;
}

struct GltHeader {
    std::string dtype;
    Shape shape;
};

GltHeader read_glt_header(ByteReader& r) {
    const char magic[] = "GLT1 ";
    for (std::size_t i = 0; i + 1 < sizeof(magic); ++i)
        if (r.eof() || r.take() != magic[i]) r.fail("expected GLT1 magic");
    GltHeader hd;
    while (!r.eof() && r.peek() != ' ') hd.dtype.push_back(r.take());
    if (hd.dtype != "f32" && hd.dtype != "f64" && hd.dtype != "i32")
        r.fail("unknown dtype '" + hd.dtype + "'");
    const std::int64_t ndim = r.read_int();
    if (ndim < 1 || ndim > 8) r.fail("ndim out of range");
    for (std::int64_t i = 0; i < ndim; ++i) hd.shape.push_back(r.read_int());
    r.expect('\n', "newline after header");
    return hd;
}

template <typename V>
std::vector<V> read_glt_payload(ByteReader& r, std::int64_t count) {
    std::vector<V> data(static_cast<std::size_t>(count));
    const char* p = r.raw(static_cast<std::size_t>(count) * sizeof(V));
    std::memcpy(data.data(), p, data.size() * sizeof(V));
    return data;
}

}  // namespace

void save_glt(const std::string& path, const TensorT<float>& t) {
    write_file(path, glt_record(t.shape, t.data, "f32"));
}
void save_glt(const std::string& path, const TensorT<double>& t) {
    write_file(path, glt_record(t.shape, t.data, "f64"));
}
void save_glt(const std::string& path, const IntTensor& t) {
    write_file(path, glt_record(t.shape, t.data, "i32"));
}

template <typename T>
TensorT<T> load_glt(const std::string& path) {
    const auto buf = read_file(path);
    ByteReader r{path, buf};
    const GltHeader hd = read_glt_header(r);
    if (hd.dtype != glt_dtype<T>()) r.fail("dtype is " + hd.dtype + ", expected " + glt_dtype<T>());
    return TensorT<T>(hd.shape, read_glt_payload<T>(r, numel_of(hd.shape)));
}

IntTensor load_glt_i32(const std::string& path) {
    const auto buf = read_file(path);
    ByteReader r{path, buf};
    const GltHeader hd = read_glt_header(r);
    if (hd.dtype != "i32") r.fail("dtype is " + hd.dtype + ", expected i32");
    return IntTensor(hd.shape, read_glt_payload<std::int32_t>(r, numel_of(hd.shape)));
}

template <typename T>
void save_bundle(const std::string& path, const NamedTensors<T>& tensors) {
    std::string out = "GLTB1 " + std::to_string(tensors.size()) + "\n";
    for (const auto& [name, t] : tensors) {
        require_data(!name.empty() && name.find('\n') == std::string::npos,
                     path + ": bundle names must be non-empty single lines");
        out += name;
        out += '\n';
        out += glt_record(t.shape, t.data, glt_dtype<T>());
        out += '\n';
    }
    write_file(path, out);
}

template <typename T>
NamedTensors<T> load_bundle(const std::string& path) {
    const auto buf = read_file(path);
    ByteReader r{path, buf};
    const char magic[] = "GLTB1 ";
    for (std::size_t i = 0; i + 1 < sizeof(magic); ++i)
        if (r.eof() || r.take() != magic[i]) r.fail("expected GLTB1 magic");
    const std::int64_t count = r.read_int();
    r.expect('\n', "newline after bundle header");
    NamedTensors<T> out;
    for (std::int64_t i = 0; i < count; ++i) {
        std::string name;
        while (!r.eof() && r.peek() != '\n') name.push_back(r.take());
        r.expect('\n', "newline after tensor name");
        if (name.empty()) r.fail("empty tensor name");
        const GltHeader hd = read_glt_header(r);
        if (hd.dtype != glt_dtype<T>())
            r.fail("tensor '" + name + "' has dtype " + hd.dtype + ", expected " + glt_dtype<T>());
        out.emplace_back(name, TensorT<T>(hd.shape, read_glt_payload<T>(r, numel_of(hd.shape))));
        r.expect('\n', "newline after tensor payload");
    }
    return out;
}

template void save_bundle<float>(const std::string&, const NamedTensors<float>&);
template void save_bundle<double>(const std::string&, const NamedTensors<double>&);
template NamedTensors<float> load_bundle<float>(const std::string&);
template NamedTensors<double> load_bundle<double>(const std::string&);
template TensorT<float> load_glt<float>(const std::string&);
template TensorT<double> load_glt<double>(const std::string&);

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

void save_manifest(const DatasetManifest& m, const std::string& path) {
    nlohmann::json j;
    j["num_classes"] = m.num_classes;
    j["depth_max"] = m.depth_max;
    j["split"] = m.split;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : m.samples)
        samples.push_back({{"rgb", s.rgb}, {"depth", s.depth}, {"label", s.label}});
    j["samples"] = samples;
    write_file(path, j.dump(1) + "\n");
}

DatasetManifest load_manifest(const std::string& path) {
    const auto buf = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.begin(), buf.end());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.root = fs::path(path).parent_path().string();
        m.num_classes = j.at("num_classes").get<std::int64_t>();
        m.depth_max = j.at("depth_max").get<double>();
        m.split = j.value("split", "");
        for (const auto& s : j.at("samples"))
            m.samples.push_back({s.at("rgb").get<std::string>(), s.at("depth").get<std::string>(),
                                 s.at("label").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    require_data(m.num_classes >= 2, path + ": num_classes must be >= 2");
    require_data(m.depth_max > 0, path + ": depth_max must be positive");
    for (const auto& s : m.samples)
        for (const std::string& rel : {s.rgb, s.depth, s.label})
            require_data(fs::exists(fs::path(m.root) / rel), path + ": listed file missing: " + rel);
    return m;
}

RgbdSample load_sample(const DatasetManifest& m, std::int64_t index) {
    require_data(index >= 0 && index < m.size(),
                 "sample index " + std::to_string(index) + " outside [0, " + std::to_string(m.size()) + ")");
    const auto& e = m.samples[static_cast<std::size_t>(index)];
    const fs::path root(m.root);
    RgbdSample s;
    s.rgb = read_ppm((root / e.rgb).string());
    s.depth = read_pgm16((root / e.depth).string());
    for (auto& v : s.depth.data) v = std::min(v / static_cast<float>(m.depth_max), 1.0f);
    s.label = read_pgm8((root / e.label).string());
    require_dim(s.rgb.dim(1) == s.depth.dim(1) && s.rgb.dim(2) == s.depth.dim(2) &&
                    s.rgb.dim(1) == s.label.dim(0) && s.rgb.dim(2) == s.label.dim(1),
                "sample " + std::to_string(index) + ": rgb/depth/label extents differ");
    for (auto v : s.label.data)
        require_data(v == 255 || (v >= 0 && v < m.num_classes),
                     "sample " + std::to_string(index) + ": label " + std::to_string(v) + " out of range");
    return s;
}

}  // namespace glpnet
