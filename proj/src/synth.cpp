#include <algorithm>
#include <cmath>
#include <filesystem>

#include "glpnet/dataio.hpp"
#include "glpnet/error.hpp"

namespace fs = std::filesystem;

namespace glpnet {

namespace {

struct ColorDist {
    float rlo, rhi, glo, ghi, blo, bhi;
};

// the ambiguous pair shares kGreen; every other foreground class gets a
// clearly separated hue from this cycle
constexpr ColorDist kGreen{0.05f, 0.20f, 0.55f, 0.85f, 0.10f, 0.30f};
constexpr ColorDist kBackground{0.08f, 0.14f, 0.10f, 0.16f, 0.17f, 0.23f};
constexpr ColorDist kPalette[] = {
    {0.55f, 0.85f, 0.05f, 0.25f, 0.05f, 0.25f},  // red
    {0.05f, 0.25f, 0.10f, 0.30f, 0.55f, 0.85f},  // blue
    {0.55f, 0.85f, 0.50f, 0.80f, 0.05f, 0.20f},  // yellow
    {0.45f, 0.75f, 0.05f, 0.25f, 0.55f, 0.85f},  // purple
};

struct Color {
    float r, g, b;
};

Color draw_color(Rng& rng, const ColorDist& d) {
    return {static_cast<float>(rng.uniform(d.rlo, d.rhi)), static_cast<float>(rng.uniform(d.glo, d.ghi)),
            static_cast<float>(rng.uniform(d.blo, d.bhi))};
}

struct Scene {
    TensorT<float> rgb;    // [3,H,W]
    TensorT<float> depth;  // [1,H,W] normalized
    IntTensor label;       // [H,W]
};

Scene render_image(const SynthConfig& cfg, std::uint64_t image_index) {
    Rng rng(Rng::mix(cfg.seed, 0x53594e5448ull, image_index));
    const std::int64_t h = cfg.height, w = cfg.width;
    const std::int64_t classes = cfg.num_classes;

    // depth planes, nearest to farthest; background sits behind all of them.
    // the whole stack drifts a little per image, the way a sensor's working
    // distance varies from scene to scene, so absolute depth alone does not
    // identify a plane and the levels must be read off the image itself
    const float drift = static_cast<float>(rng.uniform(-0.1, 0.1));
    std::vector<float> planes(static_cast<std::size_t>(cfg.depth_planes));
    for (int j = 0; j < cfg.depth_planes; ++j)
        planes[static_cast<std::size_t>(j)] =
            0.15f + drift + 0.35f * static_cast<float>(j) / static_cast<float>(cfg.depth_planes - 1);
    const float bg_plane = 0.85f;

    // the two largest ids form the color-ambiguous pair; with only two
    // classes the single foreground class borrows the background's colors
    const std::int64_t pair_lo = classes - 2, pair_hi = classes - 1;
    const auto dist_for = [&](std::int64_t cls) -> const ColorDist& {
        if (classes == 2) return kBackground;
        if (cls == pair_lo || cls == pair_hi) return kGreen;
        return kPalette[static_cast<std::size_t>(cls - 1) % std::size(kPalette)];
    };

    Scene s{TensorT<float>(Shape{3, h, w}), TensorT<float>(Shape{1, h, w}), IntTensor(Shape{h, w})};
    const Color bg = draw_color(rng, kBackground);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            s.rgb.at3(0, y, x) = bg.r;
            s.rgb.at3(1, y, x) = bg.g;
            s.rgb.at3(2, y, x) = bg.b;
            s.depth.at3(0, y, x) = bg_plane;
        }

    for (int k = 0; k < cfg.shapes_per_image; ++k) {
        const std::int64_t cls = 1 + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(classes - 1)));
        const bool ellipse = rng.bernoulli(0.5);
        const double cx = rng.uniform(0.1, 0.9) * static_cast<double>(w);
        const double cy = rng.uniform(0.1, 0.9) * static_cast<double>(h);
        const double hx = rng.uniform(0.08, 0.22) * static_cast<double>(w);
        const double hy = rng.uniform(0.08, 0.22) * static_cast<double>(h);
        const Color col = draw_color(rng, dist_for(cls));

        // a pair shape is one uniformly colored blob whose label and depth
        // split into the two ambiguous classes along an inner line; the seam
        // is invisible in rgb, so only depth can localize it
        const bool pair_shape = classes >= 3 && cls >= pair_lo;
        bool split_vertical = false, lo_first = false;
        double split_at = 0.0;
        float plane = planes.front();
        if (pair_shape) {
            split_vertical = rng.bernoulli(0.5);
            split_at = rng.uniform(-0.4, 0.4);
            lo_first = rng.bernoulli(0.5);
        } else if (classes > 2 && cls != pair_lo && cls != pair_hi) {
            plane = planes[rng.uniform_int(static_cast<std::uint64_t>(cfg.depth_planes))];
        }

        const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cy - hy)));
        const std::int64_t y1 = std::min<std::int64_t>(h - 1, static_cast<std::int64_t>(std::ceil(cy + hy)));
        const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cx - hx)));
        const std::int64_t x1 = std::min<std::int64_t>(w - 1, static_cast<std::int64_t>(std::ceil(cx + hx)));
        for (std::int64_t y = y0; y <= y1; ++y)
            for (std::int64_t x = x0; x <= x1; ++x) {
                const double dx = (static_cast<double>(x) + 0.5 - cx) / hx;
                const double dy = (static_cast<double>(y) + 0.5 - cy) / hy;
                const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (!inside) continue;
                std::int64_t c = cls;
                float d = plane;
                if (pair_shape) {
                    const bool first = (split_vertical ? dx : dy) < split_at;
                    c = first == lo_first ? pair_lo : pair_hi;
                    d = c == pair_lo ? planes.front() : planes.back();
                }
                s.rgb.at3(0, y, x) = col.r;
                s.rgb.at3(1, y, x) = col.g;
                s.rgb.at3(2, y, x) = col.b;
                s.depth.at3(0, y, x) = d;
                s.label.at2(y, x) = static_cast<std::int32_t>(c);
            }
    }

    // the depth sensor is offset: translate its map by δ with edge clamp.
    // the direction varies per image; a constant offset would be absorbed
    // by the first conv layers and additive fusion would lose nothing
    if (cfg.misalignment_px > 0) {
        const std::int64_t d = cfg.misalignment_px;
        std::int64_t dx = 0, dy = 0;
        switch (rng.uniform_int(4)) {
            case 0: dx = d; break;
            case 1: dx = -d; break;
            case 2: dy = d; break;
            default: dy = -d; break;
        }
        TensorT<float> shifted(s.depth.shape);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                shifted.at3(0, y, x) = s.depth.at3(0, std::clamp<std::int64_t>(y - dy, 0, h - 1),
                                                   std::clamp<std::int64_t>(x - dx, 0, w - 1));
        s.depth = std::move(shifted);
    }

    if (cfg.noise_rgb > 0)
        for (auto& v : s.rgb.data)
            v = std::clamp(v + static_cast<float>(rng.normal(0.0, cfg.noise_rgb)), 0.0f, 1.0f);
    if (cfg.noise_depth > 0)
        for (auto& v : s.depth.data)
            v = std::clamp(v + static_cast<float>(rng.normal(0.0, cfg.noise_depth)), 0.0f, 1.0f);
    return s;
}

std::string zero_pad5(std::int64_t i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

}  // namespace

void SynthConfig::validate() const {
    require_config(height >= 8 && width >= 8, "synth: image extents must be at least 8");
    require_config(num_images >= 1, "synth: num_images must be positive");
    require_config(num_classes >= 2, "synth: num_classes must be at least 2");
    require_config(shapes_per_image >= 1, "synth: shapes_per_image must be positive");
    require_config(depth_planes >= 2, "synth: depth_planes must be at least 2");
    require_config(misalignment_px >= 0, "synth: misalignment_px must be non-negative");
    require_config(misalignment_px < width, "synth: misalignment_px must be smaller than the image width");
    require_config(noise_rgb >= 0 && noise_depth >= 0, "synth: noise levels must be non-negative");
}

DatasetManifest synth_generate(const SynthConfig& cfg, const std::string& out_root) {
    cfg.validate();
    const double depth_max = 10.0;

    fs::create_directories(fs::path(out_root) / "rgb");
    fs::create_directories(fs::path(out_root) / "depth");
    fs::create_directories(fs::path(out_root) / "label");

    DatasetManifest m;
    m.root = out_root;
    m.num_classes = cfg.num_classes;
    m.depth_max = depth_max;
    m.split = cfg.split;

    for (std::int64_t i = 0; i < cfg.num_images; ++i) {
        Scene s = render_image(cfg, static_cast<std::uint64_t>(i));
        const std::string id = zero_pad5(i);
        ManifestEntry e{"rgb/" + id + ".ppm", "depth/" + id + ".pgm", "label/" + id + ".pgm"};
        write_ppm((fs::path(out_root) / e.rgb).string(), s.rgb);
        TensorT<float> depth_m = s.depth;
        for (auto& v : depth_m.data) v *= static_cast<float>(depth_max);
        write_pgm16((fs::path(out_root) / e.depth).string(), depth_m);
        write_pgm8((fs::path(out_root) / e.label).string(), s.label);
        m.samples.push_back(e);
    }
    save_manifest(m, (fs::path(out_root) / "manifest.txt").string());
    return m;
}

}  // namespace glpnet
