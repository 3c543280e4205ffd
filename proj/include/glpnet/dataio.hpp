#pragma once

#include <string>
#include <utility>
#include <vector>

#include "glpnet/rng.hpp"
#include "glpnet/tensor.hpp"

namespace glpnet {

// One loaded scene: rgb in [0,1], depth normalized to [0,1] by the dataset's
// depth_max, labels in [0,classes) or 255.
struct RgbdSample {
    TensorT<float> rgb;    // [3,H,W]
    TensorT<float> depth;  // [1,H,W]
    IntTensor label;       // [H,W]
};

struct ManifestEntry {
    std::string rgb, depth, label;  // paths relative to the manifest directory
};

struct DatasetManifest {
    std::string root;  // directory holding manifest.txt
    std::vector<ManifestEntry> samples;
    std::int64_t num_classes = 0;
    double depth_max = 10.0;  // meters
    std::string split;

    std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
};

// ---------------------------------------------------------------------------
// PPM / PGM
// ---------------------------------------------------------------------------

void write_ppm(const std::string& path, const TensorT<float>& rgb01);  // [3,H,W] -> P6
TensorT<float> read_ppm(const std::string& path);

// depth in meters <-> 16-bit big-endian millimeters
void write_pgm16(const std::string& path, const TensorT<float>& depth_m);  // [1,H,W] or [H,W]
TensorT<float> read_pgm16(const std::string& path);  // [1,H,W] meters

void write_pgm8(const std::string& path, const IntTensor& labels);  // [H,W]
IntTensor read_pgm8(const std::string& path);

// min-max normalized grayscale; constant input maps to 128
void write_pgm_heatmap(const TensorT<float>& x, const std::string& path);  // [H,W]

// ---------------------------------------------------------------------------
// GLT1 tensor files and GLTB1 checkpoint bundles
// ---------------------------------------------------------------------------

void save_glt(const std::string& path, const TensorT<float>& t);
void save_glt(const std::string& path, const TensorT<double>& t);
void save_glt(const std::string& path, const IntTensor& t);

template <typename T>
TensorT<T> load_glt(const std::string& path);
IntTensor load_glt_i32(const std::string& path);

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, TensorT<T>>>;

template <typename T>
void save_bundle(const std::string& path, const NamedTensors<T>& tensors);
template <typename T>
NamedTensors<T> load_bundle(const std::string& path);

// ---------------------------------------------------------------------------
// manifests and samples
// ---------------------------------------------------------------------------

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);  // checks listed files exist
RgbdSample load_sample(const DatasetManifest& m, std::int64_t index);

// ---------------------------------------------------------------------------
// synthetic scenes
// ---------------------------------------------------------------------------

// Rectangles and ellipses over a flat background. Classes 2 and 3 share one
// color distribution and differ only by depth plane, so depth is required to
// separate them; the depth channel is shifted misalignment_px to the right.
struct SynthConfig {
    std::int64_t height = 64, width = 64;
    std::int64_t num_images = 200;
    std::int64_t num_classes = 4;
    int shapes_per_image = 7;
    int depth_planes = 2;
    int misalignment_px = 0;
    double noise_rgb = 0.02;
    double noise_depth = 0.005;
    std::uint64_t seed = 1;
    std::string split = "train";

    void validate() const;
};

DatasetManifest synth_generate(const SynthConfig& cfg, const std::string& out_root);

}  // namespace glpnet
