#include <cstring>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "glpnet/dataio.hpp"
#include "glpnet/fusion.hpp"
#include "glpnet/metrics.hpp"
#include "glpnet/ops.hpp"

namespace py = pybind11;
using namespace glpnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

TensorT<float> to_tensor(const FloatArray& a) {
    Shape s(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) s[static_cast<std::size_t>(i)] = a.shape(i);
    TensorT<float> t(std::move(s));
    std::memcpy(t.data.data(), a.data(), t.data.size() * sizeof(float));
    return t;
}

py::array_t<float> from_tensor(const TensorT<float>& t) {
    std::vector<py::ssize_t> dims(t.shape.begin(), t.shape.end());
    py::array_t<float> a(dims);
    std::memcpy(a.mutable_data(), t.data.data(), t.data.size() * sizeof(float));
    return a;
}

py::array_t<std::int32_t> from_int_tensor(const IntTensor& t) {
    std::vector<py::ssize_t> dims(t.shape.begin(), t.shape.end());
    py::array_t<std::int32_t> a(dims);
    std::memcpy(a.mutable_data(), t.data.data(), t.data.size() * sizeof(std::int32_t));
    return a;
}

// runs a graph op on constant inputs and returns the value
template <typename F>
py::array_t<float> run_op(F&& f) {
    NoGradGuard ng;
    return from_tensor(f()->value);
}

}  // namespace

PYBIND11_MODULE(_glpnet, m) {
    m.doc() = "core tensor operations of the RGB-D fusion segmentation library";

    m.def(
        "conv2d",
        [](const FloatArray& x, const FloatArray& w, py::object bias, int stride, int pad, int dilation) {
            return run_op([&] {
                auto xv = make_var(to_tensor(x), false);
                auto wv = make_var(to_tensor(w), false);
                VarT<float> bv;
                if (!bias.is_none()) bv = make_var(to_tensor(bias.cast<FloatArray>()), false);
                return conv2d(xv, wv, bv, Conv2dSpec{stride, pad, dilation});
            });
        },
        py::arg("x"), py::arg("w"), py::arg("bias") = py::none(), py::arg("stride") = 1, py::arg("pad") = 0,
        py::arg("dilation") = 1);

    m.def("bilinear_sample", [](const FloatArray& x, const FloatArray& coords) {
        return run_op([&] { return bilinear_sample(make_var(to_tensor(x), false), make_var(to_tensor(coords), false)); });
    });

    m.def(
        "bilinear_resize",
        [](const FloatArray& x, std::int64_t out_h, std::int64_t out_w, bool align_corners) {
            return run_op([&] { return bilinear_resize(make_var(to_tensor(x), false), out_h, out_w, align_corners); });
        },
        py::arg("x"), py::arg("out_h"), py::arg("out_w"), py::arg("align_corners") = true);

    m.def("warp", [](const FloatArray& x, const FloatArray& offsets) {
        return run_op([&] { return warp(make_var(to_tensor(x), false), make_var(to_tensor(offsets), false)); });
    });

    m.def("spatial_softmax", [](const FloatArray& x) {
        return run_op([&] { return spatial_softmax(make_var(to_tensor(x), false)); });
    });

    m.def("channel_softmax", [](const FloatArray& x) {
        return run_op([&] { return channel_softmax(make_var(to_tensor(x), false)); });
    });

    m.def("additive_fuse", [](const FloatArray& rgb, const FloatArray& d) {
        return run_op([&] {
            return additive_fuse<float>({make_var(to_tensor(rgb), false), make_var(to_tensor(d), false)});
        });
    });

    m.def("argmax_channels", [](const FloatArray& logits) { return from_int_tensor(argmax_channels(to_tensor(logits))); });

    m.def(
        "metrics",
        [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& counts) {
            if (counts.ndim() != 2 || counts.shape(0) != counts.shape(1))
                throw DimensionError("metrics: counts must be a square matrix");
            ConfusionMatrix cm(counts.shape(0));
            std::memcpy(cm.counts.data(), counts.data(), cm.counts.size() * sizeof(std::int64_t));
            MetricsResult r = compute_metrics(cm);
            py::dict d;
            d["acc"] = r.acc;
            d["macc"] = r.macc;
            d["miou"] = r.miou;
            d["per_class_iou"] = r.per_class_iou;
            return d;
        },
        py::arg("counts"));

    m.def(
        "synth_generate",
        [](const std::string& out_root, std::int64_t height, std::int64_t width, std::int64_t num_images,
           std::int64_t num_classes, int shapes_per_image, int depth_planes, int misalignment_px,
           double noise_rgb, double noise_depth, std::uint64_t seed, const std::string& split) {
            SynthConfig cfg;
            cfg.height = height;
            cfg.width = width;
            cfg.num_images = num_images;
            cfg.num_classes = num_classes;
            cfg.shapes_per_image = shapes_per_image;
            cfg.depth_planes = depth_planes;
            cfg.misalignment_px = misalignment_px;
            cfg.noise_rgb = noise_rgb;
            cfg.noise_depth = noise_depth;
            cfg.seed = seed;
            cfg.split = split;
            DatasetManifest m = synth_generate(cfg, out_root);
            py::dict d;
            d["root"] = m.root;
            d["num_samples"] = m.size();
            d["num_classes"] = m.num_classes;
            d["depth_max"] = m.depth_max;
            return d;
        },
        py::arg("out_root"), py::arg("height") = 64, py::arg("width") = 64, py::arg("num_images") = 200,
        py::arg("num_classes") = 4, py::arg("shapes_per_image") = 7, py::arg("depth_planes") = 2,
        py::arg("misalignment_px") = 0, py::arg("noise_rgb") = 0.02, py::arg("noise_depth") = 0.005,
        py::arg("seed") = 1, py::arg("split") = "train");

    m.def("version", [] { return "0.1.0"; });

    py::register_exception<Error>(m, "GlpnetError");
}
