#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <tuple>

#include "hlseg/colorfeat.hpp"
#include "hlseg/errors.hpp"
#include "hlseg/facepipe.hpp"
#include "hlseg/forest.hpp"
#include "hlseg/guided_filter.hpp"
#include "hlseg/hlnet.hpp"
#include "hlseg/imageio.hpp"
#include "hlseg/metrics.hpp"
#include "hlseg/modelio.hpp"
#include "hlseg/pipeline.hpp"
#include "hlseg/synth.hpp"

namespace py = pybind11;
using namespace hlseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// HxW arrays become single-channel tensors.
Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected an HxW or HxWxC array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor(h, w, c, std::move(data));
}

py::array_t<float> to_array(const Tensor& t) {
  py::array_t<float> out({t.height(), t.width(), t.channels()});
  std::memcpy(out.mutable_data(), t.data().data(), t.size() * sizeof(float));
  return out;
}

LabelMask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected an HxW label array");
  LabelMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(m.labels.data(), a.data(), m.labels.size());
  return m;
}

py::array_t<std::uint8_t> to_array(const LabelMask& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::memcpy(out.mutable_data(), m.labels.data(), m.labels.size());
  return out;
}

std::vector<std::vector<double>> to_rows(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
  if (x.ndim() != 2) throw ShapeError("expected an n x d feature matrix");
  const auto n = static_cast<std::size_t>(x.shape(0)), d = static_cast<std::size_t>(x.shape(1));
  std::vector<std::vector<double>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].assign(x.data() + i * d, x.data() + (i + 1) * d);
  return rows;
}

net::HLNetModel load_model(const std::filesystem::path& path) {
  const auto store = io::load(path);
  net::HLNetConfig cfg;
  if (const auto* bias = store.find("stage8.classifier.bias"); bias && bias->dims.size() == 1) {
    cfg.num_classes = static_cast<int>(bias->dims[0]);
  }
  return net::HLNetModel::build(store, cfg);
}

}  // namespace

PYBIND11_MODULE(_hlseg, m) {
  m.doc() = "Portrait hair/face segmentation and skin-tone grading";

  auto base = py::register_exception<Error>(m, "HLSegError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<ParamError>(m, "ParamError", base);
  py::register_exception<DomainError>(m, "DomainError", base);
  py::register_exception<LoadError>(m, "LoadError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<CorruptionError>(m, "CorruptionError", base);
  py::register_exception<IoError>(m, "IoError", base);

  m.attr("BACKGROUND") = 0;
  m.attr("HAIR") = 1;
  m.attr("FACE") = 2;
  m.attr("ROI_EXPAND_FACTOR") = pipeline::kRoiExpandFactor;
  m.attr("TEST_FRACTION") = forest::kTestFraction;
  m.attr("BASE_LEARNING_RATE") = metrics::kBaseLearningRate;
  m.attr("POLY_POWER") = metrics::kPolyPower;
  m.attr("SKIN_TONES") = forest::skin_tone_names();

  py::class_<net::HLNetModel>(m, "Model")
      .def_static("load", &load_model, py::arg("path"))
      .def_static(
          "random",
          [](std::uint64_t seed, int classes) {
            net::HLNetConfig cfg;
            cfg.num_classes = classes;
            return net::HLNetModel::build(net::random_weights(cfg, seed), cfg);
          },
          py::arg("seed") = 42, py::arg("classes") = kPortraitClasses)
      .def_static(
          "save_random",
          [](const std::filesystem::path& path, std::uint64_t seed, int classes) {
            net::HLNetConfig cfg;
            cfg.num_classes = classes;
            io::save(net::random_weights(cfg, seed), path);
          },
          py::arg("path"), py::arg("seed") = 42, py::arg("classes") = kPortraitClasses)
      .def_property_readonly("input_size", [](const net::HLNetModel& n) { return n.config().input_size; })
      .def_property_readonly("num_classes", [](const net::HLNetModel& n) { return n.config().num_classes; })
      .def_property_readonly("param_count", &net::HLNetModel::param_count)
      .def(
          "forward",
          [](const net::HLNetModel& n, const FloatArray& image) {
            const Tensor in = to_tensor(image);
            Tensor out;
            {
              py::gil_scoped_release release;
              out = n.forward(in);
            }
            return to_array(out);
          },
          py::arg("image"), "Class probabilities for an input_size x input_size x 3 image on [0,1].")
      .def(
          "trace",
          [](const net::HLNetModel& n, const FloatArray& image) {
            std::vector<net::TraceEntry> trace;
            n.forward(to_tensor(image), &trace);
            std::vector<std::tuple<std::string, int, int, int>> out;
            for (const auto& e : trace) out.emplace_back(e.type, e.height, e.width, e.channels);
            return out;
          },
          py::arg("image"), "(type, height, width, channels) after every stage.");

  m.def(
      "segment",
      [](const net::HLNetModel& model, const FloatArray& image, std::optional<std::tuple<int, int, int, int>> roi,
         double roi_factor) {
        pipeline::SegmentOptions opts;
        if (roi) opts.roi = face::Box{std::get<0>(*roi), std::get<1>(*roi), std::get<2>(*roi), std::get<3>(*roi)};
        opts.roi_factor = roi_factor;
        const Tensor in = to_tensor(image);
        pipeline::Segmentation seg;
        {
          py::gil_scoped_release release;
          seg = pipeline::segment(model, in, opts);
        }
        const auto& r = seg.region;
        return py::make_tuple(to_array(seg.prob), to_array(seg.labels), py::make_tuple(r.x, r.y, r.w, r.h));
      },
      py::arg("model"), py::arg("image"), py::arg("roi") = py::none(),
      py::arg("roi_factor") = pipeline::kRoiExpandFactor,
      "RGB image on [0,255] -> (probabilities, labels, region x,y,w,h).");

  m.def(
      "guided_filter",
      [](const FloatArray& guide, const FloatArray& input, int radius, double eps) {
        return to_array(gf::guided_filter(to_tensor(guide), to_tensor(input), radius, eps));
      },
      py::arg("guide"), py::arg("input"), py::arg("radius") = 4, py::arg("eps") = 50.0);
  m.def(
      "fast_guided_filter",
      [](const FloatArray& guide, const FloatArray& input, int radius, double eps, int subsample) {
        return to_array(gf::fast_guided_filter(to_tensor(guide), to_tensor(input), radius, eps, subsample));
      },
      py::arg("guide"), py::arg("input"), py::arg("radius") = 4, py::arg("eps") = 50.0, py::arg("subsample") = 4);
  m.def(
      "refine_mask",
      [](const FloatArray& image, const FloatArray& prob, int class_id, int radius, double eps, int subsample) {
        return to_array(gf::refine_mask(to_tensor(image), to_tensor(prob), class_id, {radius, eps, subsample}));
      },
      py::arg("image"), py::arg("prob"), py::arg("class_id") = 1, py::arg("radius") = 4, py::arg("eps") = 50.0,
      py::arg("subsample") = 4);

  m.def(
      "convert_color",
      [](const FloatArray& rgb, const std::string& space) {
        return to_array(color::convert(to_tensor(rgb), color::parse_color_space(space)));
      },
      py::arg("rgb"), py::arg("space"));
  m.def(
      "color_moments",
      [](const FloatArray& rgb, const FloatArray& mask, const std::string& space) {
        return color::masked_color_moments(to_tensor(rgb), to_tensor(mask), color::parse_color_space(space)).values;
      },
      py::arg("rgb"), py::arg("mask"), py::arg("space") = "ycrcb",
      "Mean, standard deviation and cube-rooted third moment per channel.");
  m.def("moment_feature_names", [](const std::string& space) {
    return color::moment_feature_names(color::parse_color_space(space));
  });

  m.def(
      "extract_face",
      [](const FloatArray& image, const FloatArray& prob) {
        const auto r = face::extract_face_region(to_tensor(image), to_tensor(prob));
        return py::make_tuple(to_array(r.pixels), to_array(r.mask));
      },
      py::arg("image"), py::arg("prob"));
  m.def(
      "grade_features",
      [](const FloatArray& image, const FloatArray& prob, const std::string& space) {
        return pipeline::grade_features(to_tensor(image), to_tensor(prob), color::parse_color_space(space)).values;
      },
      py::arg("image"), py::arg("prob"), py::arg("space") = "ycrcb");
  m.def(
      "dye_hair",
      [](const FloatArray& image, const FloatArray& alpha, std::array<float, 3> color, float strength) {
        return to_array(face::dye_hair(to_tensor(image), to_tensor(alpha), color, strength));
      },
      py::arg("image"), py::arg("alpha"), py::arg("color"), py::arg("strength") = 0.8f);
  m.def(
      "prob_from_labels",
      [](const ByteArray& labels, int classes) { return to_array(pipeline::prob_from_labels(to_mask(labels), classes)); },
      py::arg("labels"), py::arg("num_classes") = kPortraitClasses);

  py::class_<forest::Forest>(m, "Forest")
      .def_static(
          "fit",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::vector<int> y, int n_trees,
             int max_depth, int min_samples_split, int features_per_split, bool bootstrap, int threads,
             std::uint64_t seed, int num_classes) {
            forest::Dataset data;
            data.rows = to_rows(x);
            data.labels = std::move(y);
            data.num_classes = num_classes;
            forest::ForestParams p{n_trees, max_depth, min_samples_split, features_per_split, bootstrap, threads};
            py::gil_scoped_release release;
            return forest::fit(data, p, seed);
          },
          py::arg("x"), py::arg("y"), py::arg("n_trees") = 100, py::arg("max_depth") = 0,
          py::arg("min_samples_split") = 2, py::arg("features_per_split") = 0, py::arg("bootstrap") = true,
          py::arg("threads") = 1, py::arg("seed") = 42, py::arg("num_classes") = forest::kSkinTones)
      .def_static("load", &forest::load, py::arg("path"))
      .def("save", [](const forest::Forest& f, const std::filesystem::path& p) { forest::save(f, p); })
      .def("to_bytes", [](const forest::Forest& f) {
        const auto b = forest::serialize(f);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def_property_readonly("num_classes", &forest::Forest::num_classes)
      .def_property_readonly("num_features", &forest::Forest::num_features)
      .def_property_readonly("n_trees", [](const forest::Forest& f) { return f.trees().size(); })
      .def(
          "predict",
          [](const forest::Forest& f, const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
            return f.predict_all(to_rows(x));
          },
          py::arg("x"))
      .def(
          "predict_proba",
          [](const forest::Forest& f, std::vector<double> x) { return f.predict(x).distribution; }, py::arg("x"))
      .def(py::self == py::self);

  m.def(
      "train_test_split",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::vector<int> y,
         double test_fraction, std::uint64_t seed, bool oversample) {
        forest::Dataset data;
        data.rows = to_rows(x);
        data.labels = std::move(y);
        if (oversample) data = forest::oversample(data, seed);
        auto [train, test] = forest::train_test_split(data, test_fraction, seed);
        return py::make_tuple(train.rows, train.labels, test.rows, test.labels);
      },
      py::arg("x"), py::arg("y"), py::arg("test_fraction") = forest::kTestFraction, py::arg("seed") = 42,
      py::arg("oversample") = true, "Balance classes, then a stratified split: (x_train, y_train, x_test, y_test).");

  m.def(
      "segmentation_metrics",
      [](const ByteArray& truth, const ByteArray& pred, int classes) {
        metrics::SegConfusion conf(classes);
        conf.accumulate(to_mask(truth), to_mask(pred));
        const auto r = metrics::report(conf);
        py::dict d;
        d["pixel_acc"] = r.pixel_acc;
        d["mean_pixel_acc"] = r.mean_pixel_acc;
        d["mean_iou"] = r.mean_iou;
        d["fw_iou"] = r.fw_iou;
        return d;
      },
      py::arg("truth"), py::arg("pred"), py::arg("num_classes") = kPortraitClasses, "Percentages.");
  m.def(
      "generalized_dice_loss",
      [](const FloatArray& prob, const FloatArray& onehot) {
        return metrics::generalized_dice_loss(to_tensor(prob), to_tensor(onehot));
      },
      py::arg("prob"), py::arg("truth_onehot"));
  m.def("poly_lr", &metrics::poly_lr, py::arg("base"), py::arg("iteration"), py::arg("total"),
        py::arg("power") = metrics::kPolyPower);

  m.def(
      "read_image", [](const std::filesystem::path& p) { return to_array(img::read_image(p)); }, py::arg("path"));
  m.def(
      "write_image", [](const std::filesystem::path& p, const FloatArray& a) { img::write_image(p, to_tensor(a)); },
      py::arg("path"), py::arg("image"));
  m.def(
      "colorize", [](const ByteArray& labels) { return to_array(img::colorize(to_mask(labels))); }, py::arg("labels"));

  m.def(
      "synth_sample",
      [](int index, int size, std::uint64_t seed) {
        synth::SynthParams p;
        p.size = size;
        p.seed = seed;
        const auto s = synth::generate(p, index);
        return py::make_tuple(to_array(s.image), to_array(s.labels), s.tone);
      },
      py::arg("index"), py::arg("size") = 64, py::arg("seed") = 42, "(image, labels, tone) of one generated portrait.");
}
