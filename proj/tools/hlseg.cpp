// hlseg command-line tool: segmentation, refinement, dyeing, skin-tone
// grading, forest training, metric evaluation and benchmarking.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

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
#include "hlseg/rng.hpp"
#include "hlseg/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hlseg;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kModelFiles = 2, kProcessing = 3 };

struct Failure {
  int code;
  std::string message;
};

constexpr std::uint64_t kDefaultSeed = 42;

struct Global {
  bool json = false;
  int threads = 1;
};

int resolve_threads(int flag) {
  if (const char* env = std::getenv("HLSEG_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw Failure{kUsage, std::string("HLSEG_THREADS must be a positive integer, got '") + env + "'"};
  }
  return std::max(1, flag);
}

net::HLNetModel load_model(const fs::path& path) {
  try {
    const io::WeightStore store = io::load(path);
    net::HLNetConfig cfg;
    if (const auto* bias = store.find("stage8.classifier.bias"); bias && bias->dims.size() == 1) {
      cfg.num_classes = static_cast<int>(bias->dims[0]);
    }
    return net::HLNetModel::build(store, cfg);
  } catch (const Error& e) {
    throw Failure{kModelFiles, "weights '" + path.string() + "': " + e.what()};
  }
}

forest::Forest load_forest(const fs::path& path) {
  try {
    return forest::load(path);
  } catch (const Error& e) {
    throw Failure{kModelFiles, "forest '" + path.string() + "': " + e.what()};
  }
}

std::vector<double> parse_numbers(const std::string& text, std::size_t count, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw Failure{kUsage, std::string(what) + ": '" + text + "' is not a list of numbers"};
    }
  }
  if (out.size() != count) {
    throw Failure{kUsage, std::string(what) + " needs " + std::to_string(count) + " comma-separated values"};
  }
  return out;
}

std::optional<face::Box> parse_roi(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto v = parse_numbers(text, 4, "--roi");
  return face::Box{static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]), static_cast<int>(v[3])};
}

face::Rgb parse_color(const std::string& text) {
  if (!text.empty() && text[0] == '#') {
    if (text.size() != 7) throw Failure{kUsage, "--color: expected #RRGGBB"};
    face::Rgb c{};
    for (int i = 0; i < 3; ++i) {
      try {
        c[i] = static_cast<float>(std::stoi(text.substr(1 + 2 * i, 2), nullptr, 16));
      } catch (const std::exception&) {
        throw Failure{kUsage, "--color: '" + text + "' is not a hex colour"};
      }
    }
    return c;
  }
  const auto v = parse_numbers(text, 3, "--color");
  return {static_cast<float>(v[0]), static_cast<float>(v[1]), static_cast<float>(v[2])};
}

const std::vector<std::string>& portrait_names() {
  static const std::vector<std::string> names = {"background", "hair", "face"};
  return names;
}

void emit(const Global& g, const json& record, const std::string& text) {
  if (g.json) {
    std::cout << record.dump() << '\n';
  } else {
    std::cout << text;
  }
}

// ---- shared image options ----

struct ImageArgs {
  std::string image;
  std::string weights;
  std::string roi;
  double roi_factor = pipeline::kRoiExpandFactor;
};

void add_image_args(CLI::App* cmd, ImageArgs& a) {
  cmd->add_option("-i,--image", a.image, "input image (.png/.ppm)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-w,--weights", a.weights, "HLNW weight file")->required();
  cmd->add_option("--roi", a.roi, "face box x,y,w,h (default: whole frame)");
  cmd->add_option("--roi-factor", a.roi_factor, "ROI enlargement factor")->capture_default_str();
}

struct GFArgs {
  gf::GFParams params;
};

void add_gf_args(CLI::App* cmd, GFArgs& a) {
  cmd->add_option("--radius", a.params.radius, "guided filter radius r")->capture_default_str();
  cmd->add_option("--eps", a.params.eps, "guided filter regularisation (0..255 scale)")->capture_default_str();
  cmd->add_option("--subsample", a.params.subsample, "fast guided filter subsampling s")->capture_default_str();
}

struct Segmented {
  Tensor image;
  pipeline::Segmentation seg;
};

Segmented run_segmentation(const ImageArgs& a) {
  const auto roi = parse_roi(a.roi);
  const auto model = load_model(a.weights);
  Segmented s;
  s.image = img::read_rgb(a.image);
  s.seg = pipeline::segment(model, s.image, {.roi = roi, .roi_factor = a.roi_factor});
  return s;
}

// ---- commands ----

int cmd_init_weights(const Global& g, const std::string& out, std::uint64_t seed, int classes, bool zero) {
  net::HLNetConfig cfg;
  cfg.num_classes = classes;
  cfg.validate();
  const auto store = zero ? net::zero_weights(cfg) : net::random_weights(cfg, seed);
  io::save(store, out);
  const auto model = net::HLNetModel::build(store, cfg);
  emit(g, {{"command", "init-weights"}, {"out", out}, {"tensors", store.size()}, {"param_count", model.param_count()}},
       "wrote " + std::to_string(store.size()) + " tensors (" + std::to_string(model.param_count()) +
           " parameters) to " + out + "\n");
  return kOk;
}

int cmd_manifest(const std::string& weights) {
  try {
    std::cout << io::manifest(io::load(weights));
  } catch (const Error& e) {
    throw Failure{kModelFiles, "weights '" + weights + "': " + e.what()};
  }
  return kOk;
}

int cmd_segment(const Global& g, const ImageArgs& a, const std::string& out, const std::string& prob_prefix) {
  const auto s = run_segmentation(a);
  img::write_image(out, img::colorize(s.seg.labels));
  json record{{"command", "segment"}, {"mask", out}};
  std::string text = "mask written to " + out + "\n";
  if (!prob_prefix.empty()) {
    const std::string ext = fs::path(out).extension().string();
    for (int k = 0; k < s.seg.prob.channels(); ++k) {
      const std::string name = k < 3 ? portrait_names()[k] : "class" + std::to_string(k);
      const std::string path = prob_prefix + "_" + name + (ext.empty() ? ".png" : ext);
      img::write_image(path, img::to_gray8(s.seg.prob.channel(k)));
      record["prob"][name] = path;
      text += "probability map " + path + "\n";
    }
  }
  std::vector<long> counts(static_cast<std::size_t>(s.seg.prob.channels()), 0);
  for (auto l : s.seg.labels.labels) ++counts[l];
  record["pixels"] = counts;
  emit(g, record, text);
  return kOk;
}

int cmd_refine(const Global& g, const ImageArgs& a, const GFArgs& gfa, int class_id, const std::string& out) {
  const auto s = run_segmentation(a);
  const Tensor alpha = gf::refine_mask(s.image, s.seg.prob, class_id, gfa.params);
  img::write_image(out, img::to_gray8(alpha));
  emit(g,
       {{"command", "refine"},
        {"alpha", out},
        {"class", class_id},
        {"radius", gfa.params.radius},
        {"eps", gfa.params.eps},
        {"subsample", gfa.params.subsample}},
       "alpha matte written to " + out + "\n");
  return kOk;
}

int cmd_dye(const Global& g, const ImageArgs& a, const GFArgs& gfa, const std::string& color, float strength,
            const std::string& out) {
  const face::Rgb target = parse_color(color);
  const auto s = run_segmentation(a);
  const Tensor alpha = gf::refine_mask(s.image, s.seg.prob, static_cast<int>(PortraitClass::kHair), gfa.params);
  img::write_image(out, face::dye_hair(s.image, alpha, target, strength));
  emit(g, {{"command", "dye"}, {"out", out}, {"color", target}, {"strength", strength}},
       "dyed image written to " + out + "\n");
  return kOk;
}

int cmd_grade(const Global& g, const ImageArgs& a, const std::string& forest_path, const std::string& labels_path,
              const std::string& space_name) {
  const auto space = color::parse_color_space(space_name);
  const auto model_forest = load_forest(forest_path);
  Tensor image = img::read_rgb(a.image);
  Tensor prob;
  if (!labels_path.empty()) {
    prob = pipeline::prob_from_labels(img::labels_from_image(img::read_image(labels_path)));
  } else {
    const auto model = load_model(a.weights);
    prob = pipeline::segment(model, image, {.roi = parse_roi(a.roi), .roi_factor = a.roi_factor}).prob;
  }
  const auto mv = pipeline::grade_features(image, prob, space);
  const std::vector<double> x(mv.values.begin(), mv.values.end());
  const auto p = model_forest.predict(x);
  const auto& names = forest::skin_tone_names();
  const std::string name = p.label < static_cast<int>(names.size()) ? names[p.label] : std::to_string(p.label);
  std::ostringstream text;
  text << "grade: " << name << "\nvotes:";
  text.precision(4);
  for (std::size_t k = 0; k < p.distribution.size(); ++k) {
    text << ' ' << (k < names.size() ? names[k] : std::to_string(k)) << '=' << std::fixed << p.distribution[k];
  }
  text << '\n';
  emit(g,
       {{"command", "grade"},
        {"label", p.label},
        {"grade", name},
        {"distribution", p.distribution},
        {"space", color::to_string(space)},
        {"features", x}},
       text.str());
  return kOk;
}

int cmd_synth(const Global& g, const std::string& out_dir, const synth::SynthParams& params) {
  fs::create_directories(out_dir);
  const std::string ext = img::png_supported() ? ".png" : ".ppm";
  std::ofstream index(fs::path(out_dir) / "labels.csv");
  if (!index) throw Failure{kProcessing, "cannot write " + out_dir + "/labels.csv"};
  index << "image,labels,tone\n";
  for (int i = 0; i < params.count; ++i) {
    const auto sample = synth::generate(params, i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "img_%04d", i);
    const std::string image_name = std::string(stem) + ".ppm";
    const std::string label_name = std::string(stem) + "_labels" + ext;
    img::write_image(fs::path(out_dir) / image_name, sample.image);
    img::write_image(fs::path(out_dir) / label_name, img::colorize(sample.labels));
    index << image_name << ',' << label_name << ',' << sample.tone << '\n';
  }
  emit(g, {{"command", "synth"}, {"dir", out_dir}, {"count", params.count}, {"seed", params.seed}},
       "wrote " + std::to_string(params.count) + " images to " + out_dir + "\n");
  return kOk;
}

int cmd_features(const Global& g, const std::string& dir, const std::string& out, const std::string& space_name) {
  const auto space = color::parse_color_space(space_name);
  std::ifstream index(fs::path(dir) / "labels.csv");
  if (!index) throw Failure{kUsage, "no labels.csv in '" + dir + "'"};
  std::string line;
  std::getline(index, line);
  color::FeatureTable table;
  table.columns = color::moment_feature_names(space);
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string image_name, label_name, tone;
    std::getline(ss, image_name, ',');
    std::getline(ss, label_name, ',');
    std::getline(ss, tone, ',');
    const Tensor image = img::read_rgb(fs::path(dir) / image_name);
    const auto labels = img::labels_from_image(img::read_image(fs::path(dir) / label_name));
    const auto mv = pipeline::grade_features(image, pipeline::prob_from_labels(labels), space);
    table.rows.emplace_back(mv.values.begin(), mv.values.end());
    table.labels.push_back(std::stoi(tone));
  }
  color::write_feature_csv(fs::path(out), table);
  emit(g, {{"command", "features"}, {"out", out}, {"rows", table.rows.size()}, {"space", color::to_string(space)}},
       "wrote " + std::to_string(table.rows.size()) + " feature rows to " + out + "\n");
  return kOk;
}

struct TrainArgs {
  std::string features;
  std::string out;
  forest::ForestParams params;
  double test_fraction = forest::kTestFraction;
  bool split_first = false;
  std::uint64_t seed = kDefaultSeed;
};

int cmd_train_forest(const Global& g, TrainArgs a) {
  const auto table = color::read_feature_csv(fs::path(a.features));
  forest::Dataset data;
  data.rows = table.rows;
  data.labels = table.labels;
  data.num_classes = std::max(forest::kSkinTones, table.labels.empty() ? 0 : *std::max_element(table.labels.begin(), table.labels.end()) + 1);
  a.params.threads = g.threads;

  forest::Dataset train, test;
  if (a.split_first) {
    // Oversampling only the training fold keeps duplicates out of the test fold.
    auto [tr, te] = forest::train_test_split(data, a.test_fraction, a.seed);
    train = forest::oversample(tr, a.seed);
    test = std::move(te);
  } else {
    std::tie(train, test) = forest::train_test_split(forest::oversample(data, a.seed), a.test_fraction, a.seed);
  }
  const auto model = forest::fit(train, a.params, a.seed);
  forest::save(model, a.out);

  json record{{"command", "train-forest"}, {"out", a.out}, {"train", train.size()}, {"test", test.size()},
              {"trees", a.params.n_trees}, {"seed", a.seed}};
  std::ostringstream text;
  text << "split: " << train.size() << " train / " << test.size() << " test\n";
  if (test.size() > 0) {
    const auto cm = forest::confusion_matrix(test.labels, model.predict_all(test.rows), data.num_classes);
    record["accuracy"] = cm.accuracy();
    record["adjacent_error_fraction"] = cm.adjacent_error_fraction();
    std::vector<std::vector<long long>> rows;
    for (int i = 0; i < cm.num_classes; ++i) {
      rows.emplace_back();
      for (int j = 0; j < cm.num_classes; ++j) rows.back().push_back(cm.at(i, j));
    }
    record["confusion"] = rows;
    text << "test accuracy: " << std::fixed << std::setprecision(2) << 100.0 * cm.accuracy() << "%\n";
    text << "errors on adjacent grades: " << 100.0 * cm.adjacent_error_fraction() << "%\n";
    text << "confusion (rows = truth):\n";
    for (const auto& r : rows) {
      for (auto v : r) text << std::setw(6) << v;
      text << '\n';
    }
  }
  text << "forest written to " << a.out << '\n';
  emit(g, record, text.str());
  return kOk;
}

int cmd_eval(const Global& g, const std::string& dir, const std::string& weights, const std::string& pred_dir) {
  if (weights.empty() == pred_dir.empty()) throw Failure{kUsage, "eval needs exactly one of --weights or --pred-dir"};
  std::optional<net::HLNetModel> model;
  if (!weights.empty()) model = load_model(weights);
  std::vector<fs::path> truths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string stem = entry.path().stem().string();
    if (stem.size() > 7 && stem.ends_with("_labels")) truths.push_back(entry.path());
  }
  std::sort(truths.begin(), truths.end());
  if (truths.empty()) throw Failure{kUsage, "no *_labels images in '" + dir + "'"};

  metrics::SegConfusion conf(kPortraitClasses);
  for (const auto& truth_path : truths) {
    const LabelMask truth = img::labels_from_image(img::read_image(truth_path));
    LabelMask pred;
    if (model) {
      const std::string stem = truth_path.stem().string();
      const std::string base = stem.substr(0, stem.size() - 7);
      fs::path image_path;
      for (const char* ext : {".ppm", ".png", ".pgm"}) {
        if (fs::exists(fs::path(dir) / (base + ext))) {
          image_path = fs::path(dir) / (base + ext);
          break;
        }
      }
      if (image_path.empty()) throw Failure{kUsage, "no image for " + truth_path.string()};
      pred = pipeline::segment(*model, img::read_rgb(image_path)).labels;
    } else {
      pred = img::labels_from_image(img::read_image(fs::path(pred_dir) / truth_path.filename()));
    }
    conf.accumulate(truth, pred);
  }
  const auto r = metrics::report(conf);
  std::ostringstream text;
  text << std::fixed << std::setprecision(2) << "images: " << truths.size() << "\npixelAcc: " << r.pixel_acc
       << "%\nmPixelAcc: " << r.mean_pixel_acc << "%\nmIoU: " << r.mean_iou << "%\nfwIoU: " << r.fw_iou << "%\n";
  emit(g,
       {{"command", "eval"},
        {"images", truths.size()},
        {"pixel_acc", r.pixel_acc},
        {"mean_pixel_acc", r.mean_pixel_acc},
        {"mean_iou", r.mean_iou},
        {"fw_iou", r.fw_iou}},
       text.str());
  return kOk;
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) return line.substr(line.find_first_not_of(' ', colon + 1));
    }
  }
  return "unknown";
}

int cmd_bench(const Global& g, const std::string& weights, int iterations, int warmup) {
  if (iterations < 1 || warmup < 0) throw Failure{kUsage, "--iterations must be >= 1 and --warmup >= 0"};
  net::HLNetConfig cfg;
  const auto model = weights.empty() ? net::HLNetModel::build(net::random_weights(cfg, kDefaultSeed), cfg)
                                     : load_model(weights);
  const int size = model.config().input_size;
  Tensor input(size, size, 3);
  Rng rng(kDefaultSeed);
  for (float& v : input.data()) v = static_cast<float>(rng.uniform());

  for (int i = 0; i < warmup; ++i) model.forward(input);

  // Each worker owns a share of the timed iterations on the shared model.
  std::vector<double> samples(static_cast<std::size_t>(iterations));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < iterations; i = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor out = model.forward(input);
      const auto t1 = std::chrono::steady_clock::now();
      samples[static_cast<std::size_t>(i)] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
  };
  const int workers = std::min(g.threads, iterations);
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / iterations;
  const double median = iterations % 2 ? sorted[iterations / 2]
                                       : (sorted[iterations / 2 - 1] + sorted[iterations / 2]) / 2.0;
  const auto p95_index = static_cast<std::size_t>(std::ceil(0.95 * iterations)) - 1;
  const double p95 = sorted[std::min(p95_index, sorted.size() - 1)];
  const double fps = 1000.0 / mean;

  json record{{"command", "bench"},
              {"iterations", iterations},
              {"warmup", warmup},
              {"threads", workers},
              {"input", std::to_string(size) + "x" + std::to_string(size) + "x3"},
              {"mean_ms", mean},
              {"median_ms", median},
              {"p95_ms", p95},
              {"fps", fps},
              {"param_count", model.param_count()},
              {"cpu", cpu_model()},
              {"hardware_threads", std::thread::hardware_concurrency()}};
  std::ostringstream text;
  text << std::fixed << std::setprecision(2) << "cpu: " << cpu_model() << " (" << std::thread::hardware_concurrency()
       << " hardware threads)\nthreads: " << workers << "\nparams: " << model.param_count()
       << "\nlatency ms: mean " << mean << ", median " << median << ", p95 " << p95 << " over " << iterations
       << " runs (" << warmup << " warmup)\nfps: " << fps << '\n';
  emit(g, record, text.str());
  return kOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ParamError*>(&e)) return kUsage;
  return kProcessing;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Portrait segmentation, refinement and skin-tone grading"};
  app.require_subcommand(1);
  Global g;
  int thread_flag = 1;
  app.add_flag("--json", g.json, "one JSON object per result instead of text");
  app.add_option("--threads", thread_flag, "worker threads (HLSEG_THREADS overrides)")->capture_default_str();

  // init-weights
  std::string iw_out;
  std::uint64_t iw_seed = kDefaultSeed;
  int iw_classes = kPortraitClasses;
  bool iw_zero = false;
  auto* init = app.add_subcommand("init-weights", "write a randomly initialised weight file");
  init->add_option("-o,--out", iw_out, "output .hlnw")->required();
  init->add_option("--seed", iw_seed)->capture_default_str();
  init->add_option("--classes", iw_classes)->capture_default_str();
  init->add_flag("--zero", iw_zero, "all-zero weights");

  std::string mf_weights;
  auto* manifest = app.add_subcommand("manifest", "list the tensors of a weight file");
  manifest->add_option("-w,--weights", mf_weights)->required();

  ImageArgs seg_args;
  std::string seg_out, seg_prob;
  auto* segment = app.add_subcommand("segment", "hair/face/background label mask");
  add_image_args(segment, seg_args);
  segment->add_option("-o,--out", seg_out, "colour label mask")->required();
  segment->add_option("--prob-prefix", seg_prob, "also write per-class probability maps");

  ImageArgs ref_args;
  GFArgs ref_gf;
  std::string ref_out;
  int ref_class = static_cast<int>(PortraitClass::kHair);
  auto* refine = app.add_subcommand("refine", "guided-filter alpha matte of one class");
  add_image_args(refine, ref_args);
  add_gf_args(refine, ref_gf);
  refine->add_option("--class", ref_class, "class id (0 background, 1 hair, 2 face)")->capture_default_str();
  refine->add_option("-o,--out", ref_out, "alpha image")->required();

  ImageArgs dye_args;
  GFArgs dye_gf;
  std::string dye_out, dye_color = "#8b1a1a";
  float dye_strength = 0.8f;
  auto* dye = app.add_subcommand("dye", "recolour the hair");
  add_image_args(dye, dye_args);
  add_gf_args(dye, dye_gf);
  dye->add_option("--color", dye_color, "target colour r,g,b or #RRGGBB")->capture_default_str();
  dye->add_option("--strength", dye_strength, "blend strength in [0,1]")->capture_default_str();
  dye->add_option("-o,--out", dye_out, "output image")->required();

  ImageArgs grade_args;
  std::string grade_forest, grade_labels, grade_space = "ycrcb";
  auto* grade = app.add_subcommand("grade", "skin-tone grade of the face");
  grade->add_option("-i,--image", grade_args.image)->required()->check(CLI::ExistingFile);
  grade->add_option("-w,--weights", grade_args.weights, "HLNW weights (unless --labels is given)");
  grade->add_option("--roi", grade_args.roi);
  grade->add_option("--roi-factor", grade_args.roi_factor)->capture_default_str();
  grade->add_option("-f,--forest", grade_forest, "HLRF forest")->required();
  grade->add_option("--labels", grade_labels, "known label mask instead of running the network");
  grade->add_option("--space", grade_space, "rgb, hsv or ycrcb")->capture_default_str();

  synth::SynthParams synth_params;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic grading set");
  synth_cmd->add_option("-o,--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--count", synth_params.count)->capture_default_str();
  synth_cmd->add_option("--size", synth_params.size)->capture_default_str();
  synth_cmd->add_option("--seed", synth_params.seed)->capture_default_str();

  std::string feat_dir, feat_out, feat_space = "ycrcb";
  auto* features = app.add_subcommand("features", "moment features CSV from a synth directory");
  features->add_option("-d,--dir", feat_dir)->required()->check(CLI::ExistingDirectory);
  features->add_option("-o,--out", feat_out)->required();
  features->add_option("--space", feat_space)->capture_default_str();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train-forest", "oversample, split, fit and report");
  train->add_option("--features", train_args.features, "feature CSV")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--out", train_args.out, "output .hlrf")->required();
  train->add_option("--trees", train_args.params.n_trees)->capture_default_str();
  train->add_option("--max-depth", train_args.params.max_depth, "0 = unlimited")->capture_default_str();
  train->add_option("--min-split", train_args.params.min_samples_split)->capture_default_str();
  train->add_option("--features-per-split", train_args.params.features_per_split, "0 = ceil(sqrt(d))")
      ->capture_default_str();
  train->add_option("--test-fraction", train_args.test_fraction)->capture_default_str();
  train->add_flag("--split-first", train_args.split_first, "split before oversampling");
  train->add_option("--seed", train_args.seed)->capture_default_str();

  std::string eval_dir, eval_weights, eval_pred;
  auto* eval = app.add_subcommand("eval", "segmentation metrics over a directory");
  eval->add_option("-d,--dir", eval_dir, "directory with <name> images and <name>_labels truth")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("-w,--weights", eval_weights, "segment the images with these weights");
  eval->add_option("--pred-dir", eval_pred, "or read <name>_labels predictions from here");

  std::string bench_weights;
  int bench_iters = 20, bench_warmup = 3;
  auto* bench = app.add_subcommand("bench", "forward latency of the 224x224 model");
  bench->add_option("-w,--weights", bench_weights, "weights (random when omitted)");
  bench->add_option("-n,--iterations", bench_iters)->capture_default_str();
  bench->add_option("--warmup", bench_warmup)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    g.threads = resolve_threads(thread_flag);
    if (*init) return cmd_init_weights(g, iw_out, iw_seed, iw_classes, iw_zero);
    if (*manifest) return cmd_manifest(mf_weights);
    if (*segment) return cmd_segment(g, seg_args, seg_out, seg_prob);
    if (*refine) return cmd_refine(g, ref_args, ref_gf, ref_class, ref_out);
    if (*dye) return cmd_dye(g, dye_args, dye_gf, dye_color, dye_strength, dye_out);
    if (*grade) {
      if (grade_labels.empty() && grade_args.weights.empty()) throw Failure{kUsage, "grade needs --weights or --labels"};
      return cmd_grade(g, grade_args, grade_forest, grade_labels, grade_space);
    }
    if (*synth_cmd) return cmd_synth(g, synth_out, synth_params);
    if (*features) return cmd_features(g, feat_dir, feat_out, feat_space);
    if (*train) return cmd_train_forest(g, train_args);
    if (*eval) return cmd_eval(g, eval_dir, eval_weights, eval_pred);
    if (*bench) return cmd_bench(g, bench_weights, bench_iters, bench_warmup);
  } catch (const Failure& f) {
    std::cerr << "hlseg: " << f.message << '\n';
    return f.code;
  } catch (const Error& e) {
    std::cerr << "hlseg: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "hlseg: " << e.what() << '\n';
    return kProcessing;
  }
  return kUsage;
}
