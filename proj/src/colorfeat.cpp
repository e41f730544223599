#include "hlseg/colorfeat.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <istream>
#include <sstream>

#include "hlseg/errors.hpp"

namespace hlseg::color {

namespace {

void require_rgb(const Tensor& t, const char* op) {
  if (t.channels() != 3) {
    throw ShapeError(std::string(op) + " expects a 3-channel image, got " + t.shape_string());
  }
}

// Foreground pixel indices of a mask covering `image`.
std::vector<std::size_t> foreground(const Tensor& image, const Tensor& mask) {
  if (!image.same_spatial(mask) || mask.channels() != 1) {
    throw ShapeError("mask " + mask.shape_string() + " does not cover image " +
                     image.shape_string());
  }
  std::vector<std::size_t> idx;
  auto m = mask.data();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] > 0.5f) idx.push_back(i);
  if (idx.empty()) throw DomainError("mask has no foreground pixels");
  return idx;
}

}  // namespace

std::string_view to_string(ColorSpace space) noexcept {
  switch (space) {
    case ColorSpace::kRgb:
      return "rgb";
    case ColorSpace::kHsv:
      return "hsv";
    case ColorSpace::kYCrCb:
      return "ycrcb";
  }
  return "rgb";
}

ColorSpace parse_color_space(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "rgb") return ColorSpace::kRgb;
  if (lower == "hsv") return ColorSpace::kHsv;
  if (lower == "ycrcb") return ColorSpace::kYCrCb;
  throw ParamError("unknown color space '" + std::string(name) + "' (expected rgb, hsv, ycrcb)");
}

std::array<std::string, 3> channel_names(ColorSpace space) {
  switch (space) {
    case ColorSpace::kHsv:
      return {"H", "S", "V"};
    case ColorSpace::kYCrCb:
      return {"Y", "Cr", "Cb"};
    case ColorSpace::kRgb:
      break;
  }
  return {"R", "G", "B"};
}

std::array<ChannelRange, 3> channel_ranges(ColorSpace space) noexcept {
  if (space == ColorSpace::kHsv) return {{{0.0, 360.0}, {0.0, 1.0}, {0.0, 1.0}}};
  return {{{0.0, 256.0}, {0.0, 256.0}, {0.0, 256.0}}};
}

Tensor rgb_to_gray(const Tensor& rgb) {
  require_rgb(rgb, "rgb_to_gray");
  Tensor out(rgb.height(), rgb.width(), 1);
  const std::size_t n = static_cast<std::size_t>(rgb.height()) * rgb.width();
  const float* s = rgb.data().data();
  float* d = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = 0.299f * s[3 * i] + 0.587f * s[3 * i + 1] + 0.114f * s[3 * i + 2];
  }
  return out;
}

Tensor rgb_to_hsv(const Tensor& rgb) {
  require_rgb(rgb, "rgb_to_hsv");
  Tensor out(rgb.height(), rgb.width(), 3);
  const std::size_t n = static_cast<std::size_t>(rgb.height()) * rgb.width();
  const float* s = rgb.data().data();
  float* d = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = s[3 * i] / 255.0, g = s[3 * i + 1] / 255.0, b = s[3 * i + 2] / 255.0;
    const double hi = std::max({r, g, b});
    const double lo = std::min({r, g, b});
    const double delta = hi - lo;
    double h = 0.0;
    if (delta > 0.0) {
      if (hi == r) {
        h = 60.0 * std::fmod((g - b) / delta, 6.0);
      } else if (hi == g) {
        h = 60.0 * ((b - r) / delta + 2.0);
      } else {
        h = 60.0 * ((r - g) / delta + 4.0);
      }
      if (h < 0.0) h += 360.0;
      if (h >= 360.0) h -= 360.0;
    }
    d[3 * i] = static_cast<float>(h);
    d[3 * i + 1] = static_cast<float>(hi > 0.0 ? delta / hi : 0.0);
    d[3 * i + 2] = static_cast<float>(hi);
  }
  return out;
}

Tensor hsv_to_rgb(const Tensor& hsv) {
  require_rgb(hsv, "hsv_to_rgb");
  Tensor out(hsv.height(), hsv.width(), 3);
  const std::size_t n = static_cast<std::size_t>(hsv.height()) * hsv.width();
  const float* s = hsv.data().data();
  float* d = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double h = std::fmod(static_cast<double>(s[3 * i]), 360.0);
    if (h < 0.0) h += 360.0;
    const double sat = s[3 * i + 1], val = s[3 * i + 2];
    const double c = val * sat;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
      case 0: r = c; g = x; break;
      case 1: r = x; g = c; break;
      case 2: g = c; b = x; break;
      case 3: g = x; b = c; break;
      case 4: r = x; b = c; break;
      default: r = c; b = x; break;
    }
    const double m = val - c;
    d[3 * i] = static_cast<float>((r + m) * 255.0);
    d[3 * i + 1] = static_cast<float>((g + m) * 255.0);
    d[3 * i + 2] = static_cast<float>((b + m) * 255.0);
  }
  return out;
}

Tensor rgb_to_ycrcb(const Tensor& rgb) {
  require_rgb(rgb, "rgb_to_ycrcb");
  Tensor out(rgb.height(), rgb.width(), 3);
  const std::size_t n = static_cast<std::size_t>(rgb.height()) * rgb.width();
  const float* s = rgb.data().data();
  float* d = out.data().data();
  auto clamp = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 255.0)); };
  for (std::size_t i = 0; i < n; ++i) {
    const double r = s[3 * i], g = s[3 * i + 1], b = s[3 * i + 2];
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    d[3 * i] = clamp(y);
    d[3 * i + 1] = clamp((r - y) * 0.713 + 128.0);
    d[3 * i + 2] = clamp((b - y) * 0.564 + 128.0);
  }
  return out;
}

Tensor convert(const Tensor& rgb, ColorSpace space) {
  switch (space) {
    case ColorSpace::kHsv:
      return rgb_to_hsv(rgb);
    case ColorSpace::kYCrCb:
      return rgb_to_ycrcb(rgb);
    case ColorSpace::kRgb:
      break;
  }
  require_rgb(rgb, "convert");
  return rgb;
}

MomentVector masked_color_moments(const Tensor& rgb, const Tensor& mask, ColorSpace space) {
  const auto idx = foreground(rgb, mask);
  const Tensor converted = convert(rgb, space);
  const float* d = converted.data().data();
  const double n = static_cast<double>(idx.size());
  MomentVector mv;
  mv.space = space;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (auto i : idx) sum += d[3 * i + c];
    const double mean = sum / n;
    double m2 = 0.0, m3 = 0.0;
    for (auto i : idx) {
      const double dev = d[3 * i + c] - mean;
      m2 += dev * dev;
      m3 += dev * dev * dev;
    }
    m2 /= n;
    m3 /= n;
    mv.values[3 * c] = mean;
    mv.values[3 * c + 1] = std::sqrt(m2);
    mv.values[3 * c + 2] = std::cbrt(m3);
  }
  return mv;
}

int histogram_bin(double value, ChannelRange range, int bins) noexcept {
  const double t = (value - range.lo) / (range.hi - range.lo);
  const int b = static_cast<int>(std::floor(t * bins));
  return std::clamp(b, 0, bins - 1);
}

HistogramVector masked_histogram(const Tensor& rgb, const Tensor& mask, int bins,
                                 ColorSpace space) {
  if (bins < 2) throw ParamError("histogram needs at least 2 bins, got " + std::to_string(bins));
  const auto idx = foreground(rgb, mask);
  const Tensor converted = convert(rgb, space);
  const auto ranges = channel_ranges(space);
  const float* d = converted.data().data();
  HistogramVector h;
  h.space = space;
  h.bins = bins;
  h.values.assign(static_cast<std::size_t>(3 * bins), 0.0);
  for (auto i : idx)
    for (int c = 0; c < 3; ++c) h.values[c * bins + histogram_bin(d[3 * i + c], ranges[c], bins)] += 1.0;
  const double n = static_cast<double>(idx.size());
  for (double& v : h.values) v /= n;
  return h;
}

std::vector<std::string> moment_feature_names(ColorSpace space) {
  std::vector<std::string> names;
  for (const auto& ch : channel_names(space)) {
    names.push_back(ch + "_mean");
    names.push_back(ch + "_std");
    names.push_back(ch + "_skew");
  }
  return names;
}

std::vector<std::string> histogram_feature_names(ColorSpace space, int bins) {
  std::vector<std::string> names;
  for (const auto& ch : channel_names(space))
    for (int b = 0; b < bins; ++b) names.push_back(ch + "_bin" + std::to_string(b));
  return names;
}

SymmetricEigen jacobi_eigen(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (const auto& row : a) {
    if (row.size() != n) throw ShapeError("jacobi_eigen needs a square matrix");
  }
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a[i][j] * a[i][j];
    return s;
  };
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale += a[i][j] * a[i][j];

  for (int sweep = 0; sweep < 100; ++sweep) {
    if (off_norm() <= 1e-30 * std::max(scale, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p][q];
        if (apq == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  SymmetricEigen result;
  for (auto col : order) {
    result.values.push_back(a[col][col]);
    std::vector<double> vec(n);
    for (std::size_t k = 0; k < n; ++k) vec[k] = v[k][col];
    result.vectors.push_back(std::move(vec));
  }
  return result;
}

PCABasis pca_fit(const std::vector<std::vector<double>>& samples, int components) {
  if (samples.size() < 2) throw ParamError("pca_fit needs at least 2 samples");
  const std::size_t dim = samples.front().size();
  if (dim == 0) throw ParamError("pca_fit needs non-empty samples");
  for (const auto& s : samples) {
    if (s.size() != dim) throw ShapeError("pca_fit samples differ in dimension");
  }
  if (components < 1 || static_cast<std::size_t>(components) > dim) {
    throw ParamError("requested " + std::to_string(components) + " components for " +
                     std::to_string(dim) + "-dimensional data");
  }
  if (static_cast<std::size_t>(components) > samples.size()) {
    throw ParamError("requested more components than samples");
  }
  const double n = static_cast<double>(samples.size());
  PCABasis basis;
  basis.mean.assign(dim, 0.0);
  for (const auto& s : samples)
    for (std::size_t j = 0; j < dim; ++j) basis.mean[j] += s[j];
  for (double& m : basis.mean) m /= n;

  std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
  std::vector<double> centred(dim);
  for (const auto& s : samples) {
    for (std::size_t j = 0; j < dim; ++j) centred[j] = s[j] - basis.mean[j];
    for (std::size_t i = 0; i < dim; ++i) {
      if (centred[i] == 0.0) continue;
      for (std::size_t j = i; j < dim; ++j) cov[i][j] += centred[i] * centred[j];
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      cov[i][j] /= (n - 1.0);
      cov[j][i] = cov[i][j];
    }

  SymmetricEigen eig = jacobi_eigen(std::move(cov));
  for (int k = 0; k < components; ++k) {
    auto vec = eig.vectors[static_cast<std::size_t>(k)];
    std::size_t peak = 0;
    for (std::size_t j = 1; j < dim; ++j)
      if (std::abs(vec[j]) > std::abs(vec[peak]) + 1e-12) peak = j;
    if (vec[peak] < 0.0)
      for (double& x : vec) x = -x;
    basis.components.push_back(std::move(vec));
    basis.eigenvalues.push_back(eig.values[static_cast<std::size_t>(k)]);
  }
  return basis;
}

std::vector<double> pca_transform(const PCABasis& basis, std::span<const double> x) {
  if (x.size() != basis.dim()) throw ShapeError("pca_transform input has wrong dimension");
  std::vector<double> out;
  out.reserve(basis.components.size());
  for (const auto& comp : basis.components) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - basis.mean[j]) * comp[j];
    out.push_back(s);
  }
  return out;
}

std::vector<double> pca_reconstruct(const PCABasis& basis, std::span<const double> coeffs) {
  if (coeffs.size() != basis.components.size()) {
    throw ShapeError("pca_reconstruct needs one coefficient per component");
  }
  std::vector<double> out = basis.mean;
  for (std::size_t k = 0; k < coeffs.size(); ++k)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += coeffs[k] * basis.components[k][j];
  return out;
}

void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  if (table.rows.size() != table.labels.size()) {
    throw ShapeError("feature table has " + std::to_string(table.rows.size()) + " rows but " +
                     std::to_string(table.labels.size()) + " labels");
  }
  for (const auto& name : table.columns) out << name << ',';
  out << "label\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].size() != table.columns.size()) {
      throw ShapeError("feature row " + std::to_string(i) + " has the wrong width");
    }
    for (double v : table.rows[i]) out << v << ',';
    out << table.labels[i] << '\n';
  }
}

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_feature_csv(out, table);
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
  }
}

}  // namespace

FeatureTable read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("feature CSV is empty");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "label") {
    throw FormatError("feature CSV header must end with a 'label' column");
  }
  FeatureTable table;
  table.columns.assign(header.begin(), header.end() - 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size() - 1);
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) row.push_back(parse_number(cells[i], line_no));
    const double label = parse_number(cells.back(), line_no);
    if (label < 0 || label != std::floor(label)) {
      throw FormatError("line " + std::to_string(line_no) + ": label must be a non-negative integer");
    }
    table.rows.push_back(std::move(row));
    table.labels.push_back(static_cast<int>(label));
  }
  return table;
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return read_feature_csv(in);
}

}  // namespace hlseg::color
