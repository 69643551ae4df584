#include "advgame/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "advgame/errors.hpp"
#include "advgame/rng.hpp"

namespace advgame {
namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974;
constexpr std::uint64_t kGenerateStream = 0x67656e;

double cubic(double u) { return 4.0 * std::pow(u - 0.5, 3) + 0.5; }
constexpr double kPolyShift = 0.3;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string row_list(const std::vector<std::size_t>& rows) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(rows.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i) out += ", ";
    out += std::to_string(rows[i]);
  }
  if (rows.size() > shown) out += ", ... (" + std::to_string(rows.size()) + " rows)";
  return out;
}

void finish_split(Dataset& d, double fraction, std::uint64_t seed) {
  split_indices(d.size(), fraction, seed, d.train, d.test);
}

void standardize_targets(Dataset& d, bool raw) {
  if (raw || d.train.empty()) return;
  double mean = 0.0;
  for (auto i : d.train) mean += d.targets[i];
  mean /= static_cast<double>(d.train.size());
  double var = 0.0;
  for (auto i : d.train) var += (d.targets[i] - mean) * (d.targets[i] - mean);
  var /= static_cast<double>(d.train.size());
  double sd = std::sqrt(var);
  if (!(sd > 0.0)) {
    d.warnings.push_back("target is constant on the training split; not rescaled");
    sd = 1.0;
  }
  d.target_mean = mean;
  d.target_std = sd;
  for (auto& t : d.targets) t = (t - mean) / sd;
}

void note_constant_columns(Dataset& d, const std::vector<std::string>& names) {
  for (std::size_t j = 0; j < d.scale.min.size(); ++j) {
    if (d.scale.min[j] == d.scale.max[j]) {
      d.warnings.push_back("feature column '" + names[j] + "' is constant; normalized to 0.5");
    }
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

std::string to_string(Family f) {
  switch (f) {
    case Family::circles: return "circles";
    case Family::moons: return "moons";
    case Family::streaks: return "streaks";
    case Family::polynomials: return "polynomials";
  }
  return "?";
}

Family family_from_string(const std::string& text) {
  if (text == "circles") return Family::circles;
  if (text == "moons" || text == "moon") return Family::moons;
  if (text == "streaks") return Family::streaks;
  if (text == "polynomials") return Family::polynomials;
  throw ConfigError("unknown dataset family '" + text +
                    "' (expected circles, moons, streaks or polynomials)");
}

std::size_t family_classes(Family f) { return f == Family::polynomials ? 3 : 2; }

ColumnScale fit_min_max(const Tensor2& x) {
  ColumnScale s;
  s.min.assign(x.cols(), 0.0);
  s.max.assign(x.cols(), 0.0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double lo = x.rows() ? x(0, j) : 0.0;
    double hi = lo;
    for (std::size_t i = 1; i < x.rows(); ++i) {
      lo = std::min(lo, x(i, j));
      hi = std::max(hi, x(i, j));
    }
    s.min[j] = lo;
    s.max[j] = hi;
  }
  return s;
}

Tensor2 normalize(const Tensor2& x, const ColumnScale& s) {
  if (s.min.size() != x.cols()) throw ShapeError("normalize: scale width does not match data");
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double range = s.max[j] - s.min[j];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out(i, j) = range > 0.0 ? (x(i, j) - s.min[j]) / range : 0.5;
    }
  }
  return out;
}

Tensor2 denormalize(const Tensor2& x, const ColumnScale& s) {
  if (s.min.size() != x.cols()) throw ShapeError("denormalize: scale width does not match data");
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double range = s.max[j] - s.min[j];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out(i, j) = range > 0.0 ? x(i, j) * range + s.min[j] : s.min[j];
    }
  }
  return out;
}

Batch Dataset::batch(std::span<const std::size_t> rows) const {
  Batch b;
  b.x = x.gather_rows(rows);
  if (task.is_classification()) {
    b.labels.reserve(rows.size());
    for (auto r : rows) b.labels.push_back(labels[r]);
  } else {
    b.targets.reserve(rows.size());
    for (auto r : rows) b.targets.push_back(targets[r]);
  }
  return b;
}

void split_indices(std::size_t n, double fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, kSplitStream);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

Dataset generate_2d(Family family, const GenerateOptions& opts) {
  if (opts.n < 10) throw ConfigError("generate_2d needs n >= 10");
  if (!(opts.noise >= 0.0)) throw ConfigError("noise must be non-negative");
  const std::size_t classes = family_classes(family);
  Rng rng = make_rng(opts.seed, kGenerateStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double pi = std::numbers::pi;

  Tensor2 raw(opts.n, 2);
  std::vector<std::size_t> labels(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) {
    const std::size_t y = i % classes;
    labels[i] = y;
    double u = 0.0, v = 0.0;
    switch (family) {
      case Family::circles: {
        const double t = 2.0 * pi * unit(rng);
        const double r = y == 0 ? 0.5 : 1.0;
        u = r * std::cos(t);
        v = r * std::sin(t);
        break;
      }
      case Family::moons: {
        const double t = pi * unit(rng);
        if (y == 0) {
          u = std::cos(t);
          v = std::sin(t);
        } else {
          u = 1.0 - std::cos(t);
          v = 0.5 - std::sin(t);
        }
        break;
      }
      case Family::streaks: {
        // Four bands of width 0.5 in u - v, labels alternating.
        for (;;) {
          u = unit(rng);
          v = unit(rng);
          const auto band = std::min<std::size_t>(static_cast<std::size_t>((u - v + 1.0) / 0.5), 3);
          if (band % 2 == y) break;
        }
        break;
      }
      case Family::polynomials: {
        for (;;) {
          u = unit(rng);
          v = unit(rng);
          const std::size_t region = (v > cubic(u) ? 1 : 0) + (v > cubic(u) - kPolyShift ? 1 : 0);
          if (region == y) break;
        }
        break;
      }
    }
    raw(i, 0) = u + opts.noise * gauss(rng);
    raw(i, 1) = v + opts.noise * gauss(rng);
  }

  Dataset d;
  d.task = Task::classification(classes);
  d.scale = fit_min_max(raw);
  d.x = normalize(raw, d.scale);
  d.labels = std::move(labels);
  std::ostringstream prov;
  prov << to_string(family) << " n=" << opts.n << " noise=" << format_double(opts.noise)
       << " seed=" << opts.seed;
  d.provenance = prov.str();
  finish_split(d, opts.train_fraction, opts.seed);
  d.fingerprint = fnv1a64(canonical_csv(to_table(d)));
  return d;
}

Dataset generate_regression(std::size_t dim, const GenerateOptions& opts, bool raw_target) {
  if (dim < 1) throw ConfigError("regression generator needs dim >= 1");
  if (opts.n < 10) throw ConfigError("regression generator needs n >= 10");
  Rng rng = make_rng(opts.seed, kGenerateStream + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(dim);
  for (std::size_t j = 0; j < dim; ++j) w[j] = 1.0 - 2.0 * static_cast<double>(j % 2) * 0.75;

  Tensor2 raw(opts.n, dim);
  std::vector<double> y(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      raw(i, j) = unit(rng);
      s += w[j] * raw(i, j);
    }
    y[i] = s + std::sin(2.0 * std::numbers::pi * raw(i, 0)) + opts.noise * gauss(rng);
  }
  Dataset d;
  d.task = Task::regression();
  d.scale = fit_min_max(raw);
  d.x = normalize(raw, d.scale);
  d.raw_targets = y;
  d.targets = std::move(y);
  d.provenance = "synthetic-regression dim=" + std::to_string(dim) + " n=" + std::to_string(opts.n) +
                 " noise=" + format_double(opts.noise) + " seed=" + std::to_string(opts.seed);
  finish_split(d, opts.train_fraction, opts.seed);
  d.fingerprint = fnv1a64(canonical_csv(to_table(d)));
  standardize_targets(d, raw_target);
  return d;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  t.header = split_line(line);
  const std::size_t cols = t.header.size();
  std::vector<double> values;
  std::vector<std::size_t> bad;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split_line(line);
    bool ok = cells.size() == cols;
    std::vector<double> parsed(cols, 0.0);
    for (std::size_t j = 0; ok && j < cols; ++j) ok = parse_double(cells[j], parsed[j]);
    if (!ok) {
      bad.push_back(row);
      continue;
    }
    values.insert(values.end(), parsed.begin(), parsed.end());
  }
  if (!bad.empty()) {
    throw InputError("'" + path.string() + "': missing or non-numeric values in data rows " +
                     row_list(bad));
  }
  const std::size_t rows = values.size() / std::max<std::size_t>(cols, 1);
  t.values = Tensor2(rows, cols, std::move(values));
  return t;
}

std::string canonical_csv(const CsvTable& t) {
  std::string out;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j) out += ',';
    out += t.header[j];
  }
  out += '\n';
  for (std::size_t i = 0; i < t.values.rows(); ++i) {
    for (std::size_t j = 0; j < t.values.cols(); ++j) {
      if (j) out += ',';
      out += format_double(t.values(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << canonical_csv(t);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CsvTable to_table(const Dataset& d) {
  CsvTable t;
  for (std::size_t j = 0; j < d.dim(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  t.header.push_back(d.task.is_classification() ? "label" : "target");
  t.values = Tensor2(d.size(), d.dim() + 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j) t.values(i, j) = d.x(i, j);
    t.values(i, d.dim()) =
        d.task.is_classification() ? static_cast<double>(d.labels[i]) : d.raw_targets[i];
  }
  return t;
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) { write_csv(path, to_table(d)); }

namespace {

Dataset from_table(const CsvTable& t, const LoadOptions& opts, bool force_regression,
                   const std::string& source) {
  if (t.header.size() < 2) throw InputError(source + ": need at least one feature and one target column");
  std::size_t target = t.header.size() - 1;
  if (!opts.target_column.empty()) {
    auto it = std::find(t.header.begin(), t.header.end(), opts.target_column);
    if (it == t.header.end()) throw InputError(source + ": no column named '" + opts.target_column + "'");
    target = static_cast<std::size_t>(it - t.header.begin());
  }
  if (t.values.rows() < 2) throw InputError(source + ": need at least two data rows");
  const bool classification = !force_regression && t.header[target] == "label";

  std::vector<std::string> names;
  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j == target) continue;
    feature_cols.push_back(j);
    names.push_back(t.header[j]);
  }
  Tensor2 raw(t.values.rows(), feature_cols.size());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t k = 0; k < feature_cols.size(); ++k) raw(i, k) = t.values(i, feature_cols[k]);
  }

  Dataset d;
  d.scale = fit_min_max(raw);
  d.x = normalize(raw, d.scale);
  note_constant_columns(d, names);
  d.fingerprint = fnv1a64(canonical_csv(t));
  d.provenance = source;
  if (classification) {
    std::size_t classes = 0;
    std::vector<std::size_t> bad;
    d.labels.resize(raw.rows());
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      const double v = t.values(i, target);
      if (!(v >= 0.0) || v != std::floor(v)) {
        bad.push_back(i + 1);
        continue;
      }
      d.labels[i] = static_cast<std::size_t>(v);
      classes = std::max(classes, d.labels[i] + 1);
    }
    if (!bad.empty()) throw InputError(source + ": labels must be non-negative integers; bad rows " + row_list(bad));
    if (classes < 2) throw InputError(source + ": classification data needs at least two classes");
    d.task = Task::classification(classes);
  } else {
    d.task = Task::regression();
    d.targets.resize(raw.rows());
    for (std::size_t i = 0; i < raw.rows(); ++i) d.targets[i] = t.values(i, target);
    d.raw_targets = d.targets;
  }
  finish_split(d, opts.train_fraction, opts.seed);
  if (!classification) standardize_targets(d, opts.raw_target);
  return d;
}

}  // namespace

Dataset load_regression_csv(const std::filesystem::path& path, const LoadOptions& opts) {
  return from_table(read_csv(path), opts, true, path.string());
}

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& opts) {
  return from_table(read_csv(path), opts, false, path.string());
}

Tensor2 grid(std::size_t resolution) {
  if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
  Tensor2 g(resolution * resolution, 2);
  const double denom = static_cast<double>(resolution - 1);
  for (std::size_t j = 0; j < resolution; ++j) {
    for (std::size_t i = 0; i < resolution; ++i) {
      const std::size_t r = j * resolution + i;
      g(r, 0) = static_cast<double>(i) / denom;
      g(r, 1) = static_cast<double>(j) / denom;
    }
  }
  return g;
}

}  // namespace advgame
