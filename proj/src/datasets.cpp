#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ubsgd/problems.hpp"

namespace ubsgd {

Dataset synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.n < 1 || spec.d < 1) {
    throw std::invalid_argument("synthetic: n and d must be positive");
  }
  if (!(spec.feature_scale > 0.0) || spec.signal_norm < 0.0 || spec.noise < 0.0) {
    throw std::invalid_argument("synthetic: invalid scale, signal or noise");
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> N(0.0, 1.0);

  Dataset ds;
  ds.A.resize(spec.n, spec.d);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j < spec.d; ++j) ds.A(i, j) = spec.feature_scale * N(rng);
  if (spec.unit_rows) {
    for (int i = 0; i < spec.n; ++i) {
      const double r = ds.A.row(i).norm();
      if (r > 0.0) ds.A.row(i) /= r;
    }
  }
  Vec x(spec.d);
  for (int j = 0; j < spec.d; ++j) x[j] = N(rng);
  x *= spec.signal_norm / x.norm();
  ds.planted = x;

  const Vec clean = ds.A * x;
  ds.b.resize(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    const double e = spec.noise > 0.0 ? spec.noise * N(rng) : 0.0;
    switch (spec.target) {
      case TargetKind::Linear:
        ds.b[i] = clean[i] + e;
        break;
      case TargetKind::Absolute:
        ds.b[i] = std::abs(clean[i]) + e;
        break;
      case TargetKind::Sign:
        ds.b[i] = clean[i] + e >= 0.0 ? 1.0 : -1.0;
        break;
    }
  }
  return ds;
}

Dataset load_csv_dataset(const std::string& path, bool binary_labels) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        row.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {  // header line
        first = false;
        continue;
      }
      throw std::runtime_error("non-numeric cell in dataset: " + path);
    }
    first = false;
    if (row.size() < 2) throw std::runtime_error("dataset rows need features and a label");
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged dataset: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty dataset: " + path);

  const int n = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows.front().size()) - 1;
  Dataset ds;
  ds.A.resize(n, d);
  ds.b.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.A(i, j) = rows[i][j];
    double y = rows[i][d];
    if (binary_labels) {
      if (y == 0.0) y = -1.0;
      if (y != 1.0 && y != -1.0)
        throw std::runtime_error("labels must be in {0,1} or {-1,+1}");
    }
    ds.b[i] = y;
  }
  return ds;
}

}  // namespace ubsgd
