#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "canao/error.hpp"
#include "canao/perf_model.hpp"

namespace canao {

namespace {

constexpr int kMinObservations = 3;
constexpr const char* kCsvHeader = "flops,intermediate_bytes,block_count,measured_ms";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& field, std::size_t line, const char* column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v) || v < 0.0) {
    throw ParseError("line " + std::to_string(line),
                     std::string("invalid ") + column + " value \"" + field + "\"");
  }
  return v;
}

}  // namespace

double aggregate_latency(const DeviceProfile& d, const CostReport& c) {
  return static_cast<double>(c.flops) / d.peak_flops_per_s +
         d.intermediate_penalty * static_cast<double>(c.intermediate_bytes) /
             d.mem_bandwidth_bytes_per_s +
         static_cast<double>(c.layer_count) * d.per_block_overhead_s;
}

CalibrationResult calibrate(const DeviceProfile& tmpl, std::span<const Observation> observations) {
  std::vector<Observation> unique;
  for (const Observation& o : observations) {
    if (!(o.measured_s > 0.0) || !std::isfinite(o.measured_s)) {
      throw CalibrationError("measured latency must be positive");
    }
    if (std::find(unique.begin(), unique.end(), o) == unique.end()) unique.push_back(o);
  }
  if (static_cast<int>(unique.size()) < kMinObservations) {
    throw CalibrationError("need at least " + std::to_string(kMinObservations) +
                           " distinct observations, got " + std::to_string(unique.size()));
  }

  // Unknowns: 1/peak, 1/bandwidth, per-block overhead. Rows are divided by
  // the measurement so the fit minimizes relative error.
  const auto n = static_cast<Eigen::Index>(unique.size());
  Eigen::MatrixXd a(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Observation& o = unique[static_cast<std::size_t>(i)];
    a(i, 0) = static_cast<double>(o.cost.flops) / o.measured_s;
    a(i, 1) = tmpl.intermediate_penalty * static_cast<double>(o.cost.intermediate_bytes) / o.measured_s;
    a(i, 2) = static_cast<double>(o.cost.layer_count) / o.measured_s;
  }
  const Eigen::VectorXd b = Eigen::VectorXd::Ones(n);
  Eigen::Vector3d scale;
  for (int j = 0; j < 3; ++j) {
    scale(j) = a.col(j).norm();
    if (scale(j) > 0.0) a.col(j) /= scale(j);
  }
  if (scale(0) == 0.0) throw CalibrationError("degenerate observations: no arithmetic recorded");

  // Non-negative least squares by enumerating active sets; the arithmetic
  // column is always kept so the fitted peak stays finite.
  double best_residual = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  for (int mask = 1; mask < 8; ++mask) {
    if (!(mask & 1)) continue;
    std::vector<int> cols;
    for (int j = 0; j < 3; ++j) {
      if ((mask & (1 << j)) && scale(j) > 0.0) cols.push_back(j);
    }
    if (static_cast<int>(cols.size()) != __builtin_popcount(static_cast<unsigned>(mask))) continue;
    Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = a.col(cols[k]);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    if (qr.rank() < sub.cols()) continue;
    const Eigen::VectorXd x = qr.solve(b);
    if ((x.array() <= 0.0).any()) continue;
    const double r = (sub * x - b).squaredNorm();
    if (r < best_residual) {
      best_residual = r;
      best.setZero();
      for (std::size_t k = 0; k < cols.size(); ++k) best(cols[k]) = x(static_cast<Eigen::Index>(k));
    }
  }
  if (!std::isfinite(best_residual)) {
    throw CalibrationError("degenerate observations: no positive fit exists");
  }

  CalibrationResult out;
  out.profile = tmpl;
  out.profile.peak_flops_per_s = scale(0) / best(0);
  if (best(1) > 0.0) out.profile.mem_bandwidth_bytes_per_s = scale(1) / best(1);
  out.profile.per_block_overhead_s = scale(2) > 0.0 ? best(2) / scale(2) : 0.0;
  if (scale(1) > 0.0 && best(1) == 0.0) {
    // Intermediate traffic explained nothing: treat bandwidth as unbounded
    // relative to the data.
    out.profile.mem_bandwidth_bytes_per_s = std::numeric_limits<double>::max();
  }
  for (const Observation& o : observations) {
    const double r = (aggregate_latency(out.profile, o.cost) - o.measured_s) / o.measured_s;
    out.relative_residuals.push_back(r);
    out.max_relative_error = std::max(out.max_relative_error, std::abs(r));
  }
  return out;
}

std::vector<Observation> parse_observations_csv(std::string_view text) {
  std::vector<Observation> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(in, raw)) {
    ++line;
    const std::string row = trim(raw);
    if (row.empty() || row.front() == '#') continue;
    if (!header) {
      std::string compact;
      for (char c : row) {
        if (c != ' ' && c != '\t') compact.push_back(c);
      }
      if (compact != kCsvHeader) {
        throw ParseError("line " + std::to_string(line), std::string("expected header ") + kCsvHeader);
      }
      header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream cells(row);
    std::string cell;
    while (std::getline(cells, cell, ',')) fields.push_back(trim(cell));
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line),
                       "expected 4 fields, got " + std::to_string(fields.size()));
    }
    Observation o;
    o.cost.flops = static_cast<std::int64_t>(parse_number(fields[0], line, "flops"));
    o.cost.intermediate_bytes =
        static_cast<std::int64_t>(parse_number(fields[1], line, "intermediate_bytes"));
    o.cost.layer_count = static_cast<std::int64_t>(parse_number(fields[2], line, "block_count"));
    o.cost.op_count = o.cost.layer_count;
    o.measured_s = parse_number(fields[3], line, "measured_ms") / 1000.0;
    out.push_back(o);
  }
  if (!header) throw ParseError("line 1", std::string("expected header ") + kCsvHeader);
  return out;
}

std::string observations_to_csv(std::span<const Observation> observations) {
  std::ostringstream os;
  os.precision(17);
  os << kCsvHeader << '\n';
  for (const Observation& o : observations) {
    os << o.cost.flops << ',' << o.cost.intermediate_bytes << ',' << o.cost.layer_count << ','
       << o.measured_s * 1000.0 << '\n';
  }
  return os.str();
}

}  // namespace canao
