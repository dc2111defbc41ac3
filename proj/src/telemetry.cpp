#include "eql/telemetry.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eql/error.hpp"

namespace eql {

std::string format_real(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_telemetry_csv(std::ostream& out, const std::vector<TelemetryRecord>& records) {
  out << kTelemetryHeader << '\n';
  for (const auto& r : records) {
    out << r.iteration << ',' << r.category << ',' << format_real(r.g_pos) << ','
        << format_real(r.g_neg) << ',' << format_real(r.ratio) << ',' << format_real(r.weight_pos)
        << ',' << format_real(r.weight_neg) << ',' << format_real(r.gamma_eff) << ','
        << format_real(r.loss_value) << '\n';
  }
}

void write_telemetry_csv(const std::filesystem::path& path,
                         const std::vector<TelemetryRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  write_telemetry_csv(out, records);
  if (!out) throw IngestionError("failed writing " + path.string());
}

namespace {

template <typename T>
T parse_field(const std::string& cell, const std::string& where) {
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw IngestionError(where + ": cannot parse '" + cell + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw IngestionError(where + ": non-finite value");
  }
  return value;
}

}  // namespace

std::vector<TelemetryRecord> read_telemetry_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTelemetryHeader) {
    throw IngestionError(path.string() + ":1: unexpected telemetry header");
  }
  std::vector<TelemetryRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw IngestionError(where + ": expected 9 fields");
    TelemetryRecord r;
    r.iteration = parse_field<std::size_t>(cells[0], where);
    r.category = parse_field<std::size_t>(cells[1], where);
    r.g_pos = parse_field<double>(cells[2], where);
    r.g_neg = parse_field<double>(cells[3], where);
    r.ratio = parse_field<double>(cells[4], where);
    r.weight_pos = parse_field<double>(cells[5], where);
    r.weight_neg = parse_field<double>(cells[6], where);
    r.gamma_eff = parse_field<double>(cells[7], where);
    r.loss_value = parse_field<double>(cells[8], where);
    if (r.g_pos < 0.0 || r.g_neg < 0.0) throw IngestionError(where + ": negative accumulator");
    if (r.ratio < 0.0 || r.ratio > 1.0) throw IngestionError(where + ": ratio outside [0, 1]");
    if (r.weight_pos < 0.0 || r.weight_neg < 0.0 || r.gamma_eff < 0.0 || r.loss_value < 0.0) {
      throw IngestionError(where + ": negative weight, exponent or loss");
    }
    records.push_back(r);
  }
  return records;
}

void write_summary(const std::filesystem::path& path, const Summary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  for (const auto& [key, value] : summary) out << key << '=' << value << '\n';
  if (!out) throw IngestionError("failed writing " + path.string());
}

Summary read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  Summary summary;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    summary[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return summary;
}

}  // namespace eql
