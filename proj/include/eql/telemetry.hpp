#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace eql {

/// One category's training status at one telemetry iteration.
struct TelemetryRecord {
  std::size_t iteration = 0;
  std::size_t category = 0;
  double g_pos = 0.0;
  double g_neg = 0.0;
  double ratio = 0.0;
  double weight_pos = 1.0;  // q_j (Sigmoid-EQL), w_j (EFL/EQFL), else 1
  double weight_neg = 1.0;  // r_j (Sigmoid-EQL), w_j (EFL/EQFL), else 1
  double gamma_eff = 0.0;   // gamma_j (EFL/EQFL), gamma_b (focal/QFL), else 0
  double loss_value = 0.0;  // batch loss at this iteration

  friend bool operator==(const TelemetryRecord&, const TelemetryRecord&) = default;
};

inline constexpr std::string_view kTelemetryHeader =
    "iteration,category,g_pos,g_neg,ratio,weight_pos,weight_neg,gamma_eff,loss_value";

/// Shortest round-trippable text (17 significant digits at most).
std::string format_real(double value);

void write_telemetry_csv(std::ostream& out, const std::vector<TelemetryRecord>& records);
void write_telemetry_csv(const std::filesystem::path& path,
                         const std::vector<TelemetryRecord>& records);

/// Parses and schema-validates a telemetry CSV (header, field types, ratio in [0, 1],
/// non-negative accumulators). Throws IngestionError naming the line.
std::vector<TelemetryRecord> read_telemetry_csv(const std::filesystem::path& path);

/// Flat `key=value` summary file; keys are written in sorted order.
using Summary = std::map<std::string, std::string>;
void write_summary(const std::filesystem::path& path, const Summary& summary);
Summary read_summary(const std::filesystem::path& path);

}  // namespace eql
