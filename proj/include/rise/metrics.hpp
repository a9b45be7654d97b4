#pragma once

#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rise/common.hpp"

namespace rise {

// One training-step record; the CSV column order matches the field order.
struct MetricRow {
  int step = 0;
  double mean_accuracy_reward = 0.0;   // over all trajectories sampled this step
  double mean_response_length = 0.0;   // tokens, terminator included
  double objective = 0.0;              // clipped surrogate after filtering
  double clipped_fraction = 0.0;
  int groups_filtered = 0;             // groups the online filter discarded
};

inline constexpr std::string_view kMetricsHeader =
    "step,mean_accuracy_reward,mean_response_length,objective,clipped_fraction,groups_filtered";

// Shortest round-trip decimal rendering; keeps metrics byte-stable per seed.
std::string format_real(double value);

// Truncates the file and writes the header immediately; one flush per row so
// an interrupted run keeps every completed step.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricRow& row);

 private:
  std::string path_;
  std::ofstream out_;
  int last_step_ = 0;
};

// Strict reader: exact header, six fields per row, strictly increasing steps.
// Malformed content reports the offending 1-based line number.
std::vector<MetricRow> read_metrics(const std::string& path);

// Standalone two-panel SVG line chart (accuracy reward and response length
// versus step). Same rows produce identical bytes; empty input renders bare
// axes. Each data point is drawn as one circle per panel.
std::string render_chart(std::span<const MetricRow> rows);

// Write-to-temp-then-rename so readers never observe a partial file.
void write_text_atomic(const std::string& path, std::string_view content);

}  // namespace rise
