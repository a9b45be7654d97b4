#include "rise/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>

namespace rise {

std::string format_real(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

MetricsWriter::MetricsWriter(const std::string& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw DataError("cannot open metrics file for writing: " + path);
  out_ << kMetricsHeader << '\n';
  out_.flush();
  if (!out_) throw DataError("failed writing metrics header: " + path);
}

void MetricsWriter::append(const MetricRow& row) {
  if (row.step <= last_step_) {
    throw std::logic_error("metric steps must be strictly increasing");
  }
  last_step_ = row.step;
  out_ << row.step << ',' << format_real(row.mean_accuracy_reward) << ','
       << format_real(row.mean_response_length) << ',' << format_real(row.objective) << ','
       << format_real(row.clipped_fraction) << ',' << row.groups_filtered << '\n';
  out_.flush();
  if (!out_) throw DataError("failed writing metrics row: " + path_);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

int parse_int_field(const std::string& field, const std::string& path, int line) {
  int out = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || field.empty()) throw MalformedMetrics(path, line);
  return out;
}

double parse_real_field(const std::string& field, const std::string& path, int line) {
  if (field.empty()) throw MalformedMetrics(path, line);
  char* end = nullptr;
  double out = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size()) throw MalformedMetrics(path, line);
  return out;
}

}  // namespace

std::vector<MetricRow> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw MalformedMetrics(path, 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw MalformedMetrics(path, 1);
  std::vector<MetricRow> rows;
  int line_number = 1;
  int last_step = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != 6) throw MalformedMetrics(path, line_number);
    MetricRow row;
    row.step = parse_int_field(fields[0], path, line_number);
    row.mean_accuracy_reward = parse_real_field(fields[1], path, line_number);
    row.mean_response_length = parse_real_field(fields[2], path, line_number);
    row.objective = parse_real_field(fields[3], path, line_number);
    row.clipped_fraction = parse_real_field(fields[4], path, line_number);
    row.groups_filtered = parse_int_field(fields[5], path, line_number);
    if (!rows.empty() && row.step <= last_step) throw MalformedMetrics(path, line_number);
    last_step = row.step;
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string coord(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct PanelRect {
  double x0, y0, x1, y1;  // plot area in svg coordinates, y grows downward
};

void render_panel(std::ostringstream& svg, const PanelRect& r, const std::string& title,
                  std::span<const double> xs, std::span<const double> ys) {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (!xs.empty()) {
    xmin = *std::min_element(xs.begin(), xs.end());
    xmax = *std::max_element(xs.begin(), xs.end());
    ymin = *std::min_element(ys.begin(), ys.end());
    ymax = *std::max_element(ys.begin(), ys.end());
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const auto sx = [&](double x) { return r.x0 + (x - xmin) / (xmax - xmin) * (r.x1 - r.x0); };
  const auto sy = [&](double y) { return r.y1 - (y - ymin) / (ymax - ymin) * (r.y1 - r.y0); };

  svg << "<rect x=\"" << coord(r.x0) << "\" y=\"" << coord(r.y0) << "\" width=\""
      << coord(r.x1 - r.x0) << "\" height=\"" << coord(r.y1 - r.y0)
      << "\" fill=\"none\" stroke=\"#444444\"/>\n";
  svg << "<text x=\"" << coord(r.x0) << "\" y=\"" << coord(r.y0 - 10)
      << "\" font-family=\"monospace\" font-size=\"14\">" << title << "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    const double f = static_cast<double>(i) / 4.0;
    const double xv = xmin + f * (xmax - xmin);
    const double yv = ymin + f * (ymax - ymin);
    const double px = sx(xv);
    const double py = sy(yv);
    svg << "<line x1=\"" << coord(px) << "\" y1=\"" << coord(r.y1) << "\" x2=\"" << coord(px)
        << "\" y2=\"" << coord(r.y1 + 5) << "\" stroke=\"#444444\"/>\n";
    svg << "<text x=\"" << coord(px) << "\" y=\"" << coord(r.y1 + 20)
        << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">"
        << tick_label(xv) << "</text>\n";
    svg << "<line x1=\"" << coord(r.x0 - 5) << "\" y1=\"" << coord(py) << "\" x2=\""
        << coord(r.x0) << "\" y2=\"" << coord(py) << "\" stroke=\"#444444\"/>\n";
    svg << "<text x=\"" << coord(r.x0 - 8) << "\" y=\"" << coord(py + 4)
        << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">" << tick_label(yv)
        << "</text>\n";
  }
  svg << "<text x=\"" << coord((r.x0 + r.x1) / 2) << "\" y=\"" << coord(r.y1 + 38)
      << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">step</text>\n";

  if (xs.size() >= 2) {
    svg << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) svg << ' ';
      svg << coord(sx(xs[i])) << ',' << coord(sy(ys[i]));
    }
    svg << "\"/>\n";
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    svg << "<circle cx=\"" << coord(sx(xs[i])) << "\" cy=\"" << coord(sy(ys[i]))
        << "\" r=\"2.5\" fill=\"#1f6fb2\"/>\n";
  }
}

}  // namespace

std::string render_chart(std::span<const MetricRow> rows) {
  std::vector<double> steps, acc, len;
  steps.reserve(rows.size());
  acc.reserve(rows.size());
  len.reserve(rows.size());
  for (const MetricRow& r : rows) {
    steps.push_back(static_cast<double>(r.step));
    acc.push_back(r.mean_accuracy_reward);
    len.push_back(r.mean_response_length);
  }
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"660\" "
         "viewBox=\"0 0 960 660\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"960\" height=\"660\" fill=\"#ffffff\"/>\n";
  render_panel(svg, PanelRect{70.0, 40.0, 930.0, 280.0}, "accuracy reward", steps, acc);
  render_panel(svg, PanelRect{70.0, 370.0, 930.0, 610.0}, "response length (tokens)", steps, len);
  svg << "</svg>\n";
  return svg.str();
}

void write_text_atomic(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("failed writing file: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace rise
