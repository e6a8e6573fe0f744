#include "ilm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ilm/errors.hpp"
#include "ilm/metrics.hpp"
#include "ilm/orchestrator.hpp"

namespace ilm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::vector<double> read_aggregate_column(const std::filesystem::path& path,
                                          const std::string& metric) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(Errc::parse_error, path.string() + ": empty file");
  const auto header = split_csv_line(line);
  int metric_col = -1, student_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == metric) metric_col = static_cast<int>(i);
    if (header[i] == "student") student_col = static_cast<int>(i);
  }
  if (student_col < 0) fail(Errc::parse_error, path.string() + ": no 'student' column");
  if (metric_col < 0)
    fail(Errc::unknown_metric, "'" + metric + "' not a column of " + path.string());
  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(Errc::parse_error, path.string() + ":" + std::to_string(line_no) + ": field count");
    if (fields[static_cast<std::size_t>(student_col)] != "-1") continue;
    values.push_back(std::stod(fields[static_cast<std::size_t>(metric_col)]));
  }
  return values;
}

}  // namespace

SeriesStats aggregate_metric(const std::vector<std::filesystem::path>& csv_paths,
                             const std::string& metric) {
  if (csv_paths.empty()) fail(Errc::usage_error, "no CSV files given");
  std::vector<std::vector<double>> runs;
  runs.reserve(csv_paths.size());
  std::size_t shortest = SIZE_MAX;
  for (const auto& p : csv_paths) {
    runs.push_back(read_aggregate_column(p, metric));
    shortest = std::min(shortest, runs.back().size());
  }
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].size() != shortest)
      std::cerr << "warning: " << csv_paths[i] << " has " << runs[i].size()
                << " episodes; truncating to " << shortest << "\n";
  if (shortest == 0) fail(Errc::parse_error, "no aggregate rows found");

  SeriesStats stats;
  for (std::size_t e = 0; e < shortest; ++e) {
    double m = 0.0, m2 = 0.0;
    for (const auto& run : runs) {
      m += run[e];
      m2 += run[e] * run[e];
    }
    m /= static_cast<double>(runs.size());
    stats.episodes.push_back(static_cast<double>(e));
    stats.mean.push_back(m);
    stats.stddev.push_back(std::sqrt(std::max(0.0, m2 / static_cast<double>(runs.size()) - m * m)));
  }
  return stats;
}

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 20, kTop = 20, kBottom = 50;

double nice_step(double span) {
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double mult : {1.0, 2.0, 5.0, 10.0})
    if (raw <= mult * mag) return mult * mag;
  return 10.0 * mag;
}

}  // namespace

void write_series_svg(const std::filesystem::path& out_path, const SeriesStats& stats,
                      const std::string& metric, bool log_y) {
  if (stats.mean.empty()) fail(Errc::degenerate_input, "empty series");
  double lo = stats.mean[0], hi = stats.mean[0];
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    lo = std::min(lo, stats.mean[i] - stats.stddev[i]);
    hi = std::max(hi, stats.mean[i] + stats.stddev[i]);
  }
  if (log_y) lo = std::max(lo, 1e-12);
  if (hi <= lo) hi = lo + 1.0;

  auto ty = [&](double v) {
    if (log_y) v = std::log10(std::max(v, 1e-12));
    const double l = log_y ? std::log10(lo) : lo;
    const double h = log_y ? std::log10(hi) : hi;
    return kTop + (kHeight - kTop - kBottom) * (1.0 - (v - l) / (h - l));
  };
  const double x_max = stats.episodes.back() > 0 ? stats.episodes.back() : 1.0;
  auto tx = [&](double e) { return kLeft + (kWidth - kLeft - kRight) * (e / x_max); };

  std::ofstream out(out_path);
  if (!out) fail(Errc::io_error, "cannot write " + out_path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // std band
  out << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < stats.mean.size(); ++i)
    out << tx(stats.episodes[i]) << ',' << ty(log_y ? std::max(stats.mean[i] + stats.stddev[i], 1e-12)
                                                    : stats.mean[i] + stats.stddev[i])
        << ' ';
  for (std::size_t i = stats.mean.size(); i-- > 0;)
    out << tx(stats.episodes[i]) << ','
        << ty(log_y ? std::max(stats.mean[i] - stats.stddev[i], 1e-12)
                    : stats.mean[i] - stats.stddev[i])
        << ' ';
  out << "\"/>\n";

  // mean line
  out << "<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < stats.mean.size(); ++i)
    out << tx(stats.episodes[i]) << ',' << ty(stats.mean[i]) << ' ';
  out << "\"/>\n";

  // axes
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";

  // x ticks
  const double xstep = nice_step(x_max);
  for (double e = 0; e <= x_max + 1e-9; e += xstep) {
    out << "<line x1=\"" << tx(e) << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << tx(e)
        << "\" y2=\"" << kHeight - kBottom + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << tx(e) << "\" y=\"" << kHeight - kBottom + 20
        << "\" font-size=\"12\" text-anchor=\"middle\">" << e << "</text>\n";
  }
  // y ticks
  if (log_y) {
    for (double d = std::floor(std::log10(lo)); d <= std::ceil(std::log10(hi)); d += 1.0) {
      const double v = std::pow(10.0, d);
      if (v < lo || v > hi) continue;
      out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << ty(v) << "\" x2=\"" << kLeft << "\" y2=\""
          << ty(v) << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << kLeft - 8 << "\" y=\"" << ty(v) + 4
          << "\" font-size=\"12\" text-anchor=\"end\">1e" << static_cast<int>(d) << "</text>\n";
    }
  } else {
    const double ystep = nice_step(hi - lo);
    for (double v = std::ceil(lo / ystep) * ystep; v <= hi + 1e-9; v += ystep) {
      out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << ty(v) << "\" x2=\"" << kLeft << "\" y2=\""
          << ty(v) << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << kLeft - 8 << "\" y=\"" << ty(v) + 4
          << "\" font-size=\"12\" text-anchor=\"end\">" << v << "</text>\n";
    }
  }
  out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10
      << "\" font-size=\"14\" text-anchor=\"middle\">episode</text>\n";
  out << "<text x=\"18\" y=\"" << (kTop + kHeight - kBottom) / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (kTop + kHeight - kBottom) / 2 << ")\">" << metric << (log_y ? " (log)" : "")
      << "</text>\n";
  out << "</svg>\n";
}

void write_series_csv(const std::filesystem::path& out_path, const SeriesStats& stats) {
  std::ofstream out(out_path);
  if (!out) fail(Errc::io_error, "cannot write " + out_path.string());
  out << "episode,mean,stddev\n";
  for (std::size_t i = 0; i < stats.mean.size(); ++i)
    out << stats.episodes[i] << ',' << format_double(stats.mean[i]) << ','
        << format_double(stats.stddev[i]) << '\n';
}

}  // namespace ilm
