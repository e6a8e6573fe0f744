#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ilm {

struct SeriesStats {
  std::vector<double> episodes;
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Reads the aggregate rows (student == -1) of each metrics CSV and collects
// the named metric column per episode. Mismatched episode counts warn on
// stderr and truncate to the shortest run.
SeriesStats aggregate_metric(const std::vector<std::filesystem::path>& csv_paths,
                             const std::string& metric);

// Self-contained SVG line chart with a +-1 standard deviation band.
void write_series_svg(const std::filesystem::path& out_path, const SeriesStats& stats,
                      const std::string& metric, bool log_y);

// The aggregated series as CSV (episode, mean, stddev), written alongside.
void write_series_csv(const std::filesystem::path& out_path, const SeriesStats& stats);

}  // namespace ilm
