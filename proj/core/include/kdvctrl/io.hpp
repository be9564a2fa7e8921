#pragma once

#include <map>
#include <string>
#include <vector>

#include "kdvctrl/closed_loop.hpp"
#include "kdvctrl/experiments.hpp"

namespace kdvctrl {

/// Shortest round-trip decimal form of a double (used by every writer so
/// reruns are byte-identical).
std::string format_double(double v);

void write_trajectory_csv(const TrajectoryRecord& rec, const std::string& path);
void write_trajectory_ndjson(const TrajectoryRecord& rec, const std::string& path);

/// key=value configuration file (# comments) or JSON, keyed by extension.
ExperimentConfig parse_config_file(const std::string& path, ExperimentConfig base);

/// Applies one key/value pair onto a configuration (shared by both formats).
void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value);

std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace kdvctrl
