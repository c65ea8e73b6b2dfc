#pragma once

#include <map>
#include <string>
#include <vector>

#include "agentask/core.hpp"

namespace agentask {

struct DistributionReport {
  std::map<ErrorType, double> fractions;  // over faulted edges; present types only
  std::size_t faulted_edges = 0;
  std::size_t clean_edges = 0;
  std::size_t unlabeled_edges = 0;  // records without a gold annotation
  std::size_t total_edges = 0;
};

DistributionReport annotate_distribution(const std::vector<Trajectory>& traces);

struct ResolutionReport {
  std::map<ErrorType, double> rates;  // first-ask resolution per type, when asked
  std::map<ErrorType, std::size_t> asked;
  std::vector<ErrorType> absent;  // injected types that were never asked about
};

ResolutionReport one_shot_resolution(const std::vector<Trajectory>& traces);

struct OverheadReport {
  double accuracy = 0.0;
  double latency_pct = 0.0;
  double extra_cost_pct = 0.0;
  double asks_per_episode = 0.0;
};

// Accuracy plus latency/extra-cost normalized to a never-ask baseline from
// the same environment config (config hashes must match).
OverheadReport overhead_metrics(const std::vector<Trajectory>& traces,
                                const std::vector<Trajectory>& baseline_traces);

std::string distribution_csv(const DistributionReport& report);
std::string resolution_csv(const ResolutionReport& report);
std::string overhead_csv(const OverheadReport& report);
std::string text_summary(const DistributionReport& dist, const ResolutionReport& res,
                         const OverheadReport* overhead);

}  // namespace agentask
