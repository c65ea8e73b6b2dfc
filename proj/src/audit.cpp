#include "agentask/audit.hpp"

#include <sstream>

#include "agentask/errors.hpp"

namespace agentask {

DistributionReport annotate_distribution(const std::vector<Trajectory>& traces) {
  DistributionReport report;
  std::map<ErrorType, std::size_t> counts;
  for (const auto& t : traces) {
    for (const auto& r : t.records) {
      ++report.total_edges;
      if (!r.gold_type) {
        ++report.unlabeled_edges;
        continue;
      }
      if (*r.gold_type == ErrorType::NONE) {
        ++report.clean_edges;
        continue;
      }
      ++report.faulted_edges;
      ++counts[*r.gold_type];
    }
  }
  for (const auto& [type, n] : counts) {
    report.fractions[type] =
        static_cast<double>(n) / static_cast<double>(report.faulted_edges);
  }
  return report;
}

ResolutionReport one_shot_resolution(const std::vector<Trajectory>& traces) {
  ResolutionReport report;
  std::map<ErrorType, std::size_t> resolved;
  std::map<ErrorType, std::size_t> injected;
  for (const auto& t : traces) {
    for (const auto& r : t.records) {
      if (!r.gold_type || *r.gold_type == ErrorType::NONE) continue;
      ++injected[*r.gold_type];
      if (!r.action.gate()) continue;  // never asked: not a one-shot datum
      ++report.asked[*r.gold_type];
      if (r.residual_flag == 0) ++resolved[*r.gold_type];
    }
  }
  for (const auto& [type, n] : report.asked) {
    report.rates[type] = static_cast<double>(resolved[type]) / static_cast<double>(n);
  }
  for (const auto& [type, n] : injected) {
    if (!report.asked.count(type)) report.absent.push_back(type);
  }
  return report;
}

namespace {

struct TraceTotals {
  double latency = 0.0;      // mean latency units per trajectory
  double clar_tokens = 0.0;  // mean clarification tokens per trajectory
  double total_tokens = 0.0; // mean message + clarification tokens per trajectory
  double accuracy = 0.0;
  double asks = 0.0;
};

TraceTotals totals_of(const std::vector<Trajectory>& traces) {
  if (traces.empty()) throw DataError("no trajectories to evaluate");
  TraceTotals s;
  for (const auto& t : traces) {
    s.accuracy += t.terminal_score;
    for (const auto& r : t.records) {
      s.latency += r.latency_units;
      s.clar_tokens += static_cast<double>(r.cost_tokens);
      s.total_tokens +=
          static_cast<double>(whitespace_tokens(r.state.message)) +
          static_cast<double>(r.cost_tokens);
      s.asks += r.action.gate() ? 1.0 : 0.0;
    }
  }
  const double n = static_cast<double>(traces.size());
  s.latency /= n;
  s.clar_tokens /= n;
  s.total_tokens /= n;
  s.accuracy /= n;
  s.asks /= n;
  return s;
}

void check_same_config(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b) {
  std::string ha;
  for (const auto& t : a) {
    if (ha.empty()) ha = t.config_hash;
    if (t.config_hash != ha) throw DataError("trace set mixes environment configs");
  }
  std::string hb;
  for (const auto& t : b) {
    if (hb.empty()) hb = t.config_hash;
    if (t.config_hash != hb) throw DataError("baseline set mixes environment configs");
  }
  if (ha != hb) {
    throw DataError("env config hash mismatch between traces (" + ha + ") and baseline (" + hb +
                    ")");
  }
}

}  // namespace

OverheadReport overhead_metrics(const std::vector<Trajectory>& traces,
                                const std::vector<Trajectory>& baseline_traces) {
  check_same_config(traces, baseline_traces);
  const TraceTotals cur = totals_of(traces);
  const TraceTotals base = totals_of(baseline_traces);
  OverheadReport report;
  report.accuracy = cur.accuracy;
  report.latency_pct = 100.0 * cur.latency / base.latency;
  // cost beyond the baseline's own spend, as a share of baseline total spend
  report.extra_cost_pct = 100.0 * (cur.clar_tokens - base.clar_tokens) / base.total_tokens;
  report.asks_per_episode = cur.asks;
  return report;
}

std::string distribution_csv(const DistributionReport& report) {
  std::ostringstream out;
  out << "error_type,fraction,faulted_edges,total_edges,unlabeled\n";
  for (const auto& [type, frac] : report.fractions) {
    out << error_type_tag(type) << ',' << frac << ',' << report.faulted_edges << ','
        << report.total_edges << ',' << report.unlabeled_edges << '\n';
  }
  return out.str();
}

std::string resolution_csv(const ResolutionReport& report) {
  std::ostringstream out;
  out << "error_type,one_shot_rate,asked\n";
  for (const auto& [type, rate] : report.rates) {
    out << error_type_tag(type) << ',' << rate << ',' << report.asked.at(type) << '\n';
  }
  for (const auto& type : report.absent) {
    out << error_type_tag(type) << ",absent,0\n";
  }
  return out.str();
}

std::string overhead_csv(const OverheadReport& report) {
  std::ostringstream out;
  out << "accuracy,latency_pct,extra_cost_pct,asks_per_episode\n";
  out << report.accuracy << ',' << report.latency_pct << ',' << report.extra_cost_pct << ','
      << report.asks_per_episode << '\n';
  return out.str();
}

std::string text_summary(const DistributionReport& dist, const ResolutionReport& res,
                         const OverheadReport* overhead) {
  std::ostringstream out;
  out << "edges: " << dist.total_edges << " (" << dist.faulted_edges << " faulted, "
      << dist.clean_edges << " clean, " << dist.unlabeled_edges << " unlabeled)\n";
  out << "fault distribution:\n";
  for (const auto& [type, frac] : dist.fractions) {
    out << "  " << error_type_tag(type) << "  " << 100.0 * frac << "%\n";
  }
  out << "one-shot resolution:\n";
  for (const auto& [type, rate] : res.rates) {
    out << "  " << error_type_tag(type) << "  " << 100.0 * rate << "%  (" << res.asked.at(type)
        << " asked)\n";
  }
  for (const auto& type : res.absent) {
    out << "  " << error_type_tag(type) << "  no asks observed\n";
  }
  if (overhead) {
    out << "accuracy " << overhead->accuracy << ", latency " << overhead->latency_pct
        << "%, extra cost " << overhead->extra_cost_pct << "%, asks/episode "
        << overhead->asks_per_episode << "\n";
  }
  return out.str();
}

}  // namespace agentask
