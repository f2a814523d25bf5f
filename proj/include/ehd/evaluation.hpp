#pragma once

// Metric aggregation over instance sets: DPPL-Diff and Card-Diff with
// mean +/- std per method, evaluation-time ratios, and the case studies
// (per-mark distillation percentages, H_d length distribution, add/eject
// dynamics across sliding windows, per-sequence cardinality traces).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ehd/baselines.hpp"
#include "ehd/data.hpp"
#include "ehd/distiller.hpp"
#include "ehd/mtpp.hpp"

namespace ehd {

struct EvalConfig {
  int M = 4;                 // random-baseline sample rate
  double eps = 0.5;          // feasibility threshold for the oracle
  int oracle_n_max = 12;     // run the oracle only when card(H_f) <= this
  bool with_oracle = false;
  std::uint64_t seed = 1;
};

struct MethodColumn {
  std::string name;
  std::vector<double> values;          // one per instance, same order as keys
  std::vector<std::uint8_t> censored;  // card-diff: target unreachable, capped
  double mean = 0.0;
  double stddev = 0.0;  // population formula
  std::int64_t count = 0;
  std::int64_t censored_count = 0;
  std::int64_t skipped = 0;
};

struct MetricReport {
  std::string metric_name;  // "dppl-diff" | "card-diff"
  std::string dataset;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> keys;  // (seq_id, offset)
  std::vector<MethodColumn> methods;
  std::map<std::string, std::string> provenance;  // checkpoint digests etc.

  const MethodColumn& method(const std::string& name) const;
};

std::string report_to_json(const MetricReport& r);
std::string report_to_csv(const MetricReport& r);  // figure feed, long format

struct DpplEvalResult {
  MetricReport report;
  std::vector<DistillResult> chd;                // per instance, keyed order
  std::vector<std::vector<std::uint8_t>> rd_masks;  // last sampled RD mask
  EvalCounter gs_counter, rd_counter;
};

// DPPL-Diff = dppl(H_d,.) - dppl(H_l,.), higher is better. CHD runs first;
// its card(H_d) seeds the baselines' l_d ("given length" mode).
DpplEvalResult eval_dppl_diff(const DistillerModel& distiller,
                              const FullyNnModel& scorer,
                              const std::vector<DistillInstance>& instances,
                              const EvalConfig& cfg);

struct CardEvalResult {
  MetricReport report;
  std::vector<DistillResult> chd;
  std::int64_t oracle_infeasible = 0;
  EvalCounter gs_counter, rd_counter;
};

// Card-Diff = card(H_d) needed to reach CHD's per-instance (dppl_d, dppl_l)
// targets, lower is better. Unreachable targets enter at the cap with the
// censoring flag set. With cfg.with_oracle, instances small enough also get
// an "oracle" column (minimum card with dppl_l < log eps).
CardEvalResult eval_card_diff(const DistillerModel& distiller,
                              const FullyNnModel& scorer,
                              const std::vector<DistillInstance>& instances,
                              const EvalConfig& cfg);

struct TimingReport {
  std::int64_t count = 0;
  double chd_seconds = 0.0;
  double gs_seconds = 0.0;
  double rd_seconds = 0.0;
  double gs_ratio = 0.0;  // normalized so CHD == 1
  double rd_ratio = 0.0;
  // per-instance averages; both aggregate readings are emitted distinctly:
  double tbar_mean_over_methods = 0.0;  // mean of the three per-method means
  double tbar_total_per_instance = 0.0;  // sum of the three per-method means
  std::int64_t gs_evals = 0;
  std::int64_t rd_evals = 0;
};

// Wall-clock around the method call only; single-threaded; one CHD warm-up
// call before measurement.
TimingReport timing_harness(const DistillerModel& distiller,
                            const FullyNnModel& scorer,
                            const std::vector<DistillInstance>& instances,
                            const EvalConfig& cfg);

std::string timing_to_json(const TimingReport& r);

struct TraceSegment {
  std::vector<std::pair<std::int64_t, std::int64_t>> points;  // (offset, card)
};

struct SequenceTrace {
  std::int64_t seq_id = 0;
  std::vector<TraceSegment> segments;  // >1 segment means offset gaps
};

struct CaseStudyRecord {
  // per-mark distilled fraction; NaN = mark absent from the results
  std::vector<double> chd_mark_fraction;
  std::vector<double> rd_mark_fraction;
  // one-sided p-values (CHD fraction > RD fraction), Bonferroni-corrected
  std::vector<double> mark_p_values;
  std::vector<std::int64_t> chd_mark_total, rd_mark_total;

  std::vector<double> length_pdf;  // index = card(H_d)
  std::vector<double> length_cdf;

  std::map<std::int64_t, std::int64_t> addition_hist;  // per-step |added|
  std::map<std::int64_t, std::int64_t> ejection_hist;  // per-step |ejected|

  std::vector<SequenceTrace> traces;
  bool offset_gaps = false;
};

// Per-mark distilled fractions for CHD and RD on the same instances, with a
// two-proportion test per mark (Bonferroni across marks).
CaseStudyRecord case_mark_percentage(
    const std::vector<DistillInstance>& instances,
    const std::vector<DistillResult>& chd,
    const std::vector<std::vector<std::uint8_t>>& rd_masks, int mark_count);

// H_d length PDF/CDF plus add/eject dynamics between consecutive window
// offsets of the same sequence. Events are aligned by absolute identity
// (seq_id, original event index = offset + window position), not by window
// position.
CaseStudyRecord case_length_and_trace(
    const std::vector<DistillInstance>& instances,
    const std::vector<DistillResult>& chd);

std::string case_study_to_json(const CaseStudyRecord& r);
std::string case_study_to_csv(const CaseStudyRecord& r);

}  // namespace ehd
