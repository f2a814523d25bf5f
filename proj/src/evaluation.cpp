#include "ehd/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ehd/stats.hpp"

namespace ehd {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

void finalize(MethodColumn& m) {
  m.count = static_cast<std::int64_t>(m.values.size());
  m.censored_count = 0;
  for (auto c : m.censored) m.censored_count += c;
  if (!m.values.empty()) {
    m.mean = stats::mean(m.values);
    m.stddev = stats::stddev_pop(m.values);
  }
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

const MethodColumn& MetricReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.name == name) return m;
  throw std::out_of_range("MetricReport: no method named " + name);
}

std::string report_to_json(const MetricReport& r) {
  json j;
  j["metric"] = r.metric_name;
  j["dataset"] = r.dataset;
  j["seed"] = r.seed;
  j["provenance"] = r.provenance;
  json keys = json::array();
  for (const auto& [s, o] : r.keys) keys.push_back(json::array({s, o}));
  j["keys"] = keys;
  json methods = json::array();
  for (const auto& m : r.methods) {
    json jm;
    jm["name"] = m.name;
    jm["mean"] = m.mean;
    jm["std"] = m.stddev;
    jm["count"] = m.count;
    jm["censored"] = m.censored_count;
    jm["skipped"] = m.skipped;
    jm["values"] = m.values;
    if (!m.censored.empty()) jm["censored_flags"] = m.censored;
    methods.push_back(std::move(jm));
  }
  j["methods"] = methods;
  return j.dump();
}

std::string report_to_csv(const MetricReport& r) {
  std::ostringstream os;
  os << "seq_id,offset,method,value,censored\n";
  for (const auto& m : r.methods) {
    for (size_t i = 0; i < m.values.size(); ++i) {
      os << r.keys[i].first << "," << r.keys[i].second << "," << m.name << ","
         << m.values[i] << ","
         << (i < m.censored.size() ? int(m.censored[i]) : 0) << "\n";
    }
  }
  return os.str();
}

DpplEvalResult eval_dppl_diff(const DistillerModel& distiller,
                              const FullyNnModel& scorer,
                              const std::vector<DistillInstance>& instances,
                              const EvalConfig& cfg) {
  DpplEvalResult res;
  res.report.metric_name = "dppl-diff";
  res.report.seed = cfg.seed;
  MethodColumn chd{.name = "chd"}, gs{.name = "gs"}, rd{.name = "rd"};
  Rng rng = make_rng(cfg.seed, 0xEDD1);

  for (const auto& inst : instances) {
    DistillResult d = distill(distiller, scorer, inst);
    res.report.keys.emplace_back(inst.seq_id, inst.offset);
    chd.values.push_back(d.metric);
    const std::int64_t l_d = d.card_d;
    auto g = gs_given_length(scorer, inst, l_d, &res.gs_counter);
    gs.values.push_back(g.dppl_d - g.dppl_l);
    auto r = rd_given_length(scorer, inst, l_d, cfg.M, rng, &res.rd_counter);
    rd.values.push_back(r.dppl_d - r.dppl_l);
    res.rd_masks.push_back(r.y);
    res.chd.push_back(std::move(d));
  }
  finalize(chd);
  finalize(gs);
  finalize(rd);
  res.report.methods = {std::move(chd), std::move(gs), std::move(rd)};
  return res;
}

CardEvalResult eval_card_diff(const DistillerModel& distiller,
                              const FullyNnModel& scorer,
                              const std::vector<DistillInstance>& instances,
                              const EvalConfig& cfg) {
  CardEvalResult res;
  res.report.metric_name = "card-diff";
  res.report.seed = cfg.seed;
  MethodColumn chd{.name = "chd"}, gs{.name = "gs"}, rd{.name = "rd"},
      oracle{.name = "oracle"};
  Rng rng = make_rng(cfg.seed, 0xCA4D);

  for (const auto& inst : instances) {
    DistillResult d = distill(distiller, scorer, inst);
    res.report.keys.emplace_back(inst.seq_id, inst.offset);
    TargetPair targets{d.dppl_d, d.dppl_l};
    chd.values.push_back(static_cast<double>(d.card_d));
    chd.censored.push_back(0);

    auto g = gs_given_target(scorer, inst, targets, &res.gs_counter);
    gs.values.push_back(static_cast<double>(g.count));
    gs.censored.push_back(g.capped ? 1 : 0);

    auto r = rd_given_target(scorer, inst, targets, cfg.M, rng,
                             &res.rd_counter);
    rd.values.push_back(static_cast<double>(r.count));
    rd.censored.push_back(r.capped ? 1 : 0);

    if (cfg.with_oracle &&
        static_cast<int>(inst.history.size()) <= cfg.oracle_n_max) {
      auto o = exhaustive_oracle(scorer, inst, cfg.eps, cfg.oracle_n_max);
      if (o.feasible) {
        oracle.values.push_back(static_cast<double>(o.card));
        oracle.censored.push_back(0);
      } else {
        oracle.values.push_back(static_cast<double>(inst.history.size()));
        oracle.censored.push_back(1);
        ++res.oracle_infeasible;
      }
    } else if (cfg.with_oracle) {
      ++oracle.skipped;
    }
    res.chd.push_back(std::move(d));
  }
  finalize(chd);
  finalize(gs);
  finalize(rd);
  res.report.methods = {std::move(chd), std::move(gs), std::move(rd)};
  if (cfg.with_oracle) {
    finalize(oracle);
    res.report.methods.push_back(std::move(oracle));
  }
  return res;
}

TimingReport timing_harness(const DistillerModel& distiller,
                            const FullyNnModel& scorer,
                            const std::vector<DistillInstance>& instances,
                            const EvalConfig& cfg) {
  TimingReport rep;
  if (instances.empty()) return rep;
  // warm-up outside the measured region
  (void)distill(distiller, scorer, instances.front());

  Rng rng = make_rng(cfg.seed, 0x7133);
  EvalCounter gs_c, rd_c;
  for (const auto& inst : instances) {
    auto t0 = Clock::now();
    DistillResult d = distill(distiller, scorer, inst);
    rep.chd_seconds += seconds_since(t0);

    t0 = Clock::now();
    (void)gs_given_length(scorer, inst, d.card_d, &gs_c);
    rep.gs_seconds += seconds_since(t0);

    t0 = Clock::now();
    (void)rd_given_length(scorer, inst, d.card_d, cfg.M, rng, &rd_c);
    rep.rd_seconds += seconds_since(t0);
    ++rep.count;
  }
  rep.gs_evals = gs_c.evals;
  rep.rd_evals = rd_c.evals;
  rep.gs_ratio = rep.gs_seconds / rep.chd_seconds;
  rep.rd_ratio = rep.rd_seconds / rep.chd_seconds;
  const double n = static_cast<double>(rep.count);
  rep.tbar_total_per_instance =
      (rep.chd_seconds + rep.gs_seconds + rep.rd_seconds) / n;
  rep.tbar_mean_over_methods = rep.tbar_total_per_instance / 3.0;
  return rep;
}

std::string timing_to_json(const TimingReport& r) {
  json j;
  j["count"] = r.count;
  j["chd_seconds"] = r.chd_seconds;
  j["gs_seconds"] = r.gs_seconds;
  j["rd_seconds"] = r.rd_seconds;
  j["chd_ratio"] = 1.0;
  j["gs_ratio"] = r.gs_ratio;
  j["rd_ratio"] = r.rd_ratio;
  j["tbar_mean_over_methods"] = r.tbar_mean_over_methods;
  j["tbar_total_per_instance"] = r.tbar_total_per_instance;
  j["gs_evals"] = r.gs_evals;
  j["rd_evals"] = r.rd_evals;
  return j.dump();
}

CaseStudyRecord case_mark_percentage(
    const std::vector<DistillInstance>& instances,
    const std::vector<DistillResult>& chd,
    const std::vector<std::vector<std::uint8_t>>& rd_masks, int mark_count) {
  if (instances.size() != chd.size() || instances.size() != rd_masks.size())
    throw std::invalid_argument("case_mark_percentage: result size mismatch");
  CaseStudyRecord rec;
  std::vector<std::int64_t> chd_dist(mark_count, 0), chd_tot(mark_count, 0);
  std::vector<std::int64_t> rd_dist(mark_count, 0), rd_tot(mark_count, 0);
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& h = instances[i].history;
    for (size_t e = 0; e < h.size(); ++e) {
      int m = h[e].mark;
      ++chd_tot[m];
      ++rd_tot[m];
      if (chd[i].y[e]) ++chd_dist[m];
      if (rd_masks[i][e]) ++rd_dist[m];
    }
  }
  const double nan = std::nan("");
  for (int m = 0; m < mark_count; ++m) {
    rec.chd_mark_total.push_back(chd_tot[m]);
    rec.rd_mark_total.push_back(rd_tot[m]);
    rec.chd_mark_fraction.push_back(
        chd_tot[m] > 0 ? double(chd_dist[m]) / chd_tot[m] : nan);
    rec.rd_mark_fraction.push_back(
        rd_tot[m] > 0 ? double(rd_dist[m]) / rd_tot[m] : nan);
    double p = stats::two_proportion_greater(chd_dist[m], chd_tot[m],
                                             rd_dist[m], rd_tot[m]);
    rec.mark_p_values.push_back(std::min(1.0, p * mark_count));  // Bonferroni
  }
  return rec;
}

CaseStudyRecord case_length_and_trace(
    const std::vector<DistillInstance>& instances,
    const std::vector<DistillResult>& chd) {
  if (instances.size() != chd.size())
    throw std::invalid_argument("case_length_and_trace: result size mismatch");
  CaseStudyRecord rec;

  // length distribution
  std::int64_t max_card = 0;
  for (const auto& d : chd) max_card = std::max(max_card, d.card_d);
  rec.length_pdf.assign(static_cast<size_t>(max_card) + 1, 0.0);
  for (const auto& d : chd)
    rec.length_pdf[static_cast<size_t>(d.card_d)] += 1.0;
  double total = static_cast<double>(chd.size());
  double run = 0.0;
  for (auto& p : rec.length_pdf) {
    p /= total;
    run += p;
    rec.length_cdf.push_back(run);
  }

  // order results by (seq_id, offset)
  std::vector<size_t> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (instances[a].seq_id != instances[b].seq_id)
      return instances[a].seq_id < instances[b].seq_id;
    return instances[a].offset < instances[b].offset;
  });

  // absolute identity of a distilled event: original index offset + position
  auto distilled_ids = [&](size_t i) {
    std::vector<std::int64_t> ids;
    for (size_t e = 0; e < chd[i].y.size(); ++e)
      if (chd[i].y[e]) ids.push_back(instances[i].offset +
                                     static_cast<std::int64_t>(e));
    return ids;
  };

  size_t i = 0;
  while (i < order.size()) {
    SequenceTrace trace;
    trace.seq_id = instances[order[i]].seq_id;
    TraceSegment seg;
    seg.points.emplace_back(instances[order[i]].offset, chd[order[i]].card_d);
    size_t j = i;
    while (j + 1 < order.size() &&
           instances[order[j + 1]].seq_id == trace.seq_id) {
      const auto& cur = instances[order[j]];
      const auto& nxt = instances[order[j + 1]];
      if (nxt.offset != cur.offset + 1) {
        // gap: segment the trace, no add/eject accounting across it
        rec.offset_gaps = true;
        trace.segments.push_back(std::move(seg));
        seg = TraceSegment{};
      } else {
        auto a = distilled_ids(order[j]);
        auto b = distilled_ids(order[j + 1]);
        std::int64_t added = 0, ejected = 0;
        for (auto id : b)
          if (std::find(a.begin(), a.end(), id) == a.end()) ++added;
        for (auto id : a)
          if (std::find(b.begin(), b.end(), id) == b.end()) ++ejected;
        ++rec.addition_hist[added];
        ++rec.ejection_hist[ejected];
      }
      seg.points.emplace_back(nxt.offset, chd[order[j + 1]].card_d);
      ++j;
    }
    trace.segments.push_back(std::move(seg));
    rec.traces.push_back(std::move(trace));
    i = j + 1;
  }
  return rec;
}

namespace {

json fraction_array(const std::vector<double>& v) {
  json arr = json::array();
  for (double x : v) {
    if (std::isnan(x))
      arr.push_back(nullptr);
    else
      arr.push_back(x);
  }
  return arr;
}

}  // namespace

std::string case_study_to_json(const CaseStudyRecord& r) {
  json j;
  if (!r.chd_mark_fraction.empty()) {
    j["chd_mark_fraction"] = fraction_array(r.chd_mark_fraction);
    j["rd_mark_fraction"] = fraction_array(r.rd_mark_fraction);
    j["mark_p_values"] = r.mark_p_values;
    j["chd_mark_total"] = r.chd_mark_total;
    j["rd_mark_total"] = r.rd_mark_total;
  }
  if (!r.length_pdf.empty()) {
    j["length_pdf"] = r.length_pdf;
    j["length_cdf"] = r.length_cdf;
    json add = json::object(), eject = json::object();
    for (const auto& [k, v] : r.addition_hist) add[std::to_string(k)] = v;
    for (const auto& [k, v] : r.ejection_hist) eject[std::to_string(k)] = v;
    j["addition_hist"] = add;
    j["ejection_hist"] = eject;
    j["offset_gaps"] = r.offset_gaps;
    json traces = json::array();
    for (const auto& t : r.traces) {
      json jt;
      jt["seq_id"] = t.seq_id;
      json segs = json::array();
      for (const auto& s : t.segments) {
        json pts = json::array();
        for (const auto& [o, c] : s.points) pts.push_back(json::array({o, c}));
        segs.push_back(pts);
      }
      jt["segments"] = segs;
      traces.push_back(std::move(jt));
    }
    j["traces"] = traces;
  }
  return j.dump();
}

std::string case_study_to_csv(const CaseStudyRecord& r) {
  std::ostringstream os;
  os << "family,key,value\n";
  for (size_t m = 0; m < r.chd_mark_fraction.size(); ++m) {
    os << "chd_mark_fraction," << m << "," << r.chd_mark_fraction[m] << "\n";
    os << "rd_mark_fraction," << m << "," << r.rd_mark_fraction[m] << "\n";
    os << "mark_p_value," << m << "," << r.mark_p_values[m] << "\n";
  }
  for (size_t c = 0; c < r.length_pdf.size(); ++c) {
    os << "length_pdf," << c << "," << r.length_pdf[c] << "\n";
    os << "length_cdf," << c << "," << r.length_cdf[c] << "\n";
  }
  for (const auto& [k, v] : r.addition_hist)
    os << "addition_hist," << k << "," << v << "\n";
  for (const auto& [k, v] : r.ejection_hist)
    os << "ejection_hist," << k << "," << v << "\n";
  for (const auto& t : r.traces)
    for (size_t s = 0; s < t.segments.size(); ++s)
      for (const auto& [o, c] : t.segments[s].points)
        os << "trace," << t.seq_id << ":" << s << ":" << o << "," << c << "\n";
  return os.str();
}

}  // namespace ehd
