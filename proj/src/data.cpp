#include "ehd/data.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ehd/rng.hpp"
#include "json.hpp"

namespace ehd {

using nlohmann::json;

namespace {

json events_to_json(const std::vector<Event>& evs) {
  json arr = json::array();
  for (const auto& e : evs) arr.push_back(json::array({e.mark, e.time}));
  return arr;
}

std::vector<Event> events_from_json(const json& arr) {
  std::vector<Event> out;
  out.reserve(arr.size());
  for (const auto& e : arr)
    out.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
  return out;
}

}  // namespace

std::vector<EventSequence> read_sequences(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open sequence file: " + path);
  std::vector<EventSequence> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    EventSequence s;
    s.seq_id = j.at("seq_id").get<std::int64_t>();
    s.t0 = j.at("t0").get<double>();
    s.T = j.at("T").get<double>();
    s.events = events_from_json(j.at("events"));
    if (j.contains("cause"))
      s.cause = j.at("cause").get<std::vector<std::uint8_t>>();
    out.push_back(std::move(s));
  }
  return out;
}

void write_sequences(const std::string& path,
                     const std::vector<EventSequence>& seqs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& s : seqs) {
    json j;
    j["seq_id"] = s.seq_id;
    j["t0"] = s.t0;
    j["T"] = s.T;
    j["events"] = events_to_json(s.events);
    if (!s.cause.empty()) j["cause"] = s.cause;
    os << j.dump() << "\n";
  }
}

std::vector<DistillInstance> read_instances(const std::string& path,
                                            std::int64_t limit) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open instance file: " + path);
  std::vector<DistillInstance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (limit >= 0 && static_cast<std::int64_t>(out.size()) >= limit) break;
    json j = json::parse(line);
    DistillInstance d;
    d.seq_id = j.at("seq_id").get<std::int64_t>();
    d.offset = j.at("offset").get<std::int64_t>();
    d.history = events_from_json(j.at("history"));
    d.future = events_from_json(j.at("future"));
    if (j.contains("history_cause"))
      d.history_cause = j.at("history_cause").get<std::vector<std::uint8_t>>();
    out.push_back(std::move(d));
  }
  return out;
}

void write_instances(const std::string& path,
                     const std::vector<DistillInstance>& instances) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& d : instances) {
    json j;
    j["seq_id"] = d.seq_id;
    j["offset"] = d.offset;
    j["history"] = events_to_json(d.history);
    j["future"] = events_to_json(d.future);
    if (!d.history_cause.empty()) j["history_cause"] = d.history_cause;
    os << j.dump() << "\n";
  }
}

std::string read_file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for digest: " + path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ull;
    }
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

IngestReport ingest(const std::string& path, int mark_count) {
  auto raw = read_sequences(path);
  if (raw.empty()) throw std::runtime_error("ingest: empty dataset " + path);

  IngestReport rep;
  std::int64_t total = 0;
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  double interval_sum = 0.0;
  std::int64_t interval_count = 0;

  for (auto& seq : raw) {
    ++total;
    bool bad = false;
    std::ostringstream diag;
    if (seq.events.empty()) {
      bad = true;
      diag << "seq " << seq.seq_id << ": no events";
    }
    for (size_t i = 0; !bad && i < seq.events.size(); ++i) {
      auto& e = seq.events[i];
      if (e.mark < 0 || e.mark >= mark_count) {
        bad = true;
        diag << "seq " << seq.seq_id << " event " << i
             << ": mark out of range (" << e.mark << ")";
        break;
      }
      if (e.time < seq.t0 || e.time > seq.T) {
        bad = true;
        diag << "seq " << seq.seq_id << " event " << i
             << ": time outside [t0, T]";
        break;
      }
      if (i > 0 && e.time <= seq.events[i - 1].time) {
        // tie repair: strict ordering is required downstream
        double repaired =
            seq.events[i - 1].time + 1e-9 * static_cast<double>(i);
        if (e.time < seq.events[i - 1].time - 1e-6) {
          bad = true;
          diag << "seq " << seq.seq_id << " event " << i
               << ": non-monotone time beyond jitter repair";
          break;
        }
        rep.diagnostics.push_back(
            "seq " + std::to_string(seq.seq_id) + " event " +
            std::to_string(i) + ": tie jitter-repaired");
        e.time = repaired;
      }
    }
    if (bad) {
      ++rep.bad_records;
      rep.diagnostics.push_back(diag.str());
      continue;
    }
    t_min = std::min(t_min, seq.t0);
    t_max = std::max(t_max, seq.T);
    for (size_t i = 1; i < seq.events.size(); ++i) {
      interval_sum += seq.events[i].time - seq.events[i - 1].time;
      ++interval_count;
    }
    rep.manifest.num_events += static_cast<std::int64_t>(seq.events.size());
    rep.sequences.push_back(std::move(seq));
  }

  if (rep.bad_records * 100 > total)
    throw std::runtime_error("ingest: more than 1% bad records in " + path);

  rep.manifest.mark_count = mark_count;
  rep.manifest.num_sequences = static_cast<std::int64_t>(rep.sequences.size());
  rep.manifest.t0 = t_min;
  rep.manifest.T = t_max;
  rep.manifest.mean_interval =
      interval_count > 0 ? interval_sum / static_cast<double>(interval_count)
                         : 1.0;
  rep.manifest.source_digest = read_file_digest(path);
  return rep;
}

std::vector<DistillInstance> sliding_windows(
    const std::vector<EventSequence>& seqs, int len_xo, int len_hf,
    std::int64_t* skipped_short) {
  if (len_xo < 1 || len_hf < 1)
    throw std::invalid_argument("sliding_windows: window lengths must be >= 1");
  const int window = len_xo + len_hf;
  std::vector<DistillInstance> out;
  std::int64_t skipped = 0;
  for (const auto& s : seqs) {
    const auto l = static_cast<std::int64_t>(s.events.size());
    if (l < window) {
      ++skipped;
      continue;
    }
    for (std::int64_t off = 0; off + window <= l; ++off) {
      DistillInstance d;
      d.seq_id = s.seq_id;
      d.offset = off;
      d.history.assign(s.events.begin() + off,
                       s.events.begin() + off + len_hf);
      d.future.assign(s.events.begin() + off + len_hf,
                      s.events.begin() + off + window);
      if (!s.cause.empty())
        d.history_cause.assign(s.cause.begin() + off,
                               s.cause.begin() + off + len_hf);
      out.push_back(std::move(d));
    }
  }
  if (skipped_short) *skipped_short = skipped;
  return out;
}

SplitResult split_and_sample(const std::vector<DistillInstance>& instances,
                             std::int64_t sample_size, std::uint64_t seed) {
  SplitResult res;
  auto bucket = [](std::int64_t seq_id) {
    // splitmix64 over the sequence id; buckets 0-79 train, 80-89 eval, rest test
    std::uint64_t z = static_cast<std::uint64_t>(seq_id) + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return (z ^ (z >> 31)) % 100;
  };
  for (const auto& d : instances) {
    std::uint64_t b = bucket(d.seq_id);
    if (b < 80)
      res.train.push_back(d);
    else if (b < 90)
      res.eval.push_back(d);
    else
      res.test_full.push_back(d);
  }
  if (sample_size > static_cast<std::int64_t>(res.test_full.size()))
    throw std::invalid_argument(
        "split_and_sample: requested sample larger than test set");
  // Fisher-Yates prefix for sampling without replacement
  std::vector<std::int64_t> idx(res.test_full.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
  Rng rng = make_rng(seed, 0xDA7A);
  for (std::int64_t i = 0; i < sample_size; ++i) {
    auto j = i + static_cast<std::int64_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(sample_size);
  std::sort(idx.begin(), idx.end());
  for (auto i : idx) res.test_sampled.push_back(res.test_full[i]);
  return res;
}

}  // namespace ehd
