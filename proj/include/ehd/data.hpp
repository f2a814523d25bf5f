#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ehd {

struct Event {
  int mark = 0;
  double time = 0.0;
};

struct EventSequence {
  std::int64_t seq_id = 0;
  double t0 = 0.0;
  double T = 0.0;
  std::vector<Event> events;
  // optional per-event flags: event belongs to the planted-cause mark set
  std::vector<std::uint8_t> cause;
};

// One (H_f, x_o) pair produced by sliding-window extraction.
struct DistillInstance {
  std::int64_t seq_id = 0;
  std::int64_t offset = 0;
  std::vector<Event> history;
  std::vector<Event> future;
  std::vector<std::uint8_t> history_cause;  // empty unless synthetic

  // Window time origin: the first history event's time. Inter-event
  // intervals inside the window are taken relative to this.
  double t0() const { return history.front().time; }
};

struct DatasetManifest {
  std::string name;
  int mark_count = 0;
  double t0 = 0.0;
  double T = 0.0;
  std::int64_t num_sequences = 0;
  std::int64_t num_events = 0;
  double mean_interval = 0.0;  // interval scale statistic
  int len_xo = 0;
  int len_hf = 0;
  std::int64_t num_instances = 0;
  std::int64_t skipped_short = 0;
  std::string source_digest;
  std::vector<std::string> mark_names;
};

// ---- JSON-lines I/O ---------------------------------------------------------
// Sequence files: one {"seq_id","t0","T","events":[[mark,time],...]} object
// per line ("cause" bit array optional). Instance files: one
// {"seq_id","offset","history","future"} object per line.

std::vector<EventSequence> read_sequences(const std::string& path);
void write_sequences(const std::string& path,
                     const std::vector<EventSequence>& seqs);

std::vector<DistillInstance> read_instances(const std::string& path,
                                            std::int64_t limit = -1);
void write_instances(const std::string& path,
                     const std::vector<DistillInstance>& instances);

std::string read_file_digest(const std::string& path);  // FNV-1a 64, hex

// ---- ingestion ----------------------------------------------------------

struct IngestReport {
  std::vector<EventSequence> sequences;
  DatasetManifest manifest;
  std::int64_t bad_records = 0;
  std::vector<std::string> diagnostics;
};

// Validates mark ranges and time monotonicity. Tied or backward timestamps
// within jitter tolerance are repaired by adding 1e-9 * index jitter
// (recorded in the diagnostics). Hard-fails if more than 1% of records are
// bad or the file is empty.
IngestReport ingest(const std::string& path, int mark_count);

// ---- windowing and splits ----------------------------------------------

// Every sequence of length l >= len_xo + len_hf yields l - window + 1
// instances; shorter sequences are skipped and counted.
std::vector<DistillInstance> sliding_windows(
    const std::vector<EventSequence>& seqs, int len_xo, int len_hf,
    std::int64_t* skipped_short = nullptr);

struct SplitResult {
  std::vector<DistillInstance> train;
  std::vector<DistillInstance> eval;
  std::vector<DistillInstance> test_full;
  std::vector<DistillInstance> test_sampled;
};

// Deterministic split by source-sequence hash (80/10/10); no window from one
// sequence straddles splits. test_sampled is drawn uniformly without
// replacement from test_full with the given seed.
SplitResult split_and_sample(const std::vector<DistillInstance>& instances,
                             std::int64_t sample_size, std::uint64_t seed);

}  // namespace ehd
