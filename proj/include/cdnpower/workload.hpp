#pragma once

// Trace ingestion and generation: the CSV trace format, seeded diurnal
// traces, flash-crowd spikes, and the cluster sets and virtual clusters used
// for global load balancing experiments.
//
// Trace CSV: header `timestamp,cluster_id,load`, one row per slot, timestamp
// in UTC epoch seconds at slot start, load in server capacities. Rows of one
// cluster must be slot-contiguous; clusters may be interleaved.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cdnpower/model.hpp"

namespace cdnpower {

// One trace per cluster_id, sorted by id. Loads are divided by
// `peak_capacity` so raw request rates can be normalised on the way in.
std::vector<LoadTrace> ingest_csv(std::istream& in, int slot_seconds = 300,
                                  double peak_capacity = 1.0);
std::vector<LoadTrace> ingest_csv_file(const std::filesystem::path& path, int slot_seconds = 300,
                                       double peak_capacity = 1.0);

// Writes traces one after another in the same format. Loads use the
// shortest round-trip representation, so write/ingest/write is stable.
void write_csv(std::ostream& out, std::span<const LoadTrace> traces);
void write_csv_file(const std::filesystem::path& path, std::span<const LoadTrace> traces);

struct DiurnalParams {
  std::string cluster_id = "c0";
  std::int64_t start_time = 0;
  int days = 1;
  int slot_seconds = 300;
  int m_total = 1;
  double base_frac = 0.3;
  double amp_frac = 0.1;
  double noise_frac = 0.0;
  // Negates the noise sequence; two clusters generated from the same seed,
  // one inverted, have exactly anti-correlated noise.
  bool invert_noise = false;

  void validate() const;
};

// lambda_t = M * (base + amp * sin(2 pi t / slots_per_day - pi / 2) + eps_t)
// for t = 0..n-1, eps_t uniform in [-noise, noise], clamped at 0. The
// sinusoid bottoms out at t = 0 (local midnight).
LoadTrace synth_diurnal(const DiurnalParams& params, std::uint64_t seed);

struct SpikeSpec {
  double magnitude_frac = 0.30;  // peak height as a fraction of M
  int duration_slots = 12;       // plateau length
  double rho = 0.05;             // ramp rate, fraction of M per slot
  std::size_t start_slot = 0;    // zero-based slot of the first ramp step

  void validate() const;
  // Ramp length in slots: ceil(magnitude / rho).
  int ramp_slots() const;
  // Ramp up + plateau + ramp down.
  std::size_t footprint() const;
};

// The additive trapezoid, in absolute load, one entry per footprint slot:
// min(j rho, mag) M for j = 1..r, mag M for the plateau, then
// max(mag - j rho, 0) M for j = 1..r.
std::vector<double> spike_profile(const SpikeSpec& spec, int m_total);

// Adds the trapezoid to the trace. The result is not clamped to Lambda M.
LoadTrace inject_spike(const LoadTrace& trace, const SpikeSpec& spec, int m_total);

// Start slot of the quietest one-hour window whose local slot-of-day falls
// within [night_begin_hour, night_end_hour) (wrapping past midnight), among
// starts at or after `earliest_slot` that leave `footprint` slots before the
// end of the trace.
std::size_t quietest_hour_start(const LoadTrace& trace, double night_begin_hour,
                                double night_end_hour, std::size_t footprint,
                                std::size_t earliest_slot = 0, int utc_offset_seconds = 0);

struct ClusterSet {
  std::string id;
  std::vector<std::string> members;
  ClusterConfig merged_config;
  LoadTrace merged_trace;
};

// Treats the members as one cluster: capacities and loads are summed slot by
// slot. Members must share slot length, length and lambda_cap.
ClusterSet make_cluster_set(const std::string& id, std::span<const LoadTrace> traces,
                            std::span<const ClusterConfig> configs);

// Cuts `copies` disjoint windows of `period_days` from the trace, starting at
// the first local midnight, and re-bases them all to the start time of the
// first window. Trailing slots are dropped. Window k is named "<id>#v<k>".
std::vector<LoadTrace> slice_virtual_clusters(const LoadTrace& trace, int period_days = 3,
                                              int copies = 8, int utc_offset_seconds = 0);

}  // namespace cdnpower
