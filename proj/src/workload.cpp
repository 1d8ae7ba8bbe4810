#include "cdnpower/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "cdnpower/error.hpp"
#include "cdnpower/numfmt.hpp"

namespace cdnpower {

namespace {

constexpr int kSecondsPerDay = 86400;
constexpr std::string_view kHeader = "timestamp,cluster_id,load";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

int slots_per_day(int slot_seconds) {
  if (slot_seconds <= 0 || kSecondsPerDay % slot_seconds != 0) {
    throw ValidationError(
        fmt::format("slot length {} s does not divide a day", slot_seconds));
  }
  return kSecondsPerDay / slot_seconds;
}

std::int64_t positive_mod(std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; }

// Uniform in [0, 1) from the top 53 bits, independent of the standard
// library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::vector<LoadTrace> ingest_csv(std::istream& in, int slot_seconds, double peak_capacity) {
  if (slot_seconds <= 0) throw ValidationError("ingest: slot_seconds must be > 0");
  if (!(peak_capacity > 0.0)) throw ValidationError("ingest: peak capacity must be > 0");

  struct Pending {
    LoadTrace trace;
    std::int64_t last_timestamp = 0;
  };
  std::map<std::string, Pending> by_cluster;

  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    if (!header_seen) {
      if (text != kHeader) {
        throw IngestionError(row, fmt::format("row {}: expected header '{}'", row, kHeader));
      }
      header_seen = true;
      continue;
    }

    const auto c1 = text.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : text.find(',', c1 + 1);
    if (c2 == std::string_view::npos || text.find(',', c2 + 1) != std::string_view::npos) {
      throw IngestionError(row, fmt::format("row {}: expected 3 fields", row));
    }
    const auto ts = parse_number<std::int64_t>(trim(text.substr(0, c1)));
    const std::string id(trim(text.substr(c1 + 1, c2 - c1 - 1)));
    const auto load = parse_number<double>(trim(text.substr(c2 + 1)));
    if (!ts || !load || id.empty()) {
      throw IngestionError(row, fmt::format("row {}: malformed fields in '{}'", row, text));
    }
    if (!(*load >= 0.0) || !std::isfinite(*load)) {
      throw ValidationError(fmt::format("row {}: load {} must be non-negative", row, *load));
    }

    auto [it, fresh] = by_cluster.try_emplace(id);
    Pending& p = it->second;
    if (fresh) {
      p.trace.cluster_id = id;
      p.trace.start_time = *ts;
      p.trace.slot_seconds = slot_seconds;
    } else if (*ts != p.last_timestamp + slot_seconds) {
      throw IngestionError(
          row, fmt::format("row {}: cluster {} jumps from t={} to t={} (expected +{} s)", row, id,
                           p.last_timestamp, *ts, slot_seconds));
    }
    p.last_timestamp = *ts;
    p.trace.loads.push_back(*load / peak_capacity);
  }

  if (!header_seen) throw IngestionError(row, "ingest: empty input");
  if (by_cluster.empty()) throw IngestionError(row, "ingest: no data rows");

  std::vector<LoadTrace> traces;
  traces.reserve(by_cluster.size());
  for (auto& [id, p] : by_cluster) traces.push_back(std::move(p.trace));
  return traces;
}

std::vector<LoadTrace> ingest_csv_file(const std::filesystem::path& path, int slot_seconds,
                                       double peak_capacity) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open trace file {}", path.string()));
  return ingest_csv(in, slot_seconds, peak_capacity);
}

void write_csv(std::ostream& out, std::span<const LoadTrace> traces) {
  out << kHeader << '\n';
  for (const auto& trace : traces) {
    if (trace.cluster_id.find_first_of(",\n\r") != std::string::npos) {
      throw ValidationError(fmt::format("cluster id '{}' cannot be written as CSV", trace.cluster_id));
    }
    for (std::size_t t = 0; t < trace.size(); ++t) {
      out << trace.start_time + static_cast<std::int64_t>(t) * trace.slot_seconds << ','
          << trace.cluster_id << ',' << format_double(trace.loads[t]) << '\n';
    }
  }
}

void write_csv_file(const std::filesystem::path& path, std::span<const LoadTrace> traces) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  write_csv(out, traces);
  if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

void DiurnalParams::validate() const {
  if (days <= 0) throw ValidationError(fmt::format("synth: days must be > 0, got {}", days));
  slots_per_day(slot_seconds);
  if (m_total < 1) throw ValidationError("synth: m_total must be >= 1");
  if (base_frac < 0.0 || amp_frac < 0.0 || noise_frac < 0.0) {
    throw ValidationError("synth: base, amplitude and noise must be >= 0");
  }
  if (base_frac - amp_frac < 0.0) {
    throw ValidationError(
        fmt::format("synth: amplitude {} exceeds base {}", amp_frac, base_frac));
  }
}

LoadTrace synth_diurnal(const DiurnalParams& params, std::uint64_t seed) {
  params.validate();
  const int spd = slots_per_day(params.slot_seconds);
  const std::size_t n = static_cast<std::size_t>(params.days) * static_cast<std::size_t>(spd);

  LoadTrace trace;
  trace.cluster_id = params.cluster_id;
  trace.start_time = params.start_time;
  trace.slot_seconds = params.slot_seconds;
  trace.loads.resize(n);

  std::mt19937_64 rng(seed);
  const double sign = params.invert_noise ? -1.0 : 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / spd - std::numbers::pi / 2;
    const double eps = sign * params.noise_frac * (2.0 * unit_uniform(rng) - 1.0);
    const double frac = params.base_frac + params.amp_frac * std::sin(phase) + eps;
    trace.loads[t] = std::max(0.0, params.m_total * frac);
  }
  return trace;
}

void SpikeSpec::validate() const {
  if (!(magnitude_frac > 0.0 && magnitude_frac <= 1.0)) {
    throw ValidationError(fmt::format("spike: magnitude must lie in (0, 1], got {}", magnitude_frac));
  }
  if (!(rho > 0.0)) throw ValidationError(fmt::format("spike: rho must be > 0, got {}", rho));
  if (duration_slots < 1) {
    throw ValidationError(fmt::format("spike: duration must be >= 1 slot, got {}", duration_slots));
  }
}

int SpikeSpec::ramp_slots() const {
  return static_cast<int>(std::ceil(magnitude_frac / rho - 1e-9));
}

std::size_t SpikeSpec::footprint() const {
  return 2 * static_cast<std::size_t>(ramp_slots()) + static_cast<std::size_t>(duration_slots);
}

std::vector<double> spike_profile(const SpikeSpec& spec, int m_total) {
  spec.validate();
  const int ramp = spec.ramp_slots();
  std::vector<double> profile;
  profile.reserve(spec.footprint());
  for (int j = 1; j <= ramp; ++j) {
    profile.push_back(std::min(j * spec.rho, spec.magnitude_frac) * m_total);
  }
  for (int j = 0; j < spec.duration_slots; ++j) profile.push_back(spec.magnitude_frac * m_total);
  for (int j = 1; j <= ramp; ++j) {
    double frac = spec.magnitude_frac - j * spec.rho;
    if (frac < 1e-12) frac = 0.0;
    profile.push_back(frac * m_total);
  }
  return profile;
}

LoadTrace inject_spike(const LoadTrace& trace, const SpikeSpec& spec, int m_total) {
  const std::vector<double> profile = spike_profile(spec, m_total);
  if (spec.start_slot + profile.size() > trace.size()) {
    throw ValidationError(fmt::format(
        "spike: {} slots starting at slot {} overrun a trace of {} slots", profile.size(),
        spec.start_slot, trace.size()));
  }
  LoadTrace out = trace;
  for (std::size_t j = 0; j < profile.size(); ++j) out.loads[spec.start_slot + j] += profile[j];
  return out;
}

std::size_t quietest_hour_start(const LoadTrace& trace, double night_begin_hour,
                                double night_end_hour, std::size_t footprint,
                                std::size_t earliest_slot, int utc_offset_seconds) {
  const std::size_t window =
      static_cast<std::size_t>(std::max(1, (3600 + trace.slot_seconds - 1) / trace.slot_seconds));
  const std::size_t reach = std::max(window, footprint);
  if (trace.size() < reach) throw ValidationError("spike placement: trace shorter than the spike");

  std::vector<double> prefix(trace.size() + 1, 0.0);
  for (std::size_t t = 0; t < trace.size(); ++t) prefix[t + 1] = prefix[t] + trace.loads[t];

  const bool wraps = night_begin_hour > night_end_hour;
  std::size_t best = trace.size();
  double best_sum = 0.0;
  for (std::size_t s = earliest_slot; s + reach <= trace.size(); ++s) {
    const std::int64_t local =
        trace.start_time + utc_offset_seconds + static_cast<std::int64_t>(s) * trace.slot_seconds;
    const double hour = static_cast<double>(positive_mod(local, kSecondsPerDay)) / 3600.0;
    const bool in_night = wraps ? (hour >= night_begin_hour || hour < night_end_hour)
                                : (hour >= night_begin_hour && hour < night_end_hour);
    if (!in_night) continue;
    const double sum = prefix[s + window] - prefix[s];
    if (best == trace.size() || sum < best_sum) {
      best = s;
      best_sum = sum;
    }
  }
  if (best == trace.size()) throw ValidationError("spike placement: no start inside the night window");
  return best;
}

ClusterSet make_cluster_set(const std::string& id, std::span<const LoadTrace> traces,
                            std::span<const ClusterConfig> configs) {
  if (traces.empty()) throw ValidationError(fmt::format("cluster set {}: no members", id));

  ClusterSet set;
  set.id = id;
  set.merged_config.id = id;
  set.merged_config.m_total = 0;
  set.merged_trace.cluster_id = id;
  set.merged_trace.start_time = traces.front().start_time;
  set.merged_trace.slot_seconds = traces.front().slot_seconds;
  set.merged_trace.loads.assign(traces.front().size(), 0.0);

  std::optional<double> lambda;
  for (const auto& trace : traces) {
    const auto cfg = std::find_if(configs.begin(), configs.end(),
                                  [&](const ClusterConfig& c) { return c.id == trace.cluster_id; });
    if (cfg == configs.end()) {
      throw ValidationError(fmt::format("cluster set {}: no config for member {}", id, trace.cluster_id));
    }
    if (trace.slot_seconds != set.merged_trace.slot_seconds || trace.size() != set.merged_trace.size()) {
      throw ValidationError(fmt::format(
          "cluster set {}: member {} has {} slots of {} s, expected {} of {} s", id,
          trace.cluster_id, trace.size(), trace.slot_seconds, set.merged_trace.size(),
          set.merged_trace.slot_seconds));
    }
    if (lambda && *lambda != cfg->lambda_cap) {
      throw ValidationError(fmt::format("cluster set {}: members disagree on lambda_cap", id));
    }
    lambda = cfg->lambda_cap;
    set.members.push_back(trace.cluster_id);
    set.merged_config.m_total += cfg->m_total;
    for (std::size_t t = 0; t < trace.size(); ++t) set.merged_trace.loads[t] += trace.loads[t];
  }
  set.merged_config.lambda_cap = *lambda;
  return set;
}

std::vector<LoadTrace> slice_virtual_clusters(const LoadTrace& trace, int period_days, int copies,
                                              int utc_offset_seconds) {
  if (period_days < 1 || copies < 1) {
    throw ValidationError("slice: period_days and copies must be >= 1");
  }
  const int spd = slots_per_day(trace.slot_seconds);
  const std::int64_t local_sod =
      positive_mod(trace.start_time + utc_offset_seconds, kSecondsPerDay);
  if (local_sod % trace.slot_seconds != 0) {
    throw ValidationError("slice: trace start is not aligned to a slot boundary of the day");
  }
  const std::size_t skip =
      local_sod == 0 ? 0 : static_cast<std::size_t>((kSecondsPerDay - local_sod) / trace.slot_seconds);
  const std::size_t period = static_cast<std::size_t>(period_days) * static_cast<std::size_t>(spd);
  const std::size_t needed = skip + period * static_cast<std::size_t>(copies);
  if (trace.size() < needed) {
    throw ValidationError(fmt::format(
        "slice: {} windows of {} days need {} slots from the first local midnight, trace {} has {}",
        copies, period_days, needed, trace.cluster_id, trace.size()));
  }

  const std::int64_t base_time =
      trace.start_time + static_cast<std::int64_t>(skip) * trace.slot_seconds;
  std::vector<LoadTrace> windows;
  for (int k = 0; k < copies; ++k) {
    LoadTrace w;
    w.cluster_id = fmt::format("{}#v{}", trace.cluster_id, k);
    w.start_time = base_time;
    w.slot_seconds = trace.slot_seconds;
    const auto first = trace.loads.begin() + static_cast<std::ptrdiff_t>(skip + k * period);
    w.loads.assign(first, first + static_cast<std::ptrdiff_t>(period));
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace cdnpower
