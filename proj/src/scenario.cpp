#include "cdnpower/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "cdnpower/error.hpp"
#include "cdnpower/numfmt.hpp"
#include "cdnpower/offline.hpp"
#include "json.hpp"
#include "parallel.hpp"
#include "toml.hpp"

namespace cdnpower {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr double kSecondsPerDay = 86400.0;

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(sep, pos);
    out.emplace_back(text.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Collects problems instead of stopping at the first one.
class Problems {
 public:
  void add(std::string msg) { list_.push_back(std::move(msg)); }
  template <typename Fn>
  void check(Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      add(e.what());
    }
  }
  void raise(std::string_view prefix) const {
    if (!list_.empty()) {
      throw ValidationError(fmt::format("{}: {}", prefix, join(list_, "; ")));
    }
  }

 private:
  std::vector<std::string> list_;
};

bool set_fleet_field(FleetSpec& spec, std::string_view key, double v) {
  auto as_int = [&](int& field) {
    if (v != std::floor(v)) throw ValidationError(fmt::format("synth.{}: {} is not an integer", key, v));
    field = static_cast<int>(v);
  };
  if (key == "clusters") as_int(spec.clusters);
  else if (key == "days") as_int(spec.days);
  else if (key == "slot_seconds") as_int(spec.slot_seconds);
  else if (key == "start_time") spec.start_time = static_cast<std::int64_t>(v);
  else if (key == "lambda_cap") spec.lambda_cap = v;
  else if (key == "m_min") as_int(spec.m_min);
  else if (key == "m_max") as_int(spec.m_max);
  else if (key == "base_min") spec.base_min = v;
  else if (key == "base_max") spec.base_max = v;
  else if (key == "amp_min") spec.amp_min = v;
  else if (key == "amp_max") spec.amp_max = v;
  else if (key == "noise_min") spec.noise_min = v;
  else if (key == "noise_max") spec.noise_max = v;
  else return false;
  return true;
}

// Typed access to one TOML table; unknown keys and wrong types become
// problems rather than exceptions.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string name, Problems& problems)
      : table_(table), name_(std::move(name)), problems_(problems) {}

  std::string field(std::string_view key) const {
    return name_.empty() ? std::string(key) : fmt::format("{}.{}", name_, key);
  }

  const toml::node* get(std::string_view key) {
    seen_.insert(std::string(key));
    return table_ ? table_->get(key) : nullptr;
  }

  template <typename T>
  std::optional<T> value(std::string_view key) {
    const toml::node* n = get(key);
    if (!n) return std::nullopt;
    if constexpr (std::is_same_v<T, double>) {
      if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) return v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (n->is_boolean()) return n->value<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (n->is_integer()) return static_cast<T>(*n->value<std::int64_t>());
    } else {
      if (n->is_string()) return n->value<std::string>();
    }
    problems_.add(fmt::format("{}: wrong type", field(key)));
    return std::nullopt;
  }

  template <typename T>
  void read(std::string_view key, T& out) {
    if (auto v = value<T>(key)) out = *v;
  }

  template <typename T>
  std::optional<std::vector<T>> list(std::string_view key) {
    const toml::node* n = get(key);
    if (!n) return std::nullopt;
    const toml::array* arr = n->as_array();
    if (!arr) {
      problems_.add(fmt::format("{}: expected an array", field(key)));
      return std::nullopt;
    }
    std::vector<T> out;
    for (const auto& el : *arr) {
      if constexpr (std::is_same_v<T, double>) {
        if (el.is_floating_point() || el.is_integer()) {
          out.push_back(*el.value<double>());
          continue;
        }
      } else if constexpr (std::is_integral_v<T>) {
        if (el.is_integer()) {
          out.push_back(static_cast<T>(*el.value<std::int64_t>()));
          continue;
        }
      } else {
        if (el.is_string()) {
          out.push_back(*el.value<std::string>());
          continue;
        }
      }
      problems_.add(fmt::format("{}: wrong element type", field(key)));
      return std::nullopt;
    }
    return out;
  }

  // Array of tables under `key`.
  std::vector<const toml::table*> tables(std::string_view key) {
    std::vector<const toml::table*> out;
    const toml::node* n = get(key);
    if (!n) return out;
    const toml::array* arr = n->as_array();
    if (!arr || !arr->is_array_of_tables()) {
      problems_.add(fmt::format("{}: expected [[{}]] entries", field(key), field(key)));
      return out;
    }
    for (const auto& el : *arr) out.push_back(el.as_table());
    return out;
  }

  const toml::table* table(std::string_view key) {
    const toml::node* n = get(key);
    if (!n) return nullptr;
    if (!n->is_table()) problems_.add(fmt::format("{}: expected a table", field(key)));
    return n->as_table();
  }

  void finish() {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.contains(std::string(k.str()))) {
        problems_.add(fmt::format("{}: unknown key", field(k.str())));
      }
    }
  }

 private:
  const toml::table* table_;
  std::string name_;
  Problems& problems_;
  std::set<std::string> seen_;
};

std::vector<int> read_durations(TableReader& r, std::string_view key, double slot_seconds,
                                Problems& problems) {
  std::vector<int> out;
  const toml::node* n = r.get(key);
  if (!n) return out;
  auto one = [&](const toml::node& el) {
    try {
      if (el.is_integer()) {
        out.push_back(static_cast<int>(*el.value<std::int64_t>()));
      } else if (el.is_string()) {
        out.push_back(parse_duration_slots(*el.value<std::string>(), slot_seconds));
      } else {
        problems.add(fmt::format("{}: expected slots or a duration string", r.field(key)));
      }
    } catch (const Error& e) {
      problems.add(fmt::format("{}: {}", r.field(key), e.what()));
    }
  };
  if (const toml::array* arr = n->as_array()) {
    for (const auto& el : *arr) one(el);
  } else {
    one(*n);
  }
  return out;
}

std::optional<std::set<std::string>> known_ids(const ScenarioConfig& c) {
  std::set<std::string> ids;
  if (c.synth_fleet) {
    for (int i = 0; i < c.synth_fleet->clusters; ++i) ids.insert(fmt::format("c{:02}", i));
  } else if (!c.synth_traces.empty()) {
    for (const auto& t : c.synth_traces) ids.insert(t.params.cluster_id);
  } else if (!c.inline_traces.empty()) {
    for (const auto& t : c.inline_traces) ids.insert(t.id);
  } else {
    return std::nullopt;  // CSV ids are only known after ingestion
  }
  return ids;
}

std::string tag(double v) { return format_double(v); }

std::string point_name(const char* algo, double kappa, int tau, double lambda) {
  return fmt::format("{}_k{}_t{}_L{}", algo, tag(kappa), tau, tag(lambda));
}

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::opt: return "opt";
    case Algorithm::opt_k: return "opt-k";
    case Algorithm::hibernate: return "hibernate";
  }
  return "?";
}

std::vector<Algorithm> parse_algorithms(std::string_view text) {
  std::vector<Algorithm> out;
  auto add = [&](Algorithm a) {
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  };
  for (const auto& raw : split(text, ',')) {
    const std::string name = trim(raw);
    if (name == "opt") add(Algorithm::opt);
    else if (name == "opt-k" || name == "opt_k") add(Algorithm::opt_k);
    else if (name == "hibernate") add(Algorithm::hibernate);
    else if (name == "all") {
      add(Algorithm::opt);
      add(Algorithm::opt_k);
      add(Algorithm::hibernate);
    } else {
      throw ValidationError(fmt::format("algorithm: unknown '{}' (opt, opt-k, hibernate, all)", name));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int parse_duration_slots(std::string_view text, double slot_seconds) {
  const std::string s = trim(text);
  if (s.empty()) throw ValidationError("empty duration");
  double unit = 0.0;
  std::string_view number = s;
  switch (s.back()) {
    case 's': unit = 1; break;
    case 'm': unit = 60; break;
    case 'h': unit = 3600; break;
    case 'd': unit = kSecondsPerDay; break;
    default: break;
  }
  if (unit > 0) number.remove_suffix(1);
  const auto v = parse_number<double>(number);
  if (!v || !(*v >= 0.0) || !std::isfinite(*v)) {
    throw ValidationError(fmt::format("bad duration '{}'", s));
  }
  if (unit == 0.0) {
    if (*v != std::floor(*v)) throw ValidationError(fmt::format("bad slot count '{}'", s));
    return static_cast<int>(*v);
  }
  const double seconds = *v * unit;
  return tau_to_slots(std::chrono::seconds(std::llround(seconds)), slot_seconds);
}

void ScenarioConfig::validate() const {
  Problems p;
  p.check([&] { model.validate(); });
  if (workers < 1) p.add("workers: must be >= 1");
  if (name.empty()) p.add("name: must not be empty");

  const int sources = (!csv_paths.empty()) + synth_fleet.has_value() + (!synth_traces.empty()) +
                      (!inline_traces.empty());
  if (sources == 0) p.add("traces: no trace source given (csv, synth or inline)");
  if (sources > 1) p.add("traces: more than one trace source given");
  if (!(peak_capacity > 0.0)) p.add("traces.peak_capacity: must be > 0");
  if (!cluster_file.empty() && csv_paths.empty()) {
    p.add("traces.cluster_file: only used with csv traces");
  }

  const double delta = model.delta;
  if (synth_fleet) {
    p.check([&] { synth_fleet->validate(); });
    if (synth_fleet->slot_seconds != delta) p.add("synth.fleet.slot_seconds: must equal model.delta");
  }
  std::set<std::string> trace_ids;
  for (const auto& t : synth_traces) {
    p.check([&] { t.params.validate(); });
    if (t.params.slot_seconds != delta) {
      p.add(fmt::format("synth.trace {}: slot_seconds must equal model.delta", t.params.cluster_id));
    }
    if (!trace_ids.insert(t.params.cluster_id).second) {
      p.add(fmt::format("synth.trace: duplicate id {}", t.params.cluster_id));
    }
  }
  for (const auto& t : inline_traces) {
    if (t.id.empty()) p.add("traces.inline: missing id");
    if (!trace_ids.insert(t.id).second) p.add(fmt::format("traces.inline: duplicate id {}", t.id));
    if (t.loads.empty()) p.add(fmt::format("traces.inline {}: no loads", t.id));
    for (double l : t.loads) {
      if (!(l >= 0.0) || !std::isfinite(l)) {
        p.add(fmt::format("traces.inline {}: loads must be finite and >= 0", t.id));
        break;
      }
    }
    const auto it = std::find_if(clusters.begin(), clusters.end(),
                                 [&](const ClusterEntry& c) { return c.id == t.id; });
    if (it == clusters.end() || !it->m_total) {
      p.add(fmt::format("clusters: inline trace {} needs a [[clusters]] entry with m_total", t.id));
    }
  }

  const auto ids = known_ids(*this);
  auto resolve = [&](const std::string& field, const std::string& id) {
    if (ids && !ids->contains(id)) p.add(fmt::format("{}: unknown cluster id {}", field, id));
  };
  std::set<std::string> cluster_ids;
  for (const auto& c : clusters) {
    if (c.id.empty()) p.add("clusters: missing id");
    if (!cluster_ids.insert(c.id).second) p.add(fmt::format("clusters: duplicate id {}", c.id));
    if (c.m_total && *c.m_total < 1) p.add(fmt::format("clusters {}: m_total must be >= 1", c.id));
    if (c.lambda_cap && !(*c.lambda_cap > 0.0 && *c.lambda_cap <= 1.0)) {
      p.add(fmt::format("clusters {}: lambda_cap must lie in (0, 1]", c.id));
    }
    if (std::abs(c.utc_offset_seconds) > 14 * 3600) {
      p.add(fmt::format("clusters {}: utc_offset out of range", c.id));
    }
    resolve("clusters", c.id);
  }

  if (algorithms.empty()) p.add("algorithms: none selected");
  const auto has = [&](Algorithm a) {
    return std::find(algorithms.begin(), algorithms.end(), a) != algorithms.end();
  };

  for (double k : kappas) {
    if (!(k >= 0.0 && k <= 1.0)) p.add(fmt::format("kappa: {} outside [0, 1]", k));
  }
  for (int t : tau_slots) {
    if (t < 0) p.add(fmt::format("tau: {} must be >= 0", t));
  }
  for (double l : lambda_caps) {
    if (!(l > 0.0 && l <= 1.0)) p.add(fmt::format("lambda_cap: {} outside (0, 1]", l));
  }
  for (auto k : ks) {
    if (k < 0) p.add(fmt::format("k: {} must be >= 0", k));
  }
  for (double r : k_rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) p.add(fmt::format("k_rate: {} must be >= 0", r));
  }
  for (double r : rhos) {
    if (!(r > 0.0) || !std::isfinite(r)) p.add(fmt::format("rho: {} must be > 0", r));
  }
  if (!(availability_target_pct > 0.0 && availability_target_pct <= 100.0)) {
    p.add("availability_target: must lie in (0, 100]");
  }
  if (dp_max_states < 0 || dp_max_states == 1) p.add("dp.max_states: must be 0 or >= 2");

  if (has(Algorithm::hibernate)) {
    if (kappas.empty() && !kappa_sweep && rhos.empty()) p.add("kappa: grid is empty for hibernate");
    if (tau_slots.empty()) p.add("tau: grid is empty for hibernate");
  }
  if (has(Algorithm::opt_k) && ks.empty() && k_rates.empty()) {
    p.add("k: opt-k needs k or k_rate values");
  }
  if (kappa_sweep && !has(Algorithm::hibernate)) p.add("kappa_sweep: needs the hibernate algorithm");
  if (!rhos.empty() && !has(Algorithm::hibernate)) p.add("rho: needs the hibernate algorithm");
  if (!rhos.empty()) {
    p.check([&] { SpikeSpec{flash_magnitude_frac, flash_duration_slots, rhos.front(), 0}.validate(); });
  }

  for (std::size_t i = 0; i < spikes.size(); ++i) {
    const auto& s = spikes[i];
    p.check([&] {
      SpikeSpec{s.magnitude_frac, s.duration_slots, s.rho, s.start_slot.value_or(0)}.validate();
    });
    for (const auto& id : s.clusters) resolve(fmt::format("spike[{}].clusters", i), id);
  }

  std::set<std::string> set_ids;
  for (const auto& s : cluster_sets) {
    if (s.id.empty()) p.add("cluster_set: missing id");
    if (!set_ids.insert(s.id).second) p.add(fmt::format("cluster_set: duplicate id {}", s.id));
    if (s.members.empty()) p.add(fmt::format("cluster_set {}: no members", s.id));
    for (const auto& m : s.members) resolve(fmt::format("cluster_set {}", s.id), m);
  }
  if (!cluster_sets.empty() && !has(Algorithm::hibernate)) {
    p.add("cluster_set: needs the hibernate algorithm");
  }

  p.raise("invalid configuration");
}

std::string ScenarioConfig::canonical() const {
  ordered_json j;
  j["name"] = name;
  j["seed"] = seed;
  j["workers"] = workers;
  j["model"] = {{"p_idle", model.p_idle}, {"p_peak", model.p_peak}, {"alpha", model.alpha},
                {"delta", model.delta}};
  ordered_json traces = ordered_json::object();
  if (!csv_paths.empty()) {
    std::vector<std::string> paths;
    for (const auto& path : csv_paths) paths.push_back(path.generic_string());
    traces["csv"] = paths;
    traces["peak_capacity"] = peak_capacity;
    if (!cluster_file.empty()) traces["cluster_file"] = cluster_file.generic_string();
  }
  if (synth_fleet) {
    const auto& f = *synth_fleet;
    traces["synth_fleet"] = {{"clusters", f.clusters}, {"days", f.days},
                             {"slot_seconds", f.slot_seconds}, {"start_time", f.start_time},
                             {"lambda_cap", f.lambda_cap}, {"m_min", f.m_min}, {"m_max", f.m_max},
                             {"base", {f.base_min, f.base_max}}, {"amp", {f.amp_min, f.amp_max}},
                             {"noise", {f.noise_min, f.noise_max}}};
  }
  for (const auto& t : synth_traces) {
    const auto& q = t.params;
    traces["synth_trace"].push_back({{"id", q.cluster_id}, {"start_time", q.start_time},
                                     {"days", q.days}, {"slot_seconds", q.slot_seconds},
                                     {"m_total", q.m_total}, {"base", q.base_frac},
                                     {"amp", q.amp_frac}, {"noise", q.noise_frac},
                                     {"invert_noise", q.invert_noise}, {"seed", t.seed}});
  }
  for (const auto& t : inline_traces) traces["inline"].push_back({{"id", t.id}, {"loads", t.loads}});
  j["traces"] = traces;
  j["clusters"] = ordered_json::array();
  for (const auto& c : clusters) {
    ordered_json e = {{"id", c.id}};
    if (c.m_total) e["m_total"] = *c.m_total;
    if (c.lambda_cap) e["lambda_cap"] = *c.lambda_cap;
    e["utc_offset_seconds"] = c.utc_offset_seconds;
    j["clusters"].push_back(e);
  }
  std::vector<std::string> algos;
  for (auto a : algorithms) algos.emplace_back(to_string(a));
  j["algorithms"] = algos;
  j["grid"] = {{"kappa", kappas}, {"tau_slots", tau_slots}, {"lambda_cap", lambda_caps},
               {"k", ks}, {"k_rate", k_rates}, {"rho", rhos}, {"kappa_sweep", kappa_sweep},
               {"availability_target", availability_target_pct}};
  j["dp"] = {{"max_states", dp_max_states}};
  j["spikes"] = ordered_json::array();
  for (const auto& s : spikes) {
    ordered_json e = {{"magnitude", s.magnitude_frac}, {"duration_slots", s.duration_slots},
                      {"rho", s.rho}, {"clusters", s.clusters}};
    if (s.start_slot) e["start_slot"] = *s.start_slot;
    j["spikes"].push_back(e);
  }
  j["flash"] = {{"magnitude", flash_magnitude_frac}, {"duration_slots", flash_duration_slots}};
  j["cluster_sets"] = ordered_json::array();
  for (const auto& s : cluster_sets) j["cluster_sets"].push_back({{"id", s.id}, {"members", s.members}});
  return j.dump();
}

ScenarioConfig parse_config(std::string_view toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ValidationError(fmt::format("config: line {}: {}", e.source().begin.line, e.description()));
  }

  ScenarioConfig c;
  Problems p;
  auto path_of = [&](const std::string& s) {
    fs::path path(s);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  TableReader top(&root, "", p);
  top.read("name", c.name);
  if (auto v = top.value<std::int64_t>("seed")) c.seed = static_cast<std::uint64_t>(*v);
  if (auto v = top.value<std::string>("output_dir")) c.output_dir = path_of(*v);
  if (auto v = top.value<std::int64_t>("workers")) {
    if (*v < 1) p.add("workers: must be >= 1");
    else c.workers = static_cast<unsigned>(*v);
  }
  if (auto v = top.list<std::string>("algorithms")) {
    p.check([&] { c.algorithms = parse_algorithms(join(*v, ",")); });
  }

  {
    TableReader m(top.table("model"), "model", p);
    m.read("p_idle", c.model.p_idle);
    m.read("p_peak", c.model.p_peak);
    m.read("alpha", c.model.alpha);
    m.read("delta", c.model.delta);
    m.finish();
  }
  const double delta = c.model.delta > 0 ? c.model.delta : 300.0;

  {
    TableReader t(top.table("traces"), "traces", p);
    if (auto v = t.list<std::string>("csv")) {
      for (const auto& s : *v) c.csv_paths.push_back(path_of(s));
    }
    t.read("peak_capacity", c.peak_capacity);
    if (auto v = t.value<std::string>("cluster_file")) c.cluster_file = path_of(*v);
    for (const toml::table* e : t.tables("inline")) {
      TableReader r(e, "traces.inline", p);
      InlineTrace it;
      r.read("id", it.id);
      if (auto v = r.list<double>("loads")) it.loads = *v;
      r.finish();
      c.inline_traces.push_back(std::move(it));
    }
    t.finish();
  }

  {
    TableReader s(top.table("synth"), "synth", p);
    if (const toml::table* f = s.table("fleet")) {
      FleetSpec spec;
      spec.slot_seconds = static_cast<int>(delta);
      TableReader r(f, "synth.fleet", p);
      for (const auto& [k, v] : *f) {
        const std::string key(k.str());
        if (auto num = r.value<double>(key)) {
          p.check([&] {
            if (!set_fleet_field(spec, key, *num)) p.add(fmt::format("synth.fleet.{}: unknown key", key));
          });
        }
      }
      c.synth_fleet = spec;
    }
    for (const toml::table* e : s.tables("trace")) {
      TableReader r(e, "synth.trace", p);
      SynthTrace st;
      st.seed = c.seed;
      st.params.slot_seconds = static_cast<int>(delta);
      r.read("id", st.params.cluster_id);
      r.read("start_time", st.params.start_time);
      r.read("days", st.params.days);
      r.read("slot_seconds", st.params.slot_seconds);
      r.read("m_total", st.params.m_total);
      r.read("base", st.params.base_frac);
      r.read("amp", st.params.amp_frac);
      r.read("noise", st.params.noise_frac);
      r.read("invert_noise", st.params.invert_noise);
      if (auto v = r.value<std::int64_t>("seed")) st.seed = static_cast<std::uint64_t>(*v);
      r.finish();
      c.synth_traces.push_back(std::move(st));
    }
    s.finish();
  }

  for (const toml::table* e : top.tables("clusters")) {
    TableReader r(e, "clusters", p);
    ClusterEntry ce;
    r.read("id", ce.id);
    ce.m_total = r.value<int>("m_total");
    ce.lambda_cap = r.value<double>("lambda_cap");
    r.read("utc_offset", ce.utc_offset_seconds);
    r.finish();
    c.clusters.push_back(std::move(ce));
  }

  {
    TableReader g(top.table("grid"), "grid", p);
    if (auto v = g.list<double>("kappa")) c.kappas = *v;
    c.tau_slots = read_durations(g, "tau", delta, p);
    if (auto v = g.list<double>("lambda_cap")) c.lambda_caps = *v;
    if (auto v = g.list<std::int64_t>("k")) c.ks = *v;
    if (auto v = g.list<double>("k_rate")) c.k_rates = *v;
    if (auto v = g.list<double>("rho")) c.rhos = *v;
    g.read("kappa_sweep", c.kappa_sweep);
    g.read("availability_target", c.availability_target_pct);
    g.finish();
  }
  {
    TableReader d(top.table("dp"), "dp", p);
    d.read("max_states", c.dp_max_states);
    d.finish();
  }
  for (const toml::table* e : top.tables("spike")) {
    TableReader r(e, "spike", p);
    SpikeEntry s;
    r.read("magnitude", s.magnitude_frac);
    if (auto d = read_durations(r, "duration", delta, p); !d.empty()) s.duration_slots = d.front();
    r.read("rho", s.rho);
    if (auto v = r.value<std::int64_t>("start_slot")) s.start_slot = static_cast<std::size_t>(*v);
    if (auto v = r.list<std::string>("clusters")) s.clusters = *v;
    r.finish();
    c.spikes.push_back(std::move(s));
  }
  {
    TableReader f(top.table("flash"), "flash", p);
    f.read("magnitude", c.flash_magnitude_frac);
    if (auto d = read_durations(f, "duration", delta, p); !d.empty()) c.flash_duration_slots = d.front();
    f.finish();
  }
  for (const toml::table* e : top.tables("cluster_set")) {
    TableReader r(e, "cluster_set", p);
    ClusterSetEntry s;
    r.read("id", s.id);
    if (auto v = r.list<std::string>("members")) s.members = *v;
    r.finish();
    c.cluster_sets.push_back(std::move(s));
  }
  top.finish();
  p.raise("config");
  return c;
}

ScenarioConfig load_config(const fs::path& path) {
  return parse_config(read_text(path), path.parent_path());
}

void apply_fleet_settings(FleetSpec& spec, const std::vector<std::string>& settings) {
  Problems p;
  for (const auto& s : settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      p.add(fmt::format("synth: expected key=value, got '{}'", s));
      continue;
    }
    const std::string key = trim(std::string_view(s).substr(0, eq));
    const auto v = parse_number<double>(trim(std::string_view(s).substr(eq + 1)));
    if (!v) {
      p.add(fmt::format("synth.{}: not a number", key));
      continue;
    }
    p.check([&] {
      if (!set_fleet_field(spec, key, *v)) p.add(fmt::format("synth.{}: unknown key", key));
    });
  }
  p.raise("invalid synth settings");
}

fs::path resolve_output_dir(const fs::path& requested) {
  if (!requested.empty()) return requested;
  if (const char* env = std::getenv(std::string(kOutputDirEnv).c_str()); env && *env) return env;
  return "out";
}

std::vector<ClusterConfig> read_cluster_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open cluster file {}", path.string()));
  std::string line;
  std::size_t row = 1;
  if (!std::getline(in, line) || trim(line) != "cluster_id,m_total,lambda_cap") {
    throw IngestionError(1, fmt::format("{}: header must be cluster_id,m_total,lambda_cap", path.string()));
  }
  std::vector<ClusterConfig> out;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cols = split(trim(line), ',');
    if (cols.size() != 3) throw IngestionError(row, fmt::format("row {}: expected 3 columns", row));
    ClusterConfig c;
    c.id = cols[0];
    const auto m = parse_number<int>(cols[1]);
    const auto l = parse_number<double>(cols[2]);
    if (c.id.empty() || !m || !l) throw IngestionError(row, fmt::format("row {}: malformed", row));
    c.m_total = *m;
    c.lambda_cap = *l;
    try {
      c.validate();
    } catch (const ValidationError& e) {
      throw IngestionError(row, fmt::format("row {}: {}", row, e.what()));
    }
    out.push_back(std::move(c));
  }
  return out;
}

void write_cluster_file(const fs::path& path, const std::vector<ClusterConfig>& clusters) {
  write_file(path, [&](std::ostream& out) {
    out << "cluster_id,m_total,lambda_cap\n";
    for (const auto& c : clusters) out << c.id << ',' << c.m_total << ',' << format_double(c.lambda_cap) << '\n';
  });
}

LoadedScenario load_scenario(const ScenarioConfig& config) {
  config.validate();
  const int slot_seconds = static_cast<int>(config.model.delta);
  std::vector<LoadTrace> traces;
  std::map<std::string, ClusterConfig> configs;

  if (!config.csv_paths.empty()) {
    std::set<std::string> seen;
    for (const auto& path : config.csv_paths) {
      for (auto& t : ingest_csv_file(path, slot_seconds, config.peak_capacity)) {
        if (!seen.insert(t.cluster_id).second) {
          throw ValidationError(fmt::format("traces: cluster {} appears in more than one file", t.cluster_id));
        }
        traces.push_back(std::move(t));
      }
    }
    if (!config.cluster_file.empty()) {
      for (auto& c : read_cluster_file(config.cluster_file)) configs[c.id] = c;
    }
  } else if (config.synth_fleet) {
    Fleet fleet = synth_fleet(*config.synth_fleet, config.seed);
    traces = std::move(fleet.traces);
    for (auto& c : fleet.clusters) configs[c.id] = c;
  } else if (!config.synth_traces.empty()) {
    for (const auto& s : config.synth_traces) {
      traces.push_back(synth_diurnal(s.params, s.seed));
      configs[s.params.cluster_id] = {s.params.cluster_id, s.params.m_total, 0.75};
    }
  } else {
    for (const auto& t : config.inline_traces) {
      LoadTrace lt;
      lt.cluster_id = t.id;
      lt.slot_seconds = slot_seconds;
      lt.loads = t.loads;
      traces.push_back(std::move(lt));
    }
  }
  std::sort(traces.begin(), traces.end(),
            [](const LoadTrace& a, const LoadTrace& b) { return a.cluster_id < b.cluster_id; });

  std::set<std::string> trace_ids;
  for (const auto& t : traces) trace_ids.insert(t.cluster_id);
  Problems p;
  std::map<std::string, int> offsets;
  for (const auto& e : config.clusters) {
    if (!trace_ids.contains(e.id)) {
      p.add(fmt::format("clusters: unknown cluster id {}", e.id));
      continue;
    }
    auto& c = configs[e.id];
    c.id = e.id;
    if (e.m_total) c.m_total = *e.m_total;
    if (e.lambda_cap) c.lambda_cap = *e.lambda_cap;
    offsets[e.id] = e.utc_offset_seconds;
  }
  for (std::size_t i = 0; i < config.spikes.size(); ++i) {
    for (const auto& id : config.spikes[i].clusters) {
      if (!trace_ids.contains(id)) p.add(fmt::format("spike[{}].clusters: unknown cluster id {}", i, id));
    }
  }
  for (const auto& s : config.cluster_sets) {
    for (const auto& m : s.members) {
      if (!trace_ids.contains(m)) p.add(fmt::format("cluster_set {}: unknown cluster id {}", s.id, m));
    }
  }

  LoadedScenario out;
  for (const auto& t : traces) {
    const auto it = configs.find(t.cluster_id);
    if (it == configs.end()) {
      p.add(fmt::format("clusters: no m_total for cluster {}", t.cluster_id));
      continue;
    }
    p.check([&] { it->second.validate(); });
    p.check([&] { check_slot_length(config.model, t); });
    out.clusters.push_back(it->second);
    out.utc_offsets.push_back(offsets.contains(t.cluster_id) ? offsets[t.cluster_id] : 0);
  }
  p.raise("invalid scenario");
  out.traces = std::move(traces);

  for (const auto& s : config.spikes) {
    SpikeSpec spec{s.magnitude_frac, s.duration_slots, s.rho, s.start_slot.value_or(0)};
    auto targeted = [&](const std::string& id) {
      return s.clusters.empty() ||
             std::find(s.clusters.begin(), s.clusters.end(), id) != s.clusters.end();
    };
    if (!s.start_slot) {
      LoadTrace sum;
      for (const auto& t : out.traces) {
        if (!targeted(t.cluster_id)) continue;
        if (sum.loads.empty()) {
          sum = t;
        } else {
          for (std::size_t i = 0; i < std::min(sum.size(), t.size()); ++i) sum.loads[i] += t.loads[i];
        }
      }
      const auto per_day = static_cast<std::size_t>(kSecondsPerDay / slot_seconds);
      const std::size_t earliest = sum.size() >= 3 * per_day ? 2 * per_day : 0;
      spec.start_slot = quietest_hour_start(sum, 0.0, 6.0, spec.footprint(), earliest);
    }
    for (std::size_t i = 0; i < out.traces.size(); ++i) {
      if (targeted(out.traces[i].cluster_id)) {
        out.traces[i] = inject_spike(out.traces[i], spec, out.clusters[i].m_total);
      }
    }
  }
  return out;
}

RunResult run_scenario(const ScenarioConfig& config) {
  const LoadedScenario sc = load_scenario(config);
  const EnergyModel& model = config.model;
  const unsigned w = config.workers;
  const std::size_t n = sc.traces.size();
  const auto has = [&](Algorithm a) {
    return std::find(config.algorithms.begin(), config.algorithms.end(), a) != config.algorithms.end();
  };
  auto granularity = [&](int m) {
    return config.dp_max_states > 0 ? granularity_for(m, config.dp_max_states) : 1;
  };

  // Lambda grid for hibernate (and OPT when given): the clusters' shared
  // value when none is listed.
  std::vector<double> lambdas = config.lambda_caps;
  if (lambdas.empty() && has(Algorithm::hibernate)) {
    const double first = sc.clusters.front().lambda_cap;
    for (const auto& c : sc.clusters) {
      if (c.lambda_cap != first) {
        throw ValidationError("lambda_cap: clusters differ in lambda_cap; list grid.lambda_cap");
      }
    }
    lambdas = {first};
  }

  RunResult result;
  result.output_dir = resolve_output_dir(config.output_dir);
  const fs::path& dir = result.output_dir;
  auto put = [&](const std::string& name, const std::function<void(std::ostream&)>& fn) {
    write_file(dir / name, fn);
    result.files.push_back(name);
  };
  auto put_report = [&](const std::string& stem, const ExperimentReport& r) {
    put("reports/" + stem + ".json", [&](std::ostream& o) { emit(r, ReportFormat::json, o); });
    put("reports/" + stem + ".csv", [&](std::ostream& o) { emit(r, ReportFormat::csv, o); });
  };

  if (has(Algorithm::opt)) {
    std::vector<std::optional<double>> opt_lambdas;
    if (config.lambda_caps.empty()) opt_lambdas.push_back(std::nullopt);
    for (double l : config.lambda_caps) opt_lambdas.push_back(l);
    for (const auto& lambda : opt_lambdas) {
      std::vector<ClusterRow> rows(n);
      std::vector<OfflineResult> solved(n);
      detail::parallel_for(n, w, [&](std::size_t i) {
        ClusterConfig cfg = sc.clusters[i];
        if (lambda) cfg.lambda_cap = *lambda;
        solved[i] = solve_opt(model, sc.traces[i], cfg, {granularity(cfg.m_total)});
        rows[i] = {cfg.id, compute_metrics(model, sc.traces[i], solved[i].schedule, cfg.m_total)};
      });
      const std::string stem = lambda ? fmt::format("opt_L{}", tag(*lambda)) : "opt";
      ParamEcho echo;
      echo.lambda_cap = lambda;
      const auto report = make_report(config.name, "opt", echo, rows);
      put_report(stem, report);
      for (std::size_t i = 0; i < n; ++i) {
        put(fmt::format("schedules/{}/{}.csv", stem, rows[i].cluster_id),
            [&](std::ostream& o) { write_schedule_csv(o, solved[i].schedule); });
        put(fmt::format("schedules/{}/{}.json", stem, rows[i].cluster_id),
            [&](std::ostream& o) { write_dp_summary_json(o, rows[i].metrics); });
      }
      std::vector<MetricsReport> metrics;
      for (const auto& r : report.clusters) metrics.push_back(r.metrics);
      put(fmt::format("fig2_cdf{}.csv", lambda ? "_L" + tag(*lambda) : ""),
          [&](std::ostream& o) { write_cdf_csv(o, cdf_energy_reduction(metrics)); });
    }
  }

  if (has(Algorithm::opt_k) && !config.ks.empty()) {
    const std::int64_t k_max = *std::max_element(config.ks.begin(), config.ks.end());
    std::vector<std::map<std::int64_t, OfflineResult>> solved(n);
    detail::parallel_for(n, w, [&](std::size_t i) {
      solved[i] = solve_opt_k(model, sc.traces[i], sc.clusters[i], k_max,
                              {granularity(sc.clusters[i].m_total)});
    });
    for (auto k : config.ks) {
      std::vector<ClusterRow> rows;
      for (std::size_t i = 0; i < n; ++i) {
        rows.push_back({sc.clusters[i].id, compute_metrics(model, sc.traces[i], solved[i].at(k).schedule,
                                                           sc.clusters[i].m_total)});
      }
      ParamEcho echo;
      echo.k = k;
      const std::string stem = fmt::format("opt-k_k{}", k);
      put_report(stem, make_report(config.name, "opt-k", echo, rows));
      for (std::size_t i = 0; i < n; ++i) {
        put(fmt::format("schedules/{}/{}.csv", stem, sc.clusters[i].id),
            [&](std::ostream& o) { write_schedule_csv(o, solved[i].at(k).schedule); });
      }
    }
  }

  if (has(Algorithm::opt_k) && !config.k_rates.empty()) {
    std::vector<std::vector<MetricsReport>> per(n);
    detail::parallel_for(n, w, [&](std::size_t i) {
      const auto& t = sc.traces[i];
      const auto& cfg = sc.clusters[i];
      const double days = static_cast<double>(t.size()) * model.delta / kSecondsPerDay;
      std::vector<std::int64_t> budgets;
      for (double r : config.k_rates) budgets.push_back(std::llround(r * cfg.m_total * days));
      const auto energies = opt_k_energies(model, t, cfg, budgets, {granularity(cfg.m_total)});
      for (const auto& e : energies) {
        MetricsReport m;
        m.energy = e;
        m.baseline = baseline_energy(model, t, cfg.m_total);
        for (double l : t.loads) m.input_load += l;
        m.served_load = m.input_load;
        m.server_days = cfg.m_total * days;
        per[i].push_back(aggregate(std::span<const MetricsReport>(&m, 1)));
      }
    });
    std::vector<BoundPoint> points;
    for (std::size_t r = 0; r < config.k_rates.size(); ++r) {
      BoundPoint pt{config.k_rates[r], {}};
      std::vector<ClusterRow> rows;
      for (std::size_t i = 0; i < n; ++i) {
        pt.clusters.push_back(per[i][r]);
        rows.push_back({sc.clusters[i].id, per[i][r]});
      }
      ParamEcho echo;
      put_report(fmt::format("opt-k_rate{}", tag(config.k_rates[r])),
                 make_report(config.name, "opt-k", echo, rows));
      points.push_back(std::move(pt));
    }
    put("fig3_bounded.csv",
        [&](std::ostream& o) { write_bounded_csv(o, reduction_vs_transition_bound(points)); });
  }

  if (has(Algorithm::hibernate)) {
    FlashSpec flash;
    flash.kappas = config.kappas;
    const std::vector<double> kappas = config.kappa_sweep || config.kappas.empty()
                                           ? flash.kappa_grid()
                                           : config.kappas;
    const SweepGrid grid{kappas, config.tau_slots, lambdas};
    const auto rows = sweep(model, sc.traces, sc.clusters, grid, w);
    put("hibernate_sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, rows); });

    for (double kappa : grid.kappas) {
      for (int tau : grid.tau_slots) {
        for (double lambda : grid.lambda_caps) {
          std::vector<ClusterRow> point;
          for (const auto& r : rows) {
            if (r.cluster_id != kSystemRowId && r.kappa == kappa && r.tau_slots == tau &&
                r.lambda_cap == lambda) {
              point.push_back({r.cluster_id, r.metrics});
            }
          }
          ParamEcho echo;
          echo.kappa = kappa;
          echo.tau_slots = tau;
          echo.lambda_cap = lambda;
          put_report(point_name("hibernate", kappa, tau, lambda),
                     make_report(config.name, "hibernate", echo, point));
        }
      }
    }

    if (config.kappa_sweep) {
      put("kappa_frontier.csv", [&](std::ostream& o) {
        o << "tau_slots,lambda_cap,min_kappa\n";
        for (int tau : grid.tau_slots) {
          for (double lambda : grid.lambda_caps) {
            std::optional<double> best;
            for (const auto& r : rows) {
              if (r.cluster_id == kSystemRowId && r.tau_slots == tau && r.lambda_cap == lambda &&
                  r.metrics.availability_pct >= config.availability_target_pct &&
                  (!best || r.kappa < *best)) {
                best = r.kappa;
              }
            }
            o << tau << ',' << tag(lambda) << ',' << (best ? tag(*best) : "") << '\n';
          }
        }
      });
    }

    if (!config.rhos.empty()) {
      Fleet fleet;
      fleet.traces = sc.traces;
      fleet.clusters = sc.clusters;
      for (auto& c : fleet.clusters) c.lambda_cap = lambdas.front();
      const auto per_day = static_cast<std::size_t>(kSecondsPerDay / model.delta);
      for (int tau : config.tau_slots) {
        FlashSpec spec;
        spec.magnitude_frac = config.flash_magnitude_frac;
        spec.duration_slots = config.flash_duration_slots;
        spec.rhos = config.rhos;
        spec.kappas = kappas;
        spec.tau_slots = tau;
        spec.availability_target_pct = config.availability_target_pct;
        spec.earliest_day = sc.traces.front().size() >= 3 * per_day ? 2 : 0;
        const auto res = run_flash_crowd(model, fleet, spec, w);
        const std::string suffix = config.tau_slots.size() > 1 ? fmt::format("_t{}", tau) : "";
        put("fig6_flashcrowd" + suffix + ".csv", [&](std::ostream& o) { write_flash_csv(o, res.rows); });
        put("fig6_frontier" + suffix + ".csv", [&](std::ostream& o) { write_frontier_csv(o, res.frontier); });
      }
    }

    if (!config.cluster_sets.empty()) {
      std::map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < n; ++i) index[sc.clusters[i].id] = i;
      put("glb.csv", [&](std::ostream& o) {
        o << "set_id,kappa,tau_slots,lambda_cap,mode,energy_reduction_pct,availability_pct,"
             "transitions_per_server_day\n";
        for (const auto& set : config.cluster_sets) {
          std::vector<LoadTrace> traces;
          std::vector<ClusterConfig> cfgs;
          for (const auto& m : set.members) {
            traces.push_back(sc.traces[index.at(m)]);
            cfgs.push_back(sc.clusters[index.at(m)]);
          }
          for (double kappa : grid.kappas) {
            for (int tau : grid.tau_slots) {
              for (double lambda : grid.lambda_caps) {
                const HibernateParams hp{kappa, tau, lambda};
                std::vector<MetricsReport> separate;
                for (std::size_t i = 0; i < traces.size(); ++i) {
                  ClusterConfig cfg = cfgs[i];
                  cfg.lambda_cap = lambda;
                  separate.push_back(run_hibernate(model, traces[i], cfg, hp).metrics);
                }
                for (auto& cfg : cfgs) cfg.lambda_cap = lambda;
                const auto merged_set = make_cluster_set(set.id, traces, cfgs);
                const auto merged =
                    run_hibernate(model, merged_set.merged_trace, merged_set.merged_config, hp).metrics;
                auto line = [&](const char* mode, const MetricsReport& m) {
                  o << set.id << ',' << tag(kappa) << ',' << tau << ',' << tag(lambda) << ',' << mode
                    << ',' << tag(m.energy_reduction_pct) << ',' << tag(m.availability_pct) << ','
                    << tag(m.transitions_per_server_day) << '\n';
                };
                line("separate", aggregate(separate));
                line("merged", merged);
              }
            }
          }
        }
      });
    }
  }

  for (auto& f : rebuild_summary(dir)) result.files.push_back(f);
  write_manifest(dir, config.canonical(), config.seed, result.files);
  return result;
}

std::vector<std::string> rebuild_summary(const fs::path& run_dir) {
  const fs::path reports = run_dir / "reports";
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(reports, ec)) {
    for (const auto& e : fs::directory_iterator(reports, ec)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  if (files.empty()) {
    throw IoError(fmt::format("no reports found under {}", reports.string()));
  }
  std::sort(files.begin(), files.end());

  std::ostringstream out;
  out << "report,scenario,algorithm,kappa,tau_slots,lambda_cap,rho,k,clusters," << kReportCsvHeader
      << '\n';
  for (const auto& f : files) {
    const auto r = report_from_json_file(f);
    auto opt = [](const auto& v) { return v ? fmt::format("{}", *v) : std::string(); };
    auto optd = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    std::ostringstream row;
    emit(ExperimentReport{r.scenario, r.algorithm, r.params, {}, r.system}, ReportFormat::csv, row);
    // The CSV form of a report with no clusters is the header plus the system row.
    std::string system_row = row.str();
    system_row = system_row.substr(system_row.find('\n') + 1);
    out << f.stem().string() << ',' << r.scenario << ',' << r.algorithm << ',' << optd(r.params.kappa)
        << ',' << opt(r.params.tau_slots) << ',' << optd(r.params.lambda_cap) << ','
        << optd(r.params.rho) << ',' << opt(r.params.k) << ',' << r.clusters.size() << ','
        << system_row;
  }
  write_file(run_dir / "summary.csv", [&](std::ostream& o) { o << out.str(); });
  return {"summary.csv"};
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

void write_manifest(const fs::path& dir, std::string_view config_text, std::uint64_t seed,
                    const std::vector<std::string>& files) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);

  ordered_json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["config_sha256"] = sha256_hex(config_text);
  j["seed"] = seed;
  j["created_utc"] = stamp;
  ordered_json list = ordered_json::array();
  for (const auto& f : files) list.push_back({{"path", f}, {"sha256", sha256_file(dir / f)}});
  j["files"] = list;
  write_file(dir / "manifest.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

}  // namespace cdnpower
