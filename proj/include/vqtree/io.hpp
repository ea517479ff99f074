#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqtree/bench.hpp"
#include "vqtree/engine.hpp"
#include "vqtree/graph.hpp"
#include "vqtree/pauli.hpp"

namespace vqtree {

using nlohmann::json;

namespace detail {

inline json finite_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

inline double double_or_nan(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

inline void require_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument("unknown key \"" + key + "\" in " + where);
  }
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// Hamiltonian files: {"n_qubits": n, "terms": [{"pauli": "...", "coeff": c}]}
// ---------------------------------------------------------------------------

inline json hamiltonian_to_json(const Hamiltonian& h) {
  json terms = json::array();
  for (const auto& t : h.terms) terms.push_back({{"pauli", t.string.ops}, {"coeff", t.coeff}});
  return json{{"n_qubits", h.n_qubits}, {"terms", terms}};
}

inline Hamiltonian hamiltonian_from_json(const json& j) {
  detail::require_keys(j, {"n_qubits", "terms"}, "hamiltonian file");
  Hamiltonian h;
  h.n_qubits = j.at("n_qubits").get<int>();
  for (const auto& t : j.at("terms")) {
    detail::require_keys(t, {"pauli", "coeff"}, "hamiltonian term");
    h.terms.push_back({t.at("coeff").get<double>(),
                       parse_pauli_string(t.at("pauli").get<std::string>())});
  }
  return canonicalize(h);
}

inline Hamiltonian load_hamiltonian(const std::filesystem::path& path) {
  return hamiltonian_from_json(json::parse(read_text_file(path)));
}

inline void save_hamiltonian(const std::filesystem::path& path, const Hamiltonian& h) {
  write_text_file(path, hamiltonian_to_json(h).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Graph files: {"nodes": n, "edges": [[u, v, w], ...]}
// ---------------------------------------------------------------------------

inline json graph_to_json(const WeightedGraph& g) {
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.u, e.v, e.w});
  return json{{"nodes", g.nodes}, {"edges", edges}};
}

inline WeightedGraph graph_from_json(const json& j) {
  detail::require_keys(j, {"nodes", "edges"}, "graph file");
  WeightedGraph g;
  g.nodes = j.at("nodes").get<int>();
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 3)
      throw std::invalid_argument("graph edges must be [u, v, w] triples");
    g.edges.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
  }
  validate_graph(g);
  return g;
}

inline WeightedGraph load_graph(const std::filesystem::path& path) {
  return graph_from_json(json::parse(read_text_file(path)));
}

inline void save_graph(const std::filesystem::path& path, const WeightedGraph& g) {
  write_text_file(path, graph_to_json(g).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Task manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string file;
  double parameter = 0.0;  // h, Delta, or load scale
  double reference_energy = std::numeric_limits<double>::quiet_NaN();
  double max_cut_value = std::numeric_limits<double>::quiet_NaN();  // maxcut only
};

struct Manifest {
  std::string kind;  // tfim | xxz | maxcut
  int n_qubits = 0;
  std::vector<ManifestEntry> entries;
  std::string base_graph;  // maxcut only
};

inline json manifest_to_json(const Manifest& m) {
  json tasks = json::array();
  for (const auto& e : m.entries) {
    json t{{"id", e.id},
           {"file", e.file},
           {"parameter", e.parameter},
           {"reference_energy", detail::finite_or_null(e.reference_energy)}};
    if (!std::isnan(e.max_cut_value)) t["max_cut_value"] = e.max_cut_value;
    tasks.push_back(t);
  }
  json j{{"kind", m.kind}, {"n_qubits", m.n_qubits}, {"tasks", tasks}};
  if (!m.base_graph.empty()) j["base_graph"] = m.base_graph;
  return j;
}

inline Manifest manifest_from_json(const json& j) {
  detail::require_keys(j, {"kind", "n_qubits", "tasks", "base_graph"}, "manifest");
  Manifest m;
  m.kind = j.at("kind").get<std::string>();
  m.n_qubits = j.at("n_qubits").get<int>();
  if (j.contains("base_graph")) m.base_graph = j.at("base_graph").get<std::string>();
  for (const auto& t : j.at("tasks")) {
    detail::require_keys(t, {"id", "file", "parameter", "reference_energy", "max_cut_value"},
                         "manifest task");
    ManifestEntry e;
    e.id = t.at("id").get<std::string>();
    e.file = t.at("file").get<std::string>();
    e.parameter = t.at("parameter").get<double>();
    e.reference_energy = detail::double_or_nan(t.at("reference_energy"));
    if (t.contains("max_cut_value")) e.max_cut_value = t.at("max_cut_value").get<double>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline std::string manifest_fingerprint(const Manifest& m) {
  json skeleton{{"kind", m.kind}, {"n_qubits", m.n_qubits}};
  json ids = json::array();
  for (const auto& e : m.entries)
    ids.push_back({{"id", e.id}, {"ref", detail::finite_or_null(e.reference_energy)}});
  skeleton["tasks"] = ids;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(skeleton.dump())));
  return buf;
}

/// Loads every task referenced by a manifest (paths relative to it).
inline TaskSet load_task_set(const std::filesystem::path& manifest_path) {
  const Manifest m = manifest_from_json(json::parse(read_text_file(manifest_path)));
  const auto dir = manifest_path.parent_path();
  TaskSet set;
  for (const auto& e : m.entries) {
    set.tasks.push_back(load_hamiltonian(dir / e.file));
    set.ids.push_back(e.id);
    set.reference_energies.push_back(e.reference_energy);
  }
  if (set.tasks.empty()) throw std::invalid_argument("manifest lists no tasks");
  for (const auto& t : set.tasks)
    if (t.n_qubits != set.tasks.front().n_qubits)
      throw std::invalid_argument("manifest tasks disagree on qubit count");
  set.manifest_fingerprint = manifest_fingerprint(m);
  return set;
}

/// Simple one-component wildcard match ('*' and '?', filename part only).
inline bool wildcard_match(const std::string& pattern, const std::string& text) {
  std::size_t p = 0, t = 0, star = std::string::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

/// Loads tasks from a file glob such as "tasks/*.json". No references.
inline TaskSet load_task_set_glob(const std::string& pattern) {
  const std::filesystem::path pat(pattern);
  const auto dir = pat.parent_path().empty() ? std::filesystem::path(".") : pat.parent_path();
  const std::string name_pattern = pat.filename().string();
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("no such directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (wildcard_match(name_pattern, entry.path().filename().string()))
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no files match " + pattern);

  TaskSet set;
  std::string names;
  for (const auto& f : files) {
    set.tasks.push_back(load_hamiltonian(f));
    set.ids.push_back(f.stem().string());
    set.reference_energies.push_back(std::numeric_limits<double>::quiet_NaN());
    names += f.filename().string() + ";";
  }
  for (const auto& t : set.tasks)
    if (t.n_qubits != set.tasks.front().n_qubits)
      throw std::invalid_argument("glob tasks disagree on qubit count");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(names)));
  set.manifest_fingerprint = buf;
  return set;
}

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

inline json record_to_json(const RunRecord& rec) {
  json nodes = json::array();
  for (const auto& n : rec.nodes) {
    json tasks_hist = json::array();
    for (const auto& h : n.per_task_loss_history) tasks_hist.push_back(h);
    json tasks_exact = json::array();
    for (const auto& h : n.per_task_exact_history) tasks_exact.push_back(h);
    nodes.push_back({{"id", n.id},
                     {"parent", n.parent},
                     {"members", n.members},
                     {"created_at_iter", n.created_at_iter},
                     {"retired_at_iter", n.retired_at_iter},
                     {"shots_used", n.shots_used},
                     {"evaluations", n.evaluations},
                     {"iterations", n.iterations},
                     {"nnz_measurable", n.nnz_measurable},
                     {"status", n.status},
                     {"split_suppressed", n.split_suppressed},
                     {"mixed_loss_history", n.mixed_loss_history},
                     {"per_task_loss_history", tasks_hist},
                     {"per_task_exact_history", tasks_exact},
                     {"last_term_estimates", n.last_term_estimates},
                     {"initial_params", n.initial_params},
                     {"final_params", n.final_params}});
  }
  json results = json::array();
  for (const auto& r : rec.results) {
    results.push_back({{"task_id", r.task_id},
                       {"task_index", r.task_index},
                       {"best_energy", r.best_energy},
                       {"best_cluster", r.best_cluster},
                       {"exact_energy", r.exact_energy},
                       {"reference_energy", detail::finite_or_null(r.reference_energy)},
                       {"fidelity", detail::finite_or_null(r.fidelity)}});
  }
  json refs = json::array();
  for (double r : rec.reference_energies) refs.push_back(detail::finite_or_null(r));
  json min_fid = json::array();
  for (double f : rec.round_min_fidelity) min_fid.push_back(detail::finite_or_null(f));

  return json{{"mode", rec.mode},
              {"seed", rec.seed},
              {"shots_per_term", rec.shots_per_term},
              {"shot_budget", rec.shot_budget},
              {"total_shots", rec.total_shots},
              {"rounds", rec.rounds},
              {"planned_iterations", rec.planned_iterations},
              {"history_stride", rec.history_stride},
              {"task_ids", rec.task_ids},
              {"reference_energies", refs},
              {"nodes", nodes},
              {"results", results},
              {"round_shots", rec.round_shots},
              {"round_min_fidelity", min_fid},
              {"critical_depth", rec.critical_depth},
              {"manifest_fingerprint", rec.manifest_fingerprint},
              {"config_text", rec.config_text}};
}

inline RunRecord record_from_json(const json& j) {
  RunRecord rec;
  rec.mode = j.at("mode").get<std::string>();
  rec.seed = j.at("seed").get<std::uint64_t>();
  rec.shots_per_term = j.at("shots_per_term").get<long>();
  rec.shot_budget = j.at("shot_budget").get<double>();
  rec.total_shots = j.at("total_shots").get<long>();
  rec.rounds = j.at("rounds").get<long>();
  rec.planned_iterations = j.at("planned_iterations").get<long>();
  rec.history_stride = j.at("history_stride").get<long>();
  rec.task_ids = j.at("task_ids").get<std::vector<std::string>>();
  for (const auto& r : j.at("reference_energies")) rec.reference_energies.push_back(detail::double_or_nan(r));
  for (const auto& n : j.at("nodes")) {
    ClusterNodeRecord node;
    node.id = n.at("id").get<std::size_t>();
    node.parent = n.at("parent").get<long>();
    node.members = n.at("members").get<std::vector<std::size_t>>();
    node.created_at_iter = n.at("created_at_iter").get<long>();
    node.retired_at_iter = n.at("retired_at_iter").get<long>();
    node.shots_used = n.at("shots_used").get<long>();
    node.evaluations = n.at("evaluations").get<long>();
    node.iterations = n.at("iterations").get<long>();
    node.nnz_measurable = n.at("nnz_measurable").get<std::size_t>();
    node.status = n.at("status").get<std::string>();
    node.split_suppressed = n.at("split_suppressed").get<bool>();
    node.mixed_loss_history = n.at("mixed_loss_history").get<std::vector<double>>();
    node.per_task_loss_history =
        n.at("per_task_loss_history").get<std::vector<std::vector<double>>>();
    node.per_task_exact_history =
        n.at("per_task_exact_history").get<std::vector<std::vector<double>>>();
    node.last_term_estimates = n.at("last_term_estimates").get<std::vector<double>>();
    node.initial_params = n.at("initial_params").get<std::vector<double>>();
    node.final_params = n.at("final_params").get<std::vector<double>>();
    rec.nodes.push_back(std::move(node));
  }
  for (const auto& r : j.at("results")) {
    TaskResultRecord res;
    res.task_id = r.at("task_id").get<std::string>();
    res.task_index = r.at("task_index").get<std::size_t>();
    res.best_energy = r.at("best_energy").get<double>();
    res.best_cluster = r.at("best_cluster").get<std::size_t>();
    res.exact_energy = r.at("exact_energy").get<double>();
    res.reference_energy = detail::double_or_nan(r.at("reference_energy"));
    res.fidelity = detail::double_or_nan(r.at("fidelity"));
    rec.results.push_back(std::move(res));
  }
  rec.round_shots = j.at("round_shots").get<std::vector<long>>();
  for (const auto& f : j.at("round_min_fidelity"))
    rec.round_min_fidelity.push_back(detail::double_or_nan(f));
  rec.critical_depth = j.at("critical_depth").get<int>();
  rec.manifest_fingerprint = j.at("manifest_fingerprint").get<std::string>();
  rec.config_text = j.at("config_text").get<std::string>();
  return rec;
}

inline RunRecord load_record(const std::filesystem::path& path) {
  return record_from_json(json::parse(read_text_file(path)));
}

inline void save_record(const std::filesystem::path& path, const RunRecord& rec) {
  write_text_file(path, record_to_json(rec).dump(2) + "\n");
}

/// Long-format loss histories for plotting:
/// series,cluster_id,task_id,iteration,value
inline void write_histories_csv(const std::filesystem::path& path, const RunRecord& rec) {
  std::ostringstream out;
  out << "series,cluster_id,task_id,iteration,value\n";
  out.precision(17);
  auto iter_of = [&](const ClusterNodeRecord& n, std::size_t idx, std::size_t full_count) {
    long local = static_cast<long>(idx) * rec.history_stride;
    if (idx + 1 == full_count && rec.history_stride > 1) local = n.iterations - 1;
    return n.created_at_iter + local;
  };
  for (const auto& n : rec.nodes) {
    for (std::size_t i = 0; i < n.mixed_loss_history.size(); ++i)
      out << "mixed_sampled," << n.id << ",," << iter_of(n, i, n.mixed_loss_history.size()) << ','
          << n.mixed_loss_history[i] << '\n';
    for (std::size_t m = 0; m < n.per_task_loss_history.size(); ++m)
      for (std::size_t i = 0; i < n.per_task_loss_history[m].size(); ++i)
        out << "task_sampled," << n.id << ',' << n.members[m] << ','
            << iter_of(n, i, n.per_task_loss_history[m].size()) << ','
            << n.per_task_loss_history[m][i] << '\n';
    for (std::size_t m = 0; m < n.per_task_exact_history.size(); ++m)
      for (std::size_t i = 0; i < n.per_task_exact_history[m].size(); ++i)
        out << "task_exact," << n.id << ',' << n.members[m] << ','
            << iter_of(n, i, n.per_task_exact_history[m].size()) << ','
            << n.per_task_exact_history[m][i] << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace vqtree
