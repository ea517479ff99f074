#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vqtree/bench.hpp"
#include "vqtree/engine.hpp"
#include "vqtree/io.hpp"

namespace vqtree::cli {

namespace fs = std::filesystem;

// Exit codes, stable across releases:
//   0 ok, 2 invalid generate spec / output collision, 3 config or sweep error,
//   4 task ingestion error, 5 record/manifest mismatch.
constexpr int kExitOk = 0;
constexpr int kExitGenerate = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIngest = 4;
constexpr int kExitMismatch = 5;

/// Inclusive range "start:stop:count"; count == 1 collapses to {start}.
inline std::vector<double> parse_range(const std::string& text) {
  double start = 0, stop = 0;
  long count = 0;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%ld%c", &start, &stop, &count, &extra) != 3 ||
      count < 1)
    throw std::invalid_argument("range must be start:stop:count with count >= 1, got \"" + text +
                                "\"");
  std::vector<double> values;
  if (count == 1) {
    values.push_back(start);
    return values;
  }
  for (long i = 0; i < count; ++i)
    values.push_back(start + (stop - start) * static_cast<double>(i) /
                                 static_cast<double>(count - 1));
  return values;
}

inline std::string format_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string kind;  // tfim | xxz | maxcut
  int sites = 6;
  double coupling = 1.0;
  std::string range;       // h or Delta sweep, start:stop:count
  std::string graph_path;  // maxcut
  std::string scales;      // maxcut load scales, start:stop:count
  std::string out_dir;
  bool force = false;
};

inline int cmd_generate(const GenerateArgs& args) {
  try {
    if (args.out_dir.empty()) throw std::invalid_argument("--out is required");
    const fs::path out(args.out_dir);
    if (fs::exists(out) && !fs::is_empty(out) && !args.force)
      throw std::invalid_argument("output directory " + out.string() +
                                  " is not empty (use --force to overwrite)");
    fs::create_directories(out);

    Manifest manifest;
    std::vector<Hamiltonian> tasks;
    std::vector<double> params;

    if (args.kind == "tfim" || args.kind == "xxz") {
      if (args.range.empty()) throw std::invalid_argument("--" + std::string(args.kind == "tfim" ? "h" : "delta") + " range is required");
      params = parse_range(args.range);
      if (args.kind == "tfim") {
        tasks = gen_tfim({args.sites, args.coupling, params});
      } else {
        tasks = gen_xxz({args.sites, args.coupling, params});
      }
      manifest.kind = args.kind;
      manifest.n_qubits = args.sites;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        ManifestEntry e;
        e.id = args.kind + "_n" + std::to_string(args.sites) + "_p" + format_param(params[i]);
        e.file = e.id + ".json";
        e.parameter = params[i];
        e.reference_energy = exact_ground_energy(tasks[i]);
        manifest.entries.push_back(e);
      }
    } else if (args.kind == "maxcut") {
      if (args.graph_path.empty()) throw std::invalid_argument("--graph is required for maxcut");
      if (args.scales.empty()) throw std::invalid_argument("--scales is required for maxcut");
      const WeightedGraph base = load_graph(args.graph_path);
      params = parse_range(args.scales);
      manifest.kind = "maxcut";
      manifest.n_qubits = base.nodes;
      manifest.base_graph = "base_graph.json";
      save_graph(out / manifest.base_graph, base);
      for (double scale : params) {
        const WeightedGraph g = scale_graph(base, scale);
        const Hamiltonian task = negate(gen_maxcut(g));  // engine minimizes
        tasks.push_back(task);
        ManifestEntry e;
        e.id = "maxcut_n" + std::to_string(base.nodes) + "_s" + format_param(scale);
        e.file = e.id + ".json";
        e.parameter = scale;
        e.max_cut_value = brute_force_max_cut(g);
        e.reference_energy = -e.max_cut_value;
        manifest.entries.push_back(e);
      }
    } else {
      throw std::invalid_argument("unknown generator kind \"" + args.kind + "\"");
    }

    for (std::size_t i = 0; i < tasks.size(); ++i)
      save_hamiltonian(out / manifest.entries[i].file, tasks[i]);
    write_text_file(out / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
    std::cout << "wrote " << tasks.size() << " tasks to " << out.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "generate: " << e.what() << "\n";
    return kExitGenerate;
  }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> threads_override;
};

struct LoadedRunConfig {
  EngineConfig engine;
  std::string task_manifest;  // one of manifest/glob set
  std::string task_glob;
  std::string maqaoa_graph_path;  // resolved after tasks load
  std::string output_dir;
  std::string config_text;
};

inline LoadedRunConfig parse_run_config(const std::string& text) {
  const json j = json::parse(text);
  detail::require_keys(j,
                       {"mode", "tasks", "budget", "shots_per_term", "optimizer", "monitor",
                        "ansatz", "seed", "output_dir", "history_stride",
                        "forced_split_fraction", "baseline_allocation", "init", "threads"},
                       "run config");
  LoadedRunConfig out;
  out.config_text = text;
  EngineConfig& cfg = out.engine;

  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "tree") cfg.mode = RunMode::tree;
  else if (mode == "baseline") cfg.mode = RunMode::baseline;
  else if (mode == "forced-split") cfg.mode = RunMode::forced_split;
  else throw std::invalid_argument("mode must be tree, baseline, or forced-split");

  const json& tasks = j.at("tasks");
  detail::require_keys(tasks, {"manifest", "glob"}, "tasks block");
  if (tasks.contains("manifest") == tasks.contains("glob"))
    throw std::invalid_argument("tasks block needs exactly one of manifest/glob");
  if (tasks.contains("manifest")) out.task_manifest = tasks.at("manifest").get<std::string>();
  if (tasks.contains("glob")) out.task_glob = tasks.at("glob").get<std::string>();

  cfg.shot_budget = j.at("budget").get<double>();
  if (j.contains("shots_per_term")) cfg.shots_per_term = j.at("shots_per_term").get<long>();

  const json& opt = j.at("optimizer");
  detail::require_keys(opt, {"kind", "a", "c", "alpha", "gamma", "A", "calibrate_target",
                             "init_step"},
                       "optimizer block");
  const std::string kind = opt.at("kind").get<std::string>();
  if (kind == "spsa") {
    SpsaSettings s;
    if (opt.contains("a")) s.a = opt.at("a").get<double>();
    if (opt.contains("c")) s.c = opt.at("c").get<double>();
    if (opt.contains("alpha")) s.alpha = opt.at("alpha").get<double>();
    if (opt.contains("gamma")) s.gamma = opt.at("gamma").get<double>();
    if (opt.contains("A")) s.A = opt.at("A").get<double>();
    if (opt.contains("calibrate_target"))
      s.calibrate_target = opt.at("calibrate_target").get<double>();
    cfg.optimizer = s;
  } else if (kind == "simplex") {
    SimplexSettings s;
    if (opt.contains("init_step")) s.init_step = opt.at("init_step").get<double>();
    cfg.optimizer = s;
  } else {
    throw std::invalid_argument("optimizer kind must be spsa or simplex");
  }

  if (j.contains("monitor")) {
    const json& mon = j.at("monitor");
    detail::require_keys(mon, {"warmup", "window", "eps_split"}, "monitor block");
    if (mon.contains("warmup")) cfg.warmup = mon.at("warmup").get<long>();
    if (mon.contains("window")) cfg.window = mon.at("window").get<long>();
    if (mon.contains("eps_split")) cfg.eps_split = mon.at("eps_split").get<double>();
  }

  const json& ans = j.at("ansatz");
  detail::require_keys(ans, {"kind", "layers", "p", "graph"}, "ansatz block");
  const std::string akind = ans.at("kind").get<std::string>();
  if (akind == "hea") {
    HeaSpec spec;
    if (ans.contains("layers")) spec.layers = ans.at("layers").get<int>();
    cfg.ansatz = spec;  // n_qubits filled after tasks load
  } else if (akind == "maqaoa") {
    MaQaoaSpec spec;
    if (ans.contains("p")) spec.p = ans.at("p").get<int>();
    if (!ans.contains("graph"))
      throw std::invalid_argument("maqaoa ansatz needs a graph file");
    out.maqaoa_graph_path = ans.at("graph").get<std::string>();
    cfg.ansatz = spec;
  } else {
    throw std::invalid_argument("ansatz kind must be hea or maqaoa");
  }

  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  out.output_dir = j.value("output_dir", std::string("."));
  if (j.contains("history_stride")) cfg.history_stride = j.at("history_stride").get<long>();
  if (j.contains("forced_split_fraction"))
    cfg.forced_split_fraction = j.at("forced_split_fraction").get<double>();
  if (j.contains("baseline_allocation")) {
    const std::string alloc = j.at("baseline_allocation").get<std::string>();
    if (alloc == "strict") cfg.baseline_alloc = BaselineAlloc::strict;
    else if (alloc == "shared") cfg.baseline_alloc = BaselineAlloc::shared;
    else throw std::invalid_argument("baseline_allocation must be strict or shared");
  }
  if (j.contains("init")) {
    const json& init = j.at("init");
    detail::require_keys(init, {"kind", "scale"}, "init block");
    const std::string ikind = init.at("kind").get<std::string>();
    if (ikind == "zeros") cfg.init.kind = InitSpec::Kind::zeros;
    else if (ikind == "uniform") cfg.init.kind = InitSpec::Kind::uniform;
    else throw std::invalid_argument("init kind must be zeros or uniform");
    if (init.contains("scale")) cfg.init.scale = init.at("scale").get<double>();
  }
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  return out;
}

inline int cmd_run(const RunArgs& args) {
  LoadedRunConfig loaded;
  try {
    loaded = parse_run_config(read_text_file(args.config_path));
    if (args.seed_override) loaded.engine.seed = *args.seed_override;
    if (args.threads_override) loaded.engine.threads = *args.threads_override;
  } catch (const std::exception& e) {
    std::cerr << "run: config error: " << e.what() << "\n";
    return kExitConfig;
  }

  TaskSet tasks;
  try {
    const fs::path cfg_dir = fs::path(args.config_path).parent_path();
    auto resolve = [&](const std::string& p) {
      const fs::path path(p);
      return path.is_absolute() || fs::exists(path) ? path : cfg_dir / path;
    };
    if (!loaded.task_manifest.empty()) tasks = load_task_set(resolve(loaded.task_manifest));
    else tasks = load_task_set_glob(resolve(loaded.task_glob).string());

    // Complete the ansatz spec now that the register size is known.
    if (std::holds_alternative<HeaSpec>(loaded.engine.ansatz)) {
      std::get<HeaSpec>(loaded.engine.ansatz).n_qubits = tasks.tasks.front().n_qubits;
    } else {
      auto& spec = std::get<MaQaoaSpec>(loaded.engine.ansatz);
      spec.graph = load_graph(resolve(loaded.maqaoa_graph_path));
      if (spec.graph.nodes != tasks.tasks.front().n_qubits)
        throw std::invalid_argument("ansatz graph node count does not match task qubit count");
    }
  } catch (const std::exception& e) {
    std::cerr << "run: task ingestion error: " << e.what() << "\n";
    return kExitIngest;
  }

  try {
    RunRecord rec = loaded.engine.mode == RunMode::baseline
                        ? baseline_run(tasks, loaded.engine)
                        : controller_run(tasks, loaded.engine);
    rec.config_text = loaded.config_text;
    if (args.seed_override)
      rec.config_text += "\n# seed overridden to " + std::to_string(*args.seed_override) + "\n";

    const fs::path out(loaded.output_dir);
    fs::create_directories(out);
    save_record(out / "run.json", rec);
    write_histories_csv(out / "histories.csv", rec);

    for (const auto& r : rec.results) {
      std::cout << "task " << r.task_id << " energy=" << r.exact_energy;
      if (!std::isnan(r.fidelity)) std::cout << " fidelity=" << r.fidelity;
      std::cout << " cluster=" << r.best_cluster << "\n";
    }
    std::cout << "total_shots=" << rec.total_shots << " rounds=" << rec.rounds
              << " depth=" << rec.critical_depth << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "run: " << e.what() << "\n";
    return kExitConfig;
  }
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareArgs {
  std::string tree_path;
  std::string baseline_path;
  double fidelity_threshold = 0.98;
  std::string out_dir;  // optional; defaults next to the tree record
};

inline int cmd_compare(const CompareArgs& args) {
  RunRecord tree, base;
  try {
    tree = load_record(args.tree_path);
    base = load_record(args.baseline_path);
  } catch (const std::exception& e) {
    std::cerr << "compare: cannot load records: " << e.what() << "\n";
    return kExitIngest;
  }
  if (tree.manifest_fingerprint != base.manifest_fingerprint ||
      tree.task_ids != base.task_ids) {
    std::cerr << "compare: records reference different task manifests\n";
    return kExitMismatch;
  }

  const auto tree_shots = shots_to_threshold(tree, args.fidelity_threshold);
  const auto base_shots = shots_to_threshold(base, args.fidelity_threshold);

  json report;
  report["fidelity_threshold"] = args.fidelity_threshold;
  report["tree_total_shots"] = tree.total_shots;
  report["baseline_total_shots"] = base.total_shots;
  report["tree_critical_depth"] = tree_critical_depth(tree);
  report["tree_shots_to_threshold"] =
      tree_shots ? json(*tree_shots) : json("did not reach");
  report["baseline_shots_to_threshold"] =
      base_shots ? json(*base_shots) : json("did not reach");
  if (tree_shots && base_shots)
    report["savings_ratio"] = savings_ratio(base, tree, args.fidelity_threshold);
  else
    report["savings_ratio"] = "did not reach";

  json per_task = json::array();
  for (std::size_t i = 0; i < tree.results.size(); ++i) {
    per_task.push_back({{"task_id", tree.results[i].task_id},
                        {"tree_fidelity", detail::finite_or_null(tree.results[i].fidelity)},
                        {"baseline_fidelity", detail::finite_or_null(base.results[i].fidelity)}});
  }
  report["tasks"] = per_task;

  const fs::path out = args.out_dir.empty()
                           ? fs::path(args.tree_path).parent_path()
                           : fs::path(args.out_dir);
  fs::create_directories(out.empty() ? "." : out);
  write_text_file(out / "compare.json", report.dump(2) + "\n");

  // Shots-vs-fidelity table over a threshold grid, for plotting.
  {
    std::ostringstream csv;
    csv << "fidelity_threshold,tree_shots,baseline_shots,savings_ratio\n";
    csv.precision(17);
    std::vector<double> grid;
    for (double t = 0.80; t <= 0.999; t += 0.005) grid.push_back(t);
    grid.push_back(args.fidelity_threshold);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (double t : grid) {
      const auto ts = shots_to_threshold(tree, t);
      const auto bs = shots_to_threshold(base, t);
      csv << t << ',';
      if (ts) csv << *ts;
      csv << ',';
      if (bs) csv << *bs;
      csv << ',';
      if (ts && bs) csv << static_cast<double>(*bs) / static_cast<double>(*ts);
      csv << '\n';
    }
    write_text_file(out / "shots_vs_fidelity.csv", csv.str());
  }

  std::cout << "savings_ratio=";
  if (tree_shots && base_shots)
    std::cout << savings_ratio(base, tree, args.fidelity_threshold);
  else
    std::cout << "n/a (threshold " << (tree_shots ? "baseline" : "tree") << " did not reach)";
  std::cout << " tree_depth=" << tree_critical_depth(tree) << "\n";
  for (const auto& t : report["tasks"])
    std::cout << "task " << t["task_id"].get<std::string>() << " tree_F="
              << (t["tree_fidelity"].is_null() ? "n/a" : t["tree_fidelity"].dump())
              << " baseline_F="
              << (t["baseline_fidelity"].is_null() ? "n/a" : t["baseline_fidelity"].dump())
              << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// study
// ---------------------------------------------------------------------------

struct StudyArgs {
  std::string kind;  // window | threshold | split-timing
  std::string config_path;
  std::vector<double> sweep;
  std::string out_csv;
};

inline int cmd_study(const StudyArgs& args) {
  LoadedRunConfig loaded;
  TaskSet tasks;
  try {
    if (args.sweep.empty()) throw std::invalid_argument("sweep must be nonempty");
    if (args.kind != "window" && args.kind != "threshold" && args.kind != "split-timing")
      throw std::invalid_argument("study kind must be window, threshold, or split-timing");
    loaded = parse_run_config(read_text_file(args.config_path));
  } catch (const std::exception& e) {
    std::cerr << "study: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const fs::path cfg_dir = fs::path(args.config_path).parent_path();
    auto resolve = [&](const std::string& p) {
      const fs::path path(p);
      return path.is_absolute() || fs::exists(path) ? path : cfg_dir / path;
    };
    if (!loaded.task_manifest.empty()) tasks = load_task_set(resolve(loaded.task_manifest));
    else tasks = load_task_set_glob(resolve(loaded.task_glob).string());
    if (std::holds_alternative<HeaSpec>(loaded.engine.ansatz))
      std::get<HeaSpec>(loaded.engine.ansatz).n_qubits = tasks.tasks.front().n_qubits;
    else {
      auto& spec = std::get<MaQaoaSpec>(loaded.engine.ansatz);
      spec.graph = load_graph(resolve(loaded.maqaoa_graph_path));
    }
    for (double r : tasks.reference_energies)
      if (std::isnan(r))
        throw std::invalid_argument("study needs reference energies for every task");
  } catch (const std::exception& e) {
    std::cerr << "study: task ingestion error: " << e.what() << "\n";
    return kExitIngest;
  }

  try {
    std::ostringstream csv;
    csv << "sweep_value,applied_value,mean_error,max_error,tree_critical_depth,total_shots";
    for (const auto& id : tasks.ids) csv << ",err_" << id;
    csv << "\n";
    csv.precision(12);

    constexpr long kWindowFloor = 20;
    for (double value : args.sweep) {
      EngineConfig cfg = loaded.engine;
      double applied = value;
      if (args.kind == "window") {
        cfg.mode = RunMode::tree;
        long w = static_cast<long>(std::llround(value));
        if (w < kWindowFloor) w = kWindowFloor;  // floor rule, noted via applied_value
        applied = static_cast<double>(w);
        cfg.window = w;
        if (cfg.warmup && *cfg.warmup < w) cfg.warmup = 2 * w;
        if (!cfg.warmup) cfg.warmup = std::max<long>(2 * w, 50);
      } else if (args.kind == "threshold") {
        cfg.mode = RunMode::tree;
        if (!(value > 0.0)) throw std::invalid_argument("threshold sweep values must be > 0");
        cfg.eps_split = value;
      } else {
        cfg.mode = RunMode::forced_split;
        if (!(value > 0.0 && value < 1.0))
          throw std::invalid_argument("split-timing fractions must lie in (0, 1)");
        cfg.forced_split_fraction = value;
      }

      const RunRecord rec = controller_run(tasks, cfg);
      double mean_err = 0.0, max_err = 0.0;
      std::vector<double> errs;
      for (const auto& r : rec.results) {
        const double err = 1.0 - r.fidelity;
        errs.push_back(err);
        mean_err += err;
        max_err = std::max(max_err, err);
      }
      mean_err /= static_cast<double>(rec.results.size());
      csv << value << ',' << applied << ',' << mean_err << ',' << max_err << ','
          << rec.critical_depth << ',' << rec.total_shots;
      for (double e : errs) csv << ',' << e;
      csv << "\n";
    }
    const fs::path out = args.out_csv.empty() ? fs::path("study.csv") : fs::path(args.out_csv);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    write_text_file(out, csv.str());
    std::cout << "wrote " << args.sweep.size() << " sweep rows to " << out.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "study: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace vqtree::cli
