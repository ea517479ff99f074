#include <CLI11.hpp>

#include "vqtree/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"vqtree: multi-task variational-quantum-algorithm runner with "
               "hierarchical cluster splitting"};
  app.require_subcommand(1);

  vqtree::cli::GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a task-family directory");
  generate->set_help_flag("--help", "print help");  // frees --h for the field sweep
  generate->add_option("kind", gen.kind, "tfim | xxz | maxcut")->required();
  generate->add_option("--sites", gen.sites, "chain length (tfim/xxz)");
  generate->add_option("--J", gen.coupling, "coupling strength");
  generate->add_option("--h", gen.range, "field sweep start:stop:count (tfim)");
  generate->add_option("--delta", gen.range, "anisotropy sweep start:stop:count (xxz)");
  generate->add_option("--graph", gen.graph_path, "graph JSON file (maxcut)");
  generate->add_option("--scales", gen.scales, "load-scale sweep start:stop:count (maxcut)");
  generate->add_option("--out", gen.out_dir, "output directory")->required();
  generate->add_flag("--force", gen.force, "allow writing into a non-empty directory");

  vqtree::cli::RunArgs run;
  std::uint64_t seed_opt = 0;
  int threads_opt = 0;
  auto* run_cmd = app.add_subcommand("run", "execute a run config");
  run_cmd->add_option("--config", run.config_path, "run config JSON")->required();
  auto* seed_flag = run_cmd->add_option("--seed", seed_opt, "override the config seed");
  auto* threads_flag = run_cmd->add_option("--threads", threads_opt, "cluster-level parallelism");

  vqtree::cli::CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "compare a tree run against a baseline run");
  compare->add_option("--tree", cmp.tree_path, "tree run.json")->required();
  compare->add_option("--baseline", cmp.baseline_path, "baseline run.json")->required();
  compare->add_option("--fidelity", cmp.fidelity_threshold, "fidelity threshold");
  compare->add_option("--out", cmp.out_dir, "report directory");

  vqtree::cli::StudyArgs study;
  auto* study_cmd = app.add_subcommand("study", "hyperparameter sweep producing a CSV");
  study_cmd->add_option("--kind", study.kind, "window | threshold | split-timing")->required();
  study_cmd->add_option("--config", study.config_path, "base run config JSON")->required();
  study_cmd->add_option("--sweep", study.sweep, "sweep values")->required()->expected(-1);
  study_cmd->add_option("--out", study.out_csv, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  if (generate->parsed()) return vqtree::cli::cmd_generate(gen);
  if (run_cmd->parsed()) {
    if (seed_flag->count() > 0) run.seed_override = seed_opt;
    if (threads_flag->count() > 0) run.threads_override = threads_opt;
    return vqtree::cli::cmd_run(run);
  }
  if (compare->parsed()) return vqtree::cli::cmd_compare(cmp);
  if (study_cmd->parsed()) return vqtree::cli::cmd_study(study);
  return 1;
}
