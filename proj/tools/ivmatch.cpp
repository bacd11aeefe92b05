// ivmatch command-line front end.
//
//   ivmatch match      --config cfg.json [--output DIR]
//   ivmatch sweep      --config cfg.json [--output DIR]
//   ivmatch infer      --config cfg.json --pairs pairs.csv [--output DIR]
//   ivmatch export-mps --config cfg.json [--output DIR] [--no-json]
//   ivmatch check      --config cfg.json --pairs pairs.csv
//
// Exit codes: 0 success, 1 usage or configuration error, 2 no acceptable
// matching within limits, 3 I/O failure. `check` exits 1 when the study
// fails validation.

#include <chrono>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "ivmatch/ivmatch.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string output_dir;  // empty: use the config's output_dir
  std::string pairs_path;
};

ivmatch::RunConfig load(const CommonArgs& a) {
  ivmatch::RunConfig cfg = ivmatch::load_config(a.config_path);
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_match(const CommonArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  ivmatch::RunConfig cfg = load(a);
  ivmatch::MatchResult res = ivmatch::run_match(cfg);
  ivmatch::write_match_outputs(cfg, res, cfg.output_dir);
  std::printf("matched %zu pairs across %zu strata (lambda %.6g, %zu discarded) "
              "in %.2fs -> %s\n",
              res.study.pairs.size(), res.strata.size(), res.prep.lambda,
              res.study.discarded.size(), seconds_since(t0), cfg.output_dir.c_str());
  return 0;
}

int cmd_sweep(const CommonArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  ivmatch::RunConfig cfg = load(a);
  ivmatch::SweepResult res = ivmatch::separation_sweep(cfg);
  ivmatch::write_sweep_outputs(res, cfg.output_dir);
  std::printf("swept %zu thresholds in %.2fs -> %s\n", res.columns.size(),
              seconds_since(t0), cfg.output_dir.c_str());
  return 0;
}

int cmd_infer(const CommonArgs& a) {
  auto t0 = std::chrono::steady_clock::now();
  ivmatch::RunConfig cfg = load(a);
  ivmatch::InferenceReport rep = ivmatch::run_infer(cfg, a.pairs_path);
  ivmatch::write_inference_outputs(rep, cfg.output_dir);
  std::printf("inference on %lld pairs (two-sided P %.6g) in %.2fs -> %s\n",
              rep.table.pairs(), rep.p_two_sided, seconds_since(t0),
              cfg.output_dir.c_str());
  return 0;
}

int cmd_export(const CommonArgs& a, bool with_json) {
  auto t0 = std::chrono::steady_clock::now();
  ivmatch::RunConfig cfg = load(a);
  ivmatch::export_models(cfg, cfg.output_dir, with_json);
  std::printf("exported models in %.2fs -> %s\n", seconds_since(t0),
              cfg.output_dir.c_str());
  return 0;
}

int cmd_check(const CommonArgs& a) {
  ivmatch::RunConfig cfg = load(a);
  ivmatch::CheckResult res = ivmatch::check_study(cfg, a.pairs_path);
  if (res.ok()) {
    std::printf("check passed: study satisfies every configured constraint\n");
    return 0;
  }
  std::fprintf(stderr, "check failed with %zu problem(s):\n", res.problems.size());
  for (const auto& p : res.problems) std::fprintf(stderr, "  %s\n", p.c_str());
  return ivmatch::kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrumented matching and randomization inference"};
  app.require_subcommand(1);

  CommonArgs args;
  bool no_json = false;

  auto add_common = [&](CLI::App* sub, bool needs_pairs) {
    sub->add_option("--config", args.config_path, "JSON run configuration")
        ->required();
    sub->add_option("--output", args.output_dir, "output directory override");
    if (needs_pairs)
      sub->add_option("--pairs", args.pairs_path, "pairs.csv from a match run")
          ->required();
  };

  CLI::App* m = app.add_subcommand("match", "solve the matching design");
  add_common(m, false);
  CLI::App* s = app.add_subcommand("sweep", "re-solve across gap thresholds");
  add_common(s, false);
  CLI::App* i = app.add_subcommand("infer", "randomization inference on a study");
  add_common(i, true);
  CLI::App* e = app.add_subcommand("export-mps", "write the integer programs");
  add_common(e, false);
  e->add_flag("--no-json", no_json, "skip the JSON twin of each model");
  CLI::App* c = app.add_subcommand("check", "validate a saved study");
  add_common(c, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (m->parsed()) return cmd_match(args);
    if (s->parsed()) return cmd_sweep(args);
    if (i->parsed()) return cmd_infer(args);
    if (e->parsed()) return cmd_export(args, !no_json);
    if (c->parsed()) return cmd_check(args);
  } catch (const ivmatch::ExitError& err) {
    std::fprintf(stderr, "ivmatch: %s\n", err.what());
    return err.code();
  } catch (const std::exception& err) {
    std::fprintf(stderr, "ivmatch: %s\n", err.what());
    return ivmatch::kExitUsage;
  }
  return ivmatch::kExitUsage;
}
