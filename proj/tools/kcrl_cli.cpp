// Command-line front end. Talks to the library only through kcrl.h.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "kcrl/kcrl.h"

namespace {

constexpr int kErrorExit = 3;

int report_error(kcrl_status st) {
  std::fprintf(stderr, "kcrl: %s: %s\n", kcrl_status_string(st), kcrl_last_error());
  return kErrorExit;
}

/// Calls a buffer-filling function twice: once for the size, once for the text.
template <class F>
kcrl_status fetch_text(F&& call, std::string& out) {
  size_t needed = 0;
  kcrl_status st = call(nullptr, 0, &needed);
  if (st != KCRL_OK && st != KCRL_BUFFER_TOO_SMALL) return st;
  std::vector<char> buf(needed);
  st = call(buf.data(), buf.size(), &needed);
  if (st == KCRL_OK) out.assign(buf.data());
  return st;
}

struct ConfigHandle {
  kcrl_config* ptr = nullptr;
  ~ConfigHandle() { kcrl_config_free(ptr); }
};

int cmd_run(const std::string& path, const std::string& resume, int stop_after,
            const std::string& out_dir, bool quiet) {
  ConfigHandle cfg;
  if (kcrl_status st = kcrl_config_load(path.c_str(), &cfg.ptr); st != KCRL_OK)
    return report_error(st);
  kcrl_run_options opt;
  kcrl_run_options_init(&opt);
  opt.resume_path = resume.empty() ? nullptr : resume.c_str();
  opt.stop_after_epoch = stop_after;
  opt.output_directory = out_dir.empty() ? nullptr : out_dir.c_str();
  opt.verbose = quiet ? 0 : 1;
  kcrl_run_result res{};
  if (kcrl_status st = kcrl_run(cfg.ptr, &opt, &res); st != KCRL_OK) return report_error(st);
  if (!quiet) {
    std::fprintf(stderr, "kcrl: %d epoch(s) recorded, final epoch %s, max final distance %.6g\n",
                 res.epochs_completed, res.final_feasible ? "certified" : "not certified",
                 res.final_max_dist);
  }
  return res.exit_code;
}

int cmd_verify(const std::string& path) {
  int passed = 0;
  std::string text;
  const kcrl_status st = fetch_text(
      [&](char* b, size_t c, size_t* n) { return kcrl_verify_checkpoint(path.c_str(), &passed, b, c, n); },
      text);
  if (st != KCRL_OK) return report_error(st);
  std::fputs(text.c_str(), stdout);
  return passed ? 0 : 1;
}

int cmd_plants() {
  std::string text;
  const kcrl_status st = fetch_text(
      [](char* b, size_t c, size_t* n) { return kcrl_plants_describe(b, c, n); }, text);
  if (st != KCRL_OK) return report_error(st);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_margins(const std::string& path) {
  ConfigHandle cfg;
  if (kcrl_status st = kcrl_config_load(path.c_str(), &cfg.ptr); st != KCRL_OK)
    return report_error(st);
  int feasible = 0;
  std::string text;
  const kcrl_status st = fetch_text(
      [&](char* b, size_t c, size_t* n) { return kcrl_config_margins(cfg.ptr, &feasible, b, c, n); },
      text);
  if (st != KCRL_OK) return report_error(st);
  std::fputs(text.c_str(), stdout);
  return feasible ? 0 : 1;
}

int cmd_config(const std::string& path) {
  ConfigHandle cfg;
  if (kcrl_status st = kcrl_config_load(path.c_str(), &cfg.ptr); st != KCRL_OK)
    return report_error(st);
  std::string text;
  const kcrl_status st = fetch_text(
      [&](char* b, size_t c, size_t* n) { return kcrl_config_dump(cfg.ptr, b, c, n); }, text);
  if (st != KCRL_OK) return report_error(st);
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn a dynamics model from data and synthesize a state-feedback policy "
               "with a Lyapunov-style stability certificate."};
  app.set_version_flag("--version", std::string(kcrl_version()));
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 final epoch not certified or not settled (run) or failed "
      "check (verify, margins), 2 stopped early by --stop-after-epoch, 3 error.\n"
      "Environment: KCRL_OUTPUT_DIR overrides output.directory from the config.");

  std::string config_path, resume_path, out_dir, ckpt_path;
  int stop_after = -1;
  bool quiet = false;

  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--resume", resume_path, "Continue from this checkpoint (same config)")
      ->check(CLI::ExistingFile);
  run->add_option("--stop-after-epoch", stop_after,
                  "Stop once this many epochs are complete (simulates an interruption)")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--output-dir", out_dir, "Output directory (overrides env and config)");
  run->add_flag("-q,--quiet", quiet, "No progress lines on stderr");

  CLI::App* verify = app.add_subcommand("verify", "Re-check the invariants stored in a checkpoint");
  verify->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();

  app.add_subcommand("plants", "List the built-in plants with their constants and audits");

  CLI::App* margins = app.add_subcommand(
      "margins", "Print eps_i, eps_pd and feasibility for a config without running it");
  margins->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);

  CLI::App* config = app.add_subcommand("config", "Print the normalized config with all defaults");
  config->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, resume_path, stop_after, out_dir, quiet);
  if (verify->parsed()) return cmd_verify(ckpt_path);
  if (margins->parsed()) return cmd_margins(config_path);
  if (config->parsed()) return cmd_config(config_path);
  return cmd_plants();
}
