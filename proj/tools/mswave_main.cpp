#include <CLI11.hpp>

#include <iostream>

#include "mswave/cli.hpp"
#include "mswave/linalg.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mixed multiscale wave solver"};
  app.require_subcommand(1);

  std::string config_path, offline_path, out_dir = ".";
  long long seed_override = -1;
  int threads_override = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", config_path, "JSON configuration file");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_override, "override the medium seed");
    sub->add_option("--threads", threads_override, "worker threads for the offline stage");
  };

  CLI::App* offline = app.add_subcommand("offline", "build and save the multiscale basis");
  add_common(offline);
  CLI::App* run = app.add_subcommand("run", "time-domain simulation");
  add_common(run);
  run->add_option("--offline", offline_path, "offline basis file");
  CLI::App* table = app.add_subcommand("table", "basis-count convergence sweep");
  add_common(table);
  table->add_option("--offline", offline_path, "offline basis file")->required();
  CLI::App* mesh_info = app.add_subcommand("mesh-info", "mesh summary report");
  add_common(mesh_info);
  CLI::App* pml_demo = app.add_subcommand("pml-demo", "absorbing-layer demonstration");
  add_common(pml_demo);

  CLI11_PARSE(app, argc, argv);

  try {
    mswave::RunConfig cfg = mswave::load_config(config_path);
    if (seed_override >= 0) cfg.medium.seed = static_cast<std::uint64_t>(seed_override);
    if (threads_override > 0) cfg.threads = threads_override;

    if (offline->parsed()) return mswave::cmd_offline(cfg, out_dir);
    if (run->parsed()) return mswave::cmd_run(cfg, offline_path, out_dir);
    if (table->parsed()) return mswave::cmd_table(cfg, offline_path, out_dir);
    if (mesh_info->parsed()) return mswave::cmd_mesh_info(cfg, out_dir);
    if (pml_demo->parsed()) return mswave::cmd_pml_demo(cfg, out_dir);
  } catch (const mswave::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mswave::SpdError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const mswave::ConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
