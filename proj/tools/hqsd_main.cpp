#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hqsd/cli.hpp"
#include "hqsd/csv.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Absorption and quasi-stationary laws of finite-population simplex diffusions"};
  std::string config_path;
  std::string out_dir;
  int workers = 0;
  std::uint64_t seed = 0;
  bool list_keys = false;
  app.add_option("config", config_path, "experiment config file (key = value lines)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides 'output')");
  auto* workers_opt =
      app.add_option("--workers", workers, "worker threads (overrides 'workers')")->check(CLI::Range(1, 1024));
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides 'seed')");
  app.add_flag("--keys", list_keys, "list config keys with their defaults and exit");
  CLI11_PARSE(app, argc, argv);

  if (list_keys) {
    std::cout << hqsd::config_reference();
    return 0;
  }
  if (config_path.empty()) {
    std::cerr << "error: a config file is required (see --help, --keys)\n";
    return 1;
  }
  hqsd::ExperimentConfig config;
  try {
    config = hqsd::parse_config(hqsd::read_text_file(config_path));
  } catch (const std::exception& e) {
    std::cerr << "config error in " << config_path << ": " << e.what() << "\n";
    return 1;
  }
  if (*out_opt) config.output = out_dir;
  if (*workers_opt) config.workers = workers;
  if (*seed_opt) config.seed = seed;
  return hqsd::run(config, std::cout);
}
