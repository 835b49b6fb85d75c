// adafuse: batch runner for data generation, training, search and comparison.
#include <adafuse/experiment/commands.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"adafuse: adaptive ensemble experiments driven by a JSON config"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t threads = 1;

  for (const char* name : {"generate", "train", "search", "compare"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override the config's master_seed");
    sub->add_option("--out", out_dir, "override the config's output_dir");
    sub->add_option("--threads", threads, "worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  adafuse::CommandOptions opts;
  if (sub->count("--seed")) opts.seed = seed;
  if (sub->count("--out")) opts.out = out_dir;
  opts.threads = threads;
  return adafuse::run_command(sub->get_name(), config_path, opts, std::cout, std::cerr);
}
