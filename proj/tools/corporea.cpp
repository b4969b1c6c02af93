// Copyright 2026 The Corporea Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "corporea/errors.hpp"
#include "corporea/harness.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <iostream>

namespace
{

namespace h = corporea::harness;

struct Options
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> n;
  std::string dataset;
  std::string models;
  std::string drop = "visual";
  bool toy = false;
  bool print_default = false;
};

h::RunConfig resolve(const Options & o)
{
  h::RunConfig config = h::load_config(o.config);
  if (o.seed) config.seed = *o.seed;
  if (o.out) config.output_dir = *o.out;
  if (o.n) config.dataset_size = *o.n;
  config.validate();
  return config;
}

int run(const std::string & command, const Options & o)
{
  if (command == "config") {
    const h::RunConfig config = o.print_default || o.config.empty() ? h::RunConfig{} : resolve(o);
    std::cout << h::config_to_json(config).dump(2) << "\n";
    return h::kOk;
  }
  if (o.config.empty()) {
    throw corporea::DomainError("--config is required");
  }
  const h::RunConfig config = resolve(o);
  const h::fs::path out = config.output_dir;
  if (command == "verify") {
    const std::string problem = h::verify_manifest(out);
    if (!problem.empty()) {
      std::cerr << "manifest verification failed: " << problem << "\n";
      return h::kValidation;
    }
    std::cout << "manifest ok\n";
    return h::kOk;
  }

  const auto start = std::chrono::steady_clock::now();
  h::CommandOutput result;
  if (command == "acquire") {
    result = h::cmd_acquire(config, out);
  } else if (command == "train") {
    result = h::cmd_train(config, out, o.dataset.empty() ? out / "dataset.csv" : h::fs::path(o.dataset));
  } else if (command == "rhi") {
    result = h::cmd_rhi(config, out, o.models.empty() ? out : h::fs::path(o.models), o.toy);
  } else if (command == "selfdetect") {
    result = h::cmd_selfdetect(config, out);
  } else {
    result = h::cmd_reconstruct(
      config, out, o.models.empty() ? out : h::fs::path(o.models), corporea::parse_modality(o.drop));
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  h::write_manifest(out, config, command, result, elapsed);
  std::cout << result.summary.dump(2) << "\n";
  return h::kOk;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Body perception experiments: forward models, free-energy inference, self-detection"};
  app.require_subcommand(1);
  Options o;

  auto with_common = [&](CLI::App * sub) {
    sub->add_option("--config", o.config, "Run configuration JSON");
    sub->add_option("--seed", o.seed, "Override the configured seed");
    sub->add_option("--out", o.out, "Override the output directory");
    return sub;
  };
  with_common(app.add_subcommand("acquire", "Sample random arm configurations and record sensors"))
    ->add_option("--n", o.n, "Number of samples");
  with_common(app.add_subcommand("train", "Fit per-modality forward models"))
    ->add_option("--dataset", o.dataset, "Dataset CSV (default: <out>/dataset.csv)");
  auto * rhi = with_common(app.add_subcommand("rhi", "Run the displaced-arm drift experiment"));
  rhi->add_option("--models", o.models, "Directory holding model_*.json (default: <out>)");
  rhi->add_flag("--toy", o.toy, "Use the one-dimensional identity model instead of trained models");
  with_common(app.add_subcommand("selfdetect", "Run self-detection on a synthetic sequence"));
  auto * rec = with_common(app.add_subcommand("reconstruct", "Infer without one modality and predict it"));
  rec->add_option("--models", o.models, "Directory holding model_*.json (default: <out>)");
  rec->add_option("--drop", o.drop, "Modality to withhold: proprio, visual or tactile");
  with_common(app.add_subcommand("config", "Print the default or resolved configuration"))
    ->add_flag("--print-default", o.print_default, "Print built-in defaults");
  with_common(app.add_subcommand("verify", "Re-hash files listed in the manifest"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? h::kOk : h::kValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const corporea::IoError & e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return h::kIo;
  } catch (const corporea::NumericalError & e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return h::kNumerical;
  } catch (const std::invalid_argument & e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return h::kValidation;
  } catch (const nlohmann::json::exception & e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return h::kValidation;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::kNumerical;
  }
}
