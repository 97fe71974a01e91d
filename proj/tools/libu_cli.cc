// Copyright 2026 The libu-lab Authors.
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

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "libu/cli.h"

namespace {

using libu::cli::CliError;

struct CommonFlags {
  std::string config_file;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<double> max_seconds;
  std::string algorithm;
  std::vector<std::string> settings;
  bool allow_override = false;
};

void AddCommon(CLI::App* app, CommonFlags& f, bool with_algorithm) {
  app->add_option("--config", f.config_file, "KEY=VALUE settings file");
  app->add_option("--preset", f.preset, "setup1, setup2, setup3 or custom");
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--max-seconds", f.max_seconds, "Wall-clock budget");
  app->add_option("--set", f.settings, "Extra KEY=VALUE setting")
      ->allow_extra_args(false);
  app->add_flag("--allow-override", f.allow_override,
                "Allow settings that change preset values");
  if (with_algorithm) {
    app->add_option("--algorithm", f.algorithm, "libu, ga, gd or kl");
  }
}

libu::cli::ExperimentConfig Resolve(
    const CommonFlags& f,
    std::vector<std::pair<std::string, std::string>> extra) {
  std::vector<std::pair<std::string, std::string>> settings;
  for (const auto& s : f.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CliError("usage", "--set expects KEY=VALUE, got '" + s + "'");
    }
    settings.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  settings.insert(settings.end(), extra.begin(), extra.end());
  auto c = libu::cli::ResolveConfig(
      f.preset.empty() ? std::nullopt : std::optional<std::string>(f.preset),
      f.config_file.empty()
          ? std::nullopt
          : std::optional<std::filesystem::path>(f.config_file),
      settings, f.allow_override);
  if (f.seed) c.seed = *f.seed;
  if (f.max_seconds) {
    if (!(*f.max_seconds > 0)) {
      throw CliError("usage", "--max-seconds must be positive");
    }
    c.max_seconds = *f.max_seconds;
  }
  if (!f.algorithm.empty()) c.algorithm = f.algorithm;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memorize-then-unlearn experiments on a tiny language model"};
  app.set_version_flag("--version", libu::cli::kVersion);
  app.require_subcommand(1);

  CommonFlags gen_flags, mem_flags, unl_flags;
  std::string gen_out, mem_out, mem_data, unl_out, unl_data, unl_ckpt;
  std::string eval_out, eval_data, eval_ckpt, eval_label;
  std::vector<std::string> compare_reports;
  std::string compare_out;
  bool gen_force = false;
  std::optional<std::size_t> forget_count, retain_count, mem_epochs;

  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic corpus");
  AddCommon(gen, gen_flags, false);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--force", gen_force, "Overwrite a non-empty directory");
  gen->add_option("--forget-count", forget_count, "Forget examples");
  gen->add_option("--retain-count", retain_count, "Retain examples");

  auto* mem = app.add_subcommand("memorize", "Fine-tune a fresh model");
  AddCommon(mem, mem_flags, false);
  mem->add_option("--data", mem_data, "Corpus directory")->required();
  mem->add_option("--out", mem_out, "Output directory")->required();
  mem->add_option("--epochs", mem_epochs, "Maximum memorization epochs");

  auto* unl = app.add_subcommand("unlearn", "Run an unlearning algorithm");
  AddCommon(unl, unl_flags, true);
  unl->add_option("--checkpoint", unl_ckpt, "Memorized checkpoint")->required();
  unl->add_option("--data", unl_data, "Corpus directory")->required();
  unl->add_option("--out", unl_out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Score a checkpoint");
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  ev->add_option("--data", eval_data, "Corpus directory")->required();
  ev->add_option("--out", eval_out, "Output directory")->required();
  ev->add_option("--label", eval_label, "Row label in tables");

  auto* cmp = app.add_subcommand("compare", "Tabulate evaluation reports");
  cmp->add_option("reports", compare_reports, "report.json files")->required();
  cmp->add_option("--out", compare_out, "Also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    std::string output;
    if (*gen) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (forget_count)
        extra.emplace_back("FORGET_COUNT", std::to_string(*forget_count));
      if (retain_count)
        extra.emplace_back("RETAIN_COUNT", std::to_string(*retain_count));
      output = libu::cli::CmdGenCorpus(
          {Resolve(gen_flags, extra), gen_out, gen_force});
    } else if (*mem) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (mem_epochs)
        extra.emplace_back("MEMORIZE_EPOCHS", std::to_string(*mem_epochs));
      output = libu::cli::CmdMemorize(
          {Resolve(mem_flags, extra), mem_data, mem_out});
    } else if (*unl) {
      output = libu::cli::CmdUnlearn(
          {Resolve(unl_flags, {}), unl_ckpt, unl_data, unl_out});
    } else if (*ev) {
      output = libu::cli::CmdEval({eval_ckpt, eval_data, eval_out, eval_label});
    } else if (*cmp) {
      libu::cli::CompareCommandOptions o;
      for (const auto& r : compare_reports) o.reports.emplace_back(r);
      if (!compare_out.empty()) o.out = compare_out;
      output = libu::cli::CmdCompare(o);
    }
    std::cout << output;
    return 0;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
