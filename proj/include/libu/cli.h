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

#ifndef LIBU_CLI_H_
#define LIBU_CLI_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "libu/baselines.h"
#include "libu/data.h"
#include "libu/model.h"
#include "libu/unlearn.h"

namespace libu::cli {

inline constexpr const char* kVersion = "0.1.0";

// Failure reported as "error: <code>: <message>".
class CliError : public std::runtime_error {
 public:
  CliError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Everything a pipeline stage may need. Keys in config files use the
// uppercase names listed by SettingKeys().
struct ExperimentConfig {
  std::string preset = "custom";
  std::string algorithm = "libu";
  std::uint64_t seed = 0;
  double max_seconds = 3600.0;
  CorpusSpec corpus;
  ModelConfig model;
  MemorizeOptions memorize;
  UnlearnConfig unlearn;
  // Baseline settings left unset mirror the unlearning run: same epochs and
  // batch size, learning rate equal to the largest Phase-1 step scale
  // (effective rate / damping).
  std::optional<std::size_t> baseline_epochs;
  std::optional<double> baseline_learning_rate;
  std::optional<std::size_t> baseline_batch_size;
  double kl_weight = 1.0;
  double forget_weight = 1.0;
};

BaselineConfig BaselineFor(const ExperimentConfig& config);

// KEY=VALUE lines; blank lines and '#' comments are skipped. Throws CliError
// naming the file and line on malformed input.
std::map<std::string, std::string> ParseKeyValueFile(
    const std::filesystem::path& path);

std::vector<std::string> SettingKeys();

// Assigns one uppercase setting. Throws CliError on an unknown key or a
// value that does not parse.
void ApplySetting(ExperimentConfig& config, const std::string& key,
                  const std::string& value);

// Applies `preset`, then the config file and explicit settings in order.
// Changing a preset-controlled value needs `allow_override`.
ExperimentConfig ResolveConfig(
    const std::optional<std::string>& preset,
    const std::optional<std::filesystem::path>& config_file,
    const std::vector<std::pair<std::string, std::string>>& settings,
    bool allow_override);

// Flat KEY -> value view of every setting, used in manifests.
std::map<std::string, std::string> DescribeConfig(const ExperimentConfig& c);

// Lowercase hex SHA-256 of a file's bytes.
std::string Sha256File(const std::filesystem::path& path);

struct GenCorpusOptions {
  ExperimentConfig config;
  std::filesystem::path out;
  bool force = false;
};
struct MemorizeCommandOptions {
  ExperimentConfig config;
  std::filesystem::path data;
  std::filesystem::path out;
};
struct UnlearnCommandOptions {
  ExperimentConfig config;
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
};
struct EvalCommandOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string label;
};
struct CompareCommandOptions {
  std::vector<std::filesystem::path> reports;
  std::optional<std::filesystem::path> out;
};

// Each command writes its artifacts plus manifest.json and returns the text
// to print on success.
std::string CmdGenCorpus(const GenCorpusOptions& options);
std::string CmdMemorize(const MemorizeCommandOptions& options);
std::string CmdUnlearn(const UnlearnCommandOptions& options);
std::string CmdEval(const EvalCommandOptions& options);
std::string CmdCompare(const CompareCommandOptions& options);

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kRunLogFile = "run_log.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace libu::cli

#endif  // LIBU_CLI_H_
