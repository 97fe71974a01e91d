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

#include <charconv>
#include <fstream>
#include <functional>
#include <set>

#include "libu/cli.h"

namespace libu::cli {
namespace {

std::string FormatDouble(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw CliError("invalid_config",
                   key + ": cannot parse '" + value + "' as a number");
  }
  return out;
}

bool ParseBool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw CliError("invalid_config",
                 key + ": expected true or false, got '" + value + "'");
}

struct Setting {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)>
      set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Setting Count(T ExperimentConfig::* group, std::size_t T::* field) {
  return {[=](ExperimentConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*field = ParseNumber<std::size_t>(k, v);
          },
          [=](const ExperimentConfig& c) {
            return std::to_string((c.*group).*field);
          }};
}

template <typename T>
Setting Real(T ExperimentConfig::* group, double T::* field) {
  return {[=](ExperimentConfig& c, const std::string& k, const std::string& v) {
            (c.*group).*field = ParseNumber<double>(k, v);
          },
          [=](const ExperimentConfig& c) {
            return FormatDouble((c.*group).*field);
          }};
}

Setting OptionalCount(std::optional<std::size_t> UnlearnConfig::* field) {
  return {[=](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.unlearn.*field = ParseNumber<std::size_t>(k, v);
          },
          [=](const ExperimentConfig& c) {
            const auto& f = c.unlearn.*field;
            return f ? std::to_string(*f) : std::string("default");
          }};
}

const std::map<std::string, Setting>& Settings() {
  using E = ExperimentConfig;
  static const std::map<std::string, Setting> settings = {
      // Unlearning hyperparameters.
      {"NUM_EPOCHS", Count(&E::unlearn, &UnlearnConfig::num_epochs)},
      {"LEARNING_RATE", Real(&E::unlearn, &UnlearnConfig::learning_rate)},
      {"BATCH_SIZE", Count(&E::unlearn, &UnlearnConfig::batch_size)},
      {"LORA_RANK", Count(&E::unlearn, &UnlearnConfig::lora_rank)},
      {"ACCUMULATION_STEPS",
       Count(&E::unlearn, &UnlearnConfig::accumulation_steps)},
      {"MAX_LENGTH", Count(&E::unlearn, &UnlearnConfig::max_length)},
      {"DAMPING_FACTOR", Real(&E::unlearn, &UnlearnConfig::damping_factor)},
      {"SOPHIA_RHO", Real(&E::unlearn, &UnlearnConfig::sophia_rho)},
      {"SOPHIA_GAMMA", Real(&E::unlearn, &UnlearnConfig::sophia_gamma)},
      {"SOPHIA_CLIP", Real(&E::unlearn, &UnlearnConfig::sophia_clip)},
      {"SOPHIA_EPSILON", Real(&E::unlearn, &UnlearnConfig::sophia_epsilon)},
      {"SOPHIA_BETA", Real(&E::unlearn, &UnlearnConfig::sophia_beta)},
      {"ETA_SCALE", Real(&E::unlearn, &UnlearnConfig::eta_scale)},
      {"PHASE2_RETAIN_WEIGHT",
       Real(&E::unlearn, &UnlearnConfig::phase2_retain_weight)},
      {"PHASE1_EPOCHS", OptionalCount(&UnlearnConfig::phase1_epochs)},
      {"PHASE2_EPOCHS", OptionalCount(&UnlearnConfig::phase2_epochs)},
      {"REFRESH_FISHER",
       {[](E& c, const std::string& k, const std::string& v) {
          c.unlearn.refresh_fisher_each_epoch = ParseBool(k, v);
        },
        [](const E& c) {
          return std::string(c.unlearn.refresh_fisher_each_epoch ? "true"
                                                                 : "false");
        }}},
      {"INFLUENCE_SCHEDULE",
       {[](E& c, const std::string& k, const std::string& v) {
          if (v == "group") {
            c.unlearn.influence_schedule =
                InfluenceSchedule::kPerAccumulationGroup;
          } else if (v == "epoch") {
            c.unlearn.influence_schedule = InfluenceSchedule::kPerEpoch;
          } else {
            throw CliError("invalid_config",
                           k + ": expected group or epoch, got '" + v + "'");
          }
        },
        [](const E& c) {
          return std::string(c.unlearn.influence_schedule ==
                                     InfluenceSchedule::kPerEpoch
                                 ? "epoch"
                                 : "group");
        }}},
      // Baselines.
      {"BASELINE_EPOCHS",
       {[](E& c, const std::string& k, const std::string& v) {
          c.baseline_epochs = ParseNumber<std::size_t>(k, v);
        },
        [](const E& c) {
          return c.baseline_epochs ? std::to_string(*c.baseline_epochs)
                                   : std::string("default");
        }}},
      {"BASELINE_LEARNING_RATE",
       {[](E& c, const std::string& k, const std::string& v) {
          c.baseline_learning_rate = ParseNumber<double>(k, v);
        },
        [](const E& c) {
          return c.baseline_learning_rate
                     ? FormatDouble(*c.baseline_learning_rate)
                     : std::string("default");
        }}},
      {"BASELINE_BATCH_SIZE",
       {[](E& c, const std::string& k, const std::string& v) {
          c.baseline_batch_size = ParseNumber<std::size_t>(k, v);
        },
        [](const E& c) {
          return c.baseline_batch_size ? std::to_string(*c.baseline_batch_size)
                                       : std::string("default");
        }}},
      {"KL_WEIGHT",
       {[](E& c, const std::string& k, const std::string& v) {
          c.kl_weight = ParseNumber<double>(k, v);
        },
        [](const E& c) { return FormatDouble(c.kl_weight); }}},
      {"FORGET_WEIGHT",
       {[](E& c, const std::string& k, const std::string& v) {
          c.forget_weight = ParseNumber<double>(k, v);
        },
        [](const E& c) { return FormatDouble(c.forget_weight); }}},
      // Corpus.
      {"FORGET_COUNT", Count(&E::corpus, &CorpusSpec::forget_count)},
      {"RETAIN_COUNT", Count(&E::corpus, &CorpusSpec::retain_count)},
      {"UTILITY_COUNT", Count(&E::corpus, &CorpusSpec::utility_count)},
      {"MIA_MEMBER_COUNT", Count(&E::corpus, &CorpusSpec::mia_member_count)},
      {"MIA_NONMEMBER_COUNT",
       Count(&E::corpus, &CorpusSpec::mia_nonmember_count)},
      {"LONG_FORM_WEIGHT", Count(&E::corpus, &CorpusSpec::long_form_weight)},
      {"PII_QA_WEIGHT", Count(&E::corpus, &CorpusSpec::pii_qa_weight)},
      {"DOCUMENT_WEIGHT", Count(&E::corpus, &CorpusSpec::document_weight)},
      {"LONG_FORM_WORDS", Count(&E::corpus, &CorpusSpec::long_form_words)},
      {"DOCUMENT_WORDS", Count(&E::corpus, &CorpusSpec::document_words)},
      {"ENTITY_VOCABULARY", Count(&E::corpus, &CorpusSpec::entity_vocabulary)},
      {"RECORDS_PER_ENTITY",
       Count(&E::corpus, &CorpusSpec::records_per_entity)},
      // Model.
      {"D_MODEL", Count(&E::model, &ModelConfig::d_model)},
      {"N_LAYERS", Count(&E::model, &ModelConfig::n_layers)},
      {"N_HEADS", Count(&E::model, &ModelConfig::n_heads)},
      {"MODEL_MAX_LENGTH", Count(&E::model, &ModelConfig::max_length)},
      {"LORA_ALPHA", Real(&E::model, &ModelConfig::lora_alpha)},
      // Memorization.
      {"MEMORIZE_EPOCHS", Count(&E::memorize, &MemorizeOptions::epochs)},
      {"MEMORIZE_LEARNING_RATE",
       Real(&E::memorize, &MemorizeOptions::learning_rate)},
      {"MEMORIZE_BATCH_SIZE",
       Count(&E::memorize, &MemorizeOptions::batch_size)},
      {"MEMORIZE_TARGET_RECALL",
       Real(&E::memorize, &MemorizeOptions::target_recall)},
  };
  return settings;
}

// Settings a named preset pins.
const std::set<std::string>& PresetKeys() {
  static const std::set<std::string> keys = {
      "NUM_EPOCHS",     "LEARNING_RATE",      "BATCH_SIZE",
      "LORA_RANK",      "ACCUMULATION_STEPS", "MAX_LENGTH",
      "DAMPING_FACTOR", "SOPHIA_RHO",         "SOPHIA_GAMMA"};
  return keys;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

BaselineConfig BaselineFor(const ExperimentConfig& c) {
  BaselineConfig b;
  b.algorithm = ParseBaselineAlgorithm(c.algorithm);
  b.epochs = c.baseline_epochs.value_or(c.unlearn.num_epochs);
  b.batch_size = c.baseline_batch_size.value_or(c.unlearn.batch_size);
  b.learning_rate = c.baseline_learning_rate.value_or(
      c.unlearn.EffectiveLearningRate() / c.unlearn.damping_factor);
  b.seed = c.seed;
  b.kl_weight = c.kl_weight;
  b.forget_weight = c.forget_weight;
  return b;
}

std::map<std::string, std::string> ParseKeyValueFile(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CliError("io", "cannot open config " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CliError("invalid_config", path.string() + ":" + std::to_string(n) +
                                           ": expected KEY=VALUE");
    }
    const std::string key = Trim(line.substr(0, eq));
    if (key.empty()) {
      throw CliError("invalid_config",
                     path.string() + ":" + std::to_string(n) + ": empty key");
    }
    if (!out.emplace(key, Trim(line.substr(eq + 1))).second) {
      throw CliError("invalid_config", path.string() + ":" + std::to_string(n) +
                                           ": duplicate key " + key);
    }
  }
  return out;
}

std::vector<std::string> SettingKeys() {
  std::vector<std::string> keys;
  for (const auto& [k, s] : Settings()) keys.push_back(k);
  return keys;
}

void ApplySetting(ExperimentConfig& config, const std::string& key,
                  const std::string& value) {
  const auto it = Settings().find(key);
  if (it == Settings().end()) {
    throw CliError("invalid_config", "unknown setting " + key);
  }
  it->second.set(config, key, value);
}

ExperimentConfig ResolveConfig(
    const std::optional<std::string>& preset,
    const std::optional<std::filesystem::path>& config_file,
    const std::vector<std::pair<std::string, std::string>>& settings,
    bool allow_override) {
  ExperimentConfig c;
  if (preset && *preset != "custom") {
    try {
      c.unlearn = PresetConfig(*preset);
    } catch (const std::invalid_argument& e) {
      throw CliError("invalid_config", e.what());
    }
    c.preset = *preset;
  }
  std::vector<std::pair<std::string, std::string>> all;
  if (config_file) {
    for (auto& kv : ParseKeyValueFile(*config_file)) all.push_back(kv);
  }
  all.insert(all.end(), settings.begin(), settings.end());

  const ExperimentConfig pinned = c;
  for (const auto& [key, value] : all) {
    ApplySetting(c, key, value);
    if (c.preset != "custom" && !allow_override && PresetKeys().count(key)) {
      const auto& s = Settings().at(key);
      if (s.get(c) != s.get(pinned)) {
        throw CliError("preset_conflict",
                       key + "=" + value + " conflicts with preset " +
                           c.preset + " (" + key + "=" + s.get(pinned) +
                           "); pass --allow-override to change it");
      }
    }
  }
  return c;
}

std::map<std::string, std::string> DescribeConfig(const ExperimentConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& [k, s] : Settings()) out[k] = s.get(c);
  out["PRESET"] = c.preset;
  out["ALGORITHM"] = c.algorithm;
  out["SEED"] = std::to_string(c.seed);
  out["MAX_SECONDS"] = FormatDouble(c.max_seconds);
  return out;
}

}  // namespace libu::cli
