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

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "libu/cli.h"
#include "libu/evaluate.h"

namespace libu::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Input {
  std::string role;
  fs::path path;
};

void WriteManifest(const fs::path& dir, const std::string& command,
                   std::uint64_t seed,
                   const std::map<std::string, std::string>& config,
                   const std::vector<Input>& inputs,
                   const std::vector<std::string>& outputs) {
  ordered_json j;
  j["tool"] = "libu";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  ordered_json in = ordered_json::object();
  for (const auto& i : inputs) {
    in[i.role] = {{"path", i.path.string()}, {"sha256", Sha256File(i.path)}};
  }
  j["inputs"] = in;
  j["outputs"] = outputs;
  std::ofstream out(dir / kManifestFile, std::ios::binary | std::ios::trunc);
  if (!out)
    throw CliError("io", "cannot write " + (dir / kManifestFile).string());
  out << j.dump(2) << "\n";
}

void PrepareOutputDir(const fs::path& dir, bool force) {
  if (dir.empty()) throw CliError("usage", "--out is required");
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_directory(dir, ec)) {
    throw CliError("io", dir.string() + " exists and is not a directory");
  }
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force) {
    throw CliError("output_exists",
                   dir.string() + " is not empty (pass --force to overwrite)");
  }
  fs::create_directories(dir, ec);
  if (ec)
    throw CliError("io", "cannot create " + dir.string() + ": " + ec.message());
}

std::vector<Input> DatasetInputs(const fs::path& dir) {
  std::vector<Input> inputs;
  for (const char* f : {kRetainFile, kForgetFile, kUtilityFile, kMiaMemberFile,
                        kMiaNonmemberFile}) {
    inputs.push_back({std::string("data/") + f, dir / f});
  }
  return inputs;
}

DatasetBundle LoadData(const fs::path& dir) {
  if (dir.empty()) throw CliError("usage", "--data is required");
  if (!fs::is_directory(dir)) {
    throw CliError("io", "dataset directory not found: " + dir.string());
  }
  try {
    return LoadDatasetDirectory(dir);
  } catch (const std::exception& e) {
    throw CliError("data", e.what());
  }
}

Checkpoint LoadCheckpointOrFail(const fs::path& path) {
  if (path.empty()) throw CliError("usage", "--checkpoint is required");
  if (!fs::exists(path)) {
    throw CliError("io", "checkpoint not found: " + path.string());
  }
  try {
    return LoadCheckpoint(path);
  } catch (const std::exception& e) {
    throw CliError("checkpoint", e.what());
  }
}

void RequireMatchingVocabulary(const Checkpoint& ck, const Vocabulary& vocab,
                               const fs::path& data) {
  if (ck.vocabulary != vocab.tokens()) {
    throw CliError("vocab_mismatch",
                   "checkpoint vocabulary (" +
                       std::to_string(ck.vocabulary.size()) +
                       " tokens) does not match dataset " + data.string() +
                       " (" + std::to_string(vocab.size()) + " tokens)");
  }
}

void SaveRunLogOrFail(const fs::path& path, const RunLog& log) {
  try {
    WriteRunLog(path, log);
  } catch (const std::exception& e) {
    throw CliError("io", e.what());
  }
}

std::string Fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string Sha256File(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("io", "cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest init failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) {
      EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

std::string CmdGenCorpus(const GenCorpusOptions& o) {
  DatasetBundle bundle;
  try {
    bundle = GenerateSyntheticCorpus(o.config.corpus, o.config.seed);
  } catch (const std::invalid_argument& e) {
    throw CliError("invalid_config", e.what());
  }
  PrepareOutputDir(o.out, o.force);
  SaveDatasetDirectory(bundle, o.out);
  std::vector<std::string> outputs = {kRetainFile, kForgetFile, kUtilityFile,
                                      kMiaMemberFile, kMiaNonmemberFile};
  WriteManifest(o.out, "gen-corpus", o.config.seed, DescribeConfig(o.config),
                {}, outputs);
  std::ostringstream msg;
  msg << "wrote corpus to " << o.out.string() << ": "
      << bundle.split.retain.size() << " retain, " << bundle.split.forget.size()
      << " forget, " << bundle.utility.size() << " utility, "
      << bundle.mia_member.size() << " member, " << bundle.mia_nonmember.size()
      << " nonmember\n";
  return msg.str();
}

std::string CmdMemorize(const MemorizeCommandOptions& o) {
  const ExperimentConfig& c = o.config;
  const DatasetBundle bundle = LoadData(o.data);
  const Vocabulary vocab = BuildVocabulary(bundle);

  ModelConfig mc = c.model;
  mc.vocab_size = vocab.size();
  mc.seed = c.seed;
  mc.lora_rank = c.unlearn.lora_rank;
  Model model = [&] {
    try {
      return Model(mc);
    } catch (const std::invalid_argument& e) {
      throw CliError("invalid_config", e.what());
    }
  }();
  MemorizeOptions mo = c.memorize;
  mo.seed = c.seed;

  std::vector<PackedExample> retain, forget, knowledge;
  try {
    retain = PackAll(bundle.split.retain, vocab, mc.max_length);
    forget = PackAll(bundle.split.forget, vocab, mc.max_length);
    knowledge = PackAll(bundle.utility, vocab, mc.max_length);
  } catch (const std::invalid_argument& e) {
    throw CliError("data", e.what());
  }
  PrepareOutputDir(o.out, true);
  RunLog log;
  MemorizeReport report;
  try {
    report = Memorize(model, retain, forget, knowledge, mo, &log,
                      Deadline(std::chrono::duration<double>(c.max_seconds)));
  } catch (const BudgetExceeded& e) {
    SaveRunLogOrFail(o.out / kRunLogFile, log);
    throw CliError("budget_exceeded", e.what());
  }
  SaveCheckpoint(o.out / kCheckpointFile, model, vocab);
  SaveRunLogOrFail(o.out / kRunLogFile, log);
  WriteManifest(o.out, "memorize", c.seed, DescribeConfig(c),
                DatasetInputs(o.data), {kCheckpointFile, kRunLogFile});

  std::ostringstream msg;
  msg << "memorized for " << report.epochs_run << " epochs: retain recall "
      << Fixed(report.retain_recall) << ", forget recall "
      << Fixed(report.forget_recall) << ", utility recall "
      << Fixed(report.knowledge_recall) << "\n";
  for (const auto& w : log.warnings) msg << "warning: " << w << "\n";
  return msg.str();
}

std::string CmdUnlearn(const UnlearnCommandOptions& o) {
  const ExperimentConfig& c = o.config;
  const bool libu = c.algorithm == "libu";
  if (!libu && c.algorithm != "ga" && c.algorithm != "gd" &&
      c.algorithm != "kl") {
    throw CliError("unknown_algorithm", "unknown algorithm '" + c.algorithm +
                                            "' (valid: libu, ga, gd, kl)");
  }
  const Checkpoint ck = LoadCheckpointOrFail(o.checkpoint);
  const DatasetBundle bundle = LoadData(o.data);
  const Vocabulary vocab = BuildVocabulary(bundle);
  RequireMatchingVocabulary(ck, vocab, o.data);

  UnlearnConfig uc = c.unlearn;
  uc.seed = c.seed;
  Model model = ck.ToModel();
  PackedSplits splits;
  try {
    ValidateUnlearnConfig(uc);
    model = WithAdapterRank(model, uc.lora_rank);
    splits = PackSplits(bundle.split, vocab,
                        std::min(uc.max_length, model.config().max_length));
  } catch (const std::invalid_argument& e) {
    throw CliError("invalid_config", e.what());
  }

  PrepareOutputDir(o.out, true);
  RunLog log;
  const Deadline deadline(std::chrono::duration<double>(c.max_seconds));
  try {
    if (libu) {
      RunLibu(model, splits, uc, &log, deadline);
    } else {
      RunBaseline(model, splits, BaselineFor(c), &log, deadline);
    }
  } catch (const BudgetExceeded& e) {
    SaveRunLogOrFail(o.out / kRunLogFile, log);
    throw CliError("budget_exceeded", e.what());
  } catch (const std::invalid_argument& e) {
    throw CliError("invalid_config", e.what());
  }
  SaveCheckpoint(o.out / kCheckpointFile, model, vocab);
  SaveRunLogOrFail(o.out / kRunLogFile, log);
  std::vector<Input> inputs = DatasetInputs(o.data);
  inputs.insert(inputs.begin(), {"checkpoint", o.checkpoint});
  WriteManifest(o.out, "unlearn", c.seed, DescribeConfig(c), inputs,
                {kCheckpointFile, kRunLogFile});

  std::ostringstream msg;
  msg << c.algorithm << ": " << log.records.size() << " epochs logged";
  if (!log.records.empty()) {
    msg << ", final retain loss " << Fixed(log.records.back().retain_loss)
        << ", forget loss " << Fixed(log.records.back().forget_loss);
  }
  msg << "\n";
  for (const auto& w : log.warnings) msg << "warning: " << w << "\n";
  return msg.str();
}

std::string CmdEval(const EvalCommandOptions& o) {
  const Checkpoint ck = LoadCheckpointOrFail(o.checkpoint);
  const DatasetBundle bundle = LoadData(o.data);
  const Vocabulary vocab = BuildVocabulary(bundle);
  RequireMatchingVocabulary(ck, vocab, o.data);
  const Model model = ck.ToModel();
  EvalReport report;
  try {
    report = Evaluate(model, vocab, bundle, o.label);
  } catch (const std::invalid_argument& e) {
    throw CliError("data", e.what());
  }
  PrepareOutputDir(o.out, true);
  WriteReport(o.out / "report.json", report);
  std::vector<Input> inputs = DatasetInputs(o.data);
  inputs.insert(inputs.begin(), {"checkpoint", o.checkpoint});
  WriteManifest(o.out, "eval", 0, {{"LABEL", o.label}}, inputs,
                {"report.json"});
  const EvalReport one[] = {report};
  return RenderTable(one);
}

std::string CmdCompare(const CompareCommandOptions& o) {
  if (o.reports.size() < 2) {
    throw CliError("usage", "compare needs at least two report files");
  }
  std::vector<EvalReport> reports;
  for (const auto& path : o.reports) {
    try {
      reports.push_back(ReadReport(path));
    } catch (const ReportSchemaError& e) {
      throw CliError("schema_mismatch", e.what());
    } catch (const std::exception& e) {
      throw CliError("report", e.what());
    }
  }
  const std::string table = RenderTable(reports);
  if (o.out) {
    std::ofstream out(*o.out, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError("io", "cannot write " + o.out->string());
    out << table;
  }
  return table;
}

}  // namespace libu::cli
