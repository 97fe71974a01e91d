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

#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "libu/baselines.h"
#include "libu/cli.h"
#include "libu/data.h"
#include "libu/evaluate.h"
#include "libu/model.h"
#include "libu/unlearn.h"

namespace py = pybind11;

namespace libu {
namespace {

ParameterVector Flat(std::vector<double> values) {
  const std::size_t n = values.size();
  return ParameterVector(std::make_shared<const ParameterLayout>(
                             ParameterLayout{{"x", {n}, 0, n}}),
                         std::move(values));
}

std::vector<double> ToList(const ParameterVector& v) {
  return {v.values().begin(), v.values().end()};
}

void BindData(py::module_& m) {
  py::class_<UnlearningExample>(m, "UnlearningExample")
      .def(py::init<>())
      .def(py::init([](std::string id, std::string input, std::string output,
                       std::string task) {
             return UnlearningExample{std::move(id), std::move(input),
                                      std::move(output), std::move(task)};
           }),
           py::arg("id"), py::arg("input"), py::arg("output"), py::arg("task"))
      .def_readwrite("id", &UnlearningExample::id)
      .def_readwrite("input", &UnlearningExample::input)
      .def_readwrite("output", &UnlearningExample::output)
      .def_readwrite("task", &UnlearningExample::task)
      .def(py::self == py::self)
      .def("__repr__", [](const UnlearningExample& e) {
        return "UnlearningExample(id='" + e.id + "', task='" + e.task + "')";
      });

  py::class_<SplitDataset>(m, "SplitDataset")
      .def(py::init<>())
      .def_readwrite("retain", &SplitDataset::retain)
      .def_readwrite("forget", &SplitDataset::forget);

  py::class_<DatasetBundle>(m, "DatasetBundle")
      .def(py::init<>())
      .def_readwrite("split", &DatasetBundle::split)
      .def_readwrite("utility", &DatasetBundle::utility)
      .def_readwrite("mia_member", &DatasetBundle::mia_member)
      .def_readwrite("mia_nonmember", &DatasetBundle::mia_nonmember)
      .def(py::self == py::self);

  py::class_<CorpusSpec>(m, "CorpusSpec")
      .def(py::init<>())
      .def_readwrite("forget_count", &CorpusSpec::forget_count)
      .def_readwrite("retain_count", &CorpusSpec::retain_count)
      .def_readwrite("utility_count", &CorpusSpec::utility_count)
      .def_readwrite("mia_member_count", &CorpusSpec::mia_member_count)
      .def_readwrite("mia_nonmember_count", &CorpusSpec::mia_nonmember_count)
      .def_readwrite("long_form_words", &CorpusSpec::long_form_words)
      .def_readwrite("document_words", &CorpusSpec::document_words)
      .def_readwrite("entity_vocabulary", &CorpusSpec::entity_vocabulary)
      .def_readwrite("records_per_entity", &CorpusSpec::records_per_entity);

  py::class_<PackedExample>(m, "PackedExample")
      .def_readonly("token_ids", &PackedExample::token_ids)
      .def_readonly("loss_mask", &PackedExample::loss_mask)
      .def_readonly("attention_length", &PackedExample::attention_length);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<std::vector<std::string>>(), py::arg("tokens_by_id"))
      .def("__len__", &Vocabulary::size)
      .def("__contains__", &Vocabulary::Contains)
      .def("id", &Vocabulary::Id)
      .def("token", &Vocabulary::Token)
      .def("encode", &Vocabulary::Encode)
      .def("decode", &Vocabulary::Decode)
      .def_property_readonly("tokens", &Vocabulary::tokens);

  m.def("generate_corpus", &GenerateSyntheticCorpus, py::arg("spec"),
        py::arg("seed"));
  m.def("save_dataset_directory", &SaveDatasetDirectory);
  m.def("load_dataset_directory", &LoadDatasetDirectory);
  m.def("build_vocabulary",
        py::overload_cast<const DatasetBundle&>(&BuildVocabulary));
  m.def("pack", &Pack, py::arg("example"), py::arg("vocab"),
        py::arg("max_length"));
}

void BindModel(py::module_& m) {
  py::enum_<ParameterScope>(m, "ParameterScope")
      .value("TRAINABLE", ParameterScope::kTrainable)
      .value("BASE", ParameterScope::kBase)
      .value("ADAPTERS", ParameterScope::kAdapters);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("n_layers", &ModelConfig::n_layers)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("max_length", &ModelConfig::max_length)
      .def_readwrite("lora_enabled", &ModelConfig::lora_enabled)
      .def_readwrite("lora_rank", &ModelConfig::lora_rank)
      .def_readwrite("lora_alpha", &ModelConfig::lora_alpha)
      .def_readwrite("seed", &ModelConfig::seed);

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&>(), py::arg("config"))
      .def_property_readonly("config", &Model::config)
      .def("logits",
           [](const Model& model, const std::vector<int>& tokens) {
             const diff::Tensor t = model.Logits(tokens);
             std::vector<std::vector<double>> rows(t.shape()[0]);
             for (std::size_t r = 0; r < rows.size(); ++r) {
               for (std::size_t c = 0; c < t.shape()[1]; ++c) {
                 rows[r].push_back(t(r, c));
               }
             }
             return rows;
           })
      .def("sequence_loss", &Model::SequenceLoss)
      .def("greedy_decode", &Model::GreedyDecode, py::arg("prompt"),
           py::arg("max_new"))
      .def("parameter_count", &Model::ParameterCount,
           py::arg("scope") = ParameterScope::kTrainable)
      .def(
          "parameters",
          [](const Model& model, ParameterScope scope) {
            return ToList(model.Parameters(scope));
          },
          py::arg("scope") = ParameterScope::kTrainable)
      .def(
          "gradient",
          [](const Model& model, const std::vector<PackedExample>& batch,
             ParameterScope scope) {
            const auto r = BatchGradient(model, batch, scope);
            return py::make_tuple(r.loss, ToList(r.gradient));
          },
          py::arg("batch"), py::arg("scope") = ParameterScope::kTrainable)
      .def("copy", [](const Model& model) { return Model(model); })
      .def(py::self == py::self);

  m.def("save_checkpoint", &SaveCheckpoint);
  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    const Checkpoint ck = LoadCheckpoint(path);
    return py::make_tuple(ck.ToModel(), Vocabulary(ck.vocabulary));
  });
}

void BindUnlearn(py::module_& m) {
  py::class_<RunLogRecord>(m, "RunLogRecord")
      .def_readonly("phase", &RunLogRecord::phase)
      .def_readonly("epoch", &RunLogRecord::epoch)
      .def_readonly("retain_loss", &RunLogRecord::retain_loss)
      .def_readonly("forget_loss", &RunLogRecord::forget_loss)
      .def_readonly("update_norm", &RunLogRecord::update_norm);

  py::class_<RunLog>(m, "RunLog")
      .def(py::init<>())
      .def_readonly("records", &RunLog::records)
      .def_readonly("warnings", &RunLog::warnings)
      .def_readonly("aborted", &RunLog::aborted);

  py::class_<MemorizeOptions>(m, "MemorizeOptions")
      .def(py::init<>())
      .def_readwrite("epochs", &MemorizeOptions::epochs)
      .def_readwrite("learning_rate", &MemorizeOptions::learning_rate)
      .def_readwrite("batch_size", &MemorizeOptions::batch_size)
      .def_readwrite("seed", &MemorizeOptions::seed)
      .def_readwrite("target_recall", &MemorizeOptions::target_recall);

  py::class_<MemorizeReport>(m, "MemorizeReport")
      .def_readonly("epochs_run", &MemorizeReport::epochs_run)
      .def_readonly("retain_recall", &MemorizeReport::retain_recall)
      .def_readonly("forget_recall", &MemorizeReport::forget_recall)
      .def_readonly("knowledge_recall", &MemorizeReport::knowledge_recall)
      .def_readonly("reached_target", &MemorizeReport::reached_target);

  py::class_<UnlearnConfig>(m, "UnlearnConfig")
      .def(py::init<>())
      .def_readwrite("num_epochs", &UnlearnConfig::num_epochs)
      .def_readwrite("learning_rate", &UnlearnConfig::learning_rate)
      .def_readwrite("batch_size", &UnlearnConfig::batch_size)
      .def_readwrite("lora_rank", &UnlearnConfig::lora_rank)
      .def_readwrite("accumulation_steps", &UnlearnConfig::accumulation_steps)
      .def_readwrite("max_length", &UnlearnConfig::max_length)
      .def_readwrite("damping_factor", &UnlearnConfig::damping_factor)
      .def_readwrite("sophia_rho", &UnlearnConfig::sophia_rho)
      .def_readwrite("sophia_gamma", &UnlearnConfig::sophia_gamma)
      .def_readwrite("sophia_clip", &UnlearnConfig::sophia_clip)
      .def_readwrite("sophia_epsilon", &UnlearnConfig::sophia_epsilon)
      .def_readwrite("sophia_beta", &UnlearnConfig::sophia_beta)
      .def_readwrite("eta_scale", &UnlearnConfig::eta_scale)
      .def_readwrite("phase2_retain_weight",
                     &UnlearnConfig::phase2_retain_weight)
      .def_readwrite("phase1_epochs", &UnlearnConfig::phase1_epochs)
      .def_readwrite("phase2_epochs", &UnlearnConfig::phase2_epochs)
      .def_readwrite("seed", &UnlearnConfig::seed)
      .def("effective_learning_rate", &UnlearnConfig::EffectiveLearningRate);

  py::class_<PackedSplits>(m, "PackedSplits")
      .def_readonly("retain", &PackedSplits::retain)
      .def_readonly("forget", &PackedSplits::forget);

  py::enum_<BaselineAlgorithm>(m, "BaselineAlgorithm")
      .value("GRADIENT_ASCENT", BaselineAlgorithm::kGradientAscent)
      .value("GRADIENT_DIFFERENCE", BaselineAlgorithm::kGradientDifference)
      .value("KL_MINIMIZATION", BaselineAlgorithm::kKlMinimization);

  py::class_<BaselineConfig>(m, "BaselineConfig")
      .def(py::init<>())
      .def_readwrite("algorithm", &BaselineConfig::algorithm)
      .def_readwrite("epochs", &BaselineConfig::epochs)
      .def_readwrite("learning_rate", &BaselineConfig::learning_rate)
      .def_readwrite("batch_size", &BaselineConfig::batch_size)
      .def_readwrite("seed", &BaselineConfig::seed)
      .def_readwrite("kl_weight", &BaselineConfig::kl_weight)
      .def_readwrite("forget_weight", &BaselineConfig::forget_weight);

  m.def("preset_config",
        [](const std::string& name) { return PresetConfig(name); });
  m.def("preset_names", &PresetNames);
  m.def("pack_splits", &PackSplits, py::arg("dataset"), py::arg("vocab"),
        py::arg("max_length"));
  m.def("with_adapter_rank", &WithAdapterRank);
  m.def(
      "memorize",
      [](Model& model, const PackedSplits& data,
         const std::vector<PackedExample>& knowledge,
         const MemorizeOptions& options) {
        return Memorize(model, data.retain, data.forget, knowledge, options);
      },
      py::arg("model"), py::arg("data"), py::arg("knowledge"),
      py::arg("options"));
  m.def("teacher_forced_recall",
        [](const Model& model, const std::vector<PackedExample>& examples) {
          return TeacherForcedRecall(model, examples);
        });
  m.def(
      "run_libu",
      [](Model& model, const PackedSplits& data, const UnlearnConfig& config) {
        RunLog log;
        RunLibu(model, data, config, &log);
        return log;
      },
      py::arg("model"), py::arg("data"), py::arg("config"));
  m.def(
      "run_baseline",
      [](Model& model, const PackedSplits& data, const BaselineConfig& config) {
        RunLog log;
        RunBaseline(model, data, config, &log);
        return log;
      },
      py::arg("model"), py::arg("data"), py::arg("config"));
  m.def(
      "influence_weights",
      [](std::vector<double> fisher, double damping) {
        return ToList(
            InfluenceWeights(FisherDiagonal{Flat(std::move(fisher))}, damping));
      },
      py::arg("fisher"), py::arg("damping"));
  m.def("influence_update",
        [](std::vector<double> theta, std::vector<double> weights,
           std::vector<double> gradient, double learning_rate) {
          return ToList(
              InfluenceUpdate(Flat(std::move(theta)), Flat(std::move(weights)),
                              Flat(std::move(gradient)), learning_rate));
        });
  m.def("sophia_direction", &SophiaDirection, py::arg("gradient"),
        py::arg("hessian"), py::arg("gamma"), py::arg("epsilon"),
        py::arg("clip"));
}

void BindEvaluate(py::module_& m) {
  m.def("rouge_l",
        py::overload_cast<const std::string&, const std::string&>(&RougeL),
        py::arg("candidate"), py::arg("reference"));
  m.def("harmonic_mean",
        [](const std::vector<double>& v) { return HarmonicMean(v); });
  m.def("auc_from_losses", [](const std::vector<double>& members,
                              const std::vector<double>& nonmembers) {
    return AucFromLosses(members, nonmembers);
  });
  m.def("mia_score_from_losses", [](const std::vector<double>& members,
                                    const std::vector<double>& nonmembers) {
    return MiaScoreFromLosses(members, nonmembers);
  });
  m.def("utility_score", [](const Model& model, const Vocabulary& vocab,
                            const std::vector<UnlearningExample>& examples) {
    return UtilityScore(model, vocab, examples);
  });

  py::class_<EvalReport>(m, "EvalReport")
      .def_readwrite("label", &EvalReport::label)
      .def_readonly("forget_regurgitation", &EvalReport::forget_regurgitation)
      .def_readonly("retain_regurgitation", &EvalReport::retain_regurgitation)
      .def_readonly("forget_exact_match", &EvalReport::forget_exact_match)
      .def_readonly("retain_exact_match", &EvalReport::retain_exact_match)
      .def_readonly("task_aggregate", &EvalReport::task_aggregate)
      .def_readonly("mia_score", &EvalReport::mia_score)
      .def_readonly("utility", &EvalReport::utility)
      .def_readonly("final_aggregate", &EvalReport::final_aggregate)
      .def_readonly("formula", &EvalReport::formula)
      .def_readonly("flagged_prompts", &EvalReport::flagged_prompts)
      .def("to_json", &ReportToJson)
      .def(py::self == py::self);

  m.def(
      "aggregate",
      [](double forget_regurgitation, double retain_regurgitation,
         double forget_exact_match, double retain_exact_match, double mia_score,
         double utility) {
        ReportParts p;
        p.forget_regurgitation = forget_regurgitation;
        p.retain_regurgitation = retain_regurgitation;
        p.forget_exact_match = forget_exact_match;
        p.retain_exact_match = retain_exact_match;
        p.mia_score = mia_score;
        p.utility = utility;
        return Aggregate(p);
      },
      py::arg("forget_regurgitation"), py::arg("retain_regurgitation"),
      py::arg("forget_exact_match"), py::arg("retain_exact_match"),
      py::arg("mia_score"), py::arg("utility"));
  m.def("evaluate", &Evaluate, py::arg("model"), py::arg("vocab"),
        py::arg("data"), py::arg("label") = "");
  m.def("report_from_json", &ReportFromJson, py::arg("text"),
        py::arg("source") = "<string>");
  m.def("render_table", [](const std::vector<EvalReport>& reports) {
    return RenderTable(reports);
  });
}

void BindCli(py::module_& m) {
  py::module_ c = m.def_submodule("cli", "Pipeline commands");
  py::class_<cli::ExperimentConfig>(c, "ExperimentConfig")
      .def_readwrite("preset", &cli::ExperimentConfig::preset)
      .def_readwrite("algorithm", &cli::ExperimentConfig::algorithm)
      .def_readwrite("seed", &cli::ExperimentConfig::seed)
      .def_readwrite("max_seconds", &cli::ExperimentConfig::max_seconds)
      .def("describe", &cli::DescribeConfig);
  c.def(
      "resolve_config",
      [](std::optional<std::string> preset,
         std::optional<std::filesystem::path> config_file,
         const std::map<std::string, std::string>& settings,
         bool allow_override) {
        std::vector<std::pair<std::string, std::string>> s(settings.begin(),
                                                           settings.end());
        return cli::ResolveConfig(preset, config_file, s, allow_override);
      },
      py::arg("preset") = py::none(), py::arg("config_file") = py::none(),
      py::arg("settings") = std::map<std::string, std::string>{},
      py::arg("allow_override") = false);
  c.def(
      "gen_corpus",
      [](const cli::ExperimentConfig& config, std::filesystem::path out,
         bool force) { return cli::CmdGenCorpus({config, out, force}); },
      py::arg("config"), py::arg("out"), py::arg("force") = false);
  c.def(
      "memorize",
      [](const cli::ExperimentConfig& config, std::filesystem::path data,
         std::filesystem::path out) {
        return cli::CmdMemorize({config, data, out});
      },
      py::arg("config"), py::arg("data"), py::arg("out"));
  c.def(
      "unlearn",
      [](const cli::ExperimentConfig& config, std::filesystem::path checkpoint,
         std::filesystem::path data, std::filesystem::path out) {
        return cli::CmdUnlearn({config, checkpoint, data, out});
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("data"),
      py::arg("out"));
  c.def(
      "eval",
      [](std::filesystem::path checkpoint, std::filesystem::path data,
         std::filesystem::path out, std::string label) {
        return cli::CmdEval({checkpoint, data, out, label});
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("out"),
      py::arg("label") = "");
  c.def(
      "compare",
      [](std::vector<std::filesystem::path> reports,
         std::optional<std::filesystem::path> out) {
        return cli::CmdCompare({std::move(reports), std::move(out)});
      },
      py::arg("reports"), py::arg("out") = py::none());
}

}  // namespace
}  // namespace libu

PYBIND11_MODULE(libu, m) {
  m.doc() = "Two-phase LoRA unlearning, baselines and evaluation";
  m.attr("__version__") = libu::cli::kVersion;

  static PyObject* cli_error =
      py::exception<libu::cli::CliError>(m, "CliError", PyExc_RuntimeError)
          .release()
          .ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const libu::cli::CliError& e) {
      PyErr_SetString(cli_error, (e.code() + ": " + e.what()).c_str());
    }
  });
  py::register_exception<libu::ReportSchemaError>(m, "ReportSchemaError",
                                                  PyExc_RuntimeError);
  py::register_exception<libu::BudgetExceeded>(m, "BudgetExceeded",
                                               PyExc_RuntimeError);

  libu::BindData(m);
  libu::BindModel(m);
  libu::BindUnlearn(m);
  libu::BindEvaluate(m);
  libu::BindCli(m);
}
