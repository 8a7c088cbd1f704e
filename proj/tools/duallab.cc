// duallab/duallab.cc

// Copyright 2026  DualLab authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "duallab/align.h"
#include "duallab/svg.h"
#include "duallab/train.h"

namespace fs = std::filesystem;
using namespace duallab;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kAbort = 3 };

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string ReadFile(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// ----- Run directory. -----

/// Everything besides the config snapshot needed to repeat a training run.
struct RunInfo {
  std::string data;
  TrainMode mode = TrainMode::kDual;
  GeneratorKind generator = GeneratorKind::kDuration;
  uint64_t seed = 1;
  double unpaired_fraction = -1.0;

  void Write(const fs::path &path) const {
    char frac[64];
    std::snprintf(frac, sizeof(frac), "%.17g", unpaired_fraction);
    WriteFile(path, "data = " + data + "\nmode = " + TrainModeName(mode) +
                        "\ngenerator = " + GeneratorKindName(generator) +
                        "\nseed = " + std::to_string(seed) +
                        "\nunpaired_fraction = " + frac + "\n");
  }

  static RunInfo Read(const fs::path &run) {
    if (!fs::exists(run / "run.txt"))
      throw Error(run.string() + " is not a run directory (no run.txt)");
    KeyValueFile kv = KeyValueFile::Load(run / "run.txt");
    RunInfo r;
    std::string mode, generator;
    kv.Get("data", &r.data);
    kv.Get("mode", &mode);
    kv.Get("generator", &generator);
    kv.Get("seed", &r.seed);
    kv.Get("unpaired_fraction", &r.unpaired_fraction);
    kv.RejectUnknown();
    r.mode = ParseTrainMode(mode);
    r.generator = ParseGeneratorKind(generator);
    return r;
  }
};

DualConfig ParseTrainConfig(const std::string &text, const std::string &source) {
  return DualConfigFromKeyValues(KeyValueFile::Parse(text, source));
}

/// Alignment matrices and extracted durations of the eval sentences.
void WriteEvalAlignments(const fs::path &dir, const Dataset &data,
                         const EvalResult &ev) {
  fs::create_directories(dir);
  std::vector<TextSeq> texts;
  std::vector<DurationSeq> durations;
  const auto &eval = data.split(Split::kEval);
  for (size_t i = 0; i < ev.items.size(); ++i) {
    const AlignmentMatrix &a = ev.items[i].generation.alignment;
    std::ostringstream os;
    for (int t = 0; t < a.tokens(); ++t) {
      for (int k = 0; k < a.frames(); ++k) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%.6g", k ? "," : "", a.at(t, k));
        os << buf;
      }
      os << '\n';
    }
    WriteFile(dir / (ev.items[i].id + ".csv"), os.str());
    texts.push_back(eval[i].text);
    durations.push_back(ExtractDurations(a));
  }
  WriteDurationFile(dir / "durations.txt", data.vocab(), texts, durations);
}

TrainResult ExecuteTrain(const std::string &config_text, const std::string &source,
                         const RunInfo &info, const fs::path &run, bool quiet,
                         std::mutex *log_mutex = nullptr) {
  DualConfig config = ParseTrainConfig(config_text, source);
  config.seed = info.seed;
  config.unpaired_fraction = info.unpaired_fraction;
  Dataset data = Dataset::Load(info.data);
  fs::create_directories(run);
  WriteFile(run / "config.txt", config_text);
  info.Write(run / "run.txt");

  std::ostringstream buffered;
  TrainOptions options;
  options.config = config;
  options.mode = info.mode;
  options.generator = info.generator;
  options.run_dir = run;
  options.log = quiet ? &buffered : &std::cerr;
  TrainResult result = TrainRun(data, options);
  WriteFile(run / "train.log", buffered.str());

  if (info.generator == GeneratorKind::kAttention) {
    Checkpoint best = LoadCheckpoint(run / "checkpoint");
    EvalResult ev = Evaluate(*best.reader, *best.generator, data, data.split(Split::kEval),
                             config.max_generate_frames, true);
    WriteEvalAlignments(run / "alignments", data, ev);
  }
  if (log_mutex) {
    std::lock_guard<std::mutex> lock(*log_mutex);
    std::cerr << run.string() << ": " << result.best.CsvRow() << '\n';
  }
  return result;
}

// ----- Commands. -----

int GenData(const std::string &config_path, const fs::path &out,
            std::optional<uint64_t> seed, std::optional<double> paired,
            std::optional<int> utterances) {
  CorpusConfig config;
  if (!config_path.empty())
    config = CorpusConfigFromKeyValues(KeyValueFile::Load(config_path));
  if (seed) config.seed = *seed;
  if (paired) config.paired_fraction = *paired;
  if (utterances) config.utterances = *utterances;
  config.Validate();
  CorpusManifest manifest = MakeCorpus(config, out);
  SplitSummary s = Summarize(manifest);
  const double train = s.paired + s.text_only + s.lip_only;
  std::printf("utterances %zu  speakers %d  mode %s\n", manifest.entries.size(),
              config.speakers, TokenModeName(config.mode));
  std::printf("split      count  share_of_train\n");
  std::printf("paired     %5d  %.3f\n", s.paired, s.paired / train);
  std::printf("text_only  %5d  %.3f\n", s.text_only, s.text_only / train);
  std::printf("lip_only   %5d  %.3f\n", s.lip_only, s.lip_only / train);
  std::printf("eval       %5d\n", s.eval);
  return kOk;
}

int Train(const std::string &config_path, const std::string &data,
          const std::string &mode, const std::string &generator,
          const fs::path &run, std::optional<uint64_t> seed,
          const std::string &from_run, bool quiet) {
  std::string text, source;
  RunInfo info;
  if (!from_run.empty()) {
    text = ReadFile(fs::path(from_run) / "config.txt");
    source = (fs::path(from_run) / "config.txt").string();
    info = RunInfo::Read(from_run);
  } else {
    if (data.empty()) throw UsageError("train: --data is required");
    if (!config_path.empty()) {
      text = ReadFile(config_path);
      source = config_path;
    }
    info.data = fs::absolute(data).string();
    DualConfig parsed = ParseTrainConfig(text, source);
    info.seed = parsed.seed;
    info.unpaired_fraction = parsed.unpaired_fraction;
  }
  if (!mode.empty()) info.mode = ParseTrainMode(mode);
  if (!generator.empty()) info.generator = ParseGeneratorKind(generator);
  if (seed) info.seed = *seed;
  TrainResult r = ExecuteTrain(text, source, info, run, quiet);
  std::cout << EvalReport::CsvHeader() << '\n' << r.best.CsvRow() << '\n';
  r.best.PrettyPrint(std::cout);
  return kOk;
}

EvalReport EvalRun(const fs::path &run, const std::string &data_override,
                   const std::string &which) {
  RunInfo info = RunInfo::Read(run);
  DualConfig config = ParseTrainConfig(ReadFile(run / "config.txt"),
                                       (run / "config.txt").string());
  Dataset data = Dataset::Load(data_override.empty() ? info.data : data_override);
  Checkpoint ck = LoadCheckpoint(run / which);
  return Evaluate(*ck.reader, *ck.generator, data, data.split(Split::kEval),
                  config.max_generate_frames).report;
}

int Eval(const fs::path &run, const std::string &data, const std::string &which,
         const std::string &compare) {
  EvalReport report = EvalRun(run, data, which);
  std::string csv = EvalReport::CsvHeader() + "\n" + report.CsvRow() + "\n";
  WriteFile(run / ("eval_" + which + ".csv"), csv);
  std::cout << csv;
  report.PrettyPrint(std::cout);
  if (!compare.empty()) {
    EvalReport other = EvalRun(compare, data, which);
    const char *err = report.phoneme ? "PER" : "CER";
    std::printf("\n%-28s %10s %10s %10s %10s\n", "run", err, "WER", "L1", "PSNR");
    for (auto [name, r] : {std::pair{compare, other}, std::pair{run.string(), report}})
      std::printf("%-28s %9.2f%% %9.2f%% %10.5f %10.2f\n", name.c_str(), 100 * r.cer,
                  100 * r.wer, r.mean_l1, r.mean_psnr);
    if (other.cer > 0)
      std::printf("relative %s reduction: %.2fx\n", err, other.cer / std::max(report.cer, 1e-12));
  }
  return kOk;
}

std::vector<double> ParseFractions(const std::string &list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != item.size() || item.empty() || v < 0 || v > 1)
      throw UsageError("bad fraction '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("no fractions given");
  return out;
}

int SweepUnpaired(const std::string &config_path, const std::string &data,
                  const std::string &fractions, const std::string &generator,
                  const fs::path &out, int jobs, std::optional<uint64_t> seed) {
  std::vector<double> fr = ParseFractions(fractions);
  std::string text;
  if (!config_path.empty()) text = ReadFile(config_path);
  RunInfo base;
  base.data = fs::absolute(data).string();
  base.generator = ParseGeneratorKind(generator);
  base.seed = seed ? *seed : ParseTrainConfig(text, config_path).seed;
  fs::create_directories(out);
  WriteFile(out / "config.txt", text);

  struct Outcome {
    bool ok = false;
    std::string error;
    EvalReport report;
  };
  std::vector<Outcome> outcomes(fr.size());
  std::mutex log_mutex;
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next++; i < fr.size(); i = next++) {
      RunInfo info = base;
      info.mode = fr[i] > 0 ? TrainMode::kDual : TrainMode::kBaseline;
      info.unpaired_fraction = fr[i];
      char name[32];
      std::snprintf(name, sizeof(name), "unpaired_%.2f", fr[i]);
      try {
        outcomes[i].report =
            ExecuteTrain(text, config_path, info, out / name, true, &log_mutex).best;
        outcomes[i].ok = true;
      } catch (const std::exception &e) {
        outcomes[i].error = e.what();
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << name << " failed: " << e.what() << '\n';
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, std::min<int>(jobs, fr.size())); ++j) pool.emplace_back(work);
  for (auto &t : pool) t.join();

  std::ostringstream csv;
  csv << "unpaired_fraction,status,cer,wer,mean_l1,mean_psnr\n";
  PlotSeries cer{"eval CER", {}, {}}, l1{"eval L1", {}, {}};
  int failures = 0;
  for (size_t i = 0; i < fr.size(); ++i) {
    const Outcome &o = outcomes[i];
    char buf[256];
    if (o.ok) {
      std::snprintf(buf, sizeof(buf), "%.12g,ok,%.12g,%.12g,%.12g,%.12g\n", fr[i],
                    o.report.cer, o.report.wer, o.report.mean_l1, o.report.mean_psnr);
      cer.x.push_back(fr[i]);
      cer.y.push_back(o.report.cer);
      l1.x.push_back(fr[i]);
      l1.y.push_back(o.report.mean_l1);
    } else {
      std::snprintf(buf, sizeof(buf), "%.12g,failed,,,,\n", fr[i]);
      ++failures;
    }
    csv << buf;
  }
  WriteFile(out / "sweep.csv", csv.str());
  WriteFile(out / "sweep.svg",
            SvgLinePlot("Eval metrics vs unpaired fraction", "unpaired fraction", {cer, l1}));
  std::cout << csv.str();
  return failures ? kAbort : kOk;
}

int ExportAlignments(const fs::path &run, const std::string &data_override,
                     const fs::path &out, int limit) {
  RunInfo info = RunInfo::Read(run);
  if (info.generator != GeneratorKind::kAttention)
    throw Error("export-alignments: run " + run.string() +
                " used the duration generator; alignments need the attention generator");
  DualConfig config = ParseTrainConfig(ReadFile(run / "config.txt"),
                                       (run / "config.txt").string());
  Dataset data = Dataset::Load(data_override.empty() ? info.data : data_override);
  Checkpoint ck = LoadCheckpoint(run / "checkpoint");
  const auto &eval = data.split(Split::kEval);
  std::span<const Example> picked(eval);
  if (limit > 0 && static_cast<size_t>(limit) < picked.size()) picked = picked.first(limit);
  EvalResult ev = Evaluate(*ck.reader, *ck.generator, data, picked,
                           config.max_generate_frames, true);
  fs::create_directories(out);
  const Vocabulary &vocab = data.vocab();
  std::ostringstream summary;
  summary << "id,tokens,frames,duration_sum,monotone,violations\n";
  int monotone = 0;
  for (size_t i = 0; i < picked.size(); ++i) {
    const Example &e = picked[i];
    const AlignmentMatrix &a = ev.items[i].generation.alignment;
    DurationSeq d = ExtractDurations(a);
    Monotonicity m = CheckMonotonicity(a);
    monotone += m.is_monotone;
    WriteFile(out / (e.id + ".dur"), FormatDurations(vocab, e.text, d) + "\n");
    std::vector<std::string> labels;
    for (int t : e.text) labels.push_back(vocab.DisplayToken(t));
    WriteFile(out / (e.id + ".svg"),
              SvgHeatMap(e.id + (m.is_monotone ? " (monotone)" : " (non-monotone)"), a, labels));
    int sum = 0;
    for (int v : d) sum += v;
    summary << e.id << ',' << a.tokens() << ',' << a.frames() << ',' << sum << ','
            << (m.is_monotone ? 1 : 0) << ',' << m.violations << '\n';
  }
  WriteFile(out / "alignments.csv", summary.str());
  std::printf("%d of %zu alignments monotone\n", monotone, picked.size());
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"DualLip at desk scale: CTC reader and trace generators trained with dual transformation"};
  app.require_subcommand(1);

  std::string config, data, mode, generator = "", from_run, which = "checkpoint",
              compare, fractions = "0,0.3,0.6,0.9";
  std::string out, run;
  std::optional<uint64_t> seed;
  std::optional<double> paired;
  std::optional<int> utterances;
  int jobs = 1, limit = 20;
  bool quiet = false;

  auto *gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--config", config, "Corpus config (key = value)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output corpus directory")->required();
  gen->add_option("--seed", seed, "Corpus seed");
  gen->add_option("--paired-fraction", paired, "Share of non-eval utterances kept paired");
  gen->add_option("--utterances", utterances, "Number of utterances");

  auto *train = app.add_subcommand("train", "Train a reader and a generator");
  train->add_option("--config", config, "Training config (key = value)")->check(CLI::ExistingFile);
  train->add_option("--data", data, "Corpus directory");
  train->add_option("--mode", mode, "baseline or dual")->check(CLI::IsMember({"baseline", "dual"}));
  train->add_option("--generator", generator, "duration or attention")
      ->check(CLI::IsMember({"duration", "attention"}));
  train->add_option("--run", run, "Run directory to create")->required();
  train->add_option("--from-run", from_run, "Repeat the run recorded in this directory");
  train->add_option("--seed", seed, "Training seed");
  train->add_flag("--quiet", quiet, "Write progress to RUN/train.log only");

  auto *eval = app.add_subcommand("eval", "Evaluate a trained run on the eval split");
  eval->add_option("--run", run, "Run directory")->required();
  eval->add_option("--data", data, "Corpus directory (default: the training corpus)");
  eval->add_option("--checkpoint", which, "checkpoint (best) or last")
      ->check(CLI::IsMember({"checkpoint", "last"}));
  eval->add_option("--compare", compare, "Baseline run to compare against");

  auto *sweep = app.add_subcommand("sweep-unpaired", "Train across unpaired-data fractions");
  sweep->add_option("--config", config, "Training config")->check(CLI::ExistingFile);
  sweep->add_option("--data", data, "Corpus directory")->required();
  sweep->add_option("--fractions", fractions, "Comma-separated unpaired fractions");
  sweep->add_option("--generator", generator, "duration or attention")
      ->check(CLI::IsMember({"duration", "attention"}));
  sweep->add_option("--out", out, "Sweep output directory")->required();
  sweep->add_option("--jobs", jobs, "Sub-runs in parallel")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "Training seed");

  auto *exp = app.add_subcommand("export-alignments", "Write durations and heat maps");
  exp->add_option("--run", run, "Run directory (attention generator)")->required();
  exp->add_option("--data", data, "Corpus directory (default: the training corpus)");
  exp->add_option("--out", out, "Output directory")->required();
  exp->add_option("--limit", limit, "Number of eval sentences (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return GenData(config, out, seed, paired, utterances);
    if (*train) return Train(config, data, mode, generator, run, seed, from_run, quiet);
    if (*eval) return Eval(run, data, which, compare);
    if (*sweep)
      return SweepUnpaired(config, data, fractions, generator.empty() ? "duration" : generator,
                           out, jobs, seed);
    if (*exp) return ExportAlignments(run, data, out, limit);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingAbort &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAbort;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
