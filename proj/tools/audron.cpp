// audron: synthetic drone-audio corpora, spectral features, and the fused
// four-branch acoustic classifier behind one command-line tool.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "audron/dataset.hpp"
#include "audron/runconfig.hpp"
#include "audron/synth.hpp"
#include "audron/train.hpp"
#include "audron/wav.hpp"

namespace fs = std::filesystem;
using namespace audron;

namespace {

// Exit codes: 0 ok, 2 bad arguments/config, 3 I/O, 4 data, 5 numeric.
constexpr int kExitArgs = 2, kExitIo = 3, kExitData = 4, kExitNumeric = 5;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path);
  f << text;
  if (!f) throw IoError("short write to " + path);
}

RunConfig make_config(const std::string& config_path) {
  RunConfig rc;
  if (!config_path.empty()) rc.load_file(config_path);
  return rc;
}

int task_class_count(Task task) {
  return static_cast<int>(task_labels(task).size());
}

struct SplitFeatures {
  FeatureSet train;
  FeatureSet val;
  FeatureStats stats;
};

SplitFeatures load_split_features(const DatasetManifest& manifest, const std::string& base_dir,
                                  const FeatureConfig& fc) {
  const auto train_rows = manifest.split_rows("train");
  const auto val_rows = manifest.split_rows("val");
  if (train_rows.empty() || val_rows.empty())
    throw DataError("manifest needs non-empty train and val splits");
  SplitFeatures out;
  out.stats = compute_feature_stats(train_rows, base_dir, fc);
  out.train = build_feature_set(train_rows, base_dir, manifest.task, fc, out.stats);
  out.val = build_feature_set(val_rows, base_dir, manifest.task, fc, out.stats);
  return out;
}

int cmd_gen(const std::string& out_dir, int per_class_train, int per_class_val, uint64_t seed,
            const std::string& config_path) {
  RunConfig rc = make_config(config_path);
  fs::create_directories(out_dir);
  const DatasetManifest manifest =
      generate_dataset(out_dir, per_class_train, per_class_val, rc.synth_params(), seed);
  rc.write_effective((fs::path(out_dir) / "effective_config.txt").string());
  std::printf("wrote %zu clips (%zu train / %zu val) under %s\n", manifest.rows.size(),
              manifest.split_rows("train").size(), manifest.split_rows("val").size(),
              out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& task_str,
              const std::string& out_dir, const std::string& config_path,
              const std::string& ablate_csv_arg, int64_t seed_override) {
  RunConfig rc = make_config(config_path);
  if (seed_override >= 0) rc.set("train_seed", std::to_string(seed_override));

  const Task task = task_from_string(task_str);
  const DatasetManifest manifest = load_manifest(manifest_path, task);
  const std::string base_dir = fs::path(manifest_path).parent_path().string();

  const FeatureConfig fc = rc.feature_config();
  const TrainConfig tc = rc.train_config();
  ModelConfig mc = rc.model_config(task_class_count(task));
  mc.branches = BranchSet::from_csv(ablate_csv_arg);
  if (mc.branches.count() < 3)
    throw ParameterError("--ablate needs at least 3 branches, got " + ablate_csv_arg);

  fs::create_directories(out_dir);
  rc.write_effective((fs::path(out_dir) / "effective_config.txt").string());

  const SplitFeatures feats = load_split_features(manifest, base_dir, fc);
  AudronModel<float> model(mc, tc.seed);
  const TrainResult result = train(model, feats.train, feats.val, tc);

  const std::string ckpt = (fs::path(out_dir) / "best.ckpt").string();
  model.save(ckpt);
  write_model_config(ckpt + ".cfg", mc, fc, feats.stats, task);
  write_text((fs::path(out_dir) / "history.csv").string(), result.history.csv());


  const EvalResult val = evaluate(model, feats.val, tc.batch_size, tc.recon_weight);
  const auto labels = task_labels(task);
  write_text((fs::path(out_dir) / "metrics.csv").string(), metrics_csv(val.metrics, labels));
  write_text((fs::path(out_dir) / "confusion.txt").string(),
             confusion_text(val.metrics, labels));
  std::printf("best epoch %d  val accuracy %.4f  (%zu epochs run)\n",
              result.history.best_epoch, result.history.best_val_acc,
              result.history.epochs.size());
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& checkpoint,
             const std::string& out_dir, const std::string& split) {
  const LoadedModelConfig lmc = read_model_config(checkpoint + ".cfg");
  const DatasetManifest manifest = load_manifest(manifest_path, lmc.task);
  const std::string base_dir = fs::path(manifest_path).parent_path().string();

  std::vector<ManifestRow> rows =
      split == "all" ? manifest.rows : manifest.split_rows(split);
  if (rows.empty()) throw DataError("eval: no rows in split '" + split + "'");
  const FeatureSet data =
      build_feature_set(rows, base_dir, lmc.task, lmc.features, lmc.stats);

  AudronModel<float> model(lmc.model, /*seed=*/0);
  model.load(checkpoint);
  TrainConfig tc;  // batch size/lambda defaults match training
  const EvalResult r = evaluate(model, data, tc.batch_size, tc.recon_weight);

  fs::create_directories(out_dir);
  const auto labels = task_labels(lmc.task);
  write_text((fs::path(out_dir) / "metrics.csv").string(), metrics_csv(r.metrics, labels));
  write_text((fs::path(out_dir) / "confusion.txt").string(), confusion_text(r.metrics, labels));
  std::printf("accuracy %.8f on %lld samples (%s split)\n", r.metrics.accuracy,
              static_cast<long long>(r.metrics.total()), split.c_str());
  return 0;
}

int cmd_spectrogram(const std::string& in_wav, const std::string& out_pgm,
                    const std::string& config_path) {
  RunConfig rc = make_config(config_path);
  const AudioClip clip = read_wav(in_wav);
  const Spectrogram spec = stft(clip, rc.feature_config().stft);
  std::vector<double> grid(spec.mags.size());
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = std::log1p(spec.mags[i]);
  write_pgm(grid, spec.frames, spec.bins, out_pgm);
  std::printf("wrote %dx%d spectrogram to %s\n", spec.frames, spec.bins, out_pgm.c_str());
  return 0;
}

int cmd_ablate(const std::string& manifest_path, const std::string& task_str,
               const std::string& out_dir, const std::string& config_path,
               int64_t seed_override) {
  RunConfig rc = make_config(config_path);
  if (seed_override >= 0) rc.set("train_seed", std::to_string(seed_override));

  const Task task = task_from_string(task_str);
  const DatasetManifest manifest = load_manifest(manifest_path, task);
  const std::string base_dir = fs::path(manifest_path).parent_path().string();

  fs::create_directories(out_dir);
  rc.write_effective((fs::path(out_dir) / "effective_config.txt").string());

  const SplitFeatures feats = load_split_features(manifest, base_dir, rc.feature_config());
  const std::vector<AblationRow> rows =
      ablate(rc.model_config(task_class_count(task)), feats.train, feats.val, rc.train_config(),
             standard_ablation_sets());
  write_text((fs::path(out_dir) / "ablation.csv").string(), ablation_csv(rows));
  for (const auto& r : rows)
    std::printf("%-22s acc %.4f  drop %+.2f pt\n", r.name.c_str(), r.metrics.accuracy,
                r.drop_pct);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acoustic drone recognition: synthetic corpora, features, training"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic WAV corpus with manifest");
  std::string gen_out;
  int gen_train = 65, gen_val = 20;
  uint64_t gen_seed = 42;
  std::string gen_config;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--per-class-train", gen_train, "training clips per class")
      ->capture_default_str();
  gen->add_option("--per-class-val", gen_val, "validation clips per class")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "master seed")->capture_default_str();
  gen->add_option("--config", gen_config, "key=value config file (default: built-ins)");

  // train
  auto* tr = app.add_subcommand("train", "train the fused classifier from a manifest");
  std::string tr_manifest, tr_task = "synth4", tr_out, tr_config;
  std::string tr_ablate = "mfcc,stft,rnn,ae";
  int64_t tr_seed = -1;
  tr->add_option("--manifest", tr_manifest, "manifest CSV path")->required();
  tr->add_option("--task", tr_task, "task: binary|multi3|synth4")->capture_default_str();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--config", tr_config, "key=value config file (default: built-ins)");
  tr->add_option("--ablate", tr_ablate, "comma list of branches to keep")
      ->capture_default_str();
  tr->add_option("--seed", tr_seed, "override train_seed (default: config value)");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against a manifest");
  std::string ev_manifest, ev_ckpt, ev_out, ev_split = "val";
  ev->add_option("--manifest", ev_manifest, "manifest CSV path")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path (expects <path>.cfg beside it)")
      ->required();
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--split", ev_split, "split to evaluate: train|val|all")
      ->capture_default_str();

  // spectrogram
  auto* sp = app.add_subcommand("spectrogram", "render a WAV to an 8-bit PGM spectrogram");
  std::string sp_in, sp_out, sp_config;
  sp->add_option("--in", sp_in, "input WAV")->required();
  sp->add_option("--out", sp_out, "output PGM")->required();
  sp->add_option("--config", sp_config, "key=value config file (default: built-ins)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train all branch-ablation configurations");
  std::string ab_manifest, ab_task = "synth4", ab_out, ab_config;
  int64_t ab_seed = -1;
  ab->add_option("--manifest", ab_manifest, "manifest CSV path")->required();
  ab->add_option("--task", ab_task, "task: binary|multi3|synth4")->capture_default_str();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--config", ab_config, "key=value config file (default: built-ins)");
  ab->add_option("--seed", ab_seed, "override train_seed (default: config value)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitArgs;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_train, gen_val, gen_seed, gen_config);
    if (tr->parsed())
      return cmd_train(tr_manifest, tr_task, tr_out, tr_config, tr_ablate, tr_seed);
    if (ev->parsed()) return cmd_eval(ev_manifest, ev_ckpt, ev_out, ev_split);
    if (sp->parsed()) return cmd_spectrogram(sp_in, sp_out, sp_config);
    if (ab->parsed()) return cmd_ablate(ab_manifest, ab_task, ab_out, ab_config, ab_seed);
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitArgs;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const DataError& e) {  // includes Format/Dimension errors
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
