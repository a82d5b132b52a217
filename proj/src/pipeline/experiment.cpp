// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "photofit/checkpoint.hpp"
#include "photofit/dataset.hpp"
#include "photofit/image_io.hpp"
#include "photofit/json_io.hpp"
#include "photofit/pipeline.hpp"
#include "photofit/plots.hpp"

namespace photofit {

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("config " + key + ": '" + v + "' is not an integer");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("config " + key + ": '" + v + "' is not a number");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  ObserverConfig& o = trials.observer;
  if (key == "seed") seed = std::uint64_t(std::stoull(value));
  else if (key == "model_seed") model_seed = std::uint64_t(std::stoull(value));
  else if (key == "image_size") image_size = to_int(key, value);
  else if (key == "face_train") face_train = to_int(key, value);
  else if (key == "face_val") face_val = to_int(key, value);
  else if (key == "encoder_epochs") encoder_epochs = to_int(key, value);
  else if (key == "decoder_epochs") decoder_epochs = to_int(key, value);
  else if (key == "scorer_epochs") scorer_epochs = to_int(key, value);
  else if (key == "batch_size") batch_size = to_int(key, value);
  else if (key == "train_trials") trials.train = to_int(key, value);
  else if (key == "val_trials") trials.val = to_int(key, value);
  else if (key == "test_trials") trials.test = to_int(key, value);
  else if (key == "out") out = value;
  else if (key == "model_dir") model_dir = value;
  else if (key == "plots") plots = value == "1" || value == "true";
  else if (key == "variants") {
    variants.clear();
    for (const auto& v : split_list(value)) variants.push_back(variant_from_name(v));
  } else if (key == "observer.trial_ms") o.trial_ms = to_double(key, value);
  else if (key == "observer.switch_ms") o.switch_ms = to_double(key, value);
  else if (key == "observer.accuracy") o.accuracy = to_double(key, value);
  else if (key == "observer.distractor_bias") o.distractor_bias = to_double(key, value);
  else if (key == "observer.jitter_fraction") o.jitter_fraction = to_double(key, value);
  else if (key == "observer.min_duration_ms") o.min_duration_ms = to_int(key, value);
  else if (key == "observer.max_duration_ms") o.max_duration_ms = to_int(key, value);
  else if (key == "observer.mode") {
    if (value == "oracle") o.mode = ObserverMode::kOracleSchedule;
    else if (value == "similarity") o.mode = ObserverMode::kSimilarity;
    else throw ConfigError("observer.mode must be oracle or similarity");
  } else if (key == "observer.weights") {
    const auto parts = split_list(value);
    if (parts.size() != 4) throw ConfigError("observer.weights needs four values (eyes,nose,mouth,jaw)");
    for (std::size_t i = 0; i < 4; ++i) o.group_weights[i] = to_double(key, parts[i]);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(file.string() + ":" + std::to_string(n) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Json observer_json(const ObserverConfig& o) {
  return {{"trial_ms", o.trial_ms},       {"switch_ms", o.switch_ms},
          {"weights", o.group_weights},   {"accuracy", o.accuracy},
          {"min_ms", o.min_duration_ms},  {"max_ms", o.max_duration_ms},
          {"jitter", o.jitter_fraction},  {"distractor_bias", o.distractor_bias},
          {"mode", o.mode == ObserverMode::kSimilarity ? "similarity" : "oracle"}};
}

// A checkpoint is reused only when the sidecar describing how it was made matches.
bool try_load(const std::filesystem::path& ckpt, const Json& recipe, Model& m, const Logger& log) {
  auto side = ckpt;
  side += ".json";
  if (!std::filesystem::exists(ckpt) || !std::filesystem::exists(side)) return false;
  try {
    std::ifstream in(side);
    if (Json::parse(in) != recipe) {
      if (log) log(ckpt.string() + " was made with different settings; retraining");
      return false;
    }
    load_checkpoint(ckpt, m);
    if (log) log("loaded " + ckpt.string());
    return true;
  } catch (const std::exception& e) {
    if (log) log("ignoring " + ckpt.string() + ": " + e.what());
    return false;
  }
}

void store(const std::filesystem::path& ckpt, const Json& recipe, Model& m) {
  std::filesystem::create_directories(ckpt.parent_path());
  save_checkpoint(ckpt, m);
  auto side = ckpt;
  side += ".json";
  write_text(side, recipe.dump(2) + "\n");
}

void write_log_csv(const std::filesystem::path& p, const TrainHistory& h, const std::string& loss) {
  std::string s = "epoch,train_" + loss + ",val_" + loss + "\n";
  for (const auto& e : h.epochs) s += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + fmt(e.val_loss) + "\n";
  write_text(p, s);
}

Json face_recipe(const ExperimentConfig& cfg, int epochs) {
  return {{"model_seed", cfg.model_seed}, {"image_size", cfg.image_size}, {"face_train", cfg.face_train},
          {"face_val", cfg.face_val},     {"epochs", epochs},             {"batch_size", cfg.batch_size}};
}

struct FaceData {
  FaceDataset train, val;
};

FaceData face_data(const ExperimentConfig& cfg, const Logger& log) {
  if (log) log("rendering " + std::to_string(cfg.face_train) + " + " + std::to_string(cfg.face_val) + " faces");
  return {make_face_dataset(cfg.face_train, cfg.model_seed * 2 + 1, cfg.image_size),
          make_face_dataset(cfg.face_val, cfg.model_seed * 2 + 2, cfg.image_size)};
}

TrainOptions train_options(const ExperimentConfig& cfg, int epochs, const std::string& what, const Logger& log) {
  TrainOptions opt;
  opt.epochs = epochs;
  opt.batch_size = cfg.batch_size;
  opt.seed = cfg.model_seed;
  opt.on_epoch = [what, log](const EpochLog& e) {
    if (log) log(what + " epoch " + std::to_string(e.epoch) + " train " + fmt(e.train_loss) + " val " + fmt(e.val_loss));
  };
  return opt;
}

}  // namespace

void ensure_encoder(const ExperimentConfig& cfg, Encoder& enc, const Logger& log) {
  const auto ckpt = cfg.models() / "encoder.npfc";
  const Json recipe = face_recipe(cfg, cfg.encoder_epochs);
  if (try_load(ckpt, recipe, enc, log)) return;
  const FaceData d = face_data(cfg, log);
  Rng rng(cfg.model_seed * 7 + 3);
  enc.reset_parameters(rng);
  const auto h = fit_mse(enc, d.train.images, d.train.targets, d.val.images, d.val.targets,
                         train_options(cfg, cfg.encoder_epochs, "encoder", log));
  write_log_csv(cfg.models() / "encoder_log.csv", h, "mse");
  store(ckpt, recipe, enc);
}

void ensure_decoder(const ExperimentConfig& cfg, Decoder& dec, const Logger& log) {
  const auto ckpt = cfg.models() / "decoder.npfc";
  const Json recipe = face_recipe(cfg, cfg.decoder_epochs);
  if (try_load(ckpt, recipe, dec, log)) return;
  const FaceData d = face_data(cfg, log);
  Rng rng(cfg.model_seed * 7 + 4);
  dec.reset_parameters(rng);
  const auto h = fit_mse(dec, d.train.inputs, d.train.images, d.val.inputs, d.val.images,
                         train_options(cfg, cfg.decoder_epochs, "decoder", log));
  write_log_csv(cfg.models() / "decoder_log.csv", h, "mse");
  store(ckpt, recipe, dec);
}

std::filesystem::path scorer_checkpoint(const ExperimentConfig& cfg, ScorerVariant v) {
  return cfg.models() / ("scorer-" + std::string(variant_name(v)) + "-seed" + std::to_string(cfg.seed) + ".npfc");
}

std::span<const Trial> split_range(std::span<const Trial> all, Split s, std::size_t* offset) {
  std::size_t begin = 0;
  while (begin < all.size() && all[begin].split != s) ++begin;
  std::size_t end = begin;
  while (end < all.size() && all[end].split == s) ++end;
  if (offset) *offset = begin;
  return all.subspan(begin, end - begin);
}

void ensure_scorer(const ExperimentConfig& cfg, ScorerVariant v, Scorer& scorer, std::span<const Trial> trials,
                   std::span<const TrialEncoding> encodings, const Logger& log) {
  const auto ckpt = scorer_checkpoint(cfg, v);
  const Json recipe = {{"seed", cfg.seed},
                       {"variant", std::string(variant_name(v))},
                       {"epochs", cfg.scorer_epochs},
                       {"batch_size", cfg.batch_size},
                       {"trials", {cfg.trials.train, cfg.trials.val, cfg.trials.test}},
                       {"observer", observer_json(cfg.trials.observer)},
                       {"encoder", face_recipe(cfg, cfg.encoder_epochs)}};
  if (try_load(ckpt, recipe, scorer, log)) return;

  std::size_t tr_off = 0, va_off = 0;
  const auto tr = split_range(trials, Split::kTrain, &tr_off);
  const auto va = split_range(trials, Split::kVal, &va_off);
  if (tr.empty() || va.empty()) throw ConfigError("scorer training needs train and validation trials");
  SampleOptions opt;
  opt.maps.bin_ms = scorer.config().bin_ms(cfg.trials.observer.trial_ms);
  opt.maps.resolution = scorer.config().resolution;
  opt.augment = true;
  const SampleSet train = build_samples(tr, encodings.subspan(tr_off, tr.size()), opt);
  opt.augment = false;
  const SampleSet val = build_samples(va, encodings.subspan(va_off, va.size()), opt);
  if (log) {
    log("scorer " + std::string(variant_name(v)) + ": " + std::to_string(train.size()) + " training samples (" +
        std::to_string(train.positives()) + " positive), " + std::to_string(val.size()) + " validation");
  }
  Rng rng(cfg.seed * 31 + std::uint64_t(v) + 17);
  scorer.reset_parameters(rng);
  ScorerTrainOptions so;
  so.epochs = cfg.scorer_epochs;
  so.batch_size = cfg.batch_size;
  so.seed = cfg.seed;
  const std::string name(variant_name(v));
  so.on_epoch = [name, log](const EpochLog& e) {
    if (log) log("scorer " + name + " epoch " + std::to_string(e.epoch) + " train " + fmt(e.train_loss) + " val " + fmt(e.val_loss));
  };
  const auto h = train_scorer(scorer, train, val, so);
  auto log_path = ckpt;
  log_path.replace_extension(".log.csv");
  write_log_csv(log_path, h, "bce");
  store(ckpt, recipe, scorer);
}

void write_results_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  std::string s = "variant,group,accuracy,masd\n";
  for (const auto& r : reports) {
    for (int g = 0; g < 4; ++g) {
      s += r.variant + "," + std::string(group_name(Group(g))) + "," + fmt(r.group_accuracy[std::size_t(g)]) + "," +
           fmt(r.group_masd[std::size_t(g)]) + "\n";
    }
    s += r.variant + ",all," + fmt(r.accuracy) + "," + fmt(r.masd) + "\n";
  }
  write_text(path, s);
}

namespace {

EvalReport baseline_report(const EvalReport& any) {
  // The baseline selects nothing; its accuracy is that of a uniform random
  // pick, i.e. the share of positive faces per feature.
  EvalReport b;
  b.variant = "baseline";
  b.trials = any.trials;
  b.accuracy = 1.0 / kAuxFaces;
  b.group_accuracy.fill(1.0 / kAuxFaces);
  b.masd = any.masd_baseline;
  b.group_masd = any.group_masd_baseline;
  b.masd_argmax = any.masd_baseline;
  b.masd_baseline = any.masd_baseline;
  b.group_masd_baseline = any.group_masd_baseline;
  return b;
}

}  // namespace

void write_report_files(const std::filesystem::path& dir, const EvalReport& r) {
  const std::string v = r.variant;
  std::string c = "group";
  for (int i = 0; i < kAuxFaces; ++i) c += ",face" + std::to_string(i);
  c += "\n";
  std::string cf = c;
  cf.replace(0, 5, "feature");
  for (int g = 0; g < 4; ++g) {
    c += std::string(group_name(Group(g)));
    for (double x : r.confusion[std::size_t(g)]) c += "," + fmt(x);
    c += "\n";
  }
  const auto& schema = default_schema();
  for (std::size_t f = 0; f < r.feature_confusion.size(); ++f) {
    cf += schema.at(schema.reconstructable()[f]).name;
    for (double x : r.feature_confusion[f]) cf += "," + fmt(x);
    cf += "\n";
  }
  write_text(dir / ("confusion_" + v + ".csv"), c);
  write_text(dir / ("confusion_features_" + v + ".csv"), cf);

  std::string t = "trial,masd_ours,masd_argmax,masd_baseline,correct,fallback\n";
  for (const auto& tr : r.per_trial) {
    t += std::to_string(tr.trial) + "," + fmt(tr.masd_ours) + "," + fmt(tr.masd_argmax) + "," + fmt(tr.masd_baseline) +
         "," + std::to_string(tr.correct) + "," + std::to_string(tr.fallback) + "\n";
  }
  write_text(dir / ("trials_" + v + ".csv"), t);

  if (!r.attention_profile.empty()) {
    std::string a = "bin,alpha\n";
    for (std::size_t b = 0; b < r.attention_profile.size(); ++b) a += std::to_string(b) + "," + fmt(r.attention_profile[b]) + "\n";
    write_text(dir / ("attention_" + v + ".csv"), a);
  }
}

namespace {

void write_report_plots(const std::filesystem::path& dir, const EvalReport& r) {
  std::vector<std::vector<double>> cells;
  for (const auto& row : r.confusion) cells.emplace_back(row.begin(), row.end());
  write_png(dir / ("confusion_" + r.variant + ".png"), heatmap(cells));
  if (!r.attention_profile.empty()) {
    std::vector<std::vector<double>> bars;
    for (double a : r.attention_profile) bars.push_back({a});
    write_png(dir / ("attention_" + r.variant + ".png"), bar_chart(bars, 12, 120, {{{40, 90, 170}}}));
  }
}

// Rows: target, mean baseline, decoded photofit, rendered photofit.
void write_reconstruction_grid(const std::filesystem::path& path, std::span<const Trial> trials,
                               std::span<const TrialEncoding> enc, std::span<const TrialScores> scores,
                               Decoder& dec, int image_size) {
  const int n = int(std::min<std::size_t>(trials.size(), 6));
  const int cell = image_size + 4;
  Canvas c(n * cell + 4, 4 * cell + 4, {255, 255, 255});
  for (int i = 0; i < n; ++i) {
    const Trial& t = trials[std::size_t(i)];
    const auto ours = reconstruct_weighted(enc[std::size_t(i)].features, scores[std::size_t(i)].scores, t.target);
    const auto base = mean_baseline(t.faces);
    const int x = 4 + i * cell;
    c.blit(x, 4, render_face(t.target, image_size));
    c.blit(x, 4 + cell, render_face(base.sliders, image_size));
    c.blit(x, 4 + 2 * cell, dec.decode(ours.sliders));
    c.blit(x, 4 + 3 * cell, render_face(clamped(ours.sliders), image_size));
  }
  write_png(path, c.image());
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Logger& log) {
  if (cfg.variants.empty()) throw ConfigError("no scorer variants selected");
  std::filesystem::create_directories(cfg.out);
  EncoderConfig ec;
  ec.image_size = cfg.image_size;
  Encoder enc(ec);
  ensure_encoder(cfg, enc, log);
  DecoderConfig dc;
  dc.image_size = cfg.image_size;
  Decoder dec(dc);
  ensure_decoder(cfg, dec, log);

  if (log) log("simulating " + std::to_string(cfg.trials.total()) + " trials");
  const std::vector<Trial> trials = simulate_trials(cfg.trials, cfg.seed);
  std::vector<TrialEncoding> encodings;
  encodings.reserve(trials.size());
  for (const auto& t : trials) encodings.push_back(encode_trial(enc, t));

  std::size_t test_off = 0;
  const auto test = split_range(trials, Split::kTest, &test_off);
  if (test.empty()) throw ConfigError("evaluate: empty test split");
  const auto test_enc = std::span<const TrialEncoding>(encodings).subspan(test_off, test.size());

  ExperimentResult res;
  bool grid_done = false;
  for (ScorerVariant v : cfg.variants) {
    Scorer scorer(ScorerConfig::for_variant(v, cfg.trials.observer.trial_ms, ec.map_resolution()));
    ensure_scorer(cfg, v, scorer, trials, encodings, log);
    const auto scores = score_trials(scorer, test, test_enc);
    EvalReport r = summarize(std::string(variant_name(v)), test, test_enc, scores);
    if (log) log(r.variant + ": accuracy " + fmt(r.accuracy) + " masd " + fmt(r.masd) + " baseline " + fmt(r.masd_baseline));
    write_report_files(cfg.out, r);
    if (cfg.plots) {
      write_report_plots(cfg.out, r);
      if (!grid_done) {
        write_reconstruction_grid(cfg.out / "reconstructions.png", test, test_enc, scores, dec, cfg.image_size);
        grid_done = true;
      }
    }
    res.reports.push_back(std::move(r));
  }
  res.reports.push_back(baseline_report(res.reports.front()));
  write_results_csv(cfg.out / "results.csv", res.reports);

  const auto profile = fixation_profile(test, 1000.0);
  std::string p = "bin,eyes,nose,mouth,jaw,distractor\n";
  std::vector<std::vector<double>> bars;
  for (std::size_t b = 0; b < profile.size(); ++b) {
    p += std::to_string(b);
    for (double x : profile[b]) p += "," + fmt(x);
    p += "\n";
    bars.emplace_back(profile[b].begin(), profile[b].end());
  }
  write_text(cfg.out / "fixation_profile.csv", p);
  if (cfg.plots) {
    write_png(cfg.out / "fixation_profile.png",
              bar_chart(bars, 12, 120, {{{200, 60, 60}}, {{230, 160, 40}}, {{60, 160, 80}}, {{60, 110, 200}}, {{150, 150, 150}}}));
  }
  return res;
}

}  // namespace photofit
