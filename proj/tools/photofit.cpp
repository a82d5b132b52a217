// SPDX-License-Identifier: Apache-2.0
// Command-line front end: data generation, training, evaluation, single-trial
// reconstruction, the session service and the full ablation run.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "photofit/dataset.hpp"
#include "photofit/http_service.hpp"
#include "photofit/image_io.hpp"
#include "photofit/json_io.hpp"
#include "photofit/pipeline.hpp"
#include "photofit/session.hpp"

using namespace photofit;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::uint64_t model_seed = 1;
  std::string config;
  std::string out = "photofit-out";
  std::vector<std::string> sets;
  bool quiet = false;
};

ExperimentConfig make_config(const Globals& g, CLI::App& app) {
  ExperimentConfig cfg;
  if (!g.config.empty()) cfg.load(g.config);
  // Explicit flags win over the file.
  if (app.count("--seed") || g.config.empty()) cfg.seed = g.seed;
  if (app.count("--model-seed") || g.config.empty()) cfg.model_seed = g.model_seed;
  if (app.count("--out") || g.config.empty()) cfg.out = g.out;
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

Logger logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& s) { std::cerr << s << std::endl; };
}

EncoderConfig encoder_config(const ExperimentConfig& cfg) {
  EncoderConfig ec;
  ec.image_size = cfg.image_size;
  return ec;
}

DecoderConfig decoder_config(const ExperimentConfig& cfg) {
  DecoderConfig dc;
  dc.image_size = cfg.image_size;
  return dc;
}

ScorerConfig scorer_config(const ExperimentConfig& cfg, ScorerVariant v) {
  return ScorerConfig::for_variant(v, cfg.trials.observer.trial_ms, encoder_config(cfg).map_resolution());
}

struct Workspace {
  std::vector<Trial> trials;
  std::vector<TrialEncoding> encodings;
};

Workspace simulate_and_encode(const ExperimentConfig& cfg, Encoder& enc, const Logger& log) {
  if (log) log("simulating " + std::to_string(cfg.trials.total()) + " trials");
  Workspace w;
  w.trials = simulate_trials(cfg.trials, cfg.seed);
  w.encodings.reserve(w.trials.size());
  for (const auto& t : w.trials) w.encodings.push_back(encode_trial(enc, t));
  return w;
}

void print_report(const EvalReport& r) {
  std::printf("%-8s accuracy %.4f  masd %.4f  masd(argmax) %.4f  baseline %.4f  win rate %.3f  fallbacks %d\n",
              r.variant.c_str(), r.accuracy, r.masd, r.masd_argmax, r.masd_baseline, r.win_rate, r.fallback_features);
  for (int g = 0; g < 4; ++g) {
    std::printf("  %-6s accuracy %.4f  masd %.4f (baseline %.4f)\n", std::string(group_name(Group(g))).c_str(),
                r.group_accuracy[std::size_t(g)], r.group_masd[std::size_t(g)],
                r.group_masd_baseline[std::size_t(g)]);
  }
}

HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze-driven photofit reconstruction"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for trials and scorer training");
  app.add_option("--model-seed", g.model_seed, "Seed for encoder/decoder data and init");
  app.add_option("--config", g.config, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--set", g.sets, "Override one configuration key (key=value); repeatable");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress logs");

  std::string variant = "full";
  auto add_variant = [&](CLI::App* sub) {
    sub->add_option("--variant", variant, "Scorer variant")->check(CLI::IsMember({"full", "5s", "30s", "NoAtt"}));
  };

  auto* gen = app.add_subcommand("gen-faces", "Render random faces with their sliders");
  int gen_count = 100;
  gen->add_option("--count", gen_count, "Number of faces")->check(CLI::PositiveNumber);

  auto* tenc = app.add_subcommand("train-encoder", "Train (or load) the slider encoder");
  auto* tdec = app.add_subcommand("train-decoder", "Train (or load) the slider decoder");
  auto* sim = app.add_subcommand("simulate-trials", "Simulate observer trials and write trial bundles");
  auto* tsc = app.add_subcommand("train-scorer", "Train (or load) one scorer variant");
  add_variant(tsc);
  auto* ev = app.add_subcommand("evaluate", "Evaluate one scorer variant on the test split");
  add_variant(ev);

  auto* rec = app.add_subcommand("reconstruct", "Reconstruct the target of one trial bundle");
  std::string trial_dir;
  rec->add_option("--trial", trial_dir, "Trial bundle directory")->required()->check(CLI::ExistingDirectory);
  add_variant(rec);

  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  std::string host = "127.0.0.1", journal;
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--journal", journal, "Session journal directory (enables recovery)");
  add_variant(serve);

  auto* exp = app.add_subcommand("experiment", "Train everything and run the full ablation");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = make_config(g, app);
    const Logger log = logger(g);
    const ScorerVariant v = variant_from_name(variant);

    if (gen->parsed()) {
      const auto dir = cfg.out / "faces";
      std::filesystem::create_directories(dir);
      const FaceDataset d = make_face_dataset(gen_count, cfg.model_seed, cfg.image_size);
      std::ofstream index(dir / "sliders.jsonl");
      for (int i = 0; i < gen_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "face_%05d.png", i);
        write_png(dir / name, render_face(d.sliders[std::size_t(i)], cfg.image_size));
        Json line = sliders_to_json(d.sliders[std::size_t(i)]);
        line["file"] = name;
        index << line.dump() << "\n";
      }
      std::printf("wrote %d faces to %s\n", gen_count, dir.string().c_str());
    } else if (tenc->parsed()) {
      Encoder enc(encoder_config(cfg));
      ensure_encoder(cfg, enc, log);
      std::printf("encoder checkpoint: %s\n", (cfg.models() / "encoder.npfc").string().c_str());
    } else if (tdec->parsed()) {
      Decoder dec(decoder_config(cfg));
      ensure_decoder(cfg, dec, log);
      std::printf("decoder checkpoint: %s\n", (cfg.models() / "decoder.npfc").string().c_str());
    } else if (sim->parsed()) {
      const auto trials = simulate_trials(cfg.trials, cfg.seed);
      for (const auto& t : trials) {
        char name[32];
        std::snprintf(name, sizeof(name), "trial_%04d", t.id);
        write_trial_bundle(cfg.out / "trials" / std::string(split_name(t.split)) / name, t, cfg.image_size);
      }
      std::printf("wrote %zu trial bundles to %s\n", trials.size(), (cfg.out / "trials").string().c_str());
    } else if (tsc->parsed() || ev->parsed()) {
      Encoder enc(encoder_config(cfg));
      ensure_encoder(cfg, enc, log);
      const Workspace w = simulate_and_encode(cfg, enc, log);
      Scorer scorer(scorer_config(cfg, v));
      ensure_scorer(cfg, v, scorer, w.trials, w.encodings, log);
      if (ev->parsed()) {
        std::size_t off = 0;
        const auto test = split_range(w.trials, Split::kTest, &off);
        const auto enc_test = std::span<const TrialEncoding>(w.encodings).subspan(off, test.size());
        const EvalReport r = evaluate(scorer, std::string(variant_name(v)), test, enc_test);
        write_report_files(cfg.out, r);
        write_results_csv(cfg.out / ("results_" + r.variant + ".csv"), std::span<const EvalReport>(&r, 1));
        print_report(r);
      } else {
        std::printf("scorer checkpoint: %s\n", scorer_checkpoint(cfg, v).string().c_str());
      }
    } else if (rec->parsed()) {
      Encoder enc(encoder_config(cfg));
      ensure_encoder(cfg, enc, log);
      Decoder dec(decoder_config(cfg));
      ensure_decoder(cfg, dec, log);
      Scorer scorer(scorer_config(cfg, v));
      {
        const Workspace w = simulate_and_encode(cfg, enc, log);
        ensure_scorer(cfg, v, scorer, w.trials, w.encodings, log);
      }
      const Trial t = read_trial_bundle(trial_dir);
      const TrialEncoding e = encode_trial(enc, t);
      const auto s = score_trials(scorer, std::span<const Trial>(&t, 1), std::span<const TrialEncoding>(&e, 1));
      const Reconstruction ours = reconstruct_weighted(e.features, s[0].scores, t.target);
      const Reconstruction base = mean_baseline(t.faces);
      const std::filesystem::path dir = trial_dir;
      write_png(dir / "photofit.png", dec.decode(ours.sliders));
      write_png(dir / "photofit_rendered.png", render_face(clamped(ours.sliders), cfg.image_size));
      write_png(dir / "baseline.png", render_face(clamped(base.sliders), cfg.image_size));
      Json out = {{"variant", std::string(variant_name(v))},
                  {"sliders", ours.sliders.values},
                  {"baseline", base.sliders.values},
                  {"fallback_features", ours.fallback},
                  {"masd_ours", masd(ours.sliders, t.target)},
                  {"masd_baseline", masd(base.sliders, t.target)}};
      std::ofstream(dir / "reconstruction.json") << out.dump(2) << "\n";
      std::printf("masd ours %.4f baseline %.4f\n", out["masd_ours"].get<double>(), out["masd_baseline"].get<double>());
    } else if (serve->parsed()) {
      const ScorerConfig sc = scorer_config(cfg, v);
      ModelBundle models(encoder_config(cfg), decoder_config(cfg), sc);
      ensure_encoder(cfg, models.encoder, log);
      ensure_decoder(cfg, models.decoder, log);
      {
        const Workspace w = simulate_and_encode(cfg, models.encoder, log);
        ensure_scorer(cfg, v, models.scorer, w.trials, w.encodings, log);
      }
      SessionConfig scfg;
      scfg.trial_ms = cfg.trials.observer.trial_ms;
      scfg.image_size = cfg.image_size;
      scfg.journal_dir = journal;
      SessionManager sessions(models, scfg);
      if (!journal.empty()) {
        const int n = sessions.recover();
        if (log) log("recovered " + std::to_string(n) + " sessions");
      }
      HttpService svc(sessions);
      const int bound = svc.bind(host, port);
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on http://%s:%d\n", host.c_str(), bound);
      std::fflush(stdout);
      svc.listen();
    } else if (exp->parsed()) {
      const ExperimentResult r = run_experiment(cfg, log);
      for (const auto& rep : r.reports) print_report(rep);
      std::printf("results: %s\n", (cfg.out / "results.csv").string().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
