// SPDX-License-Identifier: Apache-2.0
#include "photofit/scorer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "photofit/json_io.hpp"

namespace photofit {

std::string_view variant_name(ScorerVariant v) {
  switch (v) {
    case ScorerVariant::kFull: return "full";
    case ScorerVariant::k5s: return "5s";
    case ScorerVariant::k30s: return "30s";
    case ScorerVariant::kNoAtt: return "NoAtt";
  }
  return "?";
}

ScorerVariant variant_from_name(std::string_view name) {
  for (auto v : kScorerVariants)
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown scorer variant '" + std::string(name) + "' (full, 5s, 30s, NoAtt)");
}

ScorerConfig ScorerConfig::for_variant(ScorerVariant v, double trial_ms, int resolution) {
  ScorerConfig c;
  c.resolution = resolution;
  const double seconds = trial_ms / 1000.0;
  switch (v) {
    case ScorerVariant::kFull: c.bins = int(std::lround(seconds)); break;
    case ScorerVariant::k5s: c.bins = int(std::lround(seconds / 5.0)); break;
    case ScorerVariant::k30s: c.bins = 1; break;
    case ScorerVariant::kNoAtt:
      c.bins = int(std::lround(seconds));
      c.attention = false;
      break;
  }
  if (c.bins < 1) throw ConfigError("trial too short for scorer variant " + std::string(variant_name(v)));
  return c;
}

Scorer::Scorer(ScorerConfig cfg) : cfg_(cfg), frames_("score.frames"), temporal_("score.temporal") {
  if (cfg_.bins < 1 || cfg_.resolution < 4) throw ConfigError("scorer needs bins >= 1 and resolution >= 4");
  const int strides[3] = {1, 2, 2};
  int cin = 2;
  for (int i = 0; i < 3; ++i) {
    const std::string p = "score.block" + std::to_string(i);
    const int w = cfg_.widths[std::size_t(i)];
    frames_.add<Conv2d<float>>(p + ".conv", cin, w, cfg_.kernel, strides[i]);
    frames_.add<Pointwise<float>>(p + ".relu", Activation::kRelu);
    frames_.add<BatchNorm<float>>(p + ".bn", w);
    cin = w;
  }
  frames_.add<GlobalAvgPool<float>>("score.gap");
  temporal_.add<Gru<float>>("score.gru", cin, cfg_.hidden);
  if (cfg_.attention) {
    pool_ = &temporal_.add<AttentionPool<float>>("score.attention", cfg_.hidden);
  } else {
    temporal_.add<LastStep<float>>("score.last");
  }
  head_ = &temporal_.add<Dense<float>>("score.head", cfg_.hidden, 1);
}

void Scorer::reset_parameters(Rng& rng) {
  frames_.reset_parameters(rng);
  temporal_.reset_parameters(rng);
  head_->weights().value.fill(0.0f);
  head_->bias().value.fill(0.0f);
}

Tensor Scorer::forward(const Tensor& x, Mode mode) {
  require_rank(x, 5, "scorer input");
  const int r = cfg_.resolution;
  if (x.dim(1) != cfg_.bins || x.dim(2) != r || x.dim(3) != r || x.dim(4) != 2) {
    throw ConfigError("scorer expects [N," + std::to_string(cfg_.bins) + "," + std::to_string(r) + "," +
                      std::to_string(r) + ",2], got " + dims_to_string(x.dims()));
  }
  batch_ = x.dim(0);
  Tensor per_bin = frames_.forward(x.reshaped({batch_ * cfg_.bins, r, r, 2}), mode);
  const int c = per_bin.dim(1);
  return temporal_.forward(std::move(per_bin).reshaped({batch_, cfg_.bins, c}), mode);
}

Tensor Scorer::backward(const Tensor& grad_out) {
  Tensor g = temporal_.backward(grad_out);
  const int c = g.dim(2);
  return frames_.backward(std::move(g).reshaped({batch_ * cfg_.bins, c}));
}

std::vector<Parameter<float>*> Scorer::parameters() {
  auto p = frames_.parameters();
  for (auto* q : temporal_.parameters()) p.push_back(q);
  return p;
}

std::vector<NamedBuffer<float>> Scorer::buffers() {
  auto b = frames_.buffers();
  for (auto& q : temporal_.buffers()) b.push_back(q);
  return b;
}

std::vector<NamedTensor> Scorer::meta() const {
  return {
      {"meta.bins", Tensor({1}, float(cfg_.bins))},
      {"meta.resolution", Tensor({1}, float(cfg_.resolution))},
      {"meta.attention", Tensor({1}, cfg_.attention ? 1.0f : 0.0f)},
      {"meta.kernel", Tensor({1}, float(cfg_.kernel))},
      {"meta.widths", Tensor({3}, std::vector<float>(cfg_.widths.begin(), cfg_.widths.end()))},
      {"meta.hidden", Tensor({1}, float(cfg_.hidden))},
  };
}

const Tensor& Scorer::attention() const { return pool_ ? pool_->attention() : empty_; }

void standardize(std::span<float> map) {
  if (map.empty()) return;
  double mean = 0.0;
  for (float v : map) mean += v;
  mean /= double(map.size());
  double var = 0.0;
  for (float v : map) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / double(map.size())), 1e-6);
  for (float& v : map) v = float((v - mean) / sd);
}

TrialEncoding encode_trial(Encoder& enc, const Trial& t) {
  const int k = enc.config().outputs;
  const int r = enc.config().map_resolution();
  TrialEncoding e;
  e.features = Tensor({kAuxFaces, k});
  e.maps = Tensor({kAuxFaces, k, r, r});
  for (int i = 0; i < kAuxFaces; ++i) {
    auto [out, cam] = enc.encode_with_maps(render_face(t.faces.faces[std::size_t(i)], enc.config().image_size));
    std::copy(out.begin(), out.end(), e.features.data() + std::size_t(i) * k);
    for (int f = 0; f < k; ++f) {
      float* dst = e.maps.data() + (std::size_t(i) * k + f) * r * r;
      for (int p = 0; p < r * r; ++p) dst[p] = cam[std::size_t(p) * k + f];
      standardize(std::span<float>(dst, std::size_t(r) * r));
    }
  }
  return e;
}

void flip_planes(std::span<float> planes, int resolution) {
  const std::size_t plane = std::size_t(resolution) * resolution;
  if (planes.size() % plane != 0) throw ConfigError("flip_planes: size is not a multiple of R*R");
  flip_horizontal(planes.data(), int(planes.size() / std::size_t(resolution)), resolution, 1);
}

void SampleSet::maps(std::size_t i, std::span<float> fix, std::span<float> act) const {
  const SampleRef& s = samples.at(i);
  const std::size_t p = plane();
  std::memcpy(fix.data(), fix_pool.data() + s.fix_block, std::size_t(bins) * p * sizeof(float));
  std::memcpy(act.data(), act_pool.data() + s.act_block, p * sizeof(float));
  if (s.flips & kFlipFixation) flip_planes(fix.first(std::size_t(bins) * p), resolution);
  if (s.flips & kFlipActivation) flip_planes(act.first(p), resolution);
}

Tensor SampleSet::batch(std::span<const int> idx) const {
  const std::size_t p = plane();
  Tensor out({int(idx.size()), bins, resolution, resolution, 2});
  std::vector<float> fix(std::size_t(bins) * p), act(p);
  float* o = out.data();
  for (int i : idx) {
    maps(std::size_t(i), fix, act);
    for (int b = 0; b < bins; ++b) {
      const float* f = fix.data() + std::size_t(b) * p;
      for (std::size_t q = 0; q < p; ++q) {
        *o++ = f[q];
        *o++ = act[q];
      }
    }
  }
  return out;
}

Tensor SampleSet::labels(std::span<const int> idx) const {
  Tensor out({int(idx.size()), 1});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = samples.at(std::size_t(idx[i])).label;
  return out;
}

int SampleSet::positives() const {
  int n = 0;
  for (const auto& s : samples) n += s.label;
  return n;
}

SampleSet build_samples(std::span<const Trial> trials, std::span<const TrialEncoding> encodings,
                        const SampleOptions& opt) {
  if (trials.size() != encodings.size()) throw ConfigError("build_samples: one encoding per trial required");
  SampleSet s;
  s.resolution = opt.maps.resolution;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const Trial& trial = trials[t];
    const TrialEncoding& enc = encodings[t];
    if (enc.maps.dim(2) != opt.maps.resolution) {
      throw ConfigError("activation maps are " + std::to_string(enc.maps.dim(2)) + "x" +
                        std::to_string(enc.maps.dim(2)) + " but fixation maps are " +
                        std::to_string(opt.maps.resolution) + "x" + std::to_string(opt.maps.resolution));
    }
    const FixationMaps fm = build_fixation_maps(trial.scanpath, opt.maps);
    if (t == 0) {
      s.bins = fm.bins;
      s.features = enc.maps.dim(1);
    } else if (fm.bins != s.bins || enc.maps.dim(1) != s.features) {
      throw ConfigError("build_samples: trials disagree on bins or feature count");
    }
    const std::size_t p = s.plane();
    for (int i = 0; i < kAuxFaces; ++i) {
      const Tensor norm = fm.normalized(i);
      const std::size_t fix_block = s.fix_pool.size();
      s.fix_pool.insert(s.fix_pool.end(), norm.values().begin(), norm.values().end());
      for (int f = 0; f < s.features; ++f) {
        const std::size_t act_block = s.act_pool.size();
        const float* src = enc.maps.data() + (std::size_t(i) * s.features + f) * p;
        s.act_pool.insert(s.act_pool.end(), src, src + p);
        SampleRef r;
        r.trial = trial.id;
        r.face = i;
        r.feature = f;
        r.label = trial.faces.labels[std::size_t(i)].at(std::size_t(f));
        r.fix_block = fix_block;
        r.act_block = act_block;
        s.samples.push_back(r);
        if (opt.augment && r.label) {
          for (std::uint8_t fl : {kFlipFixation, kFlipActivation, kFlipBoth}) {
            r.flips = fl;
            s.samples.push_back(r);
          }
        }
      }
    }
  }
  return s;
}

void write_sample_cache(const std::filesystem::path& dir, const SampleSet& s) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "samples.bin", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "samples.bin").string());
  const std::uint32_t header[3] = {std::uint32_t(s.bins), std::uint32_t(s.resolution), std::uint32_t(s.features)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  const std::size_t block = std::size_t(s.bins) * s.plane();
  std::vector<float> fix(block), act(s.plane()), act_rep(block);
  Json index = Json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.maps(i, fix, act);
    for (int b = 0; b < s.bins; ++b) std::copy(act.begin(), act.end(), act_rep.begin() + std::ptrdiff_t(b) * std::ptrdiff_t(s.plane()));
    const char label = char(s.samples[i].label);
    out.write(&label, 1);
    out.write(reinterpret_cast<const char*>(fix.data()), std::streamsize(block * sizeof(float)));
    out.write(reinterpret_cast<const char*>(act_rep.data()), std::streamsize(block * sizeof(float)));
    const auto& r = s.samples[i];
    index.push_back({{"trial", r.trial}, {"face", r.face}, {"feature", r.feature}, {"flips", r.flips}});
  }
  if (!out) throw std::runtime_error("short write to " + (dir / "samples.bin").string());
  std::ofstream idx(dir / "index.json");
  idx << Json{{"bins", s.bins}, {"resolution", s.resolution}, {"features", s.features}, {"samples", index}}.dump()
      << "\n";
}

SampleSet read_sample_cache(const std::filesystem::path& dir) {
  std::ifstream in(dir / "samples.bin", std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + (dir / "samples.bin").string());
  std::ifstream idx_in(dir / "index.json");
  const Json index = Json::parse(idx_in);
  std::uint32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  SampleSet s;
  s.bins = int(header[0]);
  s.resolution = int(header[1]);
  s.features = int(header[2]);
  const std::size_t block = std::size_t(s.bins) * s.plane();
  std::vector<float> act_rep(block);
  for (const Json& entry : index.at("samples")) {
    char label = 0;
    in.read(&label, 1);
    SampleRef r;
    r.trial = entry.at("trial").get<int>();
    r.face = entry.at("face").get<int>();
    r.feature = entry.at("feature").get<int>();
    r.label = std::uint8_t(label);
    r.fix_block = s.fix_pool.size();
    r.act_block = s.act_pool.size();
    s.fix_pool.resize(s.fix_pool.size() + block);
    in.read(reinterpret_cast<char*>(s.fix_pool.data() + r.fix_block), std::streamsize(block * sizeof(float)));
    in.read(reinterpret_cast<char*>(act_rep.data()), std::streamsize(block * sizeof(float)));
    if (!in) throw std::runtime_error((dir / "samples.bin").string() + " is shorter than its index");
    for (int b = 1; b < s.bins; ++b)
      if (!std::equal(act_rep.begin(), act_rep.begin() + std::ptrdiff_t(s.plane()),
                      act_rep.begin() + std::ptrdiff_t(b) * std::ptrdiff_t(s.plane()))) {
        throw ConfigError("sample cache: activation map differs between bins");
      }
    s.act_pool.insert(s.act_pool.end(), act_rep.begin(), act_rep.begin() + std::ptrdiff_t(s.plane()));
    s.samples.push_back(r);
  }
  return s;
}

namespace {

double mean_loss(Scorer& m, const SampleSet& s, std::size_t limit) {
  const std::size_t n = std::min(s.size(), limit);
  double total = 0.0;
  std::vector<int> idx;
  for (std::size_t start = 0; start < n; start += 128) {
    const std::size_t end = std::min(n, start + 128);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), int(start));
    const auto l = bce_with_logits(m.forward(s.batch(idx), Mode::kInfer), s.labels(idx));
    total += l.loss * double(idx.size());
  }
  return total / double(n);
}

}  // namespace

TrainHistory train_scorer(Scorer& m, const SampleSet& train, const SampleSet& val,
                          const ScorerTrainOptions& opt) {
  if (train.size() == 0 || val.size() == 0) throw ConfigError("train_scorer: empty sample set");
  if (train.bins != m.config().bins || val.bins != m.config().bins) {
    throw ConfigError("train_scorer: samples have " + std::to_string(train.bins) + " bins, scorer expects " +
                      std::to_string(m.config().bins));
  }
  using Clock = std::chrono::steady_clock;
  TrainHistory h;
  Adam adam(m.parameters(), opt.adam);
  Rng rng(opt.seed);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  auto record = [&](const EpochLog& log) {
    if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
      throw TrainingDiverged("scorer: non-finite loss at epoch " + std::to_string(log.epoch));
    }
    h.epochs.push_back(log);
    if (opt.on_epoch) opt.on_epoch(log);
  };

  auto t0 = Clock::now();
  EpochLog init;
  init.train_loss = mean_loss(m, train, 2048);
  init.val_loss = mean_loss(m, val, val.size());
  init.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  record(init);
  h.best_val = init.val_loss;
  std::vector<Tensor> best = snapshot(m);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    t0 = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(opt.batch_size));
      if (end - start < 2) break;
      std::span<const int> idx(order.data() + start, end - start);
      adam.zero_grad();
      const auto loss = bce_with_logits(m.forward(train.batch(idx), Mode::kTrain), train.labels(idx));
      if (!std::isfinite(loss.loss)) {
        throw TrainingDiverged("scorer: non-finite training loss at epoch " + std::to_string(epoch));
      }
      m.backward(loss.grad);
      try {
        adam.step();
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged(std::string("scorer: ") + e.what() + " at epoch " + std::to_string(epoch));
      }
      sum += loss.loss;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = sum / std::max(1, batches);
    log.val_loss = mean_loss(m, val, val.size());
    log.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    record(log);
    if (log.val_loss < h.best_val) {
      h.best_val = log.val_loss;
      h.best_epoch = epoch;
      best = snapshot(m);
    }
  }
  restore(m, best);
  return h;
}

ScoreOutput score_samples(Scorer& m, const SampleSet& s, int batch_size) {
  ScoreOutput out;
  out.probability.resize(s.size());
  const int b = m.config().bins;
  if (m.config().attention) out.attention = Tensor({int(s.size()), b});
  std::vector<int> idx;
  for (std::size_t start = 0; start < s.size(); start += std::size_t(batch_size)) {
    const std::size_t end = std::min(s.size(), start + std::size_t(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), int(start));
    const Tensor logits = m.forward(s.batch(idx), Mode::kInfer);
    for (std::size_t i = 0; i < idx.size(); ++i) out.probability[start + i] = sigmoid(logits[i]);
    if (m.config().attention) {
      const Tensor& a = m.attention();
      std::copy(a.values().begin(), a.values().end(), out.attention.data() + start * std::size_t(b));
    }
  }
  return out;
}

double mean_bce(std::span<const float> p, const SampleSet& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double q = std::clamp(double(p[i]), 1e-12, 1.0 - 1e-12);
    total -= s.samples[i].label ? std::log(q) : std::log(1.0 - q);
  }
  return total / double(s.size());
}

double accuracy_at_half(std::span<const float> p, const SampleSet& s) {
  int hit = 0;
  for (std::size_t i = 0; i < s.size(); ++i) hit += (p[i] >= 0.5f) == bool(s.samples[i].label);
  return double(hit) / double(s.size());
}

double roc_auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ConfigError("roc_auc: score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * double(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        pos_rank_sum += rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw ConfigError("roc_auc needs both classes");
  return (pos_rank_sum - double(pos) * double(pos + 1) / 2.0) / (double(pos) * double(neg));
}

}  // namespace photofit
