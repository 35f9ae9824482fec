#pragma once

// Joint pretraining loop: AdamW with linear learning-rate decay, global-norm
// gradient clipping, per-step logging, checkpointing, and the leave-one-out
// ablation suite.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "quert/checkpoint.hpp"
#include "quert/model.hpp"
#include "quert/taskgen.hpp"

namespace quert {

struct TrainConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int batch_size = 16;
  int total_steps = 10000;
  int checkpoint_interval = 2000;
  std::uint64_t seed = 1;
  TaskFlags tasks;

  void validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("train config: learning rate must be > 0");
    if (!tasks.any()) throw std::invalid_argument("train config: at least one task must be enabled");
    if (batch_size < 2) throw std::invalid_argument("train config: batch size must be >= 2");
    if (total_steps < 0) throw std::invalid_argument("train config: negative step count");
  }
};

inline double lr_schedule(double lr0, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0) return 0.0;
  double f = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * (f > 0.0 ? f : 0.0);
}

template <class Real>
class AdamW {
 public:
  AdamW(EncoderModel<Real>& model, const TrainConfig& cfg) : model_(&model), cfg_(cfg) {
    m_.resize(model.params.size());
    v_.resize(model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      m_[i].assign(model.params[i]->value.v.size(), Real(0));
      v_[i].assign(model.params[i]->value.v.size(), Real(0));
    }
  }

  // `step` counts completed steps before this call (first call: step = 0).
  // Parameters of disabled tasks are skipped entirely.
  void step(std::uint64_t step_index, const TaskFlags& flags) {
    double lr = lr_schedule(cfg_.learning_rate, step_index, cfg_.total_steps);
    double t = static_cast<double>(step_index + 1);
    double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t);

    // Global-norm clip over enabled parameters.
    double sq = 0.0;
    for (std::size_t i = 0; i < model_->params.size(); ++i) {
      if (!flags.enabled(model_->owner[i])) continue;
      for (Real g : model_->params[i]->grad.v) {
        double gd = static_cast<double>(g);
        if (!std::isfinite(gd))
          throw std::runtime_error("optimizer_step: non-finite gradient in parameter '" +
                                   model_->params[i]->name + "'");
        sq += gd * gd;
      }
    }
    double norm = std::sqrt(sq);
    double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

    for (std::size_t i = 0; i < model_->params.size(); ++i) {
      if (!flags.enabled(model_->owner[i])) continue;
      auto& p = *model_->params[i];
      for (std::size_t k = 0; k < p.value.v.size(); ++k) {
        double g = static_cast<double>(p.grad.v[k]) * clip;
        double m = cfg_.beta1 * static_cast<double>(m_[i][k]) + (1.0 - cfg_.beta1) * g;
        double v = cfg_.beta2 * static_cast<double>(v_[i][k]) + (1.0 - cfg_.beta2) * g * g;
        m_[i][k] = static_cast<Real>(m);
        v_[i][k] = static_cast<Real>(v);
        double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_eps);
        double x = static_cast<double>(p.value.v[k]);
        x -= lr * (update + cfg_.weight_decay * x);
        p.value.v[k] = static_cast<Real>(x);
      }
    }
  }

  std::vector<std::vector<float>> export_m() const { return to_float(m_); }
  std::vector<std::vector<float>> export_v() const { return to_float(v_); }
  void import_state(const std::vector<std::vector<float>>& m,
                    const std::vector<std::vector<float>>& v) {
    for (std::size_t i = 0; i < m_.size(); ++i) {
      if (m[i].size() != m_[i].size()) throw std::runtime_error("AdamW: moment size mismatch");
      for (std::size_t k = 0; k < m_[i].size(); ++k) {
        m_[i][k] = static_cast<Real>(m[i][k]);
        v_[i][k] = static_cast<Real>(v[i][k]);
      }
    }
  }

 private:
  static std::vector<std::vector<float>> to_float(const std::vector<std::vector<Real>>& src) {
    std::vector<std::vector<float>> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i)
      out[i].assign(src[i].begin(), src[i].end());
    return out;
  }

  EncoderModel<Real>* model_;
  TrainConfig cfg_;
  std::vector<std::vector<Real>> m_, v_;
};

struct StepRecord {
  std::uint64_t step = 0;
  double geo_mp = 0, geo_cp = 0, ucbl = 0, ptop = 0, total = 0;
  double lr = 0;
  double wall_ms = 0;
};

struct TrainLog {
  std::vector<StepRecord> records;

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write train log: " + path);
    for (const auto& r : records) {
      nlohmann::json j{{"step", r.step},   {"geo_mp", r.geo_mp}, {"geo_cp", r.geo_cp},
                       {"ucbl", r.ucbl},   {"ptop", r.ptop},     {"total", r.total},
                       {"lr", r.lr},       {"wall_ms", r.wall_ms}};
      out << j.dump() << '\n';
    }
  }
};

struct TrainResult {
  TrainLog log;
  std::string final_checkpoint;
};

// Full training run. Checkpoints carry optimizer and data-stream state, so a
// run resumed from any of them reproduces the remaining log exactly.
template <class Real>
TrainResult train(EncoderModel<Real>& model, const std::vector<QueryClickPair>& pairs,
                  const Gazetteer& gaz, const Vocab& vocab, const TrainConfig& tcfg,
                  const TaskGenConfig& gcfg, const std::string& out_dir,
                  const std::string& tag = "model", const TrainState* resume = nullptr) {
  tcfg.validate();
  RngStream rng(resume ? resume->rng_seed : tcfg.seed);
  ExampleStream stream(pairs, gaz, vocab, gcfg, rng.derive(1));
  AdamW<Real> opt(model, tcfg);
  std::uint64_t start_step = 0;
  if (resume) {
    rng.seek(resume->rng_position);
    stream.restore(resume->stream_cursor, resume->stream_rng_position);
    opt.import_state(resume->adam_m, resume->adam_v);
    start_step = resume->step;
  }

  TrainResult result;
  auto save_state = [&](const std::string& path, std::uint64_t step) {
    TrainState st;
    st.adam_m = opt.export_m();
    st.adam_v = opt.export_v();
    st.step = step;
    st.total_steps = tcfg.total_steps;
    st.rng_seed = tcfg.seed;
    st.rng_position = rng.position();
    st.stream_cursor = stream.cursor();
    st.stream_rng_position = stream.rng_position();
    save_checkpoint(model, path, &st);
  };

  if (tcfg.total_steps == 0 || start_step >= static_cast<std::uint64_t>(tcfg.total_steps)) {
    result.final_checkpoint = out_dir + "/" + tag + "_final.ckpt";
    save_state(result.final_checkpoint, start_step);
    return result;
  }

  for (std::uint64_t step = start_step; step < static_cast<std::uint64_t>(tcfg.total_steps); ++step) {
    auto t0 = std::chrono::steady_clock::now();
    auto batch = stream.next_batch(tcfg.batch_size);
    Tape<Real> tape;
    model.zero_grads();
    BatchLosses<Real> losses;
    try {
      losses = forward_batch(tape, model, batch, tcfg.tasks, true, &rng);
    } catch (const std::exception&) {
      save_state(out_dir + "/" + tag + "_emergency.ckpt", step);
      throw;
    }
    double total = static_cast<double>(tape.value(losses.total).v[0]);
    if (!std::isfinite(total)) {
      save_state(out_dir + "/" + tag + "_emergency.ckpt", step);
      throw std::runtime_error("train: non-finite total loss at step " + std::to_string(step));
    }
    tape.backward(losses.total);
    opt.step(step, tcfg.tasks);

    StepRecord rec;
    rec.step = step + 1;
    rec.geo_mp = static_cast<double>(tape.value(losses.geo_mp).v[0]);
    rec.geo_cp = static_cast<double>(tape.value(losses.geo_cp).v[0]);
    rec.ucbl = static_cast<double>(tape.value(losses.ucbl).v[0]);
    rec.ptop = static_cast<double>(tape.value(losses.ptop).v[0]);
    rec.total = total;
    rec.lr = lr_schedule(tcfg.learning_rate, step, tcfg.total_steps);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    result.log.records.push_back(rec);

    std::uint64_t done = step + 1;
    if (tcfg.checkpoint_interval > 0 && done % tcfg.checkpoint_interval == 0 &&
        done < static_cast<std::uint64_t>(tcfg.total_steps))
      save_state(out_dir + "/" + tag + "_step" + std::to_string(done) + ".ckpt", done);
  }
  result.final_checkpoint = out_dir + "/" + tag + "_final.ckpt";
  save_state(result.final_checkpoint, tcfg.total_steps);
  return result;
}

struct AblationRun {
  std::string disabled_task;
  std::string checkpoint;
};

// Trains four leave-one-out models with identical seeds and step counts and
// writes a manifest mapping checkpoint -> disabled task.
template <class Real>
std::vector<AblationRun> ablation_suite(const EncoderConfig& ecfg,
                                        const std::vector<QueryClickPair>& pairs,
                                        const Gazetteer& gaz, const Vocab& vocab,
                                        const TrainConfig& base, const TaskGenConfig& gcfg,
                                        const std::string& out_dir) {
  base.validate();
  std::vector<AblationRun> runs;
  const char* names[4] = {"geo_mp", "geo_cp", "ucbl", "ptop"};
  for (int drop = 0; drop < 4; ++drop) {
    TrainConfig cfg = base;
    cfg.tasks = TaskFlags{};
    if (drop == 0) cfg.tasks.geo_mp = false;
    if (drop == 1) cfg.tasks.geo_cp = false;
    if (drop == 2) cfg.tasks.ucbl = false;
    if (drop == 3) cfg.tasks.ptop = false;
    EncoderModel<Real> model(ecfg, RngStream(base.seed));
    std::string tag = std::string("ablate_no_") + names[drop];
    auto res = train(model, pairs, gaz, vocab, cfg, gcfg, out_dir, tag);
    res.log.save(out_dir + "/" + tag + "_log.jsonl");
    runs.push_back({names[drop], res.final_checkpoint});
  }
  std::ofstream manifest(out_dir + "/ablation_manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write ablation manifest");
  for (const auto& r : runs)
    manifest << nlohmann::json{{"disabled_task", r.disabled_task}, {"checkpoint", r.checkpoint}}
                    .dump()
             << '\n';
  return runs;
}

inline std::vector<AblationRun> load_ablation_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ablation manifest: " + path);
  std::vector<AblationRun> runs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    runs.push_back({j.at("disabled_task"), j.at("checkpoint")});
  }
  return runs;
}

}  // namespace quert
