// Copyright 2026 The amt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AMT_TRAINER_HPP
#define AMT_TRAINER_HPP

#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>
#include <unordered_map>

#include "amt/checkpoint.hpp"
#include "amt/loss.hpp"
#include "amt/model.hpp"
#include "amt/optim.hpp"
#include "amt/rolls.hpp"

namespace amt {

struct TrainConfig {
  double learning_rate = 6e-5;
  std::size_t batch_size = 16;
  std::size_t max_steps = 160000;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t validate_every = 500;  // 0: never
  bool onset_loss = true;
  bool frame_loss = true;
  double grad_clip = 0.0;
  std::size_t threads = 2;
  double bn_momentum = 0.1;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"learning_rate", c.learning_rate},
                        {"batch_size", c.batch_size},
                        {"max_steps", c.max_steps},
                        {"seed", c.seed},
                        {"checkpoint_every", c.checkpoint_every},
                        {"validate_every", c.validate_every},
                        {"onset_loss", c.onset_loss},
                        {"frame_loss", c.frame_loss},
                        {"grad_clip", c.grad_clip},
                        {"threads", c.threads},
                        {"bn_momentum", c.bn_momentum}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate");
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size");
  if (j.contains("max_steps")) c.max_steps = j.at("max_steps");
  if (j.contains("seed")) c.seed = j.at("seed");
  if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every");
  if (j.contains("validate_every")) c.validate_every = j.at("validate_every");
  if (j.contains("onset_loss")) c.onset_loss = j.at("onset_loss");
  if (j.contains("frame_loss")) c.frame_loss = j.at("frame_loss");
  if (j.contains("grad_clip")) c.grad_clip = j.at("grad_clip");
  if (j.contains("threads")) c.threads = j.at("threads");
  if (j.contains("bn_momentum")) c.bn_momentum = j.at("bn_momentum");
  if (c.learning_rate <= 0.0 && c.learning_rate != 0.0)
    throw config_error("learning_rate must be positive");
  if (c.batch_size < 1) throw config_error("batch_size must be >= 1");
  return c;
}

/// Raised when a step produces a non-finite loss. Carries the offending
/// batch element indices for the diagnostic dump.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::uint64_t step, std::vector<std::size_t> ids)
      : std::runtime_error("non-finite loss at step " + std::to_string(step)),
        step_(step),
        batch_ids_(std::move(ids)) {}
  std::uint64_t step() const { return step_; }
  const std::vector<std::size_t>& batch_ids() const { return batch_ids_; }

 private:
  std::uint64_t step_;
  std::vector<std::size_t> batch_ids_;
};

/// Single optimization stream over one model. Batch members are processed on
/// independent tapes (possibly across threads); gradients and batch-norm
/// statistics merge in batch order, so a step is bit-reproducible regardless
/// of thread scheduling.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg)
      : model_(model),
        cfg_(cfg),
        opt_(model.params(),
             Adam::Config{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.grad_clip}),
        sampler_(cfg.seed) {
    if (cfg_.batch_size < 1) throw config_error("batch_size must be >= 1");
    if (cfg_.learning_rate < 0.0)
      throw config_error("learning_rate must be >= 0");
  }

  Model& model() { return model_; }
  Adam& optimizer() { return opt_; }
  Rng& sampler() { return sampler_; }
  const TrainConfig& config() const { return cfg_; }
  std::uint64_t steps_done() const { return steps_done_; }

  /// One Adam update over a batch of windows. Returns the averaged loss; the
  /// reported total is onset_term + frame_term by definition.
  LossValue train_step(const std::vector<const TrainingWindow*>& batch,
                       const std::vector<std::size_t>* batch_ids = nullptr) {
    require(!batch.empty(), "train_step: empty batch");
    const std::size_t B = batch.size();
    struct SampleOut {
      std::unique_ptr<Tape> tape;
      double onset = 0.0;
      double frame = 0.0;
    };
    std::vector<SampleOut> outs(B);
    const double inv = 1.0 / static_cast<double>(B);
    const bool use_onset = cfg_.onset_loss && model_.has_onset_head();
    const bool use_frame = cfg_.frame_loss;

    auto worker = [&](std::size_t first, std::size_t stride) {
      for (std::size_t i = first; i < B; i += stride) {
        auto tape = std::make_unique<Tape>();
        Model::Forward f = model_.forward(*tape, batch[i]->spec, true);
        Var loss;
        if (use_onset) {
          Var l = bce_mean(f.onset, batch[i]->onset_roll);
          outs[i].onset = l.value().item();
          loss = l;
        }
        if (use_frame) {
          Var l = bce_mean(f.frame, batch[i]->frame_roll);
          outs[i].frame = l.value().item();
          loss = loss.valid() ? add(loss, l) : l;
        }
        if (loss.valid()) tape->backward(loss, inv);
        outs[i].tape = std::move(tape);
      }
    };
    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min(cfg_.threads, B));
    if (n_threads == 1) {
      worker(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < n_threads; ++w)
        pool.emplace_back(worker, w, n_threads);
      for (auto& th : pool) th.join();
    }

    LossValue lv;
    for (std::size_t i = 0; i < B; ++i) {
      lv.onset_term += outs[i].onset * inv;
      lv.frame_term += outs[i].frame * inv;
    }
    lv.total = lv.onset_term + lv.frame_term;
    if (!std::isfinite(lv.total)) {
      std::vector<std::size_t> ids =
          batch_ids ? *batch_ids : std::vector<std::size_t>{};
      throw TrainingDiverged(steps_done_ + 1, std::move(ids));
    }

    model_.params().zero_grad();
    for (std::size_t i = 0; i < B; ++i) outs[i].tape->apply_param_grads();
    merge_batch_stats(outs);
    opt_.step();
    ++steps_done_;
    if (!model_.params().all_finite())
      throw TrainingDiverged(steps_done_,
                             batch_ids ? *batch_ids : std::vector<std::size_t>{});
    return lv;
  }

  /// Evaluation-mode mean loss over a window set (no parameter updates).
  LossValue eval_loss(const std::vector<TrainingWindow>& windows) {
    require(!windows.empty(), "eval_loss: empty window set");
    LossValue lv;
    const double inv = 1.0 / static_cast<double>(windows.size());
    for (const TrainingWindow& w : windows) {
      Tape tape;
      Model::Forward f = model_.forward(tape, w.spec, false);
      if (cfg_.onset_loss && model_.has_onset_head())
        lv.onset_term += bce_mean(f.onset, w.onset_roll).value().item() * inv;
      if (cfg_.frame_loss)
        lv.frame_term += bce_mean(f.frame, w.frame_roll).value().item() * inv;
    }
    lv.total = lv.onset_term + lv.frame_term;
    return lv;
  }

  /// Restores parameters, optimizer moments, sampler state, and step count.
  void resume(const std::string& checkpoint_path) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_path, model_, &opt_);
    if (loaded.sampler_state) sampler_.set_state(*loaded.sampler_state);
    steps_done_ = loaded.step;
  }

  struct RunResult {
    std::string final_checkpoint;
    LossValue first_loss;
    LossValue last_loss;
    std::uint64_t steps = 0;
  };

  /// Full training run: per-step loss CSV, periodic validation and
  /// checkpoints, config snapshot, final metrics JSON. Appends to existing
  /// logs when resuming inside the same run directory.
  RunResult run(const std::vector<TrainingWindow>& train,
                const std::vector<TrainingWindow>& val,
                const std::string& run_dir) {
    if (train.empty()) throw config_error("train_run: empty train split");
    namespace fs = std::filesystem;
    fs::create_directories(run_dir);
    {
      nlohmann::json snapshot{{"model", to_json(model_.config())},
                              {"train", to_json(cfg_)}};
      std::ofstream os(run_dir + "/config.json");
      os << snapshot.dump(2) << "\n";
    }
    const bool fresh = steps_done_ == 0;
    std::ofstream loss_csv(run_dir + "/loss.csv",
                           fresh ? std::ios::trunc : std::ios::app);
    if (fresh) loss_csv << "step,total,onset,frame\n";
    std::ofstream val_csv;
    if (cfg_.validate_every > 0 && !val.empty()) {
      val_csv.open(run_dir + "/val.csv", fresh ? std::ios::trunc : std::ios::app);
      if (fresh) val_csv << "step,total,onset,frame\n";
    }

    RunResult res;
    bool first = true;
    while (steps_done_ < cfg_.max_steps) {
      std::vector<const TrainingWindow*> batch(cfg_.batch_size);
      std::vector<std::size_t> ids(cfg_.batch_size);
      for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
        ids[b] = static_cast<std::size_t>(sampler_.uniform_int(
            0, static_cast<std::int64_t>(train.size()) - 1));
        batch[b] = &train[ids[b]];
      }
      LossValue lv;
      try {
        lv = train_step(batch, &ids);
      } catch (const TrainingDiverged& e) {
        nlohmann::json dump{{"step", e.step()}, {"batch_ids", e.batch_ids()}};
        std::ofstream os(run_dir + "/diverged.json");
        os << dump.dump(2) << "\n";
        throw;
      }
      const std::uint64_t step = steps_done_;
      loss_csv << step << ',' << lv.total << ',' << lv.onset_term << ','
               << lv.frame_term << '\n';
      if (first) {
        res.first_loss = lv;
        first = false;
      }
      res.last_loss = lv;
      if (val_csv.is_open() && step % cfg_.validate_every == 0) {
        LossValue v = eval_loss(val);
        val_csv << step << ',' << v.total << ',' << v.onset_term << ','
                << v.frame_term << '\n';
        val_csv.flush();
      }
      if (cfg_.checkpoint_every > 0 && step % cfg_.checkpoint_every == 0 &&
          step < cfg_.max_steps)
        save(run_dir + "/ckpt_" + std::to_string(step) + ".amtc");
    }
    res.steps = steps_done_;
    res.final_checkpoint = run_dir + "/final.amtc";
    save(res.final_checkpoint);
    {
      nlohmann::json metrics{
          {"steps", res.steps},
          {"first_loss", res.first_loss.total},
          {"final_loss", res.last_loss.total},
          {"final_onset_term", res.last_loss.onset_term},
          {"final_frame_term", res.last_loss.frame_term},
          {"config_hash", config_hash(model_.config())}};
      std::ofstream os(run_dir + "/metrics.json");
      os << metrics.dump(2) << "\n";
    }
    return res;
  }

  void save(const std::string& path) const {
    CheckpointExtras extras;
    extras.optimizer = &opt_;
    extras.sampler_state = sampler_.state();
    extras.step = steps_done_;
    save_checkpoint(path, model_, extras);
  }

 private:
  template <typename SampleVec>
  void merge_batch_stats(const SampleVec& outs) {
    struct Acc {
      Tensor mean_sum, var_sum;
      std::size_t n = 0;
      Parameter* var_buf = nullptr;
    };
    std::unordered_map<Parameter*, Acc> accs;
    for (const auto& o : outs) {
      for (const BatchStat& st : o.tape->batch_stats) {
        Acc& a = accs[st.mean_buf];
        if (a.n == 0) {
          a.mean_sum = Tensor(st.mean.shape());
          a.var_sum = Tensor(st.var.shape());
          a.var_buf = st.var_buf;
        }
        for (std::size_t i = 0; i < st.mean.size(); ++i) {
          a.mean_sum[i] += st.mean[i];
          a.var_sum[i] += st.var[i];
        }
        ++a.n;
      }
    }
    const double m = cfg_.bn_momentum;
    for (auto& [mean_buf, a] : accs) {
      const double inv = 1.0 / static_cast<double>(a.n);
      for (std::size_t i = 0; i < mean_buf->value.size(); ++i) {
        mean_buf->value[i] =
            (1.0 - m) * mean_buf->value[i] + m * a.mean_sum[i] * inv;
        a.var_buf->value[i] =
            (1.0 - m) * a.var_buf->value[i] + m * a.var_sum[i] * inv;
      }
    }
  }

  Model& model_;
  TrainConfig cfg_;
  Adam opt_;
  Rng sampler_;
  std::uint64_t steps_done_ = 0;
};

}  // namespace amt

#endif  // AMT_TRAINER_HPP
