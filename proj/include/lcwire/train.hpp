#pragma once

#include "lcwire/dataset.hpp"
#include "lcwire/lpt.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

namespace lcwire {

struct TrainConfig {
  SampleConfig sample;
  LptConfig architecture;
  AdamConfig optimizer;
  LossWeights loss;
  int queries_per_step = 128;
  int pairs_per_step = 128;
  int epochs = 1;
  /// Consecutive passes over the same scene before moving on (new samples each time).
  int steps_per_scene = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossRow {
  std::int64_t step = 0;
  double total = 0, v_clf = 0, v_reg = 0, e_clf = 0;
};

/// Thrown when a step produced a non-finite loss or gradient. The models keep
/// the parameters of the last good step.
class TrainingAborted : public Error {
 public:
  TrainingAborted(std::int64_t step, const std::string& what)
      : Error("training aborted at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Joint training of the junction and connectivity models with one Adam
/// optimizer over both parameter sets.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  /// One optimization step on one scene; seed drives query and pair sampling.
  LossRow step(const TrainingSample& scene, std::uint64_t seed);

  /// Runs cfg.epochs passes over the scenes. on_step is called after every step.
  std::vector<LossRow> run(const std::vector<TrainingSample>& scenes,
                           const std::function<void(const LossRow&)>& on_step = {});

  std::int64_t steps() const { return step_; }
  const LptModel<float>& junction() const { return junction_; }
  const LptModel<float>& connectivity() const { return connectivity_; }
  LptModel<float>& junction() { return junction_; }
  LptModel<float>& connectivity() { return connectivity_; }
  const TrainConfig& config() const { return cfg_; }

  /// Weights plus optimizer state and step count.
  WeightsFile checkpoint() const;
  void resume(const WeightsFile& wf);

 private:
  std::vector<nn::Parameter<float>*> params();

  TrainConfig cfg_;
  LptModel<float> junction_;
  LptModel<float> connectivity_;
  Adam<float> adam_;
  std::int64_t step_ = 0;
};

/// Seed of step `step` of a run seeded with `seed`.
std::uint64_t step_seed(std::uint64_t seed, std::int64_t step);

/// Header "step,E_total,E_v-clf,E_v-reg,E_e-clf".
void write_loss_header(std::ostream& out);
void write_loss_row(std::ostream& out, const LossRow& row);

}  // namespace lcwire
