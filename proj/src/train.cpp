#include "lcwire/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lcwire {

void TrainConfig::validate() const {
  sample.validate();
  architecture.validate();
  if (!(optimizer.lr >= 0) || !std::isfinite(optimizer.lr)) throw Error("lr must be finite and non-negative");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1)) throw Error("beta1 must lie in [0, 1)");
  if (!(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) throw Error("beta2 must lie in [0, 1)");
  if (!(optimizer.clip_norm >= 0)) throw Error("clip_norm must be non-negative");
  if (!(loss.lambda_v >= 0) || !(loss.lambda_e >= 0) || !std::isfinite(loss.lambda_v) ||
      !std::isfinite(loss.lambda_e))
    throw Error("loss weights must be finite and non-negative");
  if (queries_per_step < 1 || pairs_per_step < 1) throw Error("batch sizes must be at least 1");
  if (epochs < 0) throw Error("epochs must be non-negative");
  if (steps_per_scene < 1) throw Error("steps_per_scene must be at least 1");
}

std::uint64_t step_seed(std::uint64_t seed, std::int64_t step) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(step + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      junction_(ModelKind::Junction, cfg.architecture, step_seed(cfg.seed, -2)),
      connectivity_(ModelKind::Connectivity, cfg.architecture, step_seed(cfg.seed, -3)),
      adam_(cfg.optimizer) {
  cfg_.validate();
}

std::vector<nn::Parameter<float>*> Trainer::params() {
  auto a = junction_.refs().params;
  auto b = connectivity_.refs().params;
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

LossRow Trainer::step(const TrainingSample& scene, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::uint64_t query_seed = rng();
  const std::uint64_t pair_seed = rng();
  const JunctionQueries jq = sample_training_queries(scene, cfg_.queries_per_step, cfg_.sample.junction_fraction,
                                                     query_seed, cfg_.sample.patch, cfg_.sample.regress_radius);
  const PairQueries pq = sample_training_pairs(scene, cfg_.pairs_per_step, pair_seed, cfg_.sample);
  const PatchBatch jb = PatchBatch::from_patches(jq.patches);
  const PatchBatch pb = PatchBatch::from_patches(pq.patches);

  JunctionTargets<float> targets;
  targets.labels = jq.labels;
  targets.offsets = jq.offsets.cast<float>();
  targets.regress = jq.regress;

  LossRow row;
  row.step = step_;
  try {
    junction_.zero_grad();
    connectivity_.zero_grad();
    typename LptModel<float>::Cache jc, cc;
    const HeadOutputs<float> jo = junction_.forward_train(jb, jc);
    const HeadOutputs<float> co = connectivity_.forward_train(pb, cc);
    const LossResult<float> loss = total_loss(jo.logits, jo.offsets, targets, co.logits, pq.classes, cfg_.loss);
    row.total = loss.total;
    row.v_clf = loss.v_clf;
    row.v_reg = loss.v_reg;
    row.e_clf = loss.e_clf;
    if (!std::isfinite(row.total)) throw TrainingAborted(step_, "non-finite loss");
    junction_.backward(jc, loss.d_junction_logits, loss.d_offsets);
    connectivity_.backward(cc, loss.d_pair_logits, Matrix<float>());
  } catch (const nn::NonFiniteError& e) {
    throw TrainingAborted(step_, e.what());
  }

  auto ps = params();
  double sq = 0;
  for (auto* p : ps) sq += static_cast<double>(p->grad.squaredNorm());
  if (!std::isfinite(sq)) throw TrainingAborted(step_, "non-finite gradient");
  adam_.step(ps);
  ++step_;
  return row;
}

std::vector<LossRow> Trainer::run(const std::vector<TrainingSample>& scenes,
                                  const std::function<void(const LossRow&)>& on_step) {
  std::vector<LossRow> curve;
  if (scenes.empty()) return curve;
  const std::int64_t per_epoch = static_cast<std::int64_t>(scenes.size()) * cfg_.steps_per_scene;
  const std::int64_t total = per_epoch * cfg_.epochs;
  std::vector<std::size_t> order;
  std::int64_t order_epoch = -1;
  while (step_ < total) {
    const std::int64_t epoch = step_ / per_epoch;
    if (epoch != order_epoch) {
      order.resize(scenes.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(step_seed(cfg_.seed, -100 - epoch));
      std::shuffle(order.begin(), order.end(), rng);
      order_epoch = epoch;
    }
    const std::size_t slot = static_cast<std::size_t>((step_ % per_epoch) / cfg_.steps_per_scene);
    const LossRow row = step(scenes[order[slot]], step_seed(cfg_.seed, step_));
    curve.push_back(row);
    if (on_step) on_step(row);
  }
  return curve;
}

WeightsFile Trainer::checkpoint() const {
  WeightsFile wf = make_weights(junction_, connectivity_, step_);
  auto self = const_cast<Trainer*>(this);
  for (auto& t : adam_.export_state(self->params())) wf.tensors.push_back(std::move(t));
  return wf;
}

void Trainer::resume(const WeightsFile& wf) {
  const LptConfig arch = config_from_weights(wf);
  if (arch.to_json() != cfg_.architecture.to_json())
    throw Error("checkpoint architecture does not match the configured architecture");
  junction_.import_tensors(wf.tensors);
  connectivity_.import_tensors(wf.tensors);
  adam_ = Adam<float>(cfg_.optimizer);
  adam_.import_state(params(), wf);
  try {
    const auto meta = nlohmann::json::parse(wf.metadata);
    step_ = meta.value("step", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(WeightsError::Kind::Format, std::string("invalid checkpoint metadata: ") + e.what());
  }
}

void write_loss_header(std::ostream& out) { out << "step,E_total,E_v-clf,E_v-reg,E_e-clf\n"; }

void write_loss_row(std::ostream& out, const LossRow& r) {
  out << r.step << ',' << format_real(r.total) << ',' << format_real(r.v_clf) << ',' << format_real(r.v_reg)
      << ',' << format_real(r.e_clf) << '\n';
}

}  // namespace lcwire
