#pragma once

#include "lcwire/io.hpp"
#include "lcwire/nn/layers.hpp"
#include "lcwire/patch.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lcwire {

using nn::Matrix;

enum class ModelKind { Junction, Connectivity };

std::string_view to_string(ModelKind k);

struct LptConfig {
  std::vector<int> fc_widths{64, 64, 128, 128, 256};
  int heads = 4;
  int ff_width = 256;
  std::vector<int> head_widths{256, 128, 64, 32};
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double ln_eps = 1e-5;

  int width() const { return fc_widths.back(); }
  void validate() const;
  std::string to_json() const;
  static LptConfig from_json(const std::string& text);
};

/// Input width of each model: single-point patches and pair patches.
int input_width(ModelKind kind);

struct LossWeights {
  double lambda_v = 1.0;
  double lambda_e = 1.0;
};

/// Output of the heads for one batch. The junction model fills logits (G x 2)
/// and offsets (G x 3); the connectivity model fills logits (G x 5).
template <typename S>
struct HeadOutputs {
  Matrix<S> logits;
  Matrix<S> offsets;
};

/// Line-patch transformer with its prediction heads:
///   per-line (Linear, BN, ReLU) x 5 -> encoder over the lines of each patch
///   -> max-pool per patch -> encoder over the patches -> heads.
template <typename S>
class LptModel {
 public:
  struct Cache {
    Matrix<S> tokens;
    nn::Segments lines;
    nn::Segments patches;
    typename nn::MlpStack<S>::Cache fc;
    typename nn::EncoderLayer<S>::Cache enc_lines;
    Matrix<S> enc_lines_out;
    Eigen::MatrixXi pool_argmax;
    typename nn::EncoderLayer<S>::Cache enc_patches;
    Matrix<S> features;
    typename nn::MlpStack<S>::Cache clf, reg;
  };

  LptModel(ModelKind kind, const LptConfig& config, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  const LptConfig& config() const { return config_; }
  int input_width() const { return input_width_; }
  std::string prefix() const { return std::string(to_string(kind_)); }

  /// Eval-mode per-patch features, G x width.
  Matrix<S> features(const PatchBatch& batch) const;
  HeadOutputs<S> heads(const Matrix<S>& features) const;
  HeadOutputs<S> forward(const PatchBatch& batch) const { return heads(features(batch)); }

  /// Training-mode forward; batch statistics are used and running statistics updated.
  HeadOutputs<S> forward_train(const PatchBatch& batch, Cache& cache, bool update_stats = true);
  /// Accumulates parameter gradients. d_offsets is ignored for the connectivity model.
  void backward(const Cache& cache, const Matrix<S>& d_logits, const Matrix<S>& d_offsets);

  nn::ParameterRefs<S> refs();
  void zero_grad();

  /// Named tensors (parameters and running statistics).
  std::vector<NamedTensor> export_tensors() const;
  /// Replaces every tensor; rejects missing, extra and mis-shaped tensors.
  /// Tensors outside this model's namespace are ignored.
  void import_tensors(const std::vector<NamedTensor>& tensors);
  bool owns(const std::string& name) const;

  template <typename T>
  LptModel<T> cast() const;

 private:
  void pack(const PatchBatch& batch, Matrix<S>& tokens, nn::Segments& lines) const;

  ModelKind kind_;
  LptConfig config_;
  int input_width_;
  nn::MlpStack<S> fc_;
  nn::EncoderLayer<S> enc_lines_;
  nn::EncoderLayer<S> enc_patches_;
  nn::MlpStack<S> clf_;
  nn::MlpStack<S> reg_;  // junction model only

  template <typename T>
  friend class LptModel;
};

/// Free-function forms of the model stages.
template <typename S>
Matrix<S> lpt_forward(const LptModel<S>& model, const PatchBatch& batch) {
  return model.features(batch);
}
template <typename S>
HeadOutputs<S> junction_heads(const LptModel<S>& model, const Matrix<S>& features) {
  return model.heads(features);
}
template <typename S>
Matrix<S> connectivity_head(const LptModel<S>& model, const Matrix<S>& features) {
  return model.heads(features).logits;
}

template <typename S>
Matrix<S> softmax_rows(const Matrix<S>& logits);

// ---------------------------------------------------------------------------
// loss

template <typename S>
struct JunctionTargets {
  std::vector<int> labels;        // 1 = junction
  Matrix<S> offsets;              // G x 3, target position - patch center
  std::vector<char> regress;      // rows that enter the regression loss
};

template <typename S>
struct LossResult {
  S total = 0, v_clf = 0, v_reg = 0, e_clf = 0;
  bool empty_positive = false;
  Matrix<S> d_junction_logits, d_offsets, d_pair_logits;
};

/// E_total = E_v-clf + lambda_v * E_v-reg + lambda_e * E_e-clf, each a mean over
/// its patches; the regression term averages squared distances over the
/// masked rows only. Gradients w.r.t. the three head outputs are returned.
template <typename S>
LossResult<S> total_loss(const Matrix<S>& junction_logits, const Matrix<S>& offsets,
                         const JunctionTargets<S>& jt, const Matrix<S>& pair_logits,
                         const std::vector<int>& pair_classes, const LossWeights& w);

// ---------------------------------------------------------------------------
// optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
};

template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Clips the global gradient norm, applies one update and returns the
  /// pre-clipping norm.
  double step(std::vector<nn::Parameter<S>*> params);

  std::int64_t steps() const { return t_; }
  std::vector<NamedTensor> export_state(const std::vector<nn::Parameter<S>*>& params) const;
  void import_state(const std::vector<nn::Parameter<S>*>& params, const WeightsFile& wf);
  AdamConfig& config() { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Matrix<S>> m_, v_;
};

// ---------------------------------------------------------------------------
// weights

/// Both models saved in one archive; the metadata records the architecture.
template <typename S>
WeightsFile make_weights(const LptModel<S>& junction, const LptModel<S>& connectivity,
                         std::int64_t step = 0);

template <typename S>
void write_weights(const LptModel<S>& junction, const LptModel<S>& connectivity,
                   const std::filesystem::path& path, std::int64_t step = 0) {
  write_weights_file(make_weights(junction, connectivity, step), path);
}

struct LoadedModels {
  LptModel<float> junction;
  LptModel<float> connectivity;
  std::int64_t step = 0;
};

LptConfig config_from_weights(const WeightsFile& wf);
LoadedModels read_weights(const std::filesystem::path& path);
LoadedModels models_from_weights(const WeightsFile& wf);

extern template class LptModel<float>;
extern template class LptModel<double>;

}  // namespace lcwire
