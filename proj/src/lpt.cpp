#include "lcwire/lpt.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <set>

namespace lcwire {

std::string_view to_string(ModelKind k) {
  return k == ModelKind::Junction ? "junction" : "connectivity";
}

int input_width(ModelKind kind) {
  return kind == ModelKind::Junction ? kSingleFeatureWidth : kPairFeatureWidth;
}

void LptConfig::validate() const {
  if (fc_widths.empty()) throw Error("model config: fc_widths must not be empty");
  for (int w : fc_widths)
    if (w < 1 || w > 4096) throw Error("model config: fc widths must lie in [1, 4096]");
  for (int w : head_widths)
    if (w < 1 || w > 4096) throw Error("model config: head widths must lie in [1, 4096]");
  if (heads < 1 || width() % heads != 0) throw Error("model config: width must be divisible by heads");
  if (ff_width < 1 || ff_width > 8192) throw Error("model config: ff_width must lie in [1, 8192]");
  if (!(bn_momentum > 0 && bn_momentum <= 1)) throw Error("model config: bn_momentum must lie in (0, 1]");
  if (!(bn_eps > 0) || !(ln_eps > 0)) throw Error("model config: normalization eps must be positive");
}

std::string LptConfig::to_json() const {
  nlohmann::json j{{"fc_widths", fc_widths}, {"heads", heads},     {"ff_width", ff_width},
                   {"head_widths", head_widths}, {"bn_momentum", bn_momentum}, {"bn_eps", bn_eps},
                   {"ln_eps", ln_eps}};
  return j.dump();
}

LptConfig LptConfig::from_json(const std::string& text) {
  LptConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.fc_widths = j.at("fc_widths").get<std::vector<int>>();
    c.heads = j.at("heads").get<int>();
    c.ff_width = j.at("ff_width").get<int>();
    c.head_widths = j.at("head_widths").get<std::vector<int>>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_eps = j.at("bn_eps").get<double>();
    c.ln_eps = j.at("ln_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(WeightsError::Kind::Format, std::string("invalid model metadata: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// model

template <typename S>
LptModel<S>::LptModel(ModelKind kind, const LptConfig& config, std::uint64_t seed)
    : kind_(kind), config_(config), input_width_(lcwire::input_width(kind)) {
  config_.validate();
  const std::string p = prefix();
  const int w = config_.width();
  std::vector<int> fc_hidden = config_.fc_widths;
  fc_ = nn::MlpStack<S>(p + ".fc", input_width_, fc_hidden, 0, config_.bn_momentum, config_.bn_eps);
  enc_lines_ = nn::EncoderLayer<S>(p + ".enc_lines", w, config_.ff_width, config_.heads, config_.ln_eps);
  enc_patches_ = nn::EncoderLayer<S>(p + ".enc_patches", w, config_.ff_width, config_.heads, config_.ln_eps);
  if (kind == ModelKind::Junction) {
    clf_ = nn::MlpStack<S>("head.junction_clf", w, config_.head_widths, 2, config_.bn_momentum,
                           config_.bn_eps, "head.junction_clf");
    reg_ = nn::MlpStack<S>("head.junction_reg", w, config_.head_widths, 3, config_.bn_momentum,
                           config_.bn_eps, "head.junction_reg");
  } else {
    clf_ = nn::MlpStack<S>("head.connectivity_clf", w, config_.head_widths, 5, config_.bn_momentum,
                           config_.bn_eps, "head.connectivity_clf");
  }

  std::mt19937_64 rng(seed);
  fc_.init(rng, false);
  enc_lines_.init(rng);
  enc_patches_.init(rng);
  clf_.init(rng, true);
  if (kind == ModelKind::Junction) reg_.init(rng, true);
}

template <typename S>
void LptModel<S>::pack(const PatchBatch& batch, Matrix<S>& tokens, nn::Segments& lines) const {
  if (batch.num_patches > 0 && batch.feature_width != input_width_)
    throw Error("lpt_forward: batch feature width " + std::to_string(batch.feature_width) +
                " does not match model input width " + std::to_string(input_width_));
  Eigen::Index total = 0;
  lines.offset.clear();
  lines.length.clear();
  for (int g = 0; g < batch.num_patches; ++g) {
    lines.offset.push_back(total);
    lines.length.push_back(batch.valid[g]);
    total += batch.valid[g];
  }
  tokens.resize(total, input_width_);
  for (int g = 0; g < batch.num_patches; ++g)
    tokens.middleRows(lines.offset[g], batch.valid[g]) =
        batch.patch_rows(g).topRows(batch.valid[g]).template cast<S>();
}

template <typename S>
Matrix<S> LptModel<S>::features(const PatchBatch& batch) const {
  Matrix<S> tokens;
  nn::Segments lines;
  pack(batch, tokens, lines);
  nn::require_finite(tokens, prefix() + ".input");
  // Line-level stages are independent per patch, so they run in cache-sized chunks.
  constexpr std::size_t kChunk = 16;
  Matrix<S> pooled;
  if (lines.size() == 0) pooled = nn::segment_max_pool(enc_lines_.forward(fc_.forward(tokens), lines), lines);
  for (std::size_t s0 = 0; s0 < lines.size(); s0 += kChunk) {
    const std::size_t s1 = std::min(lines.size(), s0 + kChunk);
    nn::Segments chunk;
    const Eigen::Index first = lines.offset[s0];
    for (std::size_t s = s0; s < s1; ++s) {
      chunk.offset.push_back(lines.offset[s] - first);
      chunk.length.push_back(lines.length[s]);
    }
    const Eigen::Index rows = chunk.offset.back() + chunk.length.back();
    Matrix<S> h = fc_.forward(tokens.middleRows(first, rows));
    h = enc_lines_.forward(h, chunk);
    const Matrix<S> part = nn::segment_max_pool(h, chunk);
    if (s0 == 0) pooled.resize(static_cast<Eigen::Index>(lines.size()), part.cols());
    pooled.middleRows(static_cast<Eigen::Index>(s0), part.rows()) = part;
  }
  Matrix<S> out = enc_patches_.forward(pooled, nn::Segments::single(pooled.rows()));
  return out;
}

template <typename S>
HeadOutputs<S> LptModel<S>::heads(const Matrix<S>& features) const {
  HeadOutputs<S> out;
  out.logits = clf_.forward(features);
  if (kind_ == ModelKind::Junction) out.offsets = reg_.forward(features);
  return out;
}

template <typename S>
HeadOutputs<S> LptModel<S>::forward_train(const PatchBatch& batch, Cache& c, bool update_stats) {
  pack(batch, c.tokens, c.lines);
  nn::require_finite(c.tokens, prefix() + ".input");
  Matrix<S> h = fc_.forward_train(c.tokens, c.fc, update_stats);
  c.enc_lines_out = enc_lines_.forward(h, c.lines, &c.enc_lines);
  Matrix<S> pooled = nn::segment_max_pool(c.enc_lines_out, c.lines, &c.pool_argmax);
  c.patches = nn::Segments::single(pooled.rows());
  c.features = enc_patches_.forward(pooled, c.patches, &c.enc_patches);

  HeadOutputs<S> out;
  out.logits = clf_.forward_train(c.features, c.clf, update_stats);
  if (kind_ == ModelKind::Junction) out.offsets = reg_.forward_train(c.features, c.reg, update_stats);
  return out;
}

template <typename S>
void LptModel<S>::backward(const Cache& c, const Matrix<S>& d_logits, const Matrix<S>& d_offsets) {
  Matrix<S> df = clf_.backward(c.clf, d_logits);
  if (kind_ == ModelKind::Junction) df += reg_.backward(c.reg, d_offsets);
  const Matrix<S> dpooled = enc_patches_.backward(c.enc_patches, c.patches, df);
  const Matrix<S> dh = nn::segment_max_pool_backward<S>(c.pool_argmax, c.enc_lines_out.rows(), dpooled);
  const Matrix<S> dfc = enc_lines_.backward(c.enc_lines, c.lines, dh);
  fc_.backward(c.fc, dfc);
}

template <typename S>
nn::ParameterRefs<S> LptModel<S>::refs() {
  nn::ParameterRefs<S> r;
  fc_.collect(r);
  enc_lines_.collect(r);
  enc_patches_.collect(r);
  clf_.collect(r);
  if (kind_ == ModelKind::Junction) reg_.collect(r);
  return r;
}

template <typename S>
void LptModel<S>::zero_grad() {
  for (auto* p : refs().params) p->grad.setZero();
}

template <typename S>
bool LptModel<S>::owns(const std::string& name) const {
  auto starts = [&](const std::string& pre) { return name.rfind(pre, 0) == 0; };
  if (starts(prefix() + ".")) return true;
  if (kind_ == ModelKind::Junction) return starts("head.junction_clf.") || starts("head.junction_reg.");
  return starts("head.connectivity_clf.");
}

template <typename S>
std::vector<NamedTensor> LptModel<S>::export_tensors() const {
  auto r = const_cast<LptModel<S>*>(this)->refs();
  std::vector<NamedTensor> out;
  auto push = [&](const std::string& name, const Matrix<S>& m) {
    NamedTensor t;
    t.name = name;
    t.shape = {m.rows(), m.cols()};
    t.values.resize(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) t.values[i] = static_cast<double>(m.data()[i]);
    out.push_back(std::move(t));
  };
  for (auto* p : r.params) push(p->name, p->value);
  for (auto* b : r.buffers) push(b->name, b->value);
  return out;
}

template <typename S>
void LptModel<S>::import_tensors(const std::vector<NamedTensor>& tensors) {
  using K = WeightsError::Kind;
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors)
    if (owns(t.name)) by_name[t.name] = &t;

  auto r = refs();
  std::set<std::string> used;
  auto load = [&](const std::string& name, Matrix<S>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw WeightsError(K::Missing, "missing tensor " + name);
    const NamedTensor& t = *it->second;
    if (t.shape.size() != 2 || t.shape[0] != dst.rows() || t.shape[1] != dst.cols()) {
      std::string got;
      for (auto d : t.shape) got += (got.empty() ? "" : ",") + std::to_string(d);
      throw WeightsError(K::Shape, "tensor " + name + " has shape [" + got + "], expected [" +
                                       std::to_string(dst.rows()) + "," + std::to_string(dst.cols()) + "]");
    }
    if (static_cast<std::int64_t>(t.values.size()) != t.numel())
      throw WeightsError(K::Shape, "tensor " + name + " has the wrong number of values");
    for (Eigen::Index i = 0; i < dst.size(); ++i) dst.data()[i] = static_cast<S>(t.values[i]);
    used.insert(name);
  };
  for (auto* p : r.params) load(p->name, p->value);
  for (auto* b : r.buffers) load(b->name, b->value);
  for (const auto& [name, t] : by_name)
    if (!used.count(name)) throw WeightsError(K::Extra, "unexpected tensor " + name);
}

template <typename S>
template <typename T>
LptModel<T> LptModel<S>::cast() const {
  LptModel<T> out(kind_, config_, 0);
  out.import_tensors(export_tensors());
  return out;
}

template <typename S>
Matrix<S> softmax_rows(const Matrix<S>& logits) {
  Matrix<S> p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return p;
}

// ---------------------------------------------------------------------------
// loss

namespace {

// Mean cross-entropy over rows and its gradient w.r.t. the logits.
template <typename S>
S cross_entropy(const Matrix<S>& logits, const std::vector<int>& labels, Matrix<S>& grad) {
  const Eigen::Index n = logits.rows();
  grad = Matrix<S>::Zero(logits.rows(), logits.cols());
  if (n == 0) return S(0);
  if (static_cast<Eigen::Index>(labels.size()) != n) throw Error("total_loss: label count mismatch");
  S loss = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= logits.cols()) throw Error("total_loss: label out of range");
    const S mx = logits.row(r).maxCoeff();
    const S lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    loss += lse - logits(r, y);
    grad.row(r) = (logits.row(r).array() - lse).exp().matrix();
    grad(r, y) -= S(1);
  }
  grad /= S(n);
  return loss / S(n);
}

}  // namespace

template <typename S>
LossResult<S> total_loss(const Matrix<S>& junction_logits, const Matrix<S>& offsets,
                         const JunctionTargets<S>& jt, const Matrix<S>& pair_logits,
                         const std::vector<int>& pair_classes, const LossWeights& w) {
  if (!(w.lambda_v >= 0) || !(w.lambda_e >= 0) || !std::isfinite(w.lambda_v) || !std::isfinite(w.lambda_e))
    throw Error("total_loss: loss weights must be finite and non-negative");
  LossResult<S> r;
  r.v_clf = cross_entropy(junction_logits, jt.labels, r.d_junction_logits);
  r.e_clf = cross_entropy(pair_logits, pair_classes, r.d_pair_logits);

  r.d_offsets = Matrix<S>::Zero(offsets.rows(), offsets.cols());
  Eigen::Index count = 0;
  for (std::size_t g = 0; g < jt.regress.size(); ++g) count += jt.regress[g] ? 1 : 0;
  if (count == 0) {
    r.empty_positive = true;
  } else {
    S sum = 0;
    for (Eigen::Index g = 0; g < offsets.rows(); ++g) {
      if (!jt.regress[g]) continue;
      const auto diff = offsets.row(g) - jt.offsets.row(g);
      sum += diff.squaredNorm();
      r.d_offsets.row(g) = S(2) * diff / S(count);
    }
    r.v_reg = sum / S(count);
  }
  r.d_offsets *= S(w.lambda_v);
  r.d_pair_logits *= S(w.lambda_e);
  r.total = r.v_clf + S(w.lambda_v) * r.v_reg + S(w.lambda_e) * r.e_clf;
  return r;
}

// ---------------------------------------------------------------------------
// optimizer

template <typename S>
double Adam<S>::step(std::vector<nn::Parameter<S>*> params) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw Error("Adam: parameter list changed between steps");
  double sq = 0;
  for (auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix<S> g = params[i]->grad * S(clip);
    m_[i] = S(cfg_.beta1) * m_[i] + S(1 - cfg_.beta1) * g;
    v_[i] = S(cfg_.beta2) * v_[i] + S(1 - cfg_.beta2) * g.cwiseProduct(g);
    if (cfg_.lr == 0) continue;
    params[i]->value.array() -= S(cfg_.lr) * (m_[i].array() / S(bc1)) /
                                ((v_[i].array() / S(bc2)).sqrt() + S(cfg_.eps));
  }
  return norm;
}

template <typename S>
std::vector<NamedTensor> Adam<S>::export_state(const std::vector<nn::Parameter<S>*>& params) const {
  std::vector<NamedTensor> out;
  auto push = [&](const std::string& name, const Matrix<S>& m) {
    NamedTensor t{name, {m.rows(), m.cols()}, {}};
    for (Eigen::Index i = 0; i < m.size(); ++i) t.values.push_back(static_cast<double>(m.data()[i]));
    out.push_back(std::move(t));
  };
  if (m_.size() != params.size()) return out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    push("optim.m." + params[i]->name, m_[i]);
    push("optim.v." + params[i]->name, v_[i]);
  }
  out.push_back({"optim.t", {1, 1}, {static_cast<double>(t_)}});
  return out;
}

template <typename S>
void Adam<S>::import_state(const std::vector<nn::Parameter<S>*>& params, const WeightsFile& wf) {
  const NamedTensor* t = wf.find("optim.t");
  if (!t) return;
  m_.clear();
  v_.clear();
  for (auto* p : params) {
    const NamedTensor* m = wf.find("optim.m." + p->name);
    const NamedTensor* v = wf.find("optim.v." + p->name);
    if (!m || !v || static_cast<Eigen::Index>(m->values.size()) != p->value.size() ||
        static_cast<Eigen::Index>(v->values.size()) != p->value.size())
      throw WeightsError(WeightsError::Kind::Missing, "checkpoint lacks optimizer state for " + p->name);
    Matrix<S> mm(p->value.rows(), p->value.cols()), vv(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < mm.size(); ++i) {
      mm.data()[i] = static_cast<S>(m->values[i]);
      vv.data()[i] = static_cast<S>(v->values[i]);
    }
    m_.push_back(std::move(mm));
    v_.push_back(std::move(vv));
  }
  t_ = static_cast<std::int64_t>(t->values.at(0));
}

// ---------------------------------------------------------------------------
// weights

template <typename S>
WeightsFile make_weights(const LptModel<S>& junction, const LptModel<S>& connectivity, std::int64_t step) {
  WeightsFile wf;
  nlohmann::json meta{{"architecture", nlohmann::json::parse(junction.config().to_json())},
                      {"connectivity_architecture", nlohmann::json::parse(connectivity.config().to_json())},
                      {"step", step}};
  wf.metadata = meta.dump();
  for (auto& t : junction.export_tensors()) wf.tensors.push_back(std::move(t));
  for (auto& t : connectivity.export_tensors()) wf.tensors.push_back(std::move(t));
  return wf;
}

LptConfig config_from_weights(const WeightsFile& wf) {
  try {
    const auto meta = nlohmann::json::parse(wf.metadata);
    return LptConfig::from_json(meta.at("architecture").dump());
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(WeightsError::Kind::Format, std::string("invalid weights metadata: ") + e.what());
  }
}

LoadedModels models_from_weights(const WeightsFile& wf) {
  const LptConfig cfg = config_from_weights(wf);
  LptConfig ccfg = cfg;
  std::int64_t step = 0;
  try {
    const auto meta = nlohmann::json::parse(wf.metadata);
    if (meta.contains("connectivity_architecture"))
      ccfg = LptConfig::from_json(meta["connectivity_architecture"].dump());
    if (meta.contains("step")) step = meta["step"].get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(WeightsError::Kind::Format, std::string("invalid weights metadata: ") + e.what());
  }
  LoadedModels out{LptModel<float>(ModelKind::Junction, cfg, 0),
                   LptModel<float>(ModelKind::Connectivity, ccfg, 0), step};
  for (const auto& t : wf.tensors) {
    if (t.name.rfind("optim.", 0) == 0) continue;
    if (!out.junction.owns(t.name) && !out.connectivity.owns(t.name))
      throw WeightsError(WeightsError::Kind::Extra, "unexpected tensor " + t.name);
  }
  out.junction.import_tensors(wf.tensors);
  out.connectivity.import_tensors(wf.tensors);
  return out;
}

LoadedModels read_weights(const std::filesystem::path& path) {
  return models_from_weights(read_weights_file(path));
}

template class LptModel<float>;
template class LptModel<double>;
template LptModel<double> LptModel<float>::cast<double>() const;
template LptModel<float> LptModel<double>::cast<float>() const;
template LptModel<float> LptModel<float>::cast<float>() const;
template LptModel<double> LptModel<double>::cast<double>() const;
template Matrix<float> softmax_rows(const Matrix<float>&);
template Matrix<double> softmax_rows(const Matrix<double>&);
template LossResult<float> total_loss(const Matrix<float>&, const Matrix<float>&, const JunctionTargets<float>&,
                                      const Matrix<float>&, const std::vector<int>&, const LossWeights&);
template LossResult<double> total_loss(const Matrix<double>&, const Matrix<double>&,
                                       const JunctionTargets<double>&, const Matrix<double>&,
                                       const std::vector<int>&, const LossWeights&);
template class Adam<float>;
template class Adam<double>;
template WeightsFile make_weights(const LptModel<float>&, const LptModel<float>&, std::int64_t);
template WeightsFile make_weights(const LptModel<double>&, const LptModel<double>&, std::int64_t);

}  // namespace lcwire
