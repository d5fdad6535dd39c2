#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcwire::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& layer)
      : std::runtime_error("non-finite activation in " + layer), layer_(layer) {}
  const std::string& layer() const { return layer_; }

 private:
  std::string layer_;
};

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& layer) {
  if (!m.allFinite()) throw NonFiniteError(layer);
}

/// Trainable tensor with its gradient accumulator.
template <typename S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<S>::Zero(rows, cols)), grad(Matrix<S>::Zero(rows, cols)) {}
};

/// Non-trainable state that is still serialized (running statistics).
template <typename S>
struct Buffer {
  std::string name;
  Matrix<S> value;
};

template <typename S>
struct ParameterRefs {
  std::vector<Parameter<S>*> params;
  std::vector<Buffer<S>*> buffers;
};

/// Contiguous runs of rows; one run per patch (or one run for all patches).
struct Segments {
  std::vector<Eigen::Index> offset;
  std::vector<Eigen::Index> length;

  std::size_t size() const { return offset.size(); }
  static Segments single(Eigen::Index n) { return {{0}, {n}}; }
};

// ---------------------------------------------------------------------------

template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : weight(name + ".w", out, in), bias(name + ".b", 1, out) {}

  void init_uniform(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(weight.value.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = static_cast<S>(u(rng));
    for (Eigen::Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = static_cast<S>(u(rng));
  }

  Matrix<S> forward(const Matrix<S>& x) const {
    Matrix<S> y(x.rows(), weight.value.rows());
    y.noalias() = x * weight.value.transpose();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Matrix<S> backward(const Matrix<S>& x, const Matrix<S>& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    bias.grad.row(0) += dy.colwise().sum();
    Matrix<S> dx(dy.rows(), weight.value.cols());
    dx.noalias() = dy * weight.value;
    return dx;
  }

  void collect(ParameterRefs<S>& refs) {
    refs.params.push_back(&weight);
    refs.params.push_back(&bias);
  }

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Parameter<S> weight, bias;
};

template <typename S>
Matrix<S> relu(const Matrix<S>& x) {
  return x.cwiseMax(S(0));
}

/// dL/dx for y = relu(x), using the forward output.
template <typename S>
Matrix<S> relu_backward(const Matrix<S>& y, const Matrix<S>& dy) {
  return (y.array() > S(0)).select(dy, S(0));
}

/// Feature-wise batch normalization over the rows it is given. With packed
/// patch tokens the rows are exactly the valid lines, so padding never enters
/// the statistics.
template <typename S>
class BatchNorm {
 public:
  struct Cache {
    Matrix<S> xhat;
    RowVector<S> inv_std;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, int width, double momentum = 0.1, double eps = 1e-5)
      : gamma(name + ".gamma", 1, width),
        beta(name + ".beta", 1, width),
        running_mean{name + ".running_mean", Matrix<S>::Zero(1, width)},
        running_var{name + ".running_var", Matrix<S>::Ones(1, width)},
        momentum_(momentum),
        eps_(eps) {
    gamma.value.setOnes();
  }

  Matrix<S> forward(const Matrix<S>& x) const {
    const RowVector<S> scale =
        gamma.value.row(0).array() / (running_var.value.row(0).array() + S(eps_)).sqrt();
    Matrix<S> y = x;
    y.rowwise() -= running_mean.value.row(0);
    y.array().rowwise() *= scale.array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Matrix<S> forward_train(const Matrix<S>& x, Cache& cache, bool update_stats = true) {
    const Eigen::Index n = x.rows();
    if (n == 0) {
      cache.xhat.resize(0, x.cols());
      cache.inv_std = RowVector<S>::Zero(x.cols());
      return x;
    }
    const RowVector<S> mean = x.colwise().mean();
    Matrix<S> centered = x.rowwise() - mean;
    const RowVector<S> var = centered.array().square().colwise().mean();
    cache.inv_std = (var.array() + S(eps_)).rsqrt();
    cache.xhat = centered.array().rowwise() * cache.inv_std.array();
    Matrix<S> y = cache.xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    if (update_stats) {
      const S m = S(momentum_);
      const S unbias = n > 1 ? S(n) / S(n - 1) : S(1);
      running_mean.value.row(0) = (S(1) - m) * running_mean.value.row(0) + m * mean;
      running_var.value.row(0) = (S(1) - m) * running_var.value.row(0) + m * unbias * var;
    }
    return y;
  }

  Matrix<S> backward(const Cache& cache, const Matrix<S>& dy) {
    const Eigen::Index n = dy.rows();
    if (n == 0) return dy;
    gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    const Matrix<S> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    const RowVector<S> sum_d = dxhat.colwise().sum();
    const RowVector<S> sum_dx = (dxhat.array() * cache.xhat.array()).colwise().sum().matrix();
    Matrix<S> dx = (S(n) * dxhat.array()).matrix();
    dx.rowwise() -= sum_d;
    dx.array() -= cache.xhat.array().rowwise() * sum_dx.array();
    dx.array().rowwise() *= (cache.inv_std.array() / S(n));
    return dx;
  }

  void collect(ParameterRefs<S>& refs) {
    refs.params.push_back(&gamma);
    refs.params.push_back(&beta);
    refs.buffers.push_back(&running_mean);
    refs.buffers.push_back(&running_var);
  }

  Parameter<S> gamma, beta;
  Buffer<S> running_mean, running_var;

 private:
  double momentum_ = 0.1;
  double eps_ = 1e-5;
};

template <typename S>
class LayerNorm {
 public:
  struct Cache {
    Matrix<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int width, double eps = 1e-5)
      : gamma(name + ".gamma", 1, width), beta(name + ".beta", 1, width), eps_(eps) {
    gamma.value.setOnes();
  }

  Matrix<S> forward(const Matrix<S>& x, Cache* cache = nullptr) const {
    const Eigen::Matrix<S, Eigen::Dynamic, 1> mean = x.rowwise().mean();
    Matrix<S> centered = x.colwise() - mean;
    const Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std =
        (centered.array().square().rowwise().mean() + S(eps_)).rsqrt();
    Matrix<S> xhat = centered.array().colwise() * inv_std.array();
    Matrix<S> y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = inv_std;
    }
    return y;
  }

  Matrix<S> backward(const Cache& cache, const Matrix<S>& dy) {
    const S c = S(dy.cols());
    gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    const Matrix<S> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> sum_d = dxhat.rowwise().sum();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> sum_dx = (dxhat.array() * cache.xhat.array()).rowwise().sum();
    Matrix<S> dx = (c * dxhat.array()).matrix();
    dx.colwise() -= sum_d;
    dx.array() -= cache.xhat.array().colwise() * sum_dx.array();
    dx.array().colwise() *= (cache.inv_std.array() / c);
    return dx;
  }

  void collect(ParameterRefs<S>& refs) {
    refs.params.push_back(&gamma);
    refs.params.push_back(&beta);
  }

  Parameter<S> gamma, beta;

 private:
  double eps_ = 1e-5;
};

/// Multi-head self-attention restricted to each segment of rows.
template <typename S>
class MultiHeadAttention {
 public:
  struct Cache {
    Matrix<S> x, qkv, concat;
    std::vector<Matrix<S>> probs;  // segment-major, head-minor
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int width, int heads)
      : in_proj(name + ".in_proj", width, 3 * width), out_proj(name + ".out_proj", width, width), heads_(heads) {
    if (heads <= 0 || width % heads != 0)
      throw std::invalid_argument("attention width must be divisible by the head count");
  }

  void init(std::mt19937_64& rng) {
    in_proj.init_uniform(rng);
    out_proj.init_uniform(rng);
  }

  Matrix<S> forward(const Matrix<S>& x, const Segments& segs, Cache* cache = nullptr) const {
    const Eigen::Index width = x.cols();
    const Eigen::Index d = width / heads_;
    const S scale = S(1) / std::sqrt(S(d));
    Matrix<S> qkv = in_proj.forward(x);
    Matrix<S> concat = Matrix<S>::Zero(x.rows(), width);
    if (cache) cache->probs.clear();
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const Eigen::Index o = segs.offset[s], n = segs.length[s];
      if (n == 0) continue;
      for (int h = 0; h < heads_; ++h) {
        const auto q = qkv.block(o, h * d, n, d);
        const auto k = qkv.block(o, width + h * d, n, d);
        const auto v = qkv.block(o, 2 * width + h * d, n, d);
        Matrix<S> p(n, n);
        p.noalias() = q * k.transpose();
        p *= scale;
        for (Eigen::Index r = 0; r < n; ++r) {
          auto row = p.row(r);
          row.array() = (row.array() - row.maxCoeff()).exp();
          row /= row.sum();
        }
        concat.block(o, h * d, n, d).noalias() = p * v;
        if (cache) cache->probs.push_back(std::move(p));
      }
    }
    Matrix<S> out = out_proj.forward(concat);
    if (cache) {
      cache->x = x;
      cache->qkv = std::move(qkv);
      cache->concat = std::move(concat);
    }
    return out;
  }

  Matrix<S> backward(const Cache& cache, const Segments& segs, const Matrix<S>& dout) {
    const Eigen::Index width = cache.x.cols();
    const Eigen::Index d = width / heads_;
    const S scale = S(1) / std::sqrt(S(d));
    const Matrix<S> dconcat = out_proj.backward(cache.concat, dout);
    Matrix<S> dqkv = Matrix<S>::Zero(cache.qkv.rows(), cache.qkv.cols());
    std::size_t pi = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const Eigen::Index o = segs.offset[s], n = segs.length[s];
      if (n == 0) continue;
      for (int h = 0; h < heads_; ++h, ++pi) {
        const Matrix<S>& p = cache.probs[pi];
        const auto q = cache.qkv.block(o, h * d, n, d);
        const auto k = cache.qkv.block(o, width + h * d, n, d);
        const auto v = cache.qkv.block(o, 2 * width + h * d, n, d);
        const auto dctx = dconcat.block(o, h * d, n, d);
        Matrix<S> dp(n, n);
        dp.noalias() = dctx * v.transpose();
        dqkv.block(o, 2 * width + h * d, n, d).noalias() = p.transpose() * dctx;
        // softmax backward, row-wise
        const Eigen::Matrix<S, Eigen::Dynamic, 1> rowdot = (dp.array() * p.array()).rowwise().sum();
        Matrix<S> ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix();
        ds *= scale;
        dqkv.block(o, h * d, n, d).noalias() = ds * k;
        dqkv.block(o, width + h * d, n, d).noalias() = ds.transpose() * q;
      }
    }
    return in_proj.backward(cache.x, dqkv);
  }

  void collect(ParameterRefs<S>& refs) {
    in_proj.collect(refs);
    out_proj.collect(refs);
  }

  int heads() const { return heads_; }

  Linear<S> in_proj, out_proj;

 private:
  int heads_ = 1;
};

/// Pre-normalization encoder layer:
///   h = x + attn(ln1(x)),  y = h + ff2(relu(ff1(ln2(h)))).
template <typename S>
class EncoderLayer {
 public:
  struct Cache {
    typename LayerNorm<S>::Cache ln1, ln2;
    typename MultiHeadAttention<S>::Cache attn;
    Matrix<S> b, f;
  };

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, int width, int ff_width, int heads, double ln_eps = 1e-5)
      : ln1(name + ".ln1", width, ln_eps),
        attn(name + ".attn", width, heads),
        ln2(name + ".ln2", width, ln_eps),
        ff1(name + ".ff1", width, ff_width),
        ff2(name + ".ff2", ff_width, width),
        name_(name) {}

  void init(std::mt19937_64& rng) {
    attn.init(rng);
    ff1.init_uniform(rng);
    ff2.init_uniform(rng);
  }

  Matrix<S> forward(const Matrix<S>& x, const Segments& segs, Cache* cache = nullptr) const {
    Matrix<S> a = ln1.forward(x, cache ? &cache->ln1 : nullptr);
    Matrix<S> h = x + attn.forward(a, segs, cache ? &cache->attn : nullptr);
    require_finite(h, name_ + ".attn");
    Matrix<S> b = ln2.forward(h, cache ? &cache->ln2 : nullptr);
    Matrix<S> f = relu(ff1.forward(b));
    Matrix<S> y = h + ff2.forward(f);
    require_finite(y, name_ + ".ff");
    if (cache) {
      cache->b = std::move(b);
      cache->f = std::move(f);
    }
    return y;
  }

  Matrix<S> backward(const Cache& cache, const Segments& segs, const Matrix<S>& dy) {
    Matrix<S> df = ff2.backward(cache.f, dy);
    df = relu_backward(cache.f, df);
    const Matrix<S> db = ff1.backward(cache.b, df);
    Matrix<S> dh = dy + ln2.backward(cache.ln2, db);
    const Matrix<S> da = attn.backward(cache.attn, segs, dh);
    dh += ln1.backward(cache.ln1, da);
    return dh;
  }

  void collect(ParameterRefs<S>& refs) {
    ln1.collect(refs);
    attn.collect(refs);
    ln2.collect(refs);
    ff1.collect(refs);
    ff2.collect(refs);
  }

  LayerNorm<S> ln1;
  MultiHeadAttention<S> attn;
  LayerNorm<S> ln2;
  Linear<S> ff1, ff2;

 private:
  std::string name_;
};

/// Column-wise max over each segment; an empty segment pools to zeros.
template <typename S>
Matrix<S> segment_max_pool(const Matrix<S>& x, const Segments& segs, Eigen::MatrixXi* argmax = nullptr) {
  Matrix<S> out = Matrix<S>::Zero(static_cast<Eigen::Index>(segs.size()), x.cols());
  if (argmax) argmax->setConstant(static_cast<Eigen::Index>(segs.size()), x.cols(), -1);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const Eigen::Index o = segs.offset[s], n = segs.length[s];
    if (n == 0) continue;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = 0;
      S v = x(o, c);
      for (Eigen::Index r = 1; r < n; ++r)
        if (x(o + r, c) > v) {
          v = x(o + r, c);
          best = r;
        }
      out(static_cast<Eigen::Index>(s), c) = v;
      if (argmax) (*argmax)(static_cast<Eigen::Index>(s), c) = static_cast<int>(o + best);
    }
  }
  return out;
}

template <typename S>
Matrix<S> segment_max_pool_backward(const Eigen::MatrixXi& argmax, Eigen::Index rows, const Matrix<S>& dout) {
  Matrix<S> dx = Matrix<S>::Zero(rows, dout.cols());
  for (Eigen::Index s = 0; s < dout.rows(); ++s)
    for (Eigen::Index c = 0; c < dout.cols(); ++c)
      if (argmax(s, c) >= 0) dx(argmax(s, c), c) += dout(s, c);
  return dx;
}

/// Stack of (Linear, BatchNorm, ReLU) blocks, optionally followed by a plain
/// Linear output layer.
template <typename S>
class MlpStack {
 public:
  struct Cache {
    std::vector<Matrix<S>> inputs;  // input of every Linear
    std::vector<typename BatchNorm<S>::Cache> bn;
    std::vector<Matrix<S>> relu_out;
  };

  MlpStack() = default;
  MlpStack(const std::string& name, int in, const std::vector<int>& hidden, int out, double bn_momentum,
           double bn_eps, const std::string& out_name = {})
      : name_(name) {
    int prev = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      const std::string n = name + ".fc" + std::to_string(i);
      linear_.emplace_back(n, prev, hidden[i]);
      norm_.emplace_back(n + ".bn", hidden[i], bn_momentum, bn_eps);
      prev = hidden[i];
    }
    if (out > 0) {
      output_ = Linear<S>(out_name.empty() ? name : out_name, prev, out);
      has_output_ = true;
    }
  }

  void init(std::mt19937_64& rng, bool zero_output) {
    for (auto& l : linear_) l.init_uniform(rng);
    if (has_output_) {
      output_.init_uniform(rng);
      if (zero_output) {
        output_.weight.value.setZero();
        output_.bias.value.setZero();
      }
    }
  }

  Matrix<S> forward(const Matrix<S>& x) const {
    Matrix<S> h = x;
    for (std::size_t i = 0; i < linear_.size(); ++i) {
      h = relu(norm_[i].forward(linear_[i].forward(h)));
      require_finite(h, linear_[i].weight.name);
    }
    if (has_output_) {
      h = output_.forward(h);
      require_finite(h, output_.weight.name);
    }
    return h;
  }

  Matrix<S> forward_train(const Matrix<S>& x, Cache& cache, bool update_stats = true) {
    cache.inputs.clear();
    cache.bn.assign(linear_.size(), {});
    cache.relu_out.clear();
    Matrix<S> h = x;
    for (std::size_t i = 0; i < linear_.size(); ++i) {
      cache.inputs.push_back(h);
      h = relu(norm_[i].forward_train(linear_[i].forward(h), cache.bn[i], update_stats));
      require_finite(h, linear_[i].weight.name);
      cache.relu_out.push_back(h);
    }
    if (has_output_) {
      cache.inputs.push_back(h);
      h = output_.forward(h);
      require_finite(h, output_.weight.name);
    }
    return h;
  }

  Matrix<S> backward(const Cache& cache, const Matrix<S>& dy) {
    Matrix<S> d = dy;
    if (has_output_) d = output_.backward(cache.inputs.back(), d);
    for (std::size_t i = linear_.size(); i-- > 0;) {
      d = relu_backward(cache.relu_out[i], d);
      d = norm_[i].backward(cache.bn[i], d);
      d = linear_[i].backward(cache.inputs[i], d);
    }
    return d;
  }

  void collect(ParameterRefs<S>& refs) {
    for (std::size_t i = 0; i < linear_.size(); ++i) {
      linear_[i].collect(refs);
      norm_[i].collect(refs);
    }
    if (has_output_) output_.collect(refs);
  }

  Linear<S>& output() { return output_; }
  const Linear<S>& output() const { return output_; }

 private:
  std::string name_;
  std::vector<Linear<S>> linear_;
  std::vector<BatchNorm<S>> norm_;
  Linear<S> output_;
  bool has_output_ = false;
};

}  // namespace lcwire::nn
