#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "macc/linalg.hpp"
#include "macc/rng.hpp"

namespace macc::nets {

enum class Activation { kRelu, kTanh, kIdentity };

/// Fully connected net with handwritten reverse-mode gradients. Parameters
/// round-trip losslessly through flatten/unflatten (layer by layer, weights
/// row-major then biases).
class DenseNet {
 public:
  DenseNet() = default;
  /// dims = {in, hidden..., out}; one activation per layer.
  DenseNet(const std::vector<int>& dims, const std::vector<Activation>& acts);

  void init(Rng& rng);

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int n_params() const { return n_params_; }

  struct Cache {
    std::vector<Vec> inputs;   // input to each layer
    std::vector<Vec> preacts;  // pre-activation of each layer
  };

  Vec forward(const Vec& x, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients into param_grads (size n_params) and
  /// returns the gradient with respect to the input.
  Vec backward(const Cache& cache, const Vec& upstream, Vec& param_grads) const;

  Vec flatten_params() const;
  void unflatten_params(const Vec& p);

 private:
  std::vector<int> dims_;
  std::vector<Activation> acts_;
  std::vector<Matrix> weights_;
  std::vector<Vec> biases_;
  int n_params_ = 0;
};

enum class Pooling { kMean, kMax };

/// Encoder applied per element, pooled permutation-invariantly, then a head.
/// Mean pooling accumulates in a canonical element order (sorted by a hash
/// of the element bytes) so the invariance is bit-exact; max pooling is
/// exactly invariant by construction.
class SetPoolNet {
 public:
  SetPoolNet() = default;
  SetPoolNet(DenseNet encoder, Pooling pooling, DenseNet head);

  void init(Rng& rng);

  const DenseNet& encoder() const { return encoder_; }
  const DenseNet& head() const { return head_; }
  Pooling pooling() const { return pooling_; }
  int out_dim() const { return head_.out_dim(); }
  int n_params() const { return encoder_.n_params() + head_.n_params(); }

  struct Cache {
    std::vector<DenseNet::Cache> enc;
    DenseNet::Cache head;
    std::vector<Vec> encoded;
    std::vector<int> order;  // canonical accumulation order
    Vec weights;
    double weight_sum = 0.0;
    Vec pooled;
    std::vector<int> argmax;  // max pooling: winning element per coordinate
  };

  /// Optional nonnegative per-element weights gate the contribution of each
  /// element (weighted mean with a weighted denominator); weights of exactly
  /// 0/1 reproduce evaluating on the corresponding subset bit for bit.
  Vec forward(const std::vector<Vec>& elements, Cache* cache = nullptr,
              const Vec* weights = nullptr) const;

  struct Grads {
    Vec encoder_params;
    Vec head_params;
    std::vector<Vec> inputs;
    Vec weights;  // d(out)/d(weight_j), mean pooling only
  };
  Grads backward(const std::vector<Vec>& elements, const Cache& cache, const Vec& upstream) const;

  Vec flatten_params() const;
  void unflatten_params(const Vec& p);

 private:
  DenseNet encoder_;
  Pooling pooling_ = Pooling::kMean;
  DenseNet head_;
};

/// Straight-through categorical sampler: hard one-hot forward, softmax
/// Jacobian backward at temperature tau.
class GumbelSampler {
 public:
  explicit GumbelSampler(double temperature = 1.0);

  double temperature() const { return tau_; }

  struct Sample {
    int index = 0;  // argmax category
    Vec noise;      // the Gumbel draws, kept for replaying gradients
    Vec soft;       // softmax((logits + noise) / tau)
  };

  Sample sample(const Vec& logits, Rng& rng) const;
  /// Relaxed forward with fixed noise (for gradient checks and replays).
  Vec soft(const Vec& logits, const Vec& noise) const;
  /// dL/dlogits given dL/d(one-hot) flowing through the relaxed softmax.
  Vec backward(const Vec& soft, const Vec& upstream) const;

 private:
  double tau_;
};

/// Adaptive-moment optimizer state (bias-corrected). step() descends.
struct AdamState {
  Vec m, v;
  long long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(int n, double learning_rate);
  void step(Vec& params, const Vec& grads);
};

/// Flat binary parameter file plus a versioned plain-text shape manifest at
/// "<path>.manifest".
void save_params(const std::string& path, const std::vector<std::pair<std::string, Vec>>& entries);
std::vector<std::pair<std::string, Vec>> load_params(const std::string& path);

}  // namespace macc::nets
