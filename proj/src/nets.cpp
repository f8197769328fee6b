#include "macc/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace macc::nets {

namespace {

double activate(double z, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return z > 0.0 ? z : 0.0;
    case Activation::kTanh:
      return std::tanh(z);
    case Activation::kIdentity:
      return z;
  }
  return z;
}

double activate_grad(double z, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

std::uint64_t fnv1a(const Vec& v) {
  std::uint64_t h = 1469598103934665603ull;
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace

DenseNet::DenseNet(const std::vector<int>& dims, const std::vector<Activation>& acts)
    : dims_(dims), acts_(acts) {
  if (dims.size() < 2) throw std::invalid_argument("DenseNet: need at least one layer");
  if (acts.size() != dims.size() - 1)
    throw std::invalid_argument("DenseNet: one activation per layer required");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    weights_.emplace_back(dims[l + 1], dims[l], 0.0);
    biases_.emplace_back(dims[l + 1], 0.0);
    n_params_ += dims[l + 1] * dims[l] + dims[l + 1];
  }
}

void DenseNet::init(Rng& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    double scale = std::sqrt(2.0 / (dims_[l] + dims_[l + 1]));
    for (double& w : weights_[l].data()) w = scale * rng.normal();
    for (double& b : biases_[l]) b = 0.0;
  }
}

Vec DenseNet::forward(const Vec& x, Cache* cache) const {
  if (static_cast<int>(x.size()) != in_dim()) throw std::invalid_argument("DenseNet: input size");
  Vec h = x;
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (cache) cache->inputs.push_back(h);
    Vec z = weights_[l].multiply(h);
    for (int i = 0; i < static_cast<int>(z.size()); ++i) z[i] += biases_[l][i];
    if (cache) cache->preacts.push_back(z);
    for (double& v : z) {
      if (!std::isfinite(v)) throw std::runtime_error("DenseNet: non-finite activation");
      v = activate(v, acts_[l]);
    }
    h = std::move(z);
  }
  return h;
}

Vec DenseNet::backward(const Cache& cache, const Vec& upstream, Vec& param_grads) const {
  if (param_grads.size() != static_cast<std::size_t>(n_params_))
    throw std::invalid_argument("DenseNet::backward: param grad size");
  Vec delta = upstream;
  std::vector<int> offsets(weights_.size());
  int off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offsets[l] = off;
    off += weights_[l].rows() * weights_[l].cols() + weights_[l].rows();
  }
  for (int l = static_cast<int>(weights_.size()) - 1; l >= 0; --l) {
    const Vec& z = cache.preacts[l];
    const Vec& in = cache.inputs[l];
    Vec dz(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dz[i] = delta[i] * activate_grad(z[i], acts_[l]);
    double* wg = param_grads.data() + offsets[l];
    const int rows = weights_[l].rows(), cols = weights_[l].cols();
    for (int r = 0; r < rows; ++r) {
      if (dz[r] == 0.0) continue;
      for (int c = 0; c < cols; ++c) wg[r * cols + c] += dz[r] * in[c];
    }
    double* bg = wg + rows * cols;
    for (int r = 0; r < rows; ++r) bg[r] += dz[r];
    Vec prev(cols, 0.0);
    for (int r = 0; r < rows; ++r) {
      if (dz[r] == 0.0) continue;
      for (int c = 0; c < cols; ++c) prev[c] += weights_[l](r, c) * dz[r];
    }
    delta = std::move(prev);
  }
  return delta;
}

Vec DenseNet::flatten_params() const {
  Vec out;
  out.reserve(n_params_);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (double w : weights_[l].data()) out.push_back(w);
    for (double b : biases_[l]) out.push_back(b);
  }
  return out;
}

void DenseNet::unflatten_params(const Vec& p) {
  if (p.size() != static_cast<std::size_t>(n_params_))
    throw std::invalid_argument("DenseNet::unflatten_params: size mismatch");
  std::size_t i = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (double& w : weights_[l].data()) w = p[i++];
    for (double& b : biases_[l]) b = p[i++];
  }
}

SetPoolNet::SetPoolNet(DenseNet encoder, Pooling pooling, DenseNet head)
    : encoder_(std::move(encoder)), pooling_(pooling), head_(std::move(head)) {
  if (encoder_.out_dim() != head_.in_dim())
    throw std::invalid_argument("SetPoolNet: encoder output must feed the head");
}

void SetPoolNet::init(Rng& rng) {
  encoder_.init(rng);
  head_.init(rng);
}

Vec SetPoolNet::forward(const std::vector<Vec>& elements, Cache* cache, const Vec* weights) const {
  if (elements.empty()) throw std::invalid_argument("SetPoolNet: empty element set");
  const int m = static_cast<int>(elements.size());
  Vec w(m, 1.0);
  if (weights) {
    if (weights->size() != elements.size())
      throw std::invalid_argument("SetPoolNet: weight arity mismatch");
    w = *weights;
    for (double x : w)
      if (x < 0.0) throw std::invalid_argument("SetPoolNet: negative element weight");
  }

  Cache local;
  Cache* c = cache ? cache : &local;
  c->enc.assign(m, {});
  c->encoded.assign(m, {});
  for (int i = 0; i < m; ++i) c->encoded[i] = encoder_.forward(elements[i], &c->enc[i]);

  // Canonical accumulation order: sort by element hash, ties by content.
  c->order.resize(m);
  for (int i = 0; i < m; ++i) c->order[i] = i;
  std::vector<std::uint64_t> hashes(m);
  for (int i = 0; i < m; ++i) hashes[i] = fnv1a(elements[i]);
  std::stable_sort(c->order.begin(), c->order.end(), [&](int a, int b) {
    if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
    return elements[a] < elements[b];
  });

  const int h = encoder_.out_dim();
  c->weights = w;
  c->pooled.assign(h, 0.0);
  c->argmax.assign(h, -1);
  if (pooling_ == Pooling::kMean) {
    double wsum = 0.0;
    for (int oi : c->order) wsum += w[oi];
    if (wsum <= 0.0) throw std::invalid_argument("SetPoolNet: mean pooling needs positive total weight");
    c->weight_sum = wsum;
    for (int oi : c->order) {
      if (w[oi] == 0.0) continue;
      for (int d = 0; d < h; ++d) c->pooled[d] += w[oi] * c->encoded[oi][d];
    }
    for (int d = 0; d < h; ++d) c->pooled[d] /= wsum;
  } else {
    bool any = false;
    for (int oi : c->order) {
      if (w[oi] <= 0.5) continue;  // max pooling treats weights as membership
      any = true;
      for (int d = 0; d < h; ++d)
        if (c->argmax[d] < 0 || c->encoded[oi][d] > c->pooled[d]) {
          c->pooled[d] = c->encoded[oi][d];
          c->argmax[d] = oi;
        }
    }
    if (!any) throw std::invalid_argument("SetPoolNet: max pooling over an empty membership");
  }
  return head_.forward(c->pooled, &c->head);
}

SetPoolNet::Grads SetPoolNet::backward(const std::vector<Vec>& elements, const Cache& cache,
                                       const Vec& upstream) const {
  const int m = static_cast<int>(elements.size());
  const int h = encoder_.out_dim();
  Grads g;
  g.encoder_params.assign(encoder_.n_params(), 0.0);
  g.head_params.assign(head_.n_params(), 0.0);
  g.inputs.assign(m, Vec(encoder_.in_dim(), 0.0));
  g.weights.assign(m, 0.0);

  Vec dpooled = head_.backward(cache.head, upstream, g.head_params);

  if (pooling_ == Pooling::kMean) {
    for (int i = 0; i < m; ++i) {
      double w = cache.weights[i];
      double dw = 0.0;
      for (int d = 0; d < h; ++d)
        dw += dpooled[d] * (cache.encoded[i][d] - cache.pooled[d]) / cache.weight_sum;
      g.weights[i] = dw;
      if (w == 0.0) continue;
      Vec denc(h);
      for (int d = 0; d < h; ++d) denc[d] = dpooled[d] * w / cache.weight_sum;
      g.inputs[i] = encoder_.backward(cache.enc[i], denc, g.encoder_params);
    }
  } else {
    std::vector<Vec> denc(m, Vec(h, 0.0));
    for (int d = 0; d < h; ++d)
      if (cache.argmax[d] >= 0) denc[cache.argmax[d]][d] += dpooled[d];
    for (int i = 0; i < m; ++i) {
      bool any = false;
      for (double x : denc[i]) any |= (x != 0.0);
      if (any) g.inputs[i] = encoder_.backward(cache.enc[i], denc[i], g.encoder_params);
    }
  }
  return g;
}

Vec SetPoolNet::flatten_params() const {
  Vec out = encoder_.flatten_params();
  Vec head = head_.flatten_params();
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

void SetPoolNet::unflatten_params(const Vec& p) {
  if (p.size() != static_cast<std::size_t>(n_params()))
    throw std::invalid_argument("SetPoolNet::unflatten_params: size mismatch");
  Vec enc(p.begin(), p.begin() + encoder_.n_params());
  Vec head(p.begin() + encoder_.n_params(), p.end());
  encoder_.unflatten_params(enc);
  head_.unflatten_params(head);
}

GumbelSampler::GumbelSampler(double temperature) : tau_(temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("GumbelSampler: temperature must be positive");
}

GumbelSampler::Sample GumbelSampler::sample(const Vec& logits, Rng& rng) const {
  if (logits.size() < 2) throw std::invalid_argument("GumbelSampler: need at least two categories");
  Sample s;
  s.noise.resize(logits.size());
  for (double& g : s.noise) g = rng.gumbel();
  s.soft = soft(logits, s.noise);
  s.index = 0;
  double best = logits[0] + s.noise[0];
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] + s.noise[i] > best) {
      best = logits[i] + s.noise[i];
      s.index = static_cast<int>(i);
    }
  return s;
}

Vec GumbelSampler::soft(const Vec& logits, const Vec& noise) const {
  if (noise.size() != logits.size()) throw std::invalid_argument("GumbelSampler::soft: arity");
  Vec z(logits.size());
  double zmax = -1e300;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    z[i] = (logits[i] + noise[i]) / tau_;
    zmax = std::max(zmax, z[i]);
  }
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

Vec GumbelSampler::backward(const Vec& soft, const Vec& upstream) const {
  if (soft.size() != upstream.size()) throw std::invalid_argument("GumbelSampler::backward: arity");
  double inner = 0.0;
  for (std::size_t i = 0; i < soft.size(); ++i) inner += upstream[i] * soft[i];
  Vec out(soft.size());
  for (std::size_t i = 0; i < soft.size(); ++i) out[i] = soft[i] * (upstream[i] - inner) / tau_;
  return out;
}

AdamState::AdamState(int n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

void AdamState::step(Vec& params, const Vec& grads) {
  if (params.size() != m.size() || grads.size() != m.size())
    throw std::invalid_argument("AdamState::step: size mismatch");
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    double mh = m[i] / bc1;
    double vh = v[i] / bc2;
    params[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

void save_params(const std::string& path, const std::vector<std::pair<std::string, Vec>>& entries) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("save_params: cannot write " + path);
  std::ofstream manifest(path + ".manifest");
  if (!manifest) throw std::runtime_error("save_params: cannot write " + path + ".manifest");
  manifest << "macc-params 1\n";
  for (const auto& [name, values] : entries) {
    manifest << name << ' ' << values.size() << '\n';
    bin.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
}

std::vector<std::pair<std::string, Vec>> load_params(const std::string& path) {
  std::ifstream manifest(path + ".manifest");
  if (!manifest) throw std::runtime_error("load_params: cannot open " + path + ".manifest");
  std::string header;
  std::getline(manifest, header);
  if (header != "macc-params 1") throw std::runtime_error("load_params: unsupported manifest version");
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("load_params: cannot open " + path);
  std::vector<std::pair<std::string, Vec>> entries;
  std::string name;
  std::size_t count;
  while (manifest >> name >> count) {
    Vec values(count);
    bin.read(reinterpret_cast<char*>(values.data()),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (!bin) throw std::runtime_error("load_params: binary payload shorter than the manifest");
    entries.emplace_back(name, std::move(values));
  }
  return entries;
}

}  // namespace macc::nets
