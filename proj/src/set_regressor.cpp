#include "fscp/set_regressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fscp/rng.hpp"

namespace fscp {

namespace {

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

void affine(const std::vector<double>& w, const std::vector<double>& b, int in,
            int out, const double* x, double* z) {
  for (int r = 0; r < out; ++r) {
    double acc = b[static_cast<std::size_t>(r)];
    const double* row = w.data() + static_cast<std::size_t>(r) * in;
    for (int c = 0; c < in; ++c) acc += row[c] * x[c];
    z[r] = acc;
  }
}

}  // namespace

SetRegressor SetRegressor::init(int hidden, double beta, std::uint64_t seed) {
  if (hidden < 1) throw ArgumentError("hidden width must be >= 1");
  if (!(beta > 0.0) || !(beta < 1.0)) throw ArgumentError("beta must lie in (0, 1)");
  SetRegressor model;
  model.hidden_ = hidden;
  model.beta_ = beta;
  Rng rng = Rng::stream(seed, 0x696e6974ull);  // "init"
  auto make_layer = [&](Layer& layer, int in, int out) {
    layer.in = in;
    layer.out = out;
    layer.w.resize(static_cast<std::size_t>(in) * out);
    layer.b.resize(static_cast<std::size_t>(out));
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : layer.w) v = rng.uniform(-bound, bound);
    for (double& v : layer.b) v = rng.uniform(-bound, bound);
  };
  make_layer(model.enc1_, 1, hidden);
  make_layer(model.enc2_, hidden, hidden);
  make_layer(model.dec1_, hidden, hidden);
  make_layer(model.dec2_, hidden, 1);
  return model;
}

// Cache layout per forward pass, used by the backward pass:
//   per element j: z1[h], a1[h], z2[h]   (a2 = relu(z2))
//   then: pooled[h], zd1[h], d1[h]
// Scores are processed in sorted order so the floating-point sum is the same
// for every permutation of the input; the math is order-free either way.
double SetRegressor::forward(std::span<const double> raw_scores,
                             std::vector<double>* cache) const {
  std::vector<double> sorted(raw_scores.begin(), raw_scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::span<const double> scores(sorted);
  int h = hidden_;
  std::size_t k = scores.size();
  if (cache) cache->assign(k * 3 * h + 3 * h, 0.0);
  std::vector<double> z1(h), a1(h), z2(h);
  std::vector<double> pooled(h, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double s = scores[j];
    affine(enc1_.w, enc1_.b, 1, h, &s, z1.data());
    for (int i = 0; i < h; ++i) a1[i] = relu(z1[i]);
    affine(enc2_.w, enc2_.b, h, h, a1.data(), z2.data());
    for (int i = 0; i < h; ++i) pooled[i] += relu(z2[i]);
    if (cache) {
      double* base = cache->data() + j * 3 * h;
      std::copy(z1.begin(), z1.end(), base);
      std::copy(a1.begin(), a1.end(), base + h);
      std::copy(z2.begin(), z2.end(), base + 2 * h);
    }
  }
  std::vector<double> zd1(h), d1(h);
  affine(dec1_.w, dec1_.b, h, h, pooled.data(), zd1.data());
  for (int i = 0; i < h; ++i) d1[i] = relu(zd1[i]);
  double out;
  affine(dec2_.w, dec2_.b, h, 1, d1.data(), &out);
  if (cache) {
    double* base = cache->data() + k * 3 * h;
    std::copy(pooled.begin(), pooled.end(), base);
    std::copy(zd1.begin(), zd1.end(), base + h);
    std::copy(d1.begin(), d1.end(), base + 2 * h);
  }
  return out;
}

double SetRegressor::predict(std::span<const double> loo_scores) const {
  if (loo_scores.empty()) throw ArgumentError("empty score set");
  if (!allow_variable_k_ && expected_k_ > 0 &&
      static_cast<int>(loo_scores.size()) != expected_k_) {
    throw ArgumentError("input arity does not match training k");
  }
  return forward(loo_scores, nullptr);
}

std::vector<double*> SetRegressor::parameter_views() {
  std::vector<double*> views;
  for (Layer* layer : {&enc1_, &enc2_, &dec1_, &dec2_}) {
    for (double& v : layer->w) views.push_back(&v);
    for (double& v : layer->b) views.push_back(&v);
  }
  return views;
}

std::vector<const double*> SetRegressor::parameter_views() const {
  std::vector<const double*> views;
  for (const Layer* layer : {&enc1_, &enc2_, &dec1_, &dec2_}) {
    for (const double& v : layer->w) views.push_back(&v);
    for (const double& v : layer->b) views.push_back(&v);
  }
  return views;
}

std::size_t SetRegressor::parameter_count() const {
  return enc1_.w.size() + enc1_.b.size() + enc2_.w.size() + enc2_.b.size() +
         dec1_.w.size() + dec1_.b.size() + dec2_.w.size() + dec2_.b.size();
}

namespace {

// Gradient buffer mirroring the parameter layout of parameter_views().
struct GradBuffer {
  double* data;
  std::size_t offset = 0;
  double* take(std::size_t n) {
    double* p = data + offset;
    offset += n;
    return p;
  }
};

}  // namespace

double SetRegressor::loss_and_gradient(
    const std::vector<QuantileTrainingExample>& dataset,
    std::vector<double>* gradient) const {
  if (dataset.empty()) throw ArgumentError("empty dataset");
  int h = hidden_;
  gradient->assign(parameter_count(), 0.0);
  GradBuffer buf{gradient->data(), 0};
  double* g_enc1_w = buf.take(enc1_.w.size());
  double* g_enc1_b = buf.take(enc1_.b.size());
  double* g_enc2_w = buf.take(enc2_.w.size());
  double* g_enc2_b = buf.take(enc2_.b.size());
  double* g_dec1_w = buf.take(dec1_.w.size());
  double* g_dec1_b = buf.take(dec1_.b.size());
  double* g_dec2_w = buf.take(dec2_.w.size());
  double* g_dec2_b = buf.take(dec2_.b.size());

  double loss = 0.0;
  double inv_n = 1.0 / static_cast<double>(dataset.size());
  std::vector<double> cache;
  std::vector<double> dpooled(h), dd1(h), da2(h), da1(h);
  std::vector<double> sorted_scores;
  for (const QuantileTrainingExample& ex : dataset) {
    std::size_t k = ex.loo_scores.size();
    // match forward()'s canonical element order
    sorted_scores.assign(ex.loo_scores.begin(), ex.loo_scores.end());
    std::sort(sorted_scores.begin(), sorted_scores.end());
    double pred = forward(sorted_scores, &cache);
    double err = pred - ex.target;
    loss += err * err * inv_n;
    double dout = 2.0 * err * inv_n;

    const double* pooled = cache.data() + k * 3 * h;
    const double* zd1 = pooled + h;
    const double* d1 = pooled + 2 * h;

    // decoder output layer
    for (int i = 0; i < h; ++i) g_dec2_w[i] += dout * d1[i];
    g_dec2_b[0] += dout;
    // decoder hidden layer
    for (int i = 0; i < h; ++i) {
      dd1[i] = dec2_.w[static_cast<std::size_t>(i)] * dout *
               (zd1[i] > 0.0 ? 1.0 : 0.0);
    }
    for (int r = 0; r < h; ++r) {
      double* row = g_dec1_w + static_cast<std::size_t>(r) * h;
      for (int c = 0; c < h; ++c) row[c] += dd1[r] * pooled[c];
      g_dec1_b[r] += dd1[r];
    }
    for (int c = 0; c < h; ++c) {
      double acc = 0.0;
      for (int r = 0; r < h; ++r) {
        acc += dec1_.w[static_cast<std::size_t>(r) * h + c] * dd1[r];
      }
      dpooled[c] = acc;
    }
    // elementwise encoder, gradients accumulate over set elements
    for (std::size_t j = 0; j < k; ++j) {
      const double* z1 = cache.data() + j * 3 * h;
      const double* a1 = z1 + h;
      const double* z2 = z1 + 2 * h;
      for (int i = 0; i < h; ++i) {
        da2[i] = dpooled[i] * (z2[i] > 0.0 ? 1.0 : 0.0);
      }
      for (int r = 0; r < h; ++r) {
        double* row = g_enc2_w + static_cast<std::size_t>(r) * h;
        for (int c = 0; c < h; ++c) row[c] += da2[r] * a1[c];
        g_enc2_b[r] += da2[r];
      }
      for (int c = 0; c < h; ++c) {
        double acc = 0.0;
        for (int r = 0; r < h; ++r) {
          acc += enc2_.w[static_cast<std::size_t>(r) * h + c] * da2[r];
        }
        da1[c] = acc * (z1[c] > 0.0 ? 1.0 : 0.0);
      }
      double s = sorted_scores[j];
      for (int r = 0; r < h; ++r) {
        g_enc1_w[r] += da1[r] * s;
        g_enc1_b[r] += da1[r];
      }
    }
  }
  return loss;
}

double SetRegressor::mse(
    const std::vector<QuantileTrainingExample>& dataset) const {
  double total = 0.0;
  for (const QuantileTrainingExample& ex : dataset) {
    double err = forward(ex.loo_scores, nullptr) - ex.target;
    total += err * err;
  }
  return total / static_cast<double>(dataset.size());
}

TrainResult SetRegressor::train(
    const std::vector<QuantileTrainingExample>& dataset,
    const TrainConfig& config) {
  if (dataset.size() < 2) throw ArgumentError("dataset too small to train");
  if (config.epochs < 1 || config.batch < 1 || config.step_size <= 0.0) {
    throw ArgumentError("bad training configuration");
  }
  std::size_t k0 = dataset[0].loo_scores.size();
  for (const QuantileTrainingExample& ex : dataset) {
    if (!std::isfinite(ex.target)) throw ArgumentError("non-finite target");
    if (!allow_variable_k_ && ex.loo_scores.size() != k0) {
      throw ArgumentError("mixed input arity without variable-k mode");
    }
  }
  expected_k_ = static_cast<int>(k0);

  std::vector<double*> params = parameter_views();
  std::size_t n_params = params.size();
  std::vector<double> grad(n_params);
  std::vector<double> adam_m, adam_v;
  if (config.adam) {
    adam_m.assign(n_params, 0.0);
    adam_v.assign(n_params, 0.0);
  }
  long adam_t = 0;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(config.seed, 0x747261696eull);  // "train"

  TrainResult result;
  std::vector<QuantileTrainingExample> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch)) {
      std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
      double loss = loss_and_gradient(batch, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("training diverged: loss is not finite at epoch " +
                            std::to_string(epoch));
      }
      double norm_sq = 0.0;
      for (double g : grad) norm_sq += g * g;
      double norm = std::sqrt(norm_sq);
      if (config.clip_norm > 0.0 && norm > config.clip_norm) {
        double scale = config.clip_norm / norm;
        for (double& g : grad) g *= scale;
      }
      if (config.adam) {
        ++adam_t;
        double bc1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t));
        double bc2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t));
        for (std::size_t i = 0; i < n_params; ++i) {
          adam_m[i] = 0.9 * adam_m[i] + 0.1 * grad[i];
          adam_v[i] = 0.999 * adam_v[i] + 0.001 * grad[i] * grad[i];
          double step = config.step_size * (adam_m[i] / bc1) /
                        (std::sqrt(adam_v[i] / bc2) + 1e-8);
          *params[i] -= step;
        }
      } else {
        for (std::size_t i = 0; i < n_params; ++i) {
          *params[i] -= config.step_size * grad[i];
        }
      }
    }
    result.epoch_mse.push_back(mse(dataset));
  }
  if (!result.epoch_mse.empty() && !std::isfinite(result.epoch_mse.back())) {
    throw TrainingError("training diverged");
  }
  return result;
}

void SetRegressor::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open model file for writing: " + path);
  out.precision(17);
  out << "hidden 1 1\n" << hidden_ << "\n";
  out << "beta 1 1\n" << beta_ << "\n";
  out << "expected_k 1 1\n" << expected_k_ << "\n";
  out << "allow_variable_k 1 1\n" << (allow_variable_k_ ? 1 : 0) << "\n";
  auto dump = [&](const char* name, const Layer& layer) {
    out << name << "_w " << layer.out << " " << layer.in << "\n";
    for (std::size_t i = 0; i < layer.w.size(); ++i) {
      out << layer.w[i] << (i + 1 == layer.w.size() ? "\n" : " ");
    }
    out << name << "_b " << layer.out << " 1\n";
    for (std::size_t i = 0; i < layer.b.size(); ++i) {
      out << layer.b[i] << (i + 1 == layer.b.size() ? "\n" : " ");
    }
  };
  dump("enc1", enc1_);
  dump("enc2", enc2_);
  dump("dec1", dec1_);
  dump("dec2", dec2_);
}

SetRegressor SetRegressor::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  auto read_block = [&](const std::string& expect_name) {
    std::string name;
    int rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || name != expect_name) {
      throw ConfigError("malformed model file near " + expect_name);
    }
    std::vector<double> values(static_cast<std::size_t>(rows) * cols);
    for (double& v : values) {
      if (!(in >> v)) throw ConfigError("truncated model file");
    }
    return std::make_tuple(rows, cols, values);
  };
  auto [h_r, h_c, h_v] = read_block("hidden");
  auto [b_r, b_c, b_v] = read_block("beta");
  auto [k_r, k_c, k_v] = read_block("expected_k");
  auto [a_r, a_c, a_v] = read_block("allow_variable_k");
  SetRegressor model = init(static_cast<int>(h_v[0]), b_v[0], 0);
  model.expected_k_ = static_cast<int>(k_v[0]);
  model.allow_variable_k_ = a_v[0] != 0.0;
  auto load_layer = [&](const std::string& name, Layer& layer) {
    auto [wr, wc, wv] = read_block(name + "_w");
    auto [br, bc, bv] = read_block(name + "_b");
    if (wr != layer.out || wc != layer.in || br != layer.out) {
      throw ConfigError("model shape mismatch for " + name);
    }
    layer.w = wv;
    layer.b = bv;
  };
  load_layer("enc1", model.enc1_);
  load_layer("enc2", model.enc2_);
  load_layer("dec1", model.dec1_);
  load_layer("dec2", model.dec2_);
  return model;
}

}  // namespace fscp
