#include "geoprobe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "geoprobe/error.hpp"

namespace geoprobe::synthetic {

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

Eigen::MatrixXd random_orthogonal(Eigen::Index d, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(d, d, rng));
  Eigen::MatrixXd q = qr.householderQ();
  // Fix column signs so the result does not depend on the QR sign convention.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

const Eigen::Vector2d kScale(90.0, 180.0);

const std::vector<std::string> kFillers = {"the", "a", "of", "in", "and", "city", "is", "located"};

}  // namespace

SyntheticWorld::SyntheticWorld(dataset::CityCatalog catalog, SyntheticWorldConfig config)
    : catalog_(std::move(catalog)), config_(std::move(config)) {
  const Eigen::Index d = config_.d;
  if (catalog_.cities.empty()) throw EmptyCatalog("synthetic world needs at least one city");
  if (d < 3) throw ConfigError("synthetic hidden dimension must be at least 3");
  if (!(config_.noise_sigma >= 0.0) || !(config_.distractor_scale >= 0.0))
    throw ConfigError("noise scales must be non-negative");
  if (config_.layer_count < 1) throw ConfigError("layer_count must be at least 1");
  if (!(config_.mixing_condition >= 1.0 && config_.mixing_condition < 100.0))
    throw ConfigError("mixing condition number must lie in [1, 100)");

  std::mt19937_64 rng(splitmix(config_.seed));

  if (config_.kernel) {
    kernel_ = *config_.kernel;
    if (kernel_.rows() != 2 || kernel_.cols() != d) throw ShapeError("kernel override must be 2 x d");
    if (!(kernel_ * kernel_.transpose()).isApprox(Eigen::Matrix2d::Identity(), 1e-9))
      throw ConfigError("kernel override must have orthonormal rows");
  } else {
    kernel_ = random_orthogonal(d, rng).leftCols(2).transpose();
  }

  if (config_.mixing) {
    mixing_ = *config_.mixing;
    if (mixing_.rows() != d || mixing_.cols() != d) throw ShapeError("mixing override must be d x d");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(mixing_);
    if (!lu.isInvertible()) throw ConfigError("mixing override is singular");
    mixing_inv_ = lu.inverse();
  } else {
    const Eigen::MatrixXd q = random_orthogonal(d, rng);
    Eigen::VectorXd s(d);
    for (Eigen::Index i = 0; i < d; ++i)
      s(i) = std::pow(config_.mixing_condition, static_cast<double>(i) / static_cast<double>(d - 1));
    mixing_ = q * s.asDiagonal();
    mixing_inv_ = s.cwiseInverse().asDiagonal() * q.transpose();
  }
  decoder_ = kernel_ * mixing_inv_;

  if (config_.bias) {
    bias_ = *config_.bias;
    if (bias_.size() != d) throw ShapeError("bias override must have length d");
  } else {
    bias_ = Eigen::VectorXd::Zero(d);
  }
  readout_ = random_orthogonal(d, rng);

  centroids_ = dataset::country_centroids(catalog_);
  labels_.reserve(catalog_.cities.size());
  for (std::size_t i = 0; i < catalog_.cities.size(); ++i) {
    city_index_.emplace(catalog_.cities[i].display_name, i);
    labels_.push_back(nearest_country(catalog_.cities[i].location));
  }

  std::map<std::string, long> ids;
  for (const auto& centroid : centroids_) {
    const std::string word = first_token(centroid.country);
    auto [it, inserted] = ids.emplace(word, static_cast<long>(vocab_.size()));
    if (inserted) vocab_.push_back(word);
    country_token_.push_back(it->second);
  }
  for (const auto& filler : kFillers) {
    if (ids.emplace(filler, static_cast<long>(vocab_.size())).second) vocab_.push_back(filler);
  }
}

void SyntheticWorld::validate_layer(int layer) const {
  if (layer < 0 || layer > config_.layer_count) {
    throw LayerError("layer " + std::to_string(layer) + " outside 0.." + std::to_string(config_.layer_count));
  }
}

std::size_t SyntheticWorld::city_index(const std::string& display_name) const {
  auto it = city_index_.find(display_name);
  if (it == city_index_.end()) throw LabelError("unknown city: " + display_name);
  return it->second;
}

std::size_t SyntheticWorld::nearest_country(const geodesy::GeoPoint& p) const {
  std::size_t best = 0;
  double best_km = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids_.size(); ++c) {
    const double km = geodesy::haversine_km(p, centroids_[c].location);
    if (km < best_km) {
      best_km = km;
      best = c;
    }
  }
  return best;
}

std::uint64_t SyntheticWorld::city_seed(const std::string& display_name) const {
  return splitmix(fnv1a(display_name) ^ splitmix(config_.seed + 1));
}

Eigen::VectorXd SyntheticWorld::embed(const dataset::City& city, int layer) const {
  validate_layer(layer);
  const Eigen::Index d = config_.d;
  std::mt19937_64 rng(city_seed(city.display_name));
  const Eigen::VectorXd eps = gaussian(d, 1, rng, config_.noise_sigma);
  const Eigen::VectorXd delta = gaussian(d, 1, rng, config_.distractor_scale);

  const Eigen::Vector2d c(city.location.lat / 90.0, city.location.lng / 180.0);
  const Eigen::Vector2d belief = c + kernel_ * eps;
  const Eigen::VectorXd off_plane = (eps + delta) - kernel_.transpose() * (kernel_ * (eps + delta));
  const double g = static_cast<double>(layer + 1) / static_cast<double>(config_.layer_count + 1);
  const Eigen::VectorXd z = g * (kernel_.transpose() * belief) + bias_ + off_plane;
  return mixing_ * z;
}

Eigen::Vector2d SyntheticWorld::belief(const dataset::City& city) const {
  std::mt19937_64 rng(city_seed(city.display_name));
  const Eigen::VectorXd eps = gaussian(config_.d, 1, rng, config_.noise_sigma);
  const Eigen::Vector2d c(city.location.lat / 90.0, city.location.lng / 180.0);
  return (c + kernel_ * eps).cwiseProduct(kScale);
}

Eigen::Vector2d SyntheticWorld::decode(const Eigen::VectorXd& h, int layer) const {
  validate_layer(layer);
  if (h.size() != config_.d) throw ShapeError("activation has wrong dimension");
  const double g = static_cast<double>(layer + 1) / static_cast<double>(config_.layer_count + 1);
  const Eigen::Vector2d c = (decoder_ * h - kernel_ * bias_) / g;
  return c.cwiseProduct(kScale);
}

Eigen::Vector2d SyntheticWorld::decode_delta(const Eigen::VectorXd& delta, int layer) const {
  validate_layer(layer);
  if (delta.size() != config_.d) throw ShapeError("perturbation has wrong dimension");
  const double g = static_cast<double>(layer + 1) / static_cast<double>(config_.layer_count + 1);
  return (decoder_ * delta / g).cwiseProduct(kScale);
}

Eigen::VectorXd SyntheticWorld::downstream_from_belief(const Eigen::Vector2d& belief) const {
  const auto p = geodesy::canonicalize(belief(0), belief(1));
  Eigen::VectorXd out(static_cast<Eigen::Index>(centroids_.size()));
  for (std::size_t c = 0; c < centroids_.size(); ++c)
    out(static_cast<Eigen::Index>(c)) = -geodesy::haversine_km(p, centroids_[c].location);
  return out;
}

Eigen::VectorXd SyntheticWorld::token_logits_from_belief(const Eigen::Vector2d& belief) const {
  const Eigen::VectorXd by_country = downstream_from_belief(belief);
  const double floor = -2.0 * std::numbers::pi * geodesy::EarthModel{}.radius_km;
  Eigen::VectorXd out = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(vocab_.size()), floor);
  for (std::size_t c = 0; c < country_token_.size(); ++c) {
    const auto t = static_cast<Eigen::Index>(country_token_[c]);
    out(t) = std::max(out(t), by_country(static_cast<Eigen::Index>(c)));
  }
  return out;
}

Eigen::VectorXd SyntheticWorld::last_layer(const Eigen::VectorXd& h, int layer) const {
  const Eigen::Vector2d c = decode(h, layer).cwiseQuotient(kScale);
  const Eigen::VectorXd z = mixing_inv_ * h - bias_;
  const Eigen::VectorXd lifted = z - kernel_.transpose() * (kernel_ * z) + kernel_.transpose() * c;
  return (readout_ * lifted).array().tanh().matrix();
}

probes::Probe SyntheticWorld::exact_probe(int layer, probes::LossKind loss) const {
  validate_layer(layer);
  const double g = static_cast<double>(layer + 1) / static_cast<double>(config_.layer_count + 1);
  probes::DenseLayer dense;
  dense.weight = kScale.asDiagonal() * decoder_ / g;
  dense.bias = -(kScale.asDiagonal() * (kernel_ * bias_)) / g;
  probes::Probe probe;
  probe.spec = probes::ProbeSpec::linear(loss);
  probe.params.layers.push_back(std::move(dense));
  return probe;
}

long SyntheticWorld::token_id(const std::string& word) const {
  auto it = std::find(vocab_.begin(), vocab_.end(), word);
  return it == vocab_.end() ? -1 : static_cast<long>(it - vocab_.begin());
}

std::string SyntheticWorld::first_token(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = text.find_first_of(" \t\r\n", begin);
  return text.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

SyntheticBackend::SyntheticBackend(std::shared_ptr<const SyntheticWorld> world,
                                   std::shared_ptr<backend::ScratchSpace> scratch)
    : world_(std::move(world)), scratch_(std::move(scratch)) {
  if (!world_) throw ConfigError("synthetic backend needs a world");
  if (!scratch_) scratch_ = std::make_shared<backend::ScratchSpace>();
}

backend::BackendInfo SyntheticBackend::info() const {
  const auto& cfg = world_->config();
  return {cfg.model_id, cfg.layer_count, cfg.d, true};
}

const dataset::City& SyntheticBackend::city_for(const std::string& prompt) const {
  const std::string name = dataset::city_from_prompt(prompt);
  if (name.empty()) throw BackendError("prompt does not follow a known template: " + prompt);
  return world_->catalog().city(name);
}

std::map<int, backend::TensorRef> SyntheticBackend::extract(const std::vector<std::string>& prompts,
                                                            std::span<const int> layers,
                                                            backend::Pooling pooling) {
  if (prompts.empty()) throw EmptyInput("extract needs at least one prompt");
  if (layers.empty()) throw EmptyInput("extract needs at least one layer");
  for (int layer : layers) world_->validate_layer(layer);

  std::vector<const dataset::City*> cities;
  cities.reserve(prompts.size());
  for (const auto& prompt : prompts) cities.push_back(&city_for(prompt));

  std::map<int, backend::TensorRef> out;
  for (int layer : layers) {
    if (out.count(layer)) continue;
    activations::ActivationSet set;
    set.model_id = world_->config().model_id;
    set.layer = layer;
    set.pooling = pooling;
    set.values.resize(static_cast<Eigen::Index>(cities.size()), world_->config().d);
    for (std::size_t i = 0; i < cities.size(); ++i) {
      set.values.row(static_cast<Eigen::Index>(i)) = world_->embed(*cities[i], layer).cast<float>().transpose();
      set.city_ids.push_back(cities[i]->display_name);
    }
    out.emplace(layer, backend::write_tensor(*scratch_, "layer" + std::to_string(layer), set));
  }
  return out;
}

backend::ForwardResult SyntheticBackend::forward_from(int layer, const backend::TensorRef& activations,
                                                      backend::PositionMode, const std::vector<std::string>& prompts) {
  world_->validate_layer(layer);
  const auto set = activations.load();
  if (set.n() == 0) throw ShapeError("forward_from needs at least one activation row");
  if (set.n() != static_cast<Eigen::Index>(prompts.size()))
    throw ShapeError("forward_from got " + std::to_string(set.n()) + " rows for " + std::to_string(prompts.size()) +
                     " prompts");
  if (set.d() != world_->config().d) throw ShapeError("forward_from activation width does not match the model");

  const auto& vocab = world_->vocab();
  activations::ActivationSet last, logits;
  last.model_id = logits.model_id = world_->config().model_id;
  last.layer = logits.layer = world_->config().layer_count;
  last.pooling = logits.pooling = set.pooling;
  last.values.resize(set.n(), set.d());
  logits.values.resize(set.n(), static_cast<Eigen::Index>(vocab.size()));

  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto& city = city_for(prompts[i]);
    const Eigen::VectorXd h = set.values.row(row).transpose().cast<double>();
    const Eigen::VectorXd clean = world_->embed(city, layer).cast<float>().cast<double>();
    const Eigen::Vector2d belief = world_->belief(city) + world_->decode_delta(h - clean, layer);
    logits.values.row(row) = world_->token_logits_from_belief(belief).cast<float>().transpose();
    last.values.row(row) = world_->last_layer(h, layer).cast<float>().transpose();
    last.city_ids.push_back(city.display_name);
    logits.city_ids.push_back(city.display_name);
  }
  return {backend::write_tensor(*scratch_, "last", last), backend::write_tensor(*scratch_, "logits", logits)};
}

backend::NextTokenResult SyntheticBackend::next_token_logits(const std::vector<std::string>& prompts,
                                                             const std::vector<std::string>& labels) {
  if (prompts.empty()) throw EmptyInput("next_token_logits needs at least one prompt");
  if (!labels.empty() && labels.size() != prompts.size())
    throw ShapeError("labels must be empty or match the prompt count");

  const auto& vocab = world_->vocab();
  activations::ActivationSet logits;
  logits.model_id = world_->config().model_id;
  logits.layer = world_->config().layer_count;
  logits.values.resize(static_cast<Eigen::Index>(prompts.size()), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& city = city_for(prompts[i]);
    logits.values.row(static_cast<Eigen::Index>(i)) =
        world_->token_logits_from_belief(world_->belief(city)).cast<float>().transpose();
    logits.city_ids.push_back(city.display_name);
  }

  backend::NextTokenResult result;
  result.logits = backend::write_tensor(*scratch_, "next", logits);
  result.vocab_size = vocab.size();
  for (const auto& label : labels) {
    const std::string word = SyntheticWorld::first_token(label);
    result.label_token_ids.push_back(word.empty() ? -1 : world_->token_id(word));
  }
  return result;
}

dataset::CityCatalog make_synthetic_catalog(std::size_t countries, std::size_t cities_per_country,
                                            std::uint64_t seed, double spread_deg, double min_separation_km) {
  if (countries == 0 || cities_per_country == 0) throw ConfigError("synthetic catalog needs countries and cities");
  std::mt19937_64 rng(splitmix(seed ^ 0x5eedULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, spread_deg);

  const double lo = std::sin(-55.0 * std::numbers::pi / 180.0);
  const double hi = std::sin(70.0 * std::numbers::pi / 180.0);
  std::vector<geodesy::GeoPoint> centres;
  std::size_t attempts = 0;
  while (centres.size() < countries) {
    if (++attempts > 200000) throw ConfigError("cannot place that many separated country centres");
    const double lat = std::asin(lo + (hi - lo) * unit(rng)) * 180.0 / std::numbers::pi;
    const double lng = -180.0 + 360.0 * unit(rng);
    const auto p = geodesy::canonicalize(lat, lng);
    const bool clear = std::all_of(centres.begin(), centres.end(),
                                   [&](const auto& c) { return geodesy::haversine_km(p, c) >= min_separation_km; });
    if (clear) centres.push_back(p);
  }

  auto name_of = [](const char* fmt, std::size_t a, std::size_t b = 0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, a, b);
    return std::string(buf);
  };

  dataset::CityCatalog catalog;
  catalog.seed = seed;
  std::map<std::string, std::size_t> counts;
  for (std::size_t c = 0; c < countries; ++c) {
    const double coslat = std::max(0.2, std::cos(centres[c].lat * std::numbers::pi / 180.0));
    for (std::size_t j = 0; j < cities_per_country; ++j) {
      const double lat = std::clamp(centres[c].lat + normal(rng), -89.0, 89.0);
      const double lng = centres[c].lng + normal(rng) / coslat;
      dataset::City city;
      city.location = geodesy::canonicalize(lat, lng);
      std::size_t nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < countries; ++k) {
        const double km = geodesy::haversine_km(city.location, centres[k]);
        if (km < best) {
          best = km;
          nearest = k;
        }
      }
      city.name = city.name_ascii = city.display_name = name_of("Cty%02zu-%03zu", c, j);
      city.country = name_of("Land%02zu", nearest);
      city.admin_name = city.country + " Province";
      ++counts[city.country];
      catalog.cities.push_back(std::move(city));
    }
  }
  for (const auto& [name, count] : counts) catalog.countries.push_back(name);
  std::stable_sort(catalog.countries.begin(), catalog.countries.end(),
                   [&](const auto& a, const auto& b) { return counts[a] > counts[b]; });
  return catalog;
}

}  // namespace geoprobe::synthetic
