#pragma once

// A deterministic synthetic "model" with a planted spatial representation.
//
// At layer l a city with normalized coordinates c = (lat/90, lng/180) is embedded as
//
//   h_l = M (g_l W^T c + b + eps + P delta),   g_l = (l + 1) / (L + 1)
//
// where W (2 x d) has orthonormal rows, M (d x d) is an invertible mixing map,
// eps ~ N(0, sigma^2 I) and delta ~ N(0, s^2 I) are fixed per city, and P projects onto
// the orthogonal complement of W's rows. The signal-plane part of eps is scaled with
// g_l as well, so every layer decodes to the same noisy belief c + W eps.
//
// Country logits are negative haversine distances (km) from the decoded belief to each
// country centroid; the ground-truth partition is nearest-centroid over true coordinates.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "geoprobe/backend.hpp"
#include "geoprobe/dataset.hpp"
#include "geoprobe/head.hpp"
#include "geoprobe/probes.hpp"

namespace geoprobe::synthetic {

struct SyntheticWorldConfig {
  Eigen::Index d = 64;
  double noise_sigma = 0.01;
  double distractor_scale = 1.0;
  double mixing_condition = 10.0;  ///< condition number of M, must be < 100
  int layer_count = 12;
  std::uint64_t seed = 0;
  std::string model_id = "synthetic";

  // Explicit overrides for tests.
  std::optional<Eigen::MatrixXd> kernel;  ///< W, 2 x d with orthonormal rows
  std::optional<Eigen::MatrixXd> mixing;  ///< M, d x d
  std::optional<Eigen::VectorXd> bias;    ///< b, defaults to zero
};

class SyntheticWorld {
 public:
  SyntheticWorld(dataset::CityCatalog catalog, SyntheticWorldConfig config);

  const dataset::CityCatalog& catalog() const { return catalog_; }
  const SyntheticWorldConfig& config() const { return config_; }
  const std::vector<dataset::CountryCentroid>& centroids() const { return centroids_; }
  const Eigen::MatrixXd& kernel() const { return kernel_; }
  const Eigen::MatrixXd& mixing() const { return mixing_; }
  int planted_layer() const { return config_.layer_count; }

  /// Nearest-centroid country index per catalog city (true coordinates).
  const std::vector<std::size_t>& labels() const { return labels_; }
  std::size_t city_index(const std::string& display_name) const;  // throws LabelError
  std::size_t nearest_country(const geodesy::GeoPoint& p) const;

  Eigen::VectorXd embed(const dataset::City& city) const { return embed(city, planted_layer()); }
  Eigen::VectorXd embed(const dataset::City& city, int layer) const;

  /// Noisy belief (lat, lng) in raw degrees carried by the city's embedding.
  Eigen::Vector2d belief(const dataset::City& city) const;

  /// Raw (lat, lng) decoded from an activation at the given layer.
  Eigen::Vector2d decode(const Eigen::VectorXd& h, int layer) const;
  Eigen::Vector2d decode(const Eigen::VectorXd& h) const { return decode(h, planted_layer()); }

  /// Linear part of decode (no bias), for propagating a perturbation.
  Eigen::Vector2d decode_delta(const Eigen::VectorXd& delta, int layer) const;

  /// -haversine_km(decoded belief, centroid_c) for every country c.
  Eigen::VectorXd downstream(const Eigen::VectorXd& h) const { return downstream_from_belief(decode(h)); }
  Eigen::VectorXd downstream_from_belief(const Eigen::Vector2d& belief) const;

  /// Maps a layer-l activation to the final layer state (squashed, deterministic).
  Eigen::VectorXd last_layer(const Eigen::VectorXd& h, int layer) const;

  /// Linear probe equal to the closed-form inverse of the planted map at a layer.
  probes::Probe exact_probe(int layer, probes::LossKind loss) const;

  // Next-token vocabulary: first word of every country name, then filler tokens.
  const std::vector<std::string>& vocab() const { return vocab_; }
  long token_id(const std::string& word) const;
  static std::string first_token(const std::string& text);
  Eigen::VectorXd token_logits_from_belief(const Eigen::Vector2d& belief) const;

  void validate_layer(int layer) const;  // throws LayerError

 private:
  std::uint64_t city_seed(const std::string& display_name) const;

  dataset::CityCatalog catalog_;
  SyntheticWorldConfig config_;
  std::vector<dataset::CountryCentroid> centroids_;
  std::vector<std::size_t> labels_;
  std::unordered_map<std::string, std::size_t> city_index_;
  Eigen::MatrixXd kernel_;
  Eigen::MatrixXd mixing_;
  Eigen::MatrixXd mixing_inv_;
  Eigen::MatrixXd decoder_;  ///< W M^-1
  Eigen::VectorXd bias_;
  Eigen::MatrixXd readout_;  ///< orthogonal map applied before the final squashing
  std::vector<std::string> vocab_;
  std::vector<long> country_token_;
};

/// Country head reading the planted decode path (nearest-centroid logits).
class DownstreamHead final : public CountryHead {
 public:
  explicit DownstreamHead(const SyntheticWorld& world) : DownstreamHead(world, world.planted_layer()) {}
  /// Reads activations taken at `layer` instead of the planted layer.
  DownstreamHead(const SyntheticWorld& world, int layer) : world_(world), layer_(layer) { world.validate_layer(layer); }
  Eigen::VectorXd logits(const Eigen::VectorXd& h) const override {
    return world_.downstream_from_belief(world_.decode(h, layer_));
  }
  std::size_t num_classes() const override { return world_.centroids().size(); }

 private:
  const SyntheticWorld& world_;
  int layer_;
};

/// In-process backend over a synthetic world. Prompts must follow one of the two
/// dataset prompt templates; pooling is recorded but every mode yields the same vector.
class SyntheticBackend final : public backend::Backend {
 public:
  SyntheticBackend(std::shared_ptr<const SyntheticWorld> world, std::shared_ptr<backend::ScratchSpace> scratch);

  backend::BackendInfo info() const override;
  std::map<int, backend::TensorRef> extract(const std::vector<std::string>& prompts, std::span<const int> layers,
                                            backend::Pooling pooling) override;
  backend::ForwardResult forward_from(int layer, const backend::TensorRef& activations, backend::PositionMode mode,
                                      const std::vector<std::string>& prompts) override;
  backend::NextTokenResult next_token_logits(const std::vector<std::string>& prompts,
                                             const std::vector<std::string>& labels) override;

  const SyntheticWorld& world() const { return *world_; }

 private:
  const dataset::City& city_for(const std::string& prompt) const;

  std::shared_ptr<const SyntheticWorld> world_;
  std::shared_ptr<backend::ScratchSpace> scratch_;
};

/// Generates a catalog of `countries` compact clusters of `cities_per_country` cities.
/// Centres are spread over latitudes [-55, 70] at least `min_separation_km` apart; every
/// city is assigned to its nearest centre.
dataset::CityCatalog make_synthetic_catalog(std::size_t countries, std::size_t cities_per_country,
                                            std::uint64_t seed, double spread_deg = 4.0,
                                            double min_separation_km = 1500.0);

}  // namespace geoprobe::synthetic
