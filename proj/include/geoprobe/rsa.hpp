#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "geoprobe/activations.hpp"
#include "geoprobe/dataset.hpp"
#include "geoprobe/stats.hpp"

namespace geoprobe::rsa {

enum class Metric { geodesic, one_minus_spearman, cosine, scaled_euclidean };

std::string_view metric_name(Metric metric) noexcept;
Metric parse_metric(std::string_view name);

/// How scaled_euclidean normalizes dimensions: z-score across the N vectors (dropping
/// constant dimensions), or plain Euclidean divided by sqrt(d).
enum class Scaling { zscore, sqrt_d };

struct DistanceMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;
  Metric metric = Metric::geodesic;

  std::size_t size() const { return labels.size(); }
  /// Throws ShapeError / DegenerateInput when the matrix is not a valid distance matrix.
  void validate() const;
};

struct CountryTau {
  std::string country;
  stats::TauResult tau;
};

struct RsaReport {
  std::vector<CountryTau> per_country;
  double mean_tau = 0.0;
  Metric metric = Metric::cosine;
  std::string model_id;
  int layer = 0;
};

DistanceMatrix geo_distance_matrix(const std::vector<dataset::CountryCentroid>& centroids);

/// Mean activation row per catalog country, rows in catalog.countries order.
Eigen::MatrixXd country_activation_vectors(const activations::ActivationSet& set, const dataset::CityCatalog& catalog);

DistanceMatrix activation_distance_matrix(const Eigen::MatrixXd& vectors, std::vector<std::string> labels,
                                          Metric metric, Scaling scaling = Scaling::zscore);

RsaReport rsa_alignment(const DistanceMatrix& geo, const DistanceMatrix& act);

std::string report_to_json(const RsaReport& report);
/// Header row and column of labels, values in label order.
std::string matrix_to_csv(const DistanceMatrix& matrix);

}  // namespace geoprobe::rsa
