#include "geoprobe/rsa.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "geoprobe/error.hpp"

namespace geoprobe::rsa {

std::string_view metric_name(Metric metric) noexcept {
  switch (metric) {
    case Metric::geodesic: return "geodesic";
    case Metric::one_minus_spearman: return "one_minus_spearman";
    case Metric::cosine: return "cosine";
    case Metric::scaled_euclidean: return "scaled_euclidean";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  if (name == "geodesic") return Metric::geodesic;
  if (name == "one_minus_spearman" || name == "spearman") return Metric::one_minus_spearman;
  if (name == "cosine") return Metric::cosine;
  if (name == "scaled_euclidean" || name == "euclidean") return Metric::scaled_euclidean;
  throw ConfigError("unknown distance metric: " + std::string(name));
}

void DistanceMatrix::validate() const {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (values.rows() != n || values.cols() != n) throw ShapeError("distance matrix does not match its labels");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values(i, i) != 0.0) throw DegenerateInput("distance matrix has a non-zero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::isfinite(values(i, j)) || values(i, j) < 0.0)
        throw DegenerateInput("distance matrix has a negative or non-finite entry");
      if (values(i, j) != values(j, i)) throw DegenerateInput("distance matrix is not symmetric");
    }
  }
}

namespace {

// Fills the upper triangle from f and mirrors it; tiny negative round-off is clamped.
template <typename F>
Eigen::MatrixXd symmetric_from(Eigen::Index n, F&& f) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = f(i, j);
      if (v < 0.0 && v > -1e-12) v = 0.0;
      m(i, j) = m(j, i) = v;
    }
  }
  return m;
}

}  // namespace

DistanceMatrix geo_distance_matrix(const std::vector<dataset::CountryCentroid>& centroids) {
  if (centroids.size() < 2) throw TooFewSamples("distance matrix needs at least 2 countries");
  DistanceMatrix out;
  out.metric = Metric::geodesic;
  for (const auto& c : centroids) out.labels.push_back(c.country);
  out.values = symmetric_from(static_cast<Eigen::Index>(centroids.size()), [&](Eigen::Index i, Eigen::Index j) {
    return geodesy::haversine_km(centroids[static_cast<std::size_t>(i)].location,
                                 centroids[static_cast<std::size_t>(j)].location);
  });
  out.validate();
  return out;
}

Eigen::MatrixXd country_activation_vectors(const activations::ActivationSet& set,
                                           const dataset::CityCatalog& catalog) {
  if (static_cast<Eigen::Index>(set.city_ids.size()) != set.n())
    throw ShapeError("activation set rows and city ids disagree");
  std::unordered_map<std::string, std::size_t> country_of;
  for (const auto& city : catalog.cities) country_of.emplace(city.display_name, catalog.country_index(city.country));

  const auto n_countries = static_cast<Eigen::Index>(catalog.countries.size());
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_countries, set.d());
  std::vector<std::size_t> counts(catalog.countries.size(), 0);
  for (Eigen::Index r = 0; r < set.n(); ++r) {
    auto it = country_of.find(set.city_ids[static_cast<std::size_t>(r)]);
    if (it == country_of.end()) throw LabelError("activation row for unknown city " + set.city_ids[static_cast<std::size_t>(r)]);
    sums.row(static_cast<Eigen::Index>(it->second)) += set.values.row(r).cast<double>();
    ++counts[it->second];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw MissingCountry("no activations for country " + catalog.countries[c]);
    sums.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  }
  return sums;
}

DistanceMatrix activation_distance_matrix(const Eigen::MatrixXd& vectors, std::vector<std::string> labels,
                                          Metric metric, Scaling scaling) {
  const Eigen::Index n = vectors.rows();
  if (n < 2) throw TooFewSamples("distance matrix needs at least 2 vectors");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("one label per vector required");
  if (metric == Metric::geodesic) throw ConfigError("geodesic metric applies to centroids, not activations");

  DistanceMatrix out;
  out.labels = std::move(labels);
  out.metric = metric;

  switch (metric) {
    case Metric::one_minus_spearman: {
      std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)].assign(vectors.row(i).begin(), vectors.row(i).end());
      out.values = symmetric_from(n, [&](Eigen::Index i, Eigen::Index j) {
        return 1.0 - stats::spearman_rho(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
      });
      break;
    }
    case Metric::cosine: {
      const Eigen::VectorXd norms = vectors.rowwise().norm();
      for (Eigen::Index i = 0; i < n; ++i)
        if (!(norms(i) > 0.0)) throw DegenerateInput("zero-norm vector under cosine distance: " + out.labels[static_cast<std::size_t>(i)]);
      out.values = symmetric_from(n, [&](Eigen::Index i, Eigen::Index j) {
        return 1.0 - vectors.row(i).dot(vectors.row(j)) / (norms(i) * norms(j));
      });
      break;
    }
    case Metric::scaled_euclidean: {
      Eigen::MatrixXd scaled;
      if (scaling == Scaling::zscore) {
        const Eigen::RowVectorXd mean = vectors.colwise().mean();
        const Eigen::MatrixXd centered = vectors.rowwise() - mean;
        const Eigen::RowVectorXd sd = (centered.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
        std::vector<Eigen::Index> keep;
        for (Eigen::Index k = 0; k < vectors.cols(); ++k)
          if (sd(k) > 0.0) keep.push_back(k);
        scaled.resize(n, static_cast<Eigen::Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c)
          scaled.col(static_cast<Eigen::Index>(c)) = centered.col(keep[c]) / sd(keep[c]);
      } else {
        scaled = vectors / std::sqrt(static_cast<double>(vectors.cols()));
      }
      out.values = symmetric_from(n, [&](Eigen::Index i, Eigen::Index j) { return (scaled.row(i) - scaled.row(j)).norm(); });
      break;
    }
    case Metric::geodesic: break;
  }
  out.validate();
  return out;
}

RsaReport rsa_alignment(const DistanceMatrix& geo, const DistanceMatrix& act) {
  if (geo.labels != act.labels) throw LabelError("distance matrices have different labels or order");
  geo.validate();
  act.validate();
  const auto n = static_cast<Eigen::Index>(geo.size());
  if (n < 3) throw TooFewSamples("alignment needs at least 3 countries");

  RsaReport report;
  report.metric = act.metric;
  std::vector<double> g, a;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    g.clear();
    a.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      g.push_back(geo.values(i, j));
      a.push_back(act.values(i, j));
    }
    auto tau = stats::kendall_tau(g, a);
    total += tau.tau;
    report.per_country.push_back({geo.labels[static_cast<std::size_t>(i)], tau});
  }
  report.mean_tau = total / static_cast<double>(n);
  return report;
}

std::string report_to_json(const RsaReport& report) {
  nlohmann::json countries = nlohmann::json::array();
  for (const auto& c : report.per_country) {
    countries.push_back({{"country", c.country},
                         {"tau", c.tau.tau},
                         {"p_value", c.tau.p_value},
                         {"n_pairs", c.tau.n_pairs}});
  }
  const nlohmann::json j = {{"format", "geoprobe.rsa"},
                            {"version", 1},
                            {"metric", metric_name(report.metric)},
                            {"model_id", report.model_id},
                            {"layer", report.layer},
                            {"mean_tau", report.mean_tau},
                            {"countries", std::move(countries)}};
  return j.dump(2);
}

std::string matrix_to_csv(const DistanceMatrix& matrix) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
      if (ch == '"') out += '"';
      out += ch;
    }
    return out + '"';
  };
  std::ostringstream os;
  os.precision(17);
  os << "label";
  for (const auto& l : matrix.labels) os << ',' << quote(l);
  os << '\n';
  for (std::size_t i = 0; i < matrix.labels.size(); ++i) {
    os << quote(matrix.labels[i]);
    for (std::size_t j = 0; j < matrix.labels.size(); ++j)
      os << ',' << matrix.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    os << '\n';
  }
  return os.str();
}

}  // namespace geoprobe::rsa
