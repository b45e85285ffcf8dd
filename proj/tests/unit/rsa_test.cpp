#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "geoprobe/dataset.hpp"
#include "geoprobe/error.hpp"
#include "geoprobe/rsa.hpp"
#include "support.hpp"

using namespace geoprobe;
using dataset::CountryCentroid;

namespace {

std::vector<CountryCentroid> centroids(std::initializer_list<std::tuple<const char*, double, double>> pts) {
  std::vector<CountryCentroid> out;
  for (const auto& [name, lat, lng] : pts) out.push_back({name, {lat, lng}});
  return out;
}

dataset::CityCatalog two_country_catalog() {
  std::istringstream in(
      "city,city_ascii,lat,lng,admin_name,country\n"
      "A1,A1,0,0,x,A\nA2,A2,1,1,x,A\nB1,B1,5,5,x,B\n");
  return dataset::parse_catalog(in);
}

activations::ActivationSet rows_for(std::vector<std::string> ids, std::vector<std::vector<float>> rows) {
  activations::ActivationSet s;
  s.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  s.city_ids = std::move(ids);
  return s;
}

rsa::DistanceMatrix matrix(std::vector<std::string> labels, Eigen::MatrixXd values) {
  return {std::move(labels), std::move(values), rsa::Metric::cosine};
}

}  // namespace

TEST(GeoMatrix, AntipodalPair) {
  const auto m = rsa::geo_distance_matrix(centroids({{"A", 0, 0}, {"B", 0, 180}}));
  EXPECT_NEAR(m.values(0, 1), M_PI * testsupport::kRadius, 1e-9);
  EXPECT_EQ(m.values(0, 0), 0.0);
  EXPECT_EQ(m.values(1, 0), m.values(0, 1));
}

TEST(GeoMatrix, MatchesGreatCircleOracle) {
  const auto c = centroids({{"A", 35.7, 139.7}, {"B", -34.6, -58.4}, {"C", 51.5, -0.1}, {"D", 40.7, -74.0}});
  const auto m = rsa::geo_distance_matrix(c);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double oracle = i == j ? 0.0
                                   : testsupport::great_circle_km(c[i].location.lat, c[i].location.lng,
                                                                  c[j].location.lat, c[j].location.lng);
      EXPECT_LT(std::abs(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - oracle), 1e-6);
    }
  EXPECT_EQ(m.labels, (std::vector<std::string>{"A", "B", "C", "D"}));
}

TEST(GeoMatrix, NeedsTwoCountries) {
  EXPECT_THROW(rsa::geo_distance_matrix(centroids({{"A", 0, 0}})), TooFewSamples);
}

TEST(CountryVectors, MeanOfMemberRows) {
  const auto catalog = two_country_catalog();
  const auto v = rsa::country_activation_vectors(rows_for({"A1", "A2", "B1"}, {{1, 2}, {3, 6}, {5, 5}}), catalog);
  ASSERT_EQ(catalog.countries, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(v.row(0), Eigen::RowVector2d(2, 4));
  EXPECT_EQ(v.row(1), Eigen::RowVector2d(5, 5));
}

TEST(CountryVectors, RowOrderDoesNotMatter) {
  const auto catalog = two_country_catalog();
  const auto a = rsa::country_activation_vectors(rows_for({"A1", "A2", "B1"}, {{1, 2}, {3, 6}, {5, 5}}), catalog);
  const auto b = rsa::country_activation_vectors(rows_for({"B1", "A2", "A1"}, {{5, 5}, {3, 6}, {1, 2}}), catalog);
  EXPECT_EQ(a, b);
}

TEST(CountryVectors, CountryWithoutRowsIsMissing) {
  const auto catalog = two_country_catalog();
  EXPECT_THROW(rsa::country_activation_vectors(rows_for({"A1", "A2"}, {{1, 2}, {3, 6}}), catalog), MissingCountry);
  EXPECT_THROW(rsa::country_activation_vectors(rows_for({"Z"}, {{1, 2}}), catalog), LabelError);
}

TEST(Metrics, IdenticalRowsAreAtZeroDistance) {
  Eigen::MatrixXd v(2, 3);
  v << 1, 2, 4, 1, 2, 4;
  for (auto metric : {rsa::Metric::cosine, rsa::Metric::one_minus_spearman})
    EXPECT_NEAR(rsa::activation_distance_matrix(v, {"a", "b"}, metric).values(0, 1), 0.0, 1e-12);
  EXPECT_EQ(rsa::activation_distance_matrix(v, {"a", "b"}, rsa::Metric::scaled_euclidean, rsa::Scaling::sqrt_d).values(0, 1), 0.0);
}

TEST(Metrics, OrthogonalRowsHaveCosineDistanceOne) {
  Eigen::MatrixXd v(2, 2);
  v << 1, 0, 0, 3;
  EXPECT_NEAR(rsa::activation_distance_matrix(v, {"a", "b"}, rsa::Metric::cosine).values(0, 1), 1.0, 1e-15);
}

TEST(Metrics, SpearmanDistance) {
  Eigen::MatrixXd v(2, 4);
  v << 1, 2, 3, 4, 4, 3, 2, 1;
  EXPECT_NEAR(rsa::activation_distance_matrix(v, {"a", "b"}, rsa::Metric::one_minus_spearman).values(0, 1), 2.0, 1e-12);
}

TEST(Metrics, ZscoreEuclideanOracle) {
  Eigen::MatrixXd v(3, 3);
  v << 1, 10, 7, 2, 30, 7, 6, 20, 7;
  const auto m = rsa::activation_distance_matrix(v, {"a", "b", "c"}, rsa::Metric::scaled_euclidean);
  // column 3 is constant and dropped; columns 1 and 2 standardized with population sd
  const double mean1 = 3.0, sd1 = std::sqrt((4.0 + 1.0 + 9.0) / 3.0);
  const double mean2 = 20.0, sd2 = std::sqrt((100.0 + 100.0 + 0.0) / 3.0);
  auto z = [&](int r) { return Eigen::Vector2d((v(r, 0) - mean1) / sd1, (v(r, 1) - mean2) / sd2); };
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(m.values(i, j), (z(i) - z(j)).norm(), 1e-12);
}

TEST(Metrics, SqrtDScaling) {
  Eigen::MatrixXd v(2, 4);
  v << 0, 0, 0, 0, 2, 2, 2, 2;
  EXPECT_NEAR(rsa::activation_distance_matrix(v, {"a", "b"}, rsa::Metric::scaled_euclidean, rsa::Scaling::sqrt_d).values(0, 1),
              2.0, 1e-12);
}

TEST(Metrics, ZeroNormUnderCosine) {
  Eigen::MatrixXd v(2, 2);
  v << 0, 0, 1, 1;
  EXPECT_THROW(rsa::activation_distance_matrix(v, {"a", "b"}, rsa::Metric::cosine), DegenerateInput);
  EXPECT_THROW(rsa::activation_distance_matrix(v, {"a", "b"}, rsa::Metric::geodesic), ConfigError);
  EXPECT_THROW(rsa::activation_distance_matrix(v.topRows(1), {"a"}, rsa::Metric::cosine), TooFewSamples);
}

TEST(Alignment, IdenticalMatricesGiveTauOne) {
  const auto geo = rsa::geo_distance_matrix(centroids({{"A", 0, 0}, {"B", 10, 10}, {"C", -20, 40}, {"D", 50, -70}}));
  const auto r = rsa::rsa_alignment(geo, geo);
  ASSERT_EQ(r.per_country.size(), 4u);
  for (const auto& c : r.per_country) EXPECT_EQ(c.tau.tau, 1.0);
  EXPECT_EQ(r.mean_tau, 1.0);
}

TEST(Alignment, MonotoneTransformPreservesTau) {
  const auto geo = rsa::geo_distance_matrix(centroids({{"A", 0, 0}, {"B", 10, 10}, {"C", -20, 40}, {"D", 50, -70}}));
  auto squared = geo;
  squared.values = geo.values.cwiseProduct(geo.values);
  auto scaled = geo;
  scaled.values = 3.5 * geo.values;
  EXPECT_EQ(rsa::rsa_alignment(geo, squared).mean_tau, 1.0);
  EXPECT_EQ(rsa::rsa_alignment(geo, scaled).mean_tau, 1.0);
}

TEST(Alignment, LabelsMustAgree) {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 2, 1, 0, 3, 2, 3, 0;
  EXPECT_THROW(rsa::rsa_alignment(matrix({"a", "b", "c"}, d), matrix({"a", "c", "b"}, d)), LabelError);
}

TEST(Alignment, RejectsInvalidMatrices) {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 2, 1, 0, 3, 2, 4, 0;
  EXPECT_THROW(matrix({"a", "b", "c"}, d).validate(), DegenerateInput);
  EXPECT_THROW(matrix({"a", "b"}, d).validate(), ShapeError);
  Eigen::MatrixXd ok(2, 2);
  ok << 0, 1, 1, 0;
  EXPECT_THROW(rsa::rsa_alignment(matrix({"a", "b"}, ok), matrix({"a", "b"}, ok)), TooFewSamples);
}

TEST(Alignment, IsometricEmbeddingAlignsStrongly) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1), lng(-180, 180);
  std::vector<CountryCentroid> c;
  Eigen::MatrixXd v(30, 3);
  std::vector<std::string> labels;
  for (int i = 0; i < 30; ++i) {
    const double lat = std::asin(u(rng)) * 180 / M_PI, lon = lng(rng);
    labels.push_back("C" + std::to_string(i));
    c.push_back({labels.back(), {lat, lon}});
    const double p = lat * M_PI / 180, l = lon * M_PI / 180;
    v.row(i) << std::cos(p) * std::cos(l), std::cos(p) * std::sin(l), std::sin(p);
  }
  const auto geo = rsa::geo_distance_matrix(c);
  for (auto metric : {rsa::Metric::cosine, rsa::Metric::scaled_euclidean}) {
    const auto act = rsa::activation_distance_matrix(v, labels, metric, rsa::Scaling::sqrt_d);
    EXPECT_GT(rsa::rsa_alignment(geo, act).mean_tau, 0.9) << rsa::metric_name(metric);
  }
}

TEST(Serialization, MatrixCsvAndReport) {
  Eigen::MatrixXd d(2, 2);
  d << 0, 1.5, 1.5, 0;
  const auto csv = rsa::matrix_to_csv(matrix({"a", "b, c"}, d));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,a,\"b, c\"");
  EXPECT_EQ(rsa::parse_metric("spearman"), rsa::Metric::one_minus_spearman);
  EXPECT_THROW(rsa::parse_metric("l1"), ConfigError);
}
