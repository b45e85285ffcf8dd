#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "geoprobe/dataset.hpp"
#include "geoprobe/error.hpp"
#include "geoprobe/synthetic.hpp"
#include "support.hpp"

using namespace geoprobe;
using synthetic::SyntheticWorld;
using synthetic::SyntheticWorldConfig;

namespace {

const std::string kData = GEOPROBE_TEST_DATA;

dataset::CityCatalog fixture() { return dataset::load_catalog(kData + "/worldcities_sample.csv"); }

dataset::CityCatalog twin_catalog() {
  std::istringstream in(
      "city,city_ascii,lat,lng,admin_name,country\n"
      "Alpha,Alpha,45,90,x,P\nBeta,Beta,45,90,x,P\nGamma,Gamma,-30,-60,x,Q\n");
  return dataset::parse_catalog(in);
}

SyntheticWorldConfig identity_config(double noise, double distractor) {
  SyntheticWorldConfig cfg;
  cfg.d = 3;
  cfg.noise_sigma = noise;
  cfg.distractor_scale = distractor;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 3);
  w(0, 0) = w(1, 1) = 1.0;
  cfg.kernel = w;
  cfg.mixing = Eigen::MatrixXd::Identity(3, 3);
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> prompts_for(const dataset::CityCatalog& c, dataset::PromptTemplate t) {
  std::vector<std::string> out;
  for (const auto& city : c.cities) out.push_back(dataset::build_prompt(city, t));
  return out;
}

Eigen::Index argmax(const Eigen::VectorXd& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return i;
}

}  // namespace

TEST(Embedding, IdentityMapsCarryNormalizedCoordinates) {
  const SyntheticWorld world(twin_catalog(), identity_config(0.0, 0.0));
  const auto& city = world.catalog().city("Gamma");
  const Eigen::VectorXd h = world.embed(city);
  EXPECT_DOUBLE_EQ(h(0), -30.0 / 90.0);
  EXPECT_DOUBLE_EQ(h(1), -60.0 / 180.0);
  EXPECT_EQ(h(2), 0.0);
}

TEST(Embedding, LayerGainScalesSignal) {
  auto cfg = identity_config(0.0, 0.0);
  cfg.layer_count = 3;
  const SyntheticWorld world(twin_catalog(), cfg);
  const auto& city = world.catalog().city("Alpha");
  EXPECT_DOUBLE_EQ(world.embed(city, 1)(0), 0.5 * 0.5);
  EXPECT_DOUBLE_EQ(world.embed(city, 3)(0), 0.5);
  for (int layer = 0; layer <= 3; ++layer) {
    const Eigen::Vector2d b = world.decode(world.embed(city, layer), layer);
    EXPECT_NEAR(b(0), 45.0, 1e-12);
    EXPECT_NEAR(b(1), 90.0, 1e-12);
  }
}

TEST(Embedding, SameCoordinatesDifferOnlyOffPlane) {
  const SyntheticWorld world(twin_catalog(), identity_config(0.0, 1.0));
  const Eigen::VectorXd a = world.embed(world.catalog().city("Alpha"));
  const Eigen::VectorXd b = world.embed(world.catalog().city("Beta"));
  EXPECT_NEAR(a(0), b(0), 1e-15);
  EXPECT_NEAR(a(1), b(1), 1e-15);
  EXPECT_NE(a(2), b(2));
}

TEST(Embedding, DecodeRecoversBeliefWithinNoise) {
  SyntheticWorldConfig cfg;
  cfg.d = 32;
  cfg.noise_sigma = 0.01;
  const SyntheticWorld world(fixture(), cfg);
  for (const auto& city : world.catalog().cities) {
    const Eigen::Vector2d decoded = world.decode(world.embed(city));
    EXPECT_LT((decoded - world.belief(city)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(std::abs(decoded(0) - city.location.lat), 4 * cfg.noise_sigma * 90.0) << city.display_name;
    EXPECT_LT(std::abs(decoded(1) - city.location.lng), 4 * cfg.noise_sigma * 180.0) << city.display_name;
  }
}

TEST(Embedding, ExactProbeInvertsPlantedMap) {
  const SyntheticWorld world(fixture(), SyntheticWorldConfig{});
  for (int layer : {0, 5, 12}) {
    const auto probe = world.exact_probe(layer, probes::LossKind::mse);
    for (const auto& city : world.catalog().cities) {
      const Eigen::VectorXd h = world.embed(city, layer);
      EXPECT_LT((probes::probe_predict(probe, h) - world.decode(h, layer)).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Downstream, NoiselessArgmaxIsNearestCentroid) {
  SyntheticWorldConfig cfg;
  cfg.d = 16;
  cfg.noise_sigma = 0.0;
  const SyntheticWorld world(synthetic::make_synthetic_catalog(8, 10, 3), cfg);
  for (std::size_t i = 0; i < world.catalog().cities.size(); ++i)
    EXPECT_EQ(static_cast<std::size_t>(argmax(world.downstream(world.embed(world.catalog().cities[i])))), world.labels()[i]);
}

TEST(Downstream, BuenosAiresScoresArgentinaAboveJapan) {
  const SyntheticWorld world(fixture(), SyntheticWorldConfig{});
  const auto logits = world.downstream(world.embed(world.catalog().city("Buenos Aires")));
  const auto& c = world.catalog();
  EXPECT_GT(logits(static_cast<Eigen::Index>(c.country_index("Argentina"))),
            logits(static_cast<Eigen::Index>(c.country_index("Japan"))));
}

TEST(Downstream, InvariantToOffPlanePerturbations) {
  SyntheticWorldConfig cfg;
  cfg.d = 12;
  const SyntheticWorld world(fixture(), cfg);
  const Eigen::VectorXd h = world.embed(world.catalog().city("Tokyo"));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd v(12);
    for (auto& x : v) x = g(rng);
    v -= world.kernel().transpose() * (world.kernel() * v);
    const Eigen::VectorXd moved = h + world.mixing() * (5.0 * v);
    EXPECT_LT((world.downstream(moved) - world.downstream(h)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Downstream, LogitIsNegativeGreatCircleDistance) {
  const SyntheticWorld world(fixture(), SyntheticWorldConfig{});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lat(-80, 80), lng(-180, 180);
  for (int t = 0; t < 50; ++t) {
    const Eigen::Vector2d b(lat(rng), lng(rng));
    const Eigen::VectorXd logits = world.downstream_from_belief(b);
    for (std::size_t c = 0; c < world.centroids().size(); ++c) {
      const auto& p = world.centroids()[c].location;
      EXPECT_NEAR(logits(static_cast<Eigen::Index>(c)), -testsupport::great_circle_km(b(0), b(1), p.lat, p.lng), 1e-6);
    }
  }
}

TEST(Construction, KernelOrthonormalAndMixingWellConditioned) {
  const SyntheticWorld world(fixture(), SyntheticWorldConfig{});
  EXPECT_TRUE((world.kernel() * world.kernel().transpose()).isApprox(Eigen::Matrix2d::Identity(), 1e-12));
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(world.mixing());
  const auto& s = svd.singularValues();
  EXPECT_LT(s(0) / s(s.size() - 1), 100.0);
  auto bad = SyntheticWorldConfig{};
  bad.mixing_condition = 150;
  EXPECT_THROW(SyntheticWorld(fixture(), bad), ConfigError);
  auto skew = identity_config(0, 0);
  skew.kernel->row(1) *= 2.0;
  EXPECT_THROW(SyntheticWorld(twin_catalog(), skew), ConfigError);
}

TEST(Construction, SyntheticCatalogIsDeterministic) {
  const auto c = synthetic::make_synthetic_catalog(6, 5, 2);
  EXPECT_EQ(c.cities.size(), 30u);
  EXPECT_EQ(c.countries.size(), 6u);
  EXPECT_EQ(dataset::catalog_to_json(c), dataset::catalog_to_json(synthetic::make_synthetic_catalog(6, 5, 2)));
}

class SyntheticBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    world_ = std::make_shared<const SyntheticWorld>(fixture(), SyntheticWorldConfig{});
    scratch_ = std::make_shared<backend::ScratchSpace>(testsupport::fresh_dir("scratch"));
    backend_ = std::make_unique<synthetic::SyntheticBackend>(world_, scratch_);
  }

  std::shared_ptr<const SyntheticWorld> world_;
  std::shared_ptr<backend::ScratchSpace> scratch_;
  std::unique_ptr<synthetic::SyntheticBackend> backend_;
};

TEST_F(SyntheticBackendTest, ExtractShapeAndDeterminism) {
  const auto prompts = prompts_for(world_->catalog(), dataset::PromptTemplate::coords);
  const std::vector<int> layers{0, 12, 12};
  const auto a = backend_->extract(prompts, layers, backend::Pooling::mean_nonpad);
  ASSERT_EQ(a.size(), 2u);
  const auto set = a.at(12).load();
  EXPECT_EQ(set.n(), static_cast<Eigen::Index>(prompts.size()));
  EXPECT_EQ(set.d(), 64);
  EXPECT_EQ(set.city_ids[0], world_->catalog().cities[0].display_name);
  const auto b = backend_->extract(prompts, layers, backend::Pooling::mean_nonpad);
  EXPECT_NE(a.at(12).path, b.at(12).path);
  EXPECT_EQ(slurp(a.at(12).path), slurp(b.at(12).path));
}

TEST_F(SyntheticBackendTest, ExtractRejectsBadRequests) {
  const std::vector<std::string> prompts{dataset::build_prompt("Tokyo", dataset::PromptTemplate::coords)};
  const std::vector<int> too_deep{13}, none;
  EXPECT_THROW(backend_->extract(prompts, too_deep, backend::Pooling::mean_nonpad), LayerError);
  EXPECT_THROW(backend_->extract({}, std::vector<int>{1}, backend::Pooling::mean_nonpad), EmptyInput);
  EXPECT_THROW(backend_->extract(prompts, none, backend::Pooling::mean_nonpad), EmptyInput);
  EXPECT_THROW(backend_->extract({"What is Tokyo?"}, std::vector<int>{1}, backend::Pooling::mean_nonpad), BackendError);
}

TEST_F(SyntheticBackendTest, UnchangedInjectionReproducesNextTokenLogits) {
  const auto prompts = prompts_for(world_->catalog(), dataset::PromptTemplate::country);
  for (int layer : {3, 12}) {
    const auto refs = backend_->extract(prompts, std::vector<int>{layer}, backend::Pooling::last_city_token);
    const auto fwd = backend_->forward_from(layer, refs.at(layer), backend::PositionMode::last_city_token, prompts);
    const auto next = backend_->next_token_logits(prompts, {});
    const auto a = fwd.logits.load(), b = next.logits.load();
    EXPECT_EQ(a.values, b.values) << "layer " << layer;
  }
}

TEST_F(SyntheticBackendTest, InjectionFollowsPlantedPath) {
  const std::vector<std::string> prompts{dataset::build_prompt("Tokyo", dataset::PromptTemplate::country)};
  const int layer = 6;
  const auto refs = backend_->extract(prompts, std::vector<int>{layer}, backend::Pooling::last_city_token);
  auto set = refs.at(layer).load();
  const auto& tokyo = world_->catalog().city("Tokyo");
  const auto& ba = world_->catalog().city("Buenos Aires");
  const double g = (layer + 1.0) / 13.0;
  const Eigen::Vector2d shift((ba.location.lat - tokyo.location.lat) / 90.0, (ba.location.lng - tokyo.location.lng) / 180.0);
  const Eigen::VectorXd delta = world_->mixing() * (g * (world_->kernel().transpose() * shift));
  set.values.row(0) += delta.cast<float>().transpose();
  const auto moved = backend::write_tensor(*scratch_, "moved", set);
  const auto logits = backend_->forward_from(layer, moved, backend::PositionMode::last_city_token, prompts).logits.load();

  const Eigen::Vector2d expected_belief = world_->belief(tokyo) + shift.cwiseProduct(Eigen::Vector2d(90, 180));
  const Eigen::VectorXd expected = world_->token_logits_from_belief(expected_belief);
  EXPECT_LT((logits.values.row(0).transpose().cast<double>() - expected).cwiseAbs().maxCoeff(), 1.0);
  Eigen::Index top = 0;
  logits.values.row(0).maxCoeff(&top);
  EXPECT_EQ(world_->vocab()[static_cast<std::size_t>(top)], "Argentina");
}

TEST_F(SyntheticBackendTest, ForwardFromShapeChecks) {
  const auto prompts = prompts_for(world_->catalog(), dataset::PromptTemplate::country);
  const auto refs = backend_->extract(prompts, std::vector<int>{12}, backend::Pooling::mean_nonpad);
  const std::vector<std::string> one{prompts[0]};
  EXPECT_THROW(backend_->forward_from(12, refs.at(12), backend::PositionMode::pooled, one), ShapeError);

  activations::ActivationSet empty;
  empty.values.resize(0, 64);
  EXPECT_THROW(backend_->forward_from(12, backend::write_tensor(*scratch_, "empty", empty),
                                      backend::PositionMode::pooled, {}),
               ShapeError);

  activations::ActivationSet narrow;
  narrow.values = activations::RowMatrixF::Zero(1, 8);
  narrow.city_ids = {"Tokyo"};
  EXPECT_THROW(backend_->forward_from(12, backend::write_tensor(*scratch_, "narrow", narrow),
                                      backend::PositionMode::pooled, one),
               ShapeError);
  EXPECT_THROW(backend_->forward_from(13, refs.at(12), backend::PositionMode::pooled, prompts), LayerError);
}

TEST_F(SyntheticBackendTest, LabelTokenIds) {
  const std::vector<std::string> prompts{dataset::build_prompt("Tokyo", dataset::PromptTemplate::country),
                                         dataset::build_prompt("Toronto", dataset::PromptTemplate::country),
                                         dataset::build_prompt("Madrid", dataset::PromptTemplate::country)};
  const auto r = backend_->next_token_logits(prompts, {"Japan", "Canada", "  "});
  EXPECT_EQ(r.vocab_size, world_->vocab().size());
  EXPECT_EQ(r.label_token_ids[0], world_->token_id("Japan"));
  EXPECT_EQ(r.label_token_ids[1], world_->token_id("Canada"));
  EXPECT_EQ(r.label_token_ids[2], -1);
  EXPECT_THROW(backend_->next_token_logits(prompts, {"Japan"}), ShapeError);
  const auto info = backend_->info();
  EXPECT_EQ(info.layer_count, 12);
  EXPECT_EQ(info.hidden_dim, 64);
}
