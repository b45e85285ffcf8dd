#include <sstream>

#include <gtest/gtest.h>

#include "geoprobe/dataset.hpp"
#include "geoprobe/error.hpp"
#include "geoprobe/protocol.hpp"
#include "geoprobe/synthetic.hpp"
#include "support.hpp"

using namespace geoprobe;
using nlohmann::json;

namespace {

constexpr std::size_t kCountries = 5, kCities = 4;
constexpr int kD = 16;

synthetic::SyntheticWorldConfig world_config() {
  synthetic::SyntheticWorldConfig cfg;
  cfg.d = kD;
  return cfg;
}

std::shared_ptr<const synthetic::SyntheticWorld> make_world() {
  return std::make_shared<const synthetic::SyntheticWorld>(synthetic::make_synthetic_catalog(kCountries, kCities, 0),
                                                           world_config());
}

std::vector<std::string> country_prompts(const synthetic::SyntheticWorld& w, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(dataset::build_prompt(w.catalog().cities[i], dataset::PromptTemplate::country));
  return out;
}

enum class Kind { in_process, process };

void PrintTo(Kind k, std::ostream* os) { *os << (k == Kind::in_process ? "in_process" : "process"); }

class BackendConformance : public ::testing::TestWithParam<Kind> {
 protected:
  void SetUp() override {
    world_ = make_world();
    scratch_ = std::make_shared<backend::ScratchSpace>(testsupport::fresh_dir("scratch"));
    if (GetParam() == Kind::in_process) {
      backend_ = std::make_unique<synthetic::SyntheticBackend>(world_, scratch_);
    } else {
      backend_ = std::make_unique<protocol::ProcessBackend>(
          std::vector<std::string>{GEOPROBE_SERVER, "--synthetic-countries", std::to_string(kCountries),
                                   "--synthetic-cities", std::to_string(kCities), "--d", std::to_string(kD)},
          scratch_);
    }
  }

  std::shared_ptr<const synthetic::SyntheticWorld> world_;
  std::shared_ptr<backend::ScratchSpace> scratch_;
  std::unique_ptr<backend::Backend> backend_;
};

}  // namespace

TEST_P(BackendConformance, Info) {
  const auto info = backend_->info();
  EXPECT_EQ(info.model_id, "synthetic");
  EXPECT_EQ(info.layer_count, 12);
  EXPECT_EQ(info.hidden_dim, kD);
  EXPECT_TRUE(info.stateless);
}

TEST_P(BackendConformance, ExtractMatchesWorld) {
  const auto prompts = country_prompts(*world_, 6);
  const auto refs = backend_->extract(prompts, std::vector<int>{4, 12}, activations::Pooling::mean_nonpad);
  ASSERT_EQ(refs.size(), 2u);
  for (int layer : {4, 12}) {
    const auto set = refs.at(layer).load();
    ASSERT_EQ(set.n(), 6);
    ASSERT_EQ(set.d(), kD);
    EXPECT_EQ(set.layer, layer);
    for (std::size_t i = 0; i < 6; ++i) {
      const Eigen::VectorXf expected = world_->embed(world_->catalog().cities[i], layer).cast<float>();
      EXPECT_EQ(set.values.row(static_cast<Eigen::Index>(i)), expected.transpose());
    }
    EXPECT_EQ(refs.at(layer).path.parent_path(), scratch_->dir());
  }
}

TEST_P(BackendConformance, ForwardFromUnchangedStateEqualsNextToken) {
  const auto prompts = country_prompts(*world_, 5);
  const auto refs = backend_->extract(prompts, std::vector<int>{12}, activations::Pooling::last_city_token);
  const auto fwd = backend_->forward_from(12, refs.at(12), backend::PositionMode::last_city_token, prompts);
  const auto next = backend_->next_token_logits(prompts, {"Land00", "Land01", "Land02", "Land03", "Land04"});
  EXPECT_EQ(fwd.logits.load().values, next.logits.load().values);
  EXPECT_EQ(fwd.last_layer.load().d(), kD);
  EXPECT_EQ(next.vocab_size, world_->vocab().size());
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_EQ(next.label_token_ids[i], world_->token_id("Land0" + std::to_string(i)));
}

TEST_P(BackendConformance, ErrorsKeepTheirCode) {
  const auto prompts = country_prompts(*world_, 2);
  EXPECT_THROW(backend_->extract(prompts, std::vector<int>{99}, activations::Pooling::mean_nonpad), LayerError);
  EXPECT_THROW(backend_->extract({"not a template"}, std::vector<int>{1}, activations::Pooling::mean_nonpad),
               BackendError);
  const auto refs = backend_->extract(prompts, std::vector<int>{3}, activations::Pooling::mean_nonpad);
  EXPECT_THROW(backend_->forward_from(3, refs.at(3), backend::PositionMode::pooled, {prompts[0]}), ShapeError);
  // the backend stays usable after errors
  EXPECT_NO_THROW(backend_->next_token_logits(prompts, {}));
}

INSTANTIATE_TEST_SUITE_P(Backends, BackendConformance, ::testing::Values(Kind::in_process, Kind::process),
                         [](const auto& info) { return info.param == Kind::in_process ? "InProcess" : "Process"; });

class HandleRequest : public ::testing::Test {
 protected:
  void SetUp() override {
    world_ = make_world();
    backend_ = std::make_unique<synthetic::SyntheticBackend>(
        world_, std::make_shared<backend::ScratchSpace>(testsupport::fresh_dir("scratch")));
  }
  std::shared_ptr<const synthetic::SyntheticWorld> world_;
  std::unique_ptr<synthetic::SyntheticBackend> backend_;
};

TEST_F(HandleRequest, MalformedRequestsAreBadRequests) {
  EXPECT_EQ(json::parse(protocol::handle_line(*backend_, "{not json")).at("code"), "bad_request");
  EXPECT_EQ(protocol::handle_request(*backend_, json{{"id", 4}}).at("code"), "bad_request");
  const auto r = protocol::handle_request(*backend_, json{{"id", 5}, {"op", "teleport"}});
  EXPECT_EQ(r.at("status"), "error");
  EXPECT_EQ(r.at("code"), "bad_request");
  EXPECT_EQ(r.at("id"), 5);
  EXPECT_EQ(protocol::handle_request(*backend_, json{{"id", 6}, {"op", "extract"}, {"prompts", {"x"}}}).at("code"),
            "bad_request");
}

TEST_F(HandleRequest, EchoesIdAndReportsTensors) {
  const auto prompts = country_prompts(*world_, 2);
  const auto r = protocol::handle_request(
      *backend_, json{{"id", "abc"}, {"op", "extract"}, {"prompts", prompts}, {"layers", {12}}, {"pooling", "mean_all"}});
  EXPECT_EQ(r.at("id"), "abc");
  EXPECT_EQ(r.at("status"), "ok");
  const auto ref = protocol::tensor_ref_from_json(r.at("tensors").at("12"));
  EXPECT_EQ(ref.n, 2);
  EXPECT_EQ(ref.d, kD);
  EXPECT_EQ(ref.load().pooling, activations::Pooling::mean_all);
}

TEST_F(HandleRequest, ModuleErrorsUseStableCodes) {
  const auto prompts = country_prompts(*world_, 2);
  const auto refs = backend_->extract(prompts, std::vector<int>{12}, activations::Pooling::mean_nonpad);
  const auto r = protocol::handle_request(*backend_, json{{"id", 7},
                                                          {"op", "forward_from"},
                                                          {"layer", 12},
                                                          {"activations", protocol::tensor_ref_to_json(refs.at(12))},
                                                          {"prompts", {prompts[0]}}});
  EXPECT_EQ(r.at("code"), "shape_error");
  EXPECT_EQ(r.at("id"), 7);
  const auto layer = protocol::handle_request(
      *backend_, json{{"id", 8}, {"op", "extract"}, {"prompts", prompts}, {"layers", {40}}});
  EXPECT_EQ(layer.at("code"), std::string(error_code_name(ErrorCode::layer)));
}

TEST_F(HandleRequest, ServeWritesHelloThenOneLinePerRequest) {
  std::istringstream in("\n{\"id\":1,\"op\":\"nope\"}\n{bad\n");
  std::ostringstream out;
  protocol::serve(*backend_, in, out);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<json> got;
  while (std::getline(lines, line)) got.push_back(json::parse(line));
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], protocol::hello(backend_->info()));
  EXPECT_EQ(got[0].at("status"), "ready");
  EXPECT_EQ(got[1].at("id"), 1);
  EXPECT_EQ(got[2].at("code"), "bad_request");
}

TEST(TensorRef, JsonRoundTrip) {
  const backend::TensorRef ref{"/tmp/x y.gact", 3, 64};
  const auto back = protocol::tensor_ref_from_json(protocol::tensor_ref_to_json(ref));
  EXPECT_EQ(back.path, ref.path);
  EXPECT_EQ(back.n, 3);
  EXPECT_EQ(back.d, 64);
  EXPECT_THROW(protocol::tensor_ref_from_json(json::array()), SchemaError);
}

TEST(TensorRef, LoadChecksDeclaredShape) {
  auto scratch = backend::ScratchSpace(testsupport::fresh_dir("scratch"));
  activations::ActivationSet set;
  set.values = activations::RowMatrixF::Ones(2, 3);
  set.city_ids = {"a", "b"};
  auto ref = backend::write_tensor(scratch, "t", set);
  ref.d = 4;
  EXPECT_THROW(ref.load(), ShapeError);
}

TEST(ProcessBackend, MissingExecutableIsBackendError) {
  EXPECT_THROW(protocol::ProcessBackend({"/nonexistent/geoprobe-server"},
                                        std::make_shared<backend::ScratchSpace>(testsupport::fresh_dir("scratch"))),
               BackendError);
}
