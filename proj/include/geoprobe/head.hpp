#pragma once

#include <cstddef>

#include <Eigen/Core>

#include "geoprobe/probes.hpp"

namespace geoprobe {

/// Anything that scores countries from an activation vector.
class CountryHead {
 public:
  virtual ~CountryHead() = default;
  virtual Eigen::VectorXd logits(const Eigen::VectorXd& h) const = 0;
  virtual std::size_t num_classes() const = 0;
};

class ClassifierHead final : public CountryHead {
 public:
  explicit ClassifierHead(const probes::ClassifierParams& params) : params_(params) {}
  Eigen::VectorXd logits(const Eigen::VectorXd& h) const override { return probes::classify(params_, h); }
  std::size_t num_classes() const override { return params_.num_classes(); }

 private:
  const probes::ClassifierParams& params_;
};

}  // namespace geoprobe
