#pragma once

// Pooled activation matrices and the GACT file format:
//
//   "GACT" | u32 version (1) | u32 header_len | header_len bytes of UTF-8 JSON | n*d f32
//
// All integers and floats little-endian, payload row-major. The JSON header carries
// model_id, layer, pooling, d, n, city_ids, dtype ("f32"), order ("row-major") and
// endian ("little").

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace geoprobe::activations {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Pooling { mean_all, mean_nonpad, last_city_token };

std::string_view pooling_name(Pooling pooling) noexcept;
Pooling parse_pooling(std::string_view name);  // throws ConfigError

struct ActivationSet {
  RowMatrixF values;  ///< n x d
  std::string model_id;
  int layer = 0;
  Pooling pooling = Pooling::mean_nonpad;
  std::vector<std::string> city_ids;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index d() const { return values.cols(); }

  /// Throws ShapeError / FormatError when an invariant is broken.
  void validate() const;
  Eigen::MatrixXd as_double() const { return values.cast<double>(); }
};

/// Mean over the rows of token_states whose mask entry is true. Throws EmptyPool.
Eigen::VectorXf mean_pool(const RowMatrixF& token_states, std::span<const bool> mask);

inline constexpr std::uint32_t kGactVersion = 1;

std::vector<std::uint8_t> encode_activations(const ActivationSet& set);
ActivationSet decode_activations(std::span<const std::uint8_t> bytes);

void write_activations(const ActivationSet& set, const std::filesystem::path& path);
ActivationSet read_activations(const std::filesystem::path& path);

}  // namespace geoprobe::activations
