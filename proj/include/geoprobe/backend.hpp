#pragma once

// Model backends: extract pooled activations, resume the forward pass from an injected
// mid-layer state, and score next tokens. Tensors travel as GACT files in a scratch
// directory.

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoprobe/activations.hpp"

namespace geoprobe::backend {

using activations::Pooling;

enum class PositionMode { last_city_token, pooled };

std::string_view position_mode_name(PositionMode mode) noexcept;
PositionMode parse_position_mode(std::string_view name);

struct TensorRef {
  std::filesystem::path path;
  Eigen::Index n = 0;
  Eigen::Index d = 0;

  /// Reads the file and checks it against the declared shape (ShapeError).
  activations::ActivationSet load() const;
};

struct BackendInfo {
  std::string model_id;
  int layer_count = 0;  ///< valid layers are 0..layer_count (0 = embeddings)
  Eigen::Index hidden_dim = 0;
  bool stateless = true;
};

struct ForwardResult {
  TensorRef last_layer;
  TensorRef logits;  ///< n x vocab
};

struct NextTokenResult {
  TensorRef logits;  ///< n x vocab, next-token scores at the last prompt position
  std::size_t vocab_size = 0;
  std::vector<long> label_token_ids;  ///< first token of each label, -1 when it tokenizes to nothing
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendInfo info() const = 0;

  /// One activation set per requested layer; row order follows prompt order.
  virtual std::map<int, TensorRef> extract(const std::vector<std::string>& prompts, std::span<const int> layers,
                                           Pooling pooling) = 0;

  /// Injects the rows of `activations` at `layer` for the given prompts and runs the
  /// remaining layers.
  virtual ForwardResult forward_from(int layer, const TensorRef& activations, PositionMode mode,
                                     const std::vector<std::string>& prompts) = 0;

  virtual NextTokenResult next_token_logits(const std::vector<std::string>& prompts,
                                            const std::vector<std::string>& labels) = 0;
};

/// Directory for tensor exchange. Taken from $GEOPROBE_SCRATCH when set, otherwise a
/// per-process directory under the system temp path.
class ScratchSpace {
 public:
  ScratchSpace();
  explicit ScratchSpace(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path next(std::string_view stem);

  static std::filesystem::path default_dir();

 private:
  std::filesystem::path dir_;
  std::atomic<std::size_t> counter_{0};
};

TensorRef write_tensor(ScratchSpace& scratch, std::string_view stem, const activations::ActivationSet& set);

}  // namespace geoprobe::backend
