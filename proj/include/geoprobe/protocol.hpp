#pragma once

// Newline-delimited JSON wire protocol between the toolkit and a backend process.
//
// On start the server writes one hello line:
//   {"status":"ready","model_id":...,"layer_count":...,"hidden_dim":...,"stateless":true}
// then answers one request per line, echoing "id":
//   {"id":1,"op":"extract","prompts":[...],"layers":[12],"pooling":"mean_nonpad"}
//     -> {"id":1,"status":"ok","tensors":{"12":{"path":...,"n":3,"d":64}}}
//   {"id":2,"op":"forward_from","layer":12,"activations":{"path":...,"n":3,"d":64},
//    "position_mode":"last_city_token","prompts":[...]}
//     -> {"id":2,"status":"ok","last_layer":{...},"logits":{...}}
//   {"id":3,"op":"next_token_logits","prompts":[...],"labels":[...]}
//     -> {"id":3,"status":"ok","logits":{...},"vocab_size":N,"label_token_ids":[...]}
// Failures: {"id":..,"status":"error","code":"shape_error","message":"..."}.

#include <cstdio>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoprobe/backend.hpp"

namespace geoprobe::protocol {

using nlohmann::json;

json tensor_ref_to_json(const backend::TensorRef& ref);
backend::TensorRef tensor_ref_from_json(const json& j);

json hello(const backend::BackendInfo& info);

/// Runs one request against a backend. Never throws; errors become error responses.
json handle_request(backend::Backend& backend, const json& request);
std::string handle_line(backend::Backend& backend, const std::string& line);

/// Hello line, then one response line per request line until EOF.
void serve(backend::Backend& backend, std::istream& in, std::ostream& out);

/// Client side of the protocol over a spawned child process.
class ProcessBackend final : public backend::Backend {
 public:
  /// Starts argv[0] (PATH lookup) with GEOPROBE_SCRATCH pointing at the scratch directory.
  ProcessBackend(std::vector<std::string> argv, std::shared_ptr<backend::ScratchSpace> scratch);
  ~ProcessBackend() override;
  ProcessBackend(const ProcessBackend&) = delete;
  ProcessBackend& operator=(const ProcessBackend&) = delete;

  backend::BackendInfo info() const override { return info_; }
  std::map<int, backend::TensorRef> extract(const std::vector<std::string>& prompts, std::span<const int> layers,
                                            backend::Pooling pooling) override;
  backend::ForwardResult forward_from(int layer, const backend::TensorRef& activations, backend::PositionMode mode,
                                      const std::vector<std::string>& prompts) override;
  backend::NextTokenResult next_token_logits(const std::vector<std::string>& prompts,
                                             const std::vector<std::string>& labels) override;

  /// Sends a raw request (id assigned here) and returns the ok response; error
  /// responses are rethrown as the matching geoprobe::Error.
  json call(json request);

 private:
  std::string read_line();
  void write_line(const std::string& line);

  std::shared_ptr<backend::ScratchSpace> scratch_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  long next_id_ = 1;
  backend::BackendInfo info_;
};

}  // namespace geoprobe::protocol
