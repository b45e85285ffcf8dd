#include "geoprobe/protocol.hpp"

#include <csignal>
#include <cstring>
#include <istream>
#include <ostream>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "geoprobe/error.hpp"

namespace geoprobe::protocol {

json tensor_ref_to_json(const backend::TensorRef& ref) {
  return {{"path", ref.path.string()}, {"n", ref.n}, {"d", ref.d}};
}

backend::TensorRef tensor_ref_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("tensor reference must be an object");
  return {j.at("path").get<std::string>(), j.at("n").get<Eigen::Index>(), j.at("d").get<Eigen::Index>()};
}

json hello(const backend::BackendInfo& info) {
  return {{"status", "ready"},
          {"model_id", info.model_id},
          {"layer_count", info.layer_count},
          {"hidden_dim", info.hidden_dim},
          {"stateless", info.stateless}};
}

namespace {

json error_response(const json& id, std::string_view code, const std::string& message) {
  return {{"id", id}, {"status", "error"}, {"code", code}, {"message", message}};
}

std::vector<std::string> string_list(const json& request, const char* key, bool required) {
  if (!request.contains(key)) {
    if (required) throw SchemaError(std::string("missing field: ") + key);
    return {};
  }
  return request.at(key).get<std::vector<std::string>>();
}

json dispatch(backend::Backend& backend, const json& request) {
  const std::string op = request.at("op").get<std::string>();
  json response = {{"id", request.value("id", json())}, {"status", "ok"}};
  if (op == "extract") {
    const auto prompts = string_list(request, "prompts", true);
    const auto layers = request.at("layers").get<std::vector<int>>();
    const auto pooling = activations::parse_pooling(request.value("pooling", std::string("mean_nonpad")));
    json tensors = json::object();
    for (const auto& [layer, ref] : backend.extract(prompts, layers, pooling))
      tensors[std::to_string(layer)] = tensor_ref_to_json(ref);
    response["tensors"] = std::move(tensors);
  } else if (op == "forward_from") {
    const auto mode = backend::parse_position_mode(request.value("position_mode", std::string("last_city_token")));
    const auto result = backend.forward_from(request.at("layer").get<int>(),
                                             tensor_ref_from_json(request.at("activations")), mode,
                                             string_list(request, "prompts", true));
    response["last_layer"] = tensor_ref_to_json(result.last_layer);
    response["logits"] = tensor_ref_to_json(result.logits);
  } else if (op == "next_token_logits") {
    const auto result =
        backend.next_token_logits(string_list(request, "prompts", true), string_list(request, "labels", false));
    response["logits"] = tensor_ref_to_json(result.logits);
    response["vocab_size"] = result.vocab_size;
    response["label_token_ids"] = result.label_token_ids;
  } else {
    return error_response(response["id"], "bad_request", "unknown op: " + op);
  }
  return response;
}

}  // namespace

json handle_request(backend::Backend& backend, const json& request) {
  const json id = request.is_object() ? request.value("id", json()) : json();
  try {
    if (!request.is_object() || !request.contains("op")) return error_response(id, "bad_request", "missing op");
    return dispatch(backend, request);
  } catch (const Error& e) {
    return error_response(id, error_code_name(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_response(id, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error_response(id, "backend_error", e.what());
  }
}

std::string handle_line(backend::Backend& backend, const std::string& line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::exception& e) {
    return error_response(json(), "bad_request", e.what()).dump();
  }
  return handle_request(backend, request).dump();
}

void serve(backend::Backend& backend, std::istream& in, std::ostream& out) {
  out << hello(backend.info()).dump() << '\n' << std::flush;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << handle_line(backend, line) << '\n' << std::flush;
  }
}

ProcessBackend::ProcessBackend(std::vector<std::string> argv, std::shared_ptr<backend::ScratchSpace> scratch)
    : scratch_(std::move(scratch)) {
  if (argv.empty()) throw ConfigError("backend command is empty");
  if (!scratch_) scratch_ = std::make_shared<backend::ScratchSpace>();

  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw BackendError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw BackendError(std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<char*> cargv;
  for (auto& arg : argv) cargv.push_back(arg.data());
  cargv.push_back(nullptr);
  const std::string scratch_dir = scratch_->dir().string();

  pid_ = ::fork();
  if (pid_ < 0) throw BackendError(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::setenv("GEOPROBE_SCRATCH", scratch_dir.c_str(), 1);
    ::execvp(cargv[0], cargv.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  std::signal(SIGPIPE, SIG_IGN);

  json greeting;
  try {
    greeting = json::parse(read_line());
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed hello from backend: ") + e.what());
  }
  if (greeting.value("status", "") != "ready") throw BackendError("backend did not report ready");
  info_.model_id = greeting.value("model_id", "");
  info_.layer_count = greeting.value("layer_count", 0);
  info_.hidden_dim = greeting.value("hidden_dim", Eigen::Index{0});
  info_.stateless = greeting.value("stateless", false);
}

ProcessBackend::~ProcessBackend() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::string ProcessBackend::read_line() {
  for (;;) {
    if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return line;
    }
    char chunk[4096];
    const ssize_t got = ::read(from_child_, chunk, sizeof chunk);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) throw BackendError("backend process closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

void ProcessBackend::write_line(const std::string& line) {
  std::string data = line + '\n';
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t put = ::write(to_child_, p, left);
    if (put < 0 && errno == EINTR) continue;
    if (put <= 0) throw BackendError("backend process closed its input");
    p += put;
    left -= static_cast<std::size_t>(put);
  }
}

json ProcessBackend::call(json request) {
  const long id = next_id_++;
  request["id"] = id;
  write_line(request.dump());
  json response;
  try {
    response = json::parse(read_line());
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed response from backend: ") + e.what());
  }
  if (response.value("id", json()) != json(id)) throw BackendError("backend response id does not match request");
  if (response.value("status", "") == "ok") return response;
  const std::string code = response.value("code", "backend_error");
  const std::string message = response.value("message", "backend error");
  throw_error(parse_error_code(code).value_or(ErrorCode::backend), message);
}

std::map<int, backend::TensorRef> ProcessBackend::extract(const std::vector<std::string>& prompts,
                                                          std::span<const int> layers, backend::Pooling pooling) {
  const auto response = call({{"op", "extract"},
                              {"prompts", prompts},
                              {"layers", std::vector<int>(layers.begin(), layers.end())},
                              {"pooling", activations::pooling_name(pooling)}});
  std::map<int, backend::TensorRef> out;
  for (const auto& [key, ref] : response.at("tensors").items()) out.emplace(std::stoi(key), tensor_ref_from_json(ref));
  return out;
}

backend::ForwardResult ProcessBackend::forward_from(int layer, const backend::TensorRef& activations,
                                                    backend::PositionMode mode,
                                                    const std::vector<std::string>& prompts) {
  const auto response = call({{"op", "forward_from"},
                              {"layer", layer},
                              {"activations", tensor_ref_to_json(activations)},
                              {"position_mode", backend::position_mode_name(mode)},
                              {"prompts", prompts}});
  return {tensor_ref_from_json(response.at("last_layer")), tensor_ref_from_json(response.at("logits"))};
}

backend::NextTokenResult ProcessBackend::next_token_logits(const std::vector<std::string>& prompts,
                                                           const std::vector<std::string>& labels) {
  const auto response = call({{"op", "next_token_logits"}, {"prompts", prompts}, {"labels", labels}});
  backend::NextTokenResult result;
  result.logits = tensor_ref_from_json(response.at("logits"));
  result.vocab_size = response.at("vocab_size").get<std::size_t>();
  result.label_token_ids = response.at("label_token_ids").get<std::vector<long>>();
  return result;
}

}  // namespace geoprobe::protocol
