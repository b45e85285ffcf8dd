#include "geoprobe/activations.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "geoprobe/error.hpp"

namespace geoprobe::activations {
namespace {

constexpr char kMagic[4] = {'G', 'A', 'C', 'T'};
constexpr std::size_t kPreamble = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::string_view pooling_name(Pooling pooling) noexcept {
  switch (pooling) {
    case Pooling::mean_all: return "mean_all";
    case Pooling::mean_nonpad: return "mean_nonpad";
    case Pooling::last_city_token: return "last_city_token";
  }
  return "mean_nonpad";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean_all") return Pooling::mean_all;
  if (name == "mean_nonpad") return Pooling::mean_nonpad;
  if (name == "last_city_token") return Pooling::last_city_token;
  throw ConfigError("unknown pooling: " + std::string(name));
}

void ActivationSet::validate() const {
  if (city_ids.size() != static_cast<std::size_t>(values.rows())) {
    throw ShapeError("activation set has " + std::to_string(values.rows()) + " rows but " +
                     std::to_string(city_ids.size()) + " city ids");
  }
  if (!values.allFinite()) throw FormatError("activation set contains non-finite values");
}

Eigen::VectorXf mean_pool(const RowMatrixF& token_states, std::span<const bool> mask) {
  if (mask.size() != static_cast<std::size_t>(token_states.rows())) {
    throw ShapeError("mask length " + std::to_string(mask.size()) + " vs " +
                     std::to_string(token_states.rows()) + " token rows");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(token_states.cols());
  std::size_t count = 0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (!mask[t]) continue;
    sum += token_states.row(static_cast<Eigen::Index>(t)).transpose().cast<double>();
    ++count;
  }
  if (count == 0) throw EmptyPool("mask selects no tokens");
  return (sum / static_cast<double>(count)).cast<float>();
}

std::vector<std::uint8_t> encode_activations(const ActivationSet& set) {
  set.validate();
  nlohmann::json header = {
      {"model_id", set.model_id},
      {"layer", set.layer},
      {"pooling", pooling_name(set.pooling)},
      {"d", set.d()},
      {"n", set.n()},
      {"city_ids", set.city_ids},
      {"dtype", "f32"},
      {"order", "row-major"},
      {"endian", "little"},
  };
  const std::string text = header.dump();
  const std::size_t count = static_cast<std::size_t>(set.values.size());

  std::vector<std::uint8_t> out;
  out.reserve(kPreamble + text.size() + 4 * count);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kGactVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  const float* data = set.values.data();
  for (std::size_t i = 0; i < count; ++i) put_u32(out, std::bit_cast<std::uint32_t>(data[i]));
  return out;
}

ActivationSet decode_activations(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad GACT magic");
  if (bytes.size() < kPreamble) throw CorruptFile("GACT preamble truncated");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kGactVersion) throw FormatError("unsupported GACT version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (bytes.size() - kPreamble < header_len) throw CorruptFile("GACT header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("GACT header: ") + e.what());
  }

  ActivationSet set;
  std::int64_t n = 0;
  std::int64_t d = 0;
  try {
    if (header.at("dtype").get<std::string>() != "f32" || header.at("order").get<std::string>() != "row-major" ||
        header.at("endian").get<std::string>() != "little") {
      throw FormatError("unsupported GACT layout");
    }
    set.model_id = header.at("model_id").get<std::string>();
    set.layer = header.at("layer").get<int>();
    set.pooling = parse_pooling(header.at("pooling").get<std::string>());
    set.city_ids = header.at("city_ids").get<std::vector<std::string>>();
    n = header.at("n").get<std::int64_t>();
    d = header.at("d").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("GACT header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("GACT header: ") + e.what());
  }
  if (n < 0 || d < 0) throw FormatError("negative GACT shape");

  const std::size_t payload = bytes.size() - kPreamble - header_len;
  const auto expected = static_cast<unsigned __int128>(n) * static_cast<unsigned __int128>(d) * 4u;
  if (expected != payload) {
    throw CorruptFile("GACT payload is " + std::to_string(payload) + " bytes, header declares " +
                      std::to_string(n) + "x" + std::to_string(d) + " f32");
  }

  set.values.resize(n, d);
  float* data = set.values.data();
  const std::size_t base = kPreamble + header_len;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n * d); ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, base + 4 * i));
  }
  set.validate();
  return set;
}

void write_activations(const ActivationSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_activations(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

ActivationSet read_activations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_activations(bytes);
}

}  // namespace geoprobe::activations
