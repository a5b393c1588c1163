#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mixdemo/encoder.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void put(json& out, const std::vector<TensorView>& views) {
  for (const auto& t : views) {
    out[t.name] = {{"shape", t.shape},
                   {"data", std::vector<double>(t.data.begin(), t.data.end())}};
  }
}

void take(const json& in, const std::vector<TensorView>& views) {
  for (const auto& t : views) {
    if (!in.contains(t.name)) throw DataError("checkpoint is missing tensor " + t.name);
    const json& entry = in.at(t.name);
    if (entry.at("shape").get<std::vector<std::size_t>>() != t.shape) {
      throw DataError("checkpoint tensor " + t.name + " has the wrong shape");
    }
    const auto& data = entry.at("data");
    if (!data.is_array() || data.size() != t.data.size()) {
      throw DataError("checkpoint tensor " + t.name + " has the wrong number of entries");
    }
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double x = data[i].get<double>();
      if (!std::isfinite(x)) throw DataError("checkpoint tensor " + t.name + " is not finite");
      t.data[i] = x;
    }
  }
}

}  // namespace

std::string checkpoint_to_json(const EncoderParams& params, const SurrogateHead* head,
                               std::uint64_t seed) {
  EncoderParams copy = params;
  json out;
  out["format_version"] = kFormatVersion;
  out["seed"] = seed;
  out["dims"] = {{"d_in", params.dims.d_in},
                 {"d_hidden", params.dims.d_hidden},
                 {"d_llm", params.dims.d_llm},
                 {"layers", params.dims.layers}};
  json tens = json::object();
  put(tens, tensors(copy));
  if (head) {
    SurrogateHead h = *head;
    put(tens, tensors(h));
    out["vocab"] = head->vocab;
  }
  out["tensors"] = std::move(tens);
  return out.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json in = json::parse(text);
    if (in.value("format_version", 0) != kFormatVersion) {
      throw DataError("unsupported checkpoint format_version");
    }
    const json& d = in.at("dims");
    EncoderDims dims{d.at("d_in").get<std::size_t>(), d.at("d_hidden").get<std::size_t>(),
                     d.at("d_llm").get<std::size_t>(), d.at("layers").get<std::size_t>()};
    try {
      dims.check();
    } catch (const UsageError& e) {
      throw DataError(std::string("checkpoint dims: ") + e.what());
    }
    Checkpoint ck;
    ck.seed = in.at("seed").get<std::uint64_t>();
    ck.params = EncoderParams::zeros(dims);
    const json& tens = in.at("tensors");
    take(tens, tensors(ck.params));
    if (in.contains("vocab")) {
      auto vocab = in.at("vocab").get<std::vector<std::string>>();
      if (vocab.empty()) throw DataError("checkpoint head has an empty vocabulary");
      SurrogateHead head = SurrogateHead::zeros(dims.d_llm, std::move(vocab));
      take(tens, tensors(head));
      ck.head = std::move(head);
    }
    return ck;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const SurrogateHead* head, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(params, head, seed) << '\n';
  if (!out) throw UsageError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("checkpoint not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return checkpoint_from_json(buf.str());
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + ", " + path.string());
  }
}

}  // namespace mixdemo
