#include "fcre/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fcre/errors.hpp"

namespace fcre {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json tensor_to_json(const Matrix& m) {
  ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.data();
  return j;
}

Matrix tensor_from_json(const ordered_json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto& data = j.at("data");
  if (data.size() != m.size()) throw ParseError("checkpoint: tensor size mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = data[i].get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderParams& params,
                     std::uint64_t vocab_hash) {
  ordered_json j;
  j["version"] = 1;
  std::ostringstream hash;
  hash << std::hex << vocab_hash;
  j["vocab_hash"] = hash.str();
  j["dims"] = {{"vocab", params.dims.vocab}, {"d_e", params.dims.d_e},
               {"d_h", params.dims.d_h},     {"d", params.dims.d},
               {"d_phi", params.dims.d_phi}, {"n_prompt", params.dims.n_prompt}};
  j["tau_mi"] = params.tau_mi;
  j["tau_mcl"] = params.tau_mcl;
  ordered_json tensors;
  const auto names = param_tensor_names();
  const auto mats = param_tensors(params);
  for (std::size_t i = 0; i < mats.size(); ++i) tensors[names[i]] = tensor_to_json(*mats[i]);
  j["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw ConfigError("save_checkpoint: cannot open " + path + " for writing");
  out << j.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_checkpoint: cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: invalid JSON in " + path + " (" + e.what() + ")");
  }
  if (j.value("version", 0) != 1) throw ParseError("load_checkpoint: unsupported version");

  Checkpoint ckpt;
  ckpt.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
  const auto& dims = j.at("dims");
  ckpt.params.dims = EncoderDims{dims.at("vocab").get<std::size_t>(),
                                 dims.at("d_e").get<std::size_t>(),
                                 dims.at("d_h").get<std::size_t>(),
                                 dims.at("d").get<std::size_t>(),
                                 dims.at("d_phi").get<std::size_t>(),
                                 dims.at("n_prompt").get<std::size_t>()};
  ckpt.params.tau_mi = j.at("tau_mi").get<double>();
  ckpt.params.tau_mcl = j.at("tau_mcl").get<double>();
  const auto names = param_tensor_names();
  auto mats = param_tensors(ckpt.params);
  for (std::size_t i = 0; i < mats.size(); ++i) {
    *mats[i] = tensor_from_json(j.at("tensors").at(names[i]));
  }
  return ckpt;
}

EncoderParams load_checkpoint_for(const std::string& path, const Vocab& vocab) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.vocab_hash != vocab.hash()) {
    throw ConfigError("load_checkpoint: vocabulary hash mismatch for " + path);
  }
  if (ckpt.params.dims.vocab != vocab.size()) {
    throw ConfigError("load_checkpoint: vocabulary size mismatch for " + path);
  }
  return ckpt.params;
}

}  // namespace fcre
