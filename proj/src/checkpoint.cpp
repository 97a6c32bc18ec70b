#include "tsa/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tsa {

namespace {

using nlohmann::json;

json config_json(const ModelConfig& c) {
  json j;
  j["d"] = c.d;
  j["d_in"] = c.d_in;
  j["n_layers"] = c.n_layers;
  j["n_heads_self"] = c.n_heads_self;
  j["d_ff"] = c.d_ff;
  j["n_classes"] = c.n_classes;
  j["d_e"] = c.d_e;
  j["n_stages"] = c.n_stages;
  j["n_subjects"] = c.n_subjects;
  j["use_text"] = c.use_text;
  j["use_audio"] = c.use_audio;
  j["use_video"] = c.use_video;
  j["video_flavor"] = c.video_flavor == VideoFlavor::desc ? "desc" : "raw";
  j["use_instructional"] = c.use_instructional;
  j["use_cross_modal"] = c.use_cross_modal;
  j["use_hier_fusion"] = c.use_hier_fusion;
  j["strict_paper"] = c.strict_paper;
  j["cross_residual"] = c.cross_residual;
  j["use_raw_hd"] = c.use_raw_hd;
  j["layer_norm_eps"] = c.layer_norm_eps;
  return j;
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.d_in = j.at("d_in").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads_self = j.at("n_heads_self").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.d_e = j.at("d_e").get<std::size_t>();
  c.n_stages = j.at("n_stages").get<std::size_t>();
  c.n_subjects = j.at("n_subjects").get<std::size_t>();
  c.use_text = j.at("use_text").get<bool>();
  c.use_audio = j.at("use_audio").get<bool>();
  c.use_video = j.at("use_video").get<bool>();
  c.video_flavor = j.at("video_flavor").get<std::string>() == "raw" ? VideoFlavor::raw
                                                                    : VideoFlavor::desc;
  c.use_instructional = j.at("use_instructional").get<bool>();
  c.use_cross_modal = j.at("use_cross_modal").get<bool>();
  c.use_hier_fusion = j.at("use_hier_fusion").get<bool>();
  c.strict_paper = j.at("strict_paper").get<bool>();
  c.cross_residual = j.at("cross_residual").get<bool>();
  c.use_raw_hd = j.at("use_raw_hd").get<bool>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  return config_from(json::parse(text));
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  json j;
  j["format"] = kCheckpointFormat;
  j["config"] = config_json(params.config);
  json ps;
  for (const auto& p : params.store) {
    json pj;
    pj["shape"] = p->value.shape();
    pj["data"] = p->value.values();
    ps[p->name] = std::move(pj);
  }
  j["params"] = std::move(ps);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
  out << j.dump() << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("load_checkpoint: " + path.string() + ": " + e.what());
  }
  if (j.at("format").get<std::string>() != kCheckpointFormat) {
    throw std::runtime_error("load_checkpoint: unsupported format tag '" +
                             j.at("format").get<std::string>() + "'");
  }
  const ModelConfig config = config_from(j.at("config"));
  Rng rng(0);
  ModelParams params = build_model(config, rng);
  const json& ps = j.at("params");
  if (ps.size() != params.store.size()) {
    throw std::runtime_error("load_checkpoint: parameter set does not match the config (" +
                             std::to_string(ps.size()) + " stored vs " +
                             std::to_string(params.store.size()) + " expected)");
  }
  for (auto& p : params.store) {
    if (!ps.contains(p->name)) {
      throw std::runtime_error("load_checkpoint: missing parameter '" + p->name + "'");
    }
    const json& pj = ps.at(p->name);
    const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) {
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + p->name + "'");
    }
    p->value = Tensor(shape, pj.at("data").get<std::vector<double>>());
  }
  return params;
}

}  // namespace tsa
