#include "tsa/features.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tsa {

namespace {

Tensor parse_matrix(const nlohmann::json& j, const std::string& key) {
  const auto& rows = j.at(key);
  if (!rows.is_array() || rows.empty()) {
    throw std::runtime_error("feature key '" + key + "' must be a non-empty 2-D array");
  }
  const std::size_t t = rows.size();
  const std::size_t d = rows[0].size();
  std::vector<double> data;
  data.reserve(t * d);
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != d) {
      throw std::runtime_error("feature key '" + key + "' has ragged rows");
    }
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Tensor({t, d}, std::move(data));
}

}  // namespace

FeatureBundle load_feature_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("feature file " + path.string() + ": " + e.what());
  }
  FeatureBundle b;
  b.name = path.stem().string();
  b.text = parse_matrix(j, "text");
  b.audio = parse_matrix(j, "audio");
  b.video_desc = parse_matrix(j, "video_desc");
  b.video_raw = parse_matrix(j, "video_raw");
  b.stage_id = j.at("stage_id").get<int>();
  b.subject_id = j.at("subject_id").get<int>();
  b.label = parse_label(j.at("label").get<std::string>());
  const std::size_t d = b.text.cols();
  if (b.audio.cols() != d || b.video_desc.cols() != d || b.video_raw.cols() != d) {
    throw std::runtime_error("feature file " + path.string() + ": modality dims differ");
  }
  return b;
}

Var embed_instructional(Graph& g, const InstructionalEmbedderParams& params, int stage_id,
                        int subject_id) {
  const std::size_t n_stages = params.e_stage->value.extent(0);
  const std::size_t n_subjects = params.e_subject->value.extent(0);
  if (stage_id < 0 || static_cast<std::size_t>(stage_id) >= n_stages) {
    throw std::out_of_range("embed_instructional: stage_id " + std::to_string(stage_id) +
                            " outside [0, " + std::to_string(n_stages) + ")");
  }
  if (subject_id < 0 || static_cast<std::size_t>(subject_id) >= n_subjects) {
    throw std::out_of_range("embed_instructional: subject_id " + std::to_string(subject_id) +
                            " outside [0, " + std::to_string(n_subjects) + ")");
  }
  Var e_l = g.take_row(g.param(*params.e_stage), static_cast<std::size_t>(stage_id));
  Var e_s = g.take_row(g.param(*params.e_subject), static_cast<std::size_t>(subject_id));
  Var joint = g.concat_lastdim({e_l, e_s});
  Var pre = g.gelu(g.linear(joint, g.param(*params.w_c), g.param(*params.b_c)));
  return g.layer_norm(pre, g.param(*params.gamma), g.param(*params.beta));
}

Var project_sequence(Graph& g, Var seq, const ProjectionParams* proj, std::size_t model_dim) {
  if (proj == nullptr || proj->w == nullptr) {
    if (g.value(seq).cols() != model_dim) {
      throw std::invalid_argument("project_sequence: feature dim " +
                                  std::to_string(g.value(seq).cols()) +
                                  " differs from model dim " + std::to_string(model_dim) +
                                  " and no projection is configured");
    }
    return seq;
  }
  return g.linear(seq, g.param(*proj->w), g.param(*proj->b));
}

Var prepend_cls(Graph& g, Var seq, Var cls) {
  const Tensor& s = g.value(seq);
  const Tensor& c = g.value(cls);
  if (s.rank() != 2 || s.extent(0) == 0) {
    throw std::invalid_argument("prepend_cls: sequence must be a non-empty [T, d] tensor");
  }
  if (c.rank() != 2 || c.extent(0) != 1 || c.cols() != s.cols()) {
    throw std::invalid_argument("prepend_cls: cls must be [1, d] with d = " +
                                std::to_string(s.cols()));
  }
  return g.concat_rows({cls, seq});
}

Var instructional_sequence(Graph& g, Var h_d, Var cls) {
  const Tensor& h = g.value(h_d);
  const Tensor& c = g.value(cls);
  if (h.rank() != 2 || h.extent(0) != 1 || c.rank() != 2 || c.extent(0) != 1 ||
      h.cols() != c.cols()) {
    throw std::invalid_argument("instructional_sequence: expected two [1, d] rows");
  }
  return g.concat_rows({cls, h_d});
}

}  // namespace tsa
