#pragma once

#include <filesystem>
#include <string>

#include "tsa/dataset.hpp"
#include "tsa/graph.hpp"
#include "tsa/tensor.hpp"

namespace tsa {

// Per-sample precomputed modality features, as read from a feature file.
// Both video flavors travel together; the variant picks one at forward time.
struct FeatureBundle {
  std::string name;
  Tensor text;        // [T_t, d_in]
  Tensor audio;       // [T_a, d_in]
  Tensor video_desc;  // [T_v, d_in]
  Tensor video_raw;   // [T_v, d_in]
  int stage_id = 0;
  int subject_id = 0;
  EmotionLabel label = EmotionLabel::neutral;

  std::size_t feature_dim() const { return text.cols(); }
};

FeatureBundle load_feature_bundle(const std::filesystem::path& path);

// Embedding tables plus the joint projection of the instructional ids:
// h_d = LayerNorm(GELU([e_stage ; e_subject] W_c + b_c)).
struct InstructionalEmbedderParams {
  Parameter* e_stage = nullptr;   // [n_stages, d_e]
  Parameter* e_subject = nullptr; // [n_subjects, d_e]
  Parameter* w_c = nullptr;       // [2*d_e, d]
  Parameter* b_c = nullptr;       // [d]
  Parameter* gamma = nullptr;     // [d]
  Parameter* beta = nullptr;      // [d]
};

// Differentiable through both tables. Returns a [1, d] row.
Var embed_instructional(Graph& g, const InstructionalEmbedderParams& params, int stage_id,
                        int subject_id);

// Affine map of a [T, d_in] sequence to model width; pass-through when the
// projection is absent (strict mode with d_in == d).
struct ProjectionParams {
  Parameter* w = nullptr;  // [d_in, d]
  Parameter* b = nullptr;  // [d]
};

Var project_sequence(Graph& g, Var seq, const ProjectionParams* proj, std::size_t model_dim);

// Row 0 becomes cls; the sequence must be non-empty.
Var prepend_cls(Graph& g, Var seq, Var cls);

// The two-token instructional branch sequence [cls ; h_d].
Var instructional_sequence(Graph& g, Var h_d, Var cls);

}  // namespace tsa
