#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tsa/features.hpp"
#include "tsa/graph.hpp"
#include "tsa/rng.hpp"

namespace tsa {

enum class Branch : int { text = 0, audio = 1, video = 2, instructional = 3 };
enum class VideoFlavor { desc, raw };

const char* branch_name(Branch b);

// The cross-attention routing is audio-centric: text, video and the
// instructional branch query audio; audio queries text.
Branch cross_counterpart(Branch b);

struct ModelConfig {
  std::size_t d = 32;       // model width (reference setting 768)
  std::size_t d_in = 32;    // incoming feature width
  std::size_t n_layers = 3;
  std::size_t n_heads_self = 4;
  std::size_t d_ff = 0;     // 0 -> 4*d
  std::size_t n_classes = 8;
  std::size_t d_e = 0;      // embedding width before W_c, 0 -> d
  std::size_t n_stages = 4;
  std::size_t n_subjects = 11;

  // Variant mask.
  bool use_text = true;
  bool use_audio = true;
  bool use_video = true;
  VideoFlavor video_flavor = VideoFlavor::desc;
  bool use_instructional = true;
  bool use_cross_modal = true;
  bool use_hier_fusion = true;

  // strict_paper: no sub-layer LayerNorm, no input projection when widths
  // already match, and the cross output replaces the branch state outright.
  // The default keeps a residual around cross-attention: without it every
  // branch's content is overwritten by its counterpart's values after the
  // first layer, which erases the instructional branch entirely.
  bool strict_paper = false;
  bool cross_residual = true;
  // Use the raw embedded instructional vector in the fusion head instead of
  // the stacked instructional CLS (the branch then skips the stack).
  bool use_raw_hd = false;

  double layer_norm_eps = 1e-5;

  std::size_t ff_dim() const { return d_ff == 0 ? 4 * d : d_ff; }
  std::size_t embed_dim() const { return d_e == 0 ? d : d_e; }
  bool branch_active(Branch b) const;
  std::vector<Branch> active_branches() const;
  std::vector<Branch> gated_branches() const;  // active among text/audio/video
  bool wants_projection() const { return !strict_paper || d_in != d; }
  void validate() const;  // throws on an inconsistent mask or shape
};

struct CrossAttnParams {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
};

struct SelfAttnParams {
  std::vector<Parameter*> wq, wk, wv;  // one [d, d/H] projection per head
  Parameter* wo = nullptr;             // [d, d]
};

struct FfnParams {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
};

struct NormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
};

struct LayerParams {
  std::optional<CrossAttnParams> cross;
  SelfAttnParams self_attn;
  FfnParams ffn;
  std::optional<NormParams> ln_cross, ln_self, ln_ffn;
};

struct BranchParams {
  Parameter* cls = nullptr;
  std::optional<ProjectionParams> proj;
  std::vector<LayerParams> layers;
};

struct LinearParams {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
};

struct GateParams {
  Parameter* w1 = nullptr;  // [k*d, d]
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;  // [d, k]
  Parameter* b2 = nullptr;
};

struct ModelParams {
  ModelConfig config;
  ParamStore store;
  std::array<std::optional<BranchParams>, 4> branches;
  std::optional<InstructionalEmbedderParams> embedder;
  std::optional<GateParams> gate;
  std::optional<LinearParams> fuse;  // final MLP, [2d,d] with instructional else [d,d]
  LinearParams classifier;

  ModelParams() = default;
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;
  ModelParams(ModelParams&&) = default;
  ModelParams& operator=(ModelParams&&) = default;

  std::size_t param_count() const { return store.total_values(); }
  std::size_t param_count_with_prefix(const std::string& prefix) const;
};

// Builds every tensor the variant needs, nothing else. Initialization order
// is fixed, so a given (config, seed) yields bit-identical parameters.
ModelParams build_model(const ModelConfig& config, Rng& rng);

// Single-head scaled dot-product attention, d_k = full width.
Var cross_attention(Graph& g, Var q_seq, Var kv_seq, const CrossAttnParams& p);
// Multi-head self-attention plus residual.
Var self_attention_block(Graph& g, Var seq, const SelfAttnParams& p);
// Position-wise two-layer GELU perceptron plus residual.
Var ffn_block(Graph& g, Var seq, const FfnParams& p);

// One interaction layer: synchronous cross updates computed from the layer
// inputs, then per-branch self-attention and FFN. states entries are invalid
// Vars for inactive branches. Appends the cross routing to `edges` if given.
using BranchStates = std::array<Var, 4>;
BranchStates interaction_layer(Graph& g, const BranchStates& states, const ModelParams& params,
                               std::size_t layer,
                               std::vector<std::pair<Branch, Branch>>* edges = nullptr);

struct StackOutput {
  std::array<Var, 4> cls;  // invalid for inactive branches
  std::vector<std::pair<Branch, Branch>> cross_edges;
};

StackOutput forward_stack(Graph& g, ModelParams& params, const FeatureBundle& bundle);

struct FusionOutput {
  Var h_fused;
  Var gates;  // [1, k]
};

// Softmax-gated convex combination of the gated-modality CLS rows.
FusionOutput gated_fusion(Graph& g, const std::vector<Var>& cls_rows, const GateParams& p);

// h_final = GELU(W [h_fused ; cls_d] + b); without the instructional branch
// the head narrows to GELU(W h_fused + b).
Var fuse_final(Graph& g, Var h_fused, std::optional<Var> cls_d, const LinearParams& p);

struct ModelOutput {
  Var logits;
  Tensor probs;               // softmax of the logits, [1, n_classes]
  int predicted = 0;          // argmax, lowest index wins ties
  std::vector<double> gates;  // empty when gating is bypassed
  Var loss;                   // valid iff requested
  double loss_value = 0.0;
  std::vector<std::pair<Branch, Branch>> cross_edges;
};

ModelOutput model_forward(Graph& g, ModelParams& params, const FeatureBundle& bundle,
                          bool with_loss, Reduction reduction = Reduction::mean);

// Picks the variant's video flavor out of the bundle.
const Tensor& select_video(const ModelConfig& config, const FeatureBundle& bundle);

int argmax_lowest(const Tensor& row);

}  // namespace tsa
