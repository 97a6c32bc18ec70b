#include "tsa/model.hpp"

#include <cmath>
#include <stdexcept>

namespace tsa {

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::text: return "text";
    case Branch::audio: return "audio";
    case Branch::video: return "video";
    case Branch::instructional: return "instructional";
  }
  return "?";
}

Branch cross_counterpart(Branch b) {
  return b == Branch::audio ? Branch::text : Branch::audio;
}

bool ModelConfig::branch_active(Branch b) const {
  switch (b) {
    case Branch::text: return use_text;
    case Branch::audio: return use_audio;
    case Branch::video: return use_video;
    case Branch::instructional: return use_instructional;
  }
  return false;
}

std::vector<Branch> ModelConfig::active_branches() const {
  std::vector<Branch> out;
  for (Branch b : {Branch::text, Branch::audio, Branch::video, Branch::instructional}) {
    if (branch_active(b)) out.push_back(b);
  }
  return out;
}

std::vector<Branch> ModelConfig::gated_branches() const {
  std::vector<Branch> out;
  for (Branch b : {Branch::text, Branch::audio, Branch::video}) {
    if (branch_active(b)) out.push_back(b);
  }
  return out;
}

void ModelConfig::validate() const {
  if (d == 0) throw std::invalid_argument("ModelConfig: d must be positive");
  if (n_heads_self == 0 || d % n_heads_self != 0) {
    throw std::invalid_argument("ModelConfig: d must be divisible by n_heads_self");
  }
  if (n_classes != 8) throw std::invalid_argument("ModelConfig: n_classes is fixed at 8");
  if (gated_branches().empty()) {
    throw std::invalid_argument("ModelConfig: at least one of text/audio/video must be enabled");
  }
  if (use_cross_modal && !use_audio) {
    throw std::invalid_argument(
        "ModelConfig: cross-modal attention is audio-centric and requires the audio branch");
  }
  if (n_layers > 0 && d_in == 0) throw std::invalid_argument("ModelConfig: d_in must be positive");
}

std::size_t ModelParams::param_count_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : store) {
    if (p->name.rfind(prefix, 0) == 0) n += p->value.size();
  }
  return n;
}

namespace {

Parameter& add_glorot(ParamStore& store, const std::string& name, std::size_t rows,
                      std::size_t cols, Rng& rng) {
  return store.add(name, glorot_matrix(rows, cols, rng));
}

Parameter& add_zeros(ParamStore& store, const std::string& name,
                     std::vector<std::size_t> shape) {
  return store.add(name, Tensor(std::move(shape)));
}

Parameter& add_ones(ParamStore& store, const std::string& name, std::size_t n) {
  Tensor t({n});
  t.fill(1.0);
  return store.add(name, std::move(t));
}

NormParams add_norm(ParamStore& store, const std::string& prefix, std::size_t d) {
  NormParams p;
  p.gamma = &add_ones(store, prefix + ".gamma", d);
  p.beta = &add_zeros(store, prefix + ".beta", {d});
  return p;
}

void build_branch_layers(ModelParams& mp, Branch b, Rng& rng) {
  const ModelConfig& cfg = mp.config;
  const std::string base = branch_name(b);
  const std::size_t d = cfg.d;
  const std::size_t dh = d / cfg.n_heads_self;
  const bool crosses = cfg.use_cross_modal && cfg.branch_active(cross_counterpart(b));
  BranchParams& bp = *mp.branches[static_cast<std::size_t>(b)];
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string lb = base + ".layer" + std::to_string(l);
    LayerParams lp;
    if (crosses) {
      CrossAttnParams cp;
      cp.wq = &add_glorot(mp.store, lb + ".cross.wq", d, d, rng);
      cp.wk = &add_glorot(mp.store, lb + ".cross.wk", d, d, rng);
      cp.wv = &add_glorot(mp.store, lb + ".cross.wv", d, d, rng);
      lp.cross = cp;
      if (!cfg.strict_paper) lp.ln_cross = add_norm(mp.store, lb + ".ln_cross", d);
    }
    for (std::size_t h = 0; h < cfg.n_heads_self; ++h) {
      const std::string hb = lb + ".self.h" + std::to_string(h);
      lp.self_attn.wq.push_back(&add_glorot(mp.store, hb + ".wq", d, dh, rng));
      lp.self_attn.wk.push_back(&add_glorot(mp.store, hb + ".wk", d, dh, rng));
      lp.self_attn.wv.push_back(&add_glorot(mp.store, hb + ".wv", d, dh, rng));
    }
    lp.self_attn.wo = &add_glorot(mp.store, lb + ".self.wo", d, d, rng);
    if (!cfg.strict_paper) lp.ln_self = add_norm(mp.store, lb + ".ln_self", d);
    lp.ffn.w1 = &add_glorot(mp.store, lb + ".ffn.w1", d, cfg.ff_dim(), rng);
    lp.ffn.b1 = &add_zeros(mp.store, lb + ".ffn.b1", {cfg.ff_dim()});
    lp.ffn.w2 = &add_glorot(mp.store, lb + ".ffn.w2", cfg.ff_dim(), d, rng);
    lp.ffn.b2 = &add_zeros(mp.store, lb + ".ffn.b2", {d});
    if (!cfg.strict_paper) lp.ln_ffn = add_norm(mp.store, lb + ".ln_ffn", d);
    bp.layers.push_back(std::move(lp));
  }
}

}  // namespace

ModelParams build_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams mp;
  mp.config = config;
  const std::size_t d = config.d;

  for (Branch b : config.gated_branches()) {
    const std::string base = branch_name(b);
    BranchParams bp;
    if (config.wants_projection()) {
      ProjectionParams proj;
      proj.w = &add_glorot(mp.store, base + ".proj.w", config.d_in, d, rng);
      proj.b = &add_zeros(mp.store, base + ".proj.b", {d});
      bp.proj = proj;
    }
    bp.cls = &mp.store.add(base + ".cls", small_normal({1, d}, rng));
    mp.branches[static_cast<std::size_t>(b)] = std::move(bp);
    build_branch_layers(mp, b, rng);
  }

  if (config.use_instructional) {
    const std::size_t de = config.embed_dim();
    InstructionalEmbedderParams emb;
    emb.e_stage =
        &mp.store.add("instructional.embedder.e_stage", small_normal({config.n_stages, de}, rng));
    emb.e_subject = &mp.store.add("instructional.embedder.e_subject",
                                  small_normal({config.n_subjects, de}, rng));
    emb.w_c = &add_glorot(mp.store, "instructional.embedder.w_c", 2 * de, d, rng);
    emb.b_c = &add_zeros(mp.store, "instructional.embedder.b_c", {d});
    emb.gamma = &add_ones(mp.store, "instructional.embedder.gamma", d);
    emb.beta = &add_zeros(mp.store, "instructional.embedder.beta", {d});
    mp.embedder = emb;
    BranchParams bp;
    bp.cls = &mp.store.add("instructional.cls", small_normal({1, d}, rng));
    mp.branches[static_cast<std::size_t>(Branch::instructional)] = std::move(bp);
    if (!config.use_raw_hd) build_branch_layers(mp, Branch::instructional, rng);
  }

  const std::size_t k = config.gated_branches().size();
  // Classifier head follows the 0.02-normal convention, which keeps an
  // untrained model's logits near uniform.
  if (!config.use_hier_fusion) {
    const std::size_t total = config.active_branches().size();
    mp.classifier.w = &mp.store.add("classifier.w",
                                    small_normal({total * d, config.n_classes}, rng));
    mp.classifier.b = &add_zeros(mp.store, "classifier.b", {config.n_classes});
    return mp;
  }
  if (k >= 2) {
    GateParams gp;
    gp.w1 = &add_glorot(mp.store, "fusion.gate.w1", k * d, d, rng);
    gp.b1 = &add_zeros(mp.store, "fusion.gate.b1", {d});
    gp.w2 = &add_glorot(mp.store, "fusion.gate.w2", d, k, rng);
    gp.b2 = &add_zeros(mp.store, "fusion.gate.b2", {k});
    mp.gate = gp;
  }
  if (k >= 2 || config.use_instructional) {
    LinearParams fuse;
    const std::size_t win = config.use_instructional ? 2 * d : d;
    fuse.w = &add_glorot(mp.store, "fusion.final.w", win, d, rng);
    fuse.b = &add_zeros(mp.store, "fusion.final.b", {d});
    mp.fuse = fuse;
  }
  mp.classifier.w = &mp.store.add("classifier.w", small_normal({d, config.n_classes}, rng));
  mp.classifier.b = &add_zeros(mp.store, "classifier.b", {config.n_classes});
  return mp;
}

Var cross_attention(Graph& g, Var q_seq, Var kv_seq, const CrossAttnParams& p) {
  const std::size_t d = g.value(q_seq).cols();
  if (g.value(kv_seq).cols() != d) {
    throw std::invalid_argument("cross_attention: query/key widths differ");
  }
  Var q = g.matmul(q_seq, g.param(*p.wq));
  Var k = g.matmul(kv_seq, g.param(*p.wk));
  Var v = g.matmul(kv_seq, g.param(*p.wv));
  Var scores = g.scale(g.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  return g.matmul(g.softmax_lastdim(scores), v);
}

Var self_attention_block(Graph& g, Var seq, const SelfAttnParams& p) {
  std::vector<Var> heads;
  heads.reserve(p.wq.size());
  for (std::size_t h = 0; h < p.wq.size(); ++h) {
    Var q = g.matmul(seq, g.param(*p.wq[h]));
    Var k = g.matmul(seq, g.param(*p.wk[h]));
    Var v = g.matmul(seq, g.param(*p.wv[h]));
    const double dh = static_cast<double>(g.value(q).cols());
    Var attn = g.softmax_lastdim(g.scale(g.matmul_nt(q, k), 1.0 / std::sqrt(dh)));
    heads.push_back(g.matmul(attn, v));
  }
  Var merged = heads.size() == 1 ? heads[0] : g.concat_lastdim(heads);
  return g.add(g.matmul(merged, g.param(*p.wo)), seq);
}

Var ffn_block(Graph& g, Var seq, const FfnParams& p) {
  Var hidden = g.gelu(g.linear(seq, g.param(*p.w1), g.param(*p.b1)));
  Var out = g.linear(hidden, g.param(*p.w2), g.param(*p.b2));
  return g.add(out, seq);
}

BranchStates interaction_layer(Graph& g, const BranchStates& states, const ModelParams& params,
                               std::size_t layer, std::vector<std::pair<Branch, Branch>>* edges) {
  const ModelConfig& cfg = params.config;
  // Cross updates read the layer inputs only; every branch sees the same
  // snapshot regardless of update order.
  std::array<Var, 4> cross_out{};
  for (std::size_t bi = 0; bi < 4; ++bi) {
    if (!states[bi].valid()) continue;
    const LayerParams& lp = params.branches[bi]->layers.at(layer);
    if (!lp.cross) continue;
    const Branch b = static_cast<Branch>(bi);
    const Branch cp = cross_counterpart(b);
    const Var kv = states[static_cast<std::size_t>(cp)];
    if (!kv.valid()) {
      throw std::logic_error(std::string("interaction_layer: ") + branch_name(b) +
                             " cross-attends to disabled branch " + branch_name(cp));
    }
    cross_out[bi] = cross_attention(g, states[bi], kv, *lp.cross);
    if (edges) edges->emplace_back(b, cp);
  }
  BranchStates next{};
  for (std::size_t bi = 0; bi < 4; ++bi) {
    if (!states[bi].valid()) continue;
    const LayerParams& lp = params.branches[bi]->layers.at(layer);
    Var h = states[bi];
    if (lp.cross) {
      const bool residual = cfg.cross_residual && !cfg.strict_paper;
      h = residual ? g.add(cross_out[bi], h) : cross_out[bi];
      if (lp.ln_cross) {
        h = g.layer_norm(h, g.param(*lp.ln_cross->gamma), g.param(*lp.ln_cross->beta),
                         cfg.layer_norm_eps);
      }
    }
    h = self_attention_block(g, h, lp.self_attn);
    if (lp.ln_self) {
      h = g.layer_norm(h, g.param(*lp.ln_self->gamma), g.param(*lp.ln_self->beta),
                       cfg.layer_norm_eps);
    }
    h = ffn_block(g, h, lp.ffn);
    if (lp.ln_ffn) {
      h = g.layer_norm(h, g.param(*lp.ln_ffn->gamma), g.param(*lp.ln_ffn->beta),
                       cfg.layer_norm_eps);
    }
    next[bi] = h;
  }
  return next;
}

const Tensor& select_video(const ModelConfig& config, const FeatureBundle& bundle) {
  return config.video_flavor == VideoFlavor::desc ? bundle.video_desc : bundle.video_raw;
}

StackOutput forward_stack(Graph& g, ModelParams& params, const FeatureBundle& bundle) {
  const ModelConfig& cfg = params.config;
  BranchStates states{};
  for (Branch b : cfg.gated_branches()) {
    const Tensor& feat = b == Branch::text    ? bundle.text
                         : b == Branch::audio ? bundle.audio
                                              : select_video(cfg, bundle);
    if (feat.empty()) {
      throw std::invalid_argument(std::string("forward_stack: bundle lacks features for the ") +
                                  branch_name(b) + " branch");
    }
    if (feat.cols() != cfg.d_in) {
      throw std::invalid_argument(std::string("forward_stack: ") + branch_name(b) +
                                  " feature width " + std::to_string(feat.cols()) +
                                  " differs from configured d_in " + std::to_string(cfg.d_in));
    }
    const BranchParams& bp = *params.branches[static_cast<std::size_t>(b)];
    Var seq = g.input(feat);
    seq = project_sequence(g, seq, bp.proj ? &*bp.proj : nullptr, cfg.d);
    states[static_cast<std::size_t>(b)] = prepend_cls(g, seq, g.param(*bp.cls));
  }

  Var raw_hd;
  if (cfg.use_instructional) {
    Var h_d = embed_instructional(g, *params.embedder, bundle.stage_id, bundle.subject_id);
    if (cfg.use_raw_hd) {
      raw_hd = h_d;
    } else {
      const BranchParams& bp = *params.branches[static_cast<std::size_t>(Branch::instructional)];
      states[static_cast<std::size_t>(Branch::instructional)] =
          instructional_sequence(g, h_d, g.param(*bp.cls));
    }
  }

  StackOutput out;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    states = interaction_layer(g, states, params, l, &out.cross_edges);
  }
  for (std::size_t bi = 0; bi < 4; ++bi) {
    if (states[bi].valid()) out.cls[bi] = g.take_row(states[bi], 0);
  }
  if (cfg.use_instructional && cfg.use_raw_hd) {
    out.cls[static_cast<std::size_t>(Branch::instructional)] = raw_hd;
  }
  return out;
}

FusionOutput gated_fusion(Graph& g, const std::vector<Var>& cls_rows, const GateParams& p) {
  const std::size_t k = cls_rows.size();
  if (k < 2) throw std::invalid_argument("gated_fusion: needs at least two modalities");
  if (p.w2->value.extent(1) != k) {
    throw std::logic_error("gated_fusion: gate width " + std::to_string(p.w2->value.extent(1)) +
                           " does not match " + std::to_string(k) + " gated modalities");
  }
  Var cat = g.concat_lastdim(cls_rows);
  Var hidden = g.gelu(g.linear(cat, g.param(*p.w1), g.param(*p.b1)));
  Var gates = g.softmax_lastdim(g.linear(hidden, g.param(*p.w2), g.param(*p.b2)));
  Var stacked = g.concat_rows(cls_rows);
  FusionOutput out;
  out.h_fused = g.matmul(gates, stacked);
  out.gates = gates;
  return out;
}

Var fuse_final(Graph& g, Var h_fused, std::optional<Var> cls_d, const LinearParams& p) {
  Var x = cls_d ? g.concat_lastdim({h_fused, *cls_d}) : h_fused;
  return g.gelu(g.linear(x, g.param(*p.w), g.param(*p.b)));
}

int argmax_lowest(const Tensor& row) {
  int best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = static_cast<int>(j);
  }
  return best;
}

ModelOutput model_forward(Graph& g, ModelParams& params, const FeatureBundle& bundle,
                          bool with_loss, Reduction reduction) {
  const ModelConfig& cfg = params.config;
  StackOutput stack = forward_stack(g, params, bundle);
  ModelOutput out;
  out.cross_edges = std::move(stack.cross_edges);

  std::vector<Var> gated;
  for (Branch b : {Branch::text, Branch::audio, Branch::video}) {
    const Var v = stack.cls[static_cast<std::size_t>(b)];
    if (v.valid()) gated.push_back(v);
  }
  std::optional<Var> cls_d;
  if (stack.cls[static_cast<std::size_t>(Branch::instructional)].valid()) {
    cls_d = stack.cls[static_cast<std::size_t>(Branch::instructional)];
  }

  Var logits;
  if (!cfg.use_hier_fusion) {
    std::vector<Var> all = gated;
    if (cls_d) all.push_back(*cls_d);
    Var cat = all.size() == 1 ? all[0] : g.concat_lastdim(all);
    logits = g.linear(cat, g.param(*params.classifier.w), g.param(*params.classifier.b));
  } else if (gated.size() == 1 && !cls_d) {
    logits = g.linear(gated[0], g.param(*params.classifier.w), g.param(*params.classifier.b));
  } else {
    Var h_fused;
    if (gated.size() >= 2) {
      FusionOutput fusion = gated_fusion(g, gated, *params.gate);
      h_fused = fusion.h_fused;
      const Tensor& gv = g.value(fusion.gates);
      out.gates.assign(gv.data(), gv.data() + gv.size());
    } else {
      h_fused = gated[0];
    }
    Var h_final = fuse_final(g, h_fused, cls_d, *params.fuse);
    logits = g.linear(h_final, g.param(*params.classifier.w), g.param(*params.classifier.b));
  }

  out.logits = logits;
  out.probs = g.value(g.softmax_lastdim(logits));
  out.predicted = argmax_lowest(out.probs);
  if (with_loss) {
    out.loss = g.cross_entropy(logits, {static_cast<int>(bundle.label)}, reduction);
    out.loss_value = g.value(out.loss)[0];
  }
  return out;
}

}  // namespace tsa
