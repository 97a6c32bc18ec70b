#include "tsa/gradcheck_suite.hpp"

#include <functional>

#include "tsa/features.hpp"
#include "tsa/model.hpp"
#include "tsa/variants.hpp"

namespace tsa {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

FeatureBundle random_bundle(std::size_t dim, std::size_t tokens, Rng& rng) {
  FeatureBundle b;
  b.name = "gradcheck";
  b.text = random_tensor({tokens, dim}, rng);
  b.audio = random_tensor({tokens, dim}, rng);
  b.video_desc = random_tensor({tokens, dim}, rng);
  b.video_raw = random_tensor({tokens, dim}, rng);
  b.stage_id = 1;
  b.subject_id = 3;
  b.label = EmotionLabel::joy;
  return b;
}

GradCheckCase model_case(const std::string& variant, std::size_t dim, double h, double tol,
                         Rng& rng) {
  ModelConfig cfg = apply_variant(resolve_variant(variant), ModelConfig{});
  cfg.d = dim;
  cfg.d_in = dim;
  cfg.n_layers = 1;
  cfg.n_heads_self = dim % 4 == 0 ? 4 : 1;
  ModelParams params = build_model(cfg, rng);
  FeatureBundle bundle = random_bundle(dim, 4, rng);
  auto build = [&params, bundle](Graph& g) {
    return model_forward(g, params, bundle, /*with_loss=*/true).loss;
  };
  return {"model_" + variant, grad_check(params.store, build, h, tol)};
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::size_t dim, double h, double tol) {
  std::vector<GradCheckCase> cases;
  Rng rng(20240817);

  auto check = [&](const std::string& name, ParamStore& store,
                   const std::function<Var(Graph&)>& build) {
    cases.push_back({name, grad_check(store, build, h, tol)});
  };

  {
    ParamStore store;
    Parameter& x = store.add("x", random_tensor({3, 4}, rng));
    Parameter& w = store.add("w", random_tensor({4, 2}, rng, 0.5));
    Parameter& b = store.add("b", random_tensor({2}, rng, 0.1));
    const Tensor probe = random_tensor({3, 2}, rng);
    check("linear", store, [&](Graph& g) {
      return g.weighted_sum(g.linear(g.param(x), g.param(w), g.param(b)), probe);
    });
  }
  {
    ParamStore store;
    Parameter& a = store.add("a", random_tensor({3, 5}, rng));
    Parameter& b = store.add("b", random_tensor({5, 2}, rng));
    const Tensor probe = random_tensor({3, 2}, rng);
    check("matmul", store, [&](Graph& g) {
      return g.weighted_sum(g.matmul(g.param(a), g.param(b)), probe);
    });
  }
  {
    ParamStore store;
    Parameter& a = store.add("a", random_tensor({3, 5}, rng));
    Parameter& b = store.add("b", random_tensor({4, 5}, rng));
    const Tensor probe = random_tensor({3, 4}, rng);
    check("matmul_nt", store, [&](Graph& g) {
      return g.weighted_sum(g.matmul_nt(g.param(a), g.param(b)), probe);
    });
  }
  {
    ParamStore store;
    Parameter& x = store.add("x", random_tensor({4, 6}, rng));
    const Tensor probe = random_tensor({4, 6}, rng);
    check("softmax_lastdim", store, [&](Graph& g) {
      return g.weighted_sum(g.softmax_lastdim(g.param(x)), probe);
    });
  }
  {
    ParamStore store;
    Parameter& x = store.add("x", random_tensor({3, 6}, rng));
    Parameter& gamma = store.add("gamma", random_tensor({6}, rng, 0.3));
    Parameter& beta = store.add("beta", random_tensor({6}, rng, 0.3));
    const Tensor probe = random_tensor({3, 6}, rng);
    check("layer_norm", store, [&](Graph& g) {
      return g.weighted_sum(g.layer_norm(g.param(x), g.param(gamma), g.param(beta)), probe);
    });
  }
  {
    ParamStore store;
    Parameter& x = store.add("x", random_tensor({4, 4}, rng));
    const Tensor probe = random_tensor({4, 4}, rng);
    check("gelu", store,
          [&](Graph& g) { return g.weighted_sum(g.gelu(g.param(x)), probe); });
  }
  {
    ParamStore store;
    Parameter& a = store.add("a", random_tensor({2, 3}, rng));
    Parameter& b = store.add("b", random_tensor({2, 4}, rng));
    const Tensor probe = random_tensor({2, 7}, rng);
    check("concat_lastdim", store, [&](Graph& g) {
      return g.weighted_sum(g.concat_lastdim({g.param(a), g.param(b)}), probe);
    });
  }
  {
    ParamStore store;
    Parameter& a = store.add("a", random_tensor({1, 4}, rng));
    Parameter& b = store.add("b", random_tensor({3, 4}, rng));
    const Tensor probe = random_tensor({2, 4}, rng);
    check("concat_rows+slice", store, [&](Graph& g) {
      Var cat = g.concat_rows({g.param(a), g.param(b)});
      return g.weighted_sum(g.slice_rows(cat, 1, 3), probe);
    });
  }
  {
    ParamStore store;
    Parameter& logits = store.add("logits", random_tensor({4, 8}, rng));
    check("cross_entropy", store, [&](Graph& g) {
      return g.cross_entropy(g.param(logits), {1, 0, 7, 3}, Reduction::mean);
    });
  }
  {
    ParamStore store;
    Parameter& q_in = store.add("q_in", random_tensor({3, 6}, rng));
    Parameter& kv_in = store.add("kv_in", random_tensor({4, 6}, rng));
    CrossAttnParams cp;
    cp.wq = &store.add("wq", random_tensor({6, 6}, rng, 0.4));
    cp.wk = &store.add("wk", random_tensor({6, 6}, rng, 0.4));
    cp.wv = &store.add("wv", random_tensor({6, 6}, rng, 0.4));
    const Tensor probe = random_tensor({3, 6}, rng);
    check("cross_attention", store, [&](Graph& g) {
      return g.weighted_sum(cross_attention(g, g.param(q_in), g.param(kv_in), cp), probe);
    });
  }
  {
    ParamStore store;
    Parameter& x = store.add("x", random_tensor({4, 6}, rng));
    SelfAttnParams sp;
    for (int head = 0; head < 2; ++head) {
      const std::string hb = "h" + std::to_string(head);
      sp.wq.push_back(&store.add(hb + ".wq", random_tensor({6, 3}, rng, 0.4)));
      sp.wk.push_back(&store.add(hb + ".wk", random_tensor({6, 3}, rng, 0.4)));
      sp.wv.push_back(&store.add(hb + ".wv", random_tensor({6, 3}, rng, 0.4)));
    }
    sp.wo = &store.add("wo", random_tensor({6, 6}, rng, 0.4));
    const Tensor probe = random_tensor({4, 6}, rng);
    check("self_attention_block", store, [&](Graph& g) {
      return g.weighted_sum(self_attention_block(g, g.param(x), sp), probe);
    });
  }
  {
    ParamStore store;
    Parameter& x = store.add("x", random_tensor({3, 4}, rng));
    FfnParams fp;
    fp.w1 = &store.add("w1", random_tensor({4, 8}, rng, 0.4));
    fp.b1 = &store.add("b1", random_tensor({8}, rng, 0.1));
    fp.w2 = &store.add("w2", random_tensor({8, 4}, rng, 0.4));
    fp.b2 = &store.add("b2", random_tensor({4}, rng, 0.1));
    const Tensor probe = random_tensor({3, 4}, rng);
    check("ffn_block", store, [&](Graph& g) {
      return g.weighted_sum(ffn_block(g, g.param(x), fp), probe);
    });
  }
  {
    ParamStore store;
    InstructionalEmbedderParams ep;
    ep.e_stage = &store.add("e_stage", random_tensor({4, 5}, rng, 0.5));
    ep.e_subject = &store.add("e_subject", random_tensor({11, 5}, rng, 0.5));
    ep.w_c = &store.add("w_c", random_tensor({10, 6}, rng, 0.4));
    ep.b_c = &store.add("b_c", random_tensor({6}, rng, 0.1));
    ep.gamma = &store.add("gamma", random_tensor({6}, rng, 0.3));
    ep.beta = &store.add("beta", random_tensor({6}, rng, 0.3));
    const Tensor probe = random_tensor({1, 6}, rng);
    check("embed_instructional", store, [&](Graph& g) {
      return g.weighted_sum(embed_instructional(g, ep, 2, 7), probe);
    });
  }
  {
    ParamStore store;
    Parameter& c1 = store.add("cls1", random_tensor({1, 4}, rng));
    Parameter& c2 = store.add("cls2", random_tensor({1, 4}, rng));
    Parameter& c3 = store.add("cls3", random_tensor({1, 4}, rng));
    GateParams gp;
    gp.w1 = &store.add("gate.w1", random_tensor({12, 4}, rng, 0.4));
    gp.b1 = &store.add("gate.b1", random_tensor({4}, rng, 0.1));
    gp.w2 = &store.add("gate.w2", random_tensor({4, 3}, rng, 0.4));
    gp.b2 = &store.add("gate.b2", random_tensor({3}, rng, 0.1));
    const Tensor probe = random_tensor({1, 4}, rng);
    check("gated_fusion", store, [&](Graph& g) {
      const FusionOutput out =
          gated_fusion(g, {g.param(c1), g.param(c2), g.param(c3)}, gp);
      return g.weighted_sum(out.h_fused, probe);
    });
  }

  cases.push_back(model_case("full", dim, h, tol, rng));
  cases.push_back(model_case("Var-TA", dim, h, tol, rng));
  cases.push_back(model_case("Var-A", dim, h, tol, rng));
  return cases;
}

}  // namespace tsa
