#pragma once

#include <string>
#include <vector>

#include "tsa/model.hpp"

namespace tsa {

// One ablation wiring: which modalities, which video flavor, which modules.
struct VariantSpec {
  std::string name;
  bool use_text = false;
  bool use_audio = false;
  bool use_video = false;
  VideoFlavor flavor = VideoFlavor::desc;
  bool use_instructional = false;
  bool use_cross_modal = false;
  bool use_hier_fusion = true;
};

const std::vector<VariantSpec>& variant_registry();

// Throws with the registry listing on an unknown name. The joint-training
// variants (Var-FECI, Var-JI, Var-JICI) are registered as aliases that abort:
// they require trainable encoders, which this artifact does not ship.
VariantSpec resolve_variant(const std::string& name);

ModelConfig apply_variant(const VariantSpec& spec, ModelConfig base);

}  // namespace tsa
