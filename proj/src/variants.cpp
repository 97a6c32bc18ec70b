#include "tsa/variants.hpp"

#include <sstream>
#include <stdexcept>

namespace tsa {

namespace {

VariantSpec make(const std::string& name, bool t, bool a, bool v, VideoFlavor flavor, bool instr,
                 bool cross, bool hier) {
  VariantSpec s;
  s.name = name;
  s.use_text = t;
  s.use_audio = a;
  s.use_video = v;
  s.flavor = flavor;
  s.use_instructional = instr;
  s.use_cross_modal = cross;
  s.use_hier_fusion = hier;
  return s;
}

constexpr const char* kJointTrainingAliases[] = {"Var-FECI", "Var-JI", "Var-JICI"};

}  // namespace

const std::vector<VariantSpec>& variant_registry() {
  static const std::vector<VariantSpec> registry = {
      // Single modality: cross-attention has no counterpart and gating no
      // second input, so both are bypassed.
      make("Var-T", true, false, false, VideoFlavor::desc, false, false, true),
      make("Var-A", false, true, false, VideoFlavor::desc, false, false, true),
      make("Var-VD", false, false, true, VideoFlavor::desc, false, false, true),
      // Modality combinations.
      make("Var-TA", true, true, false, VideoFlavor::desc, false, true, true),
      make("Var-TARV", true, true, true, VideoFlavor::raw, false, true, true),
      make("Var-AVD", false, true, true, VideoFlavor::desc, false, true, true),
      make("Var-TAVD", true, true, true, VideoFlavor::desc, false, true, true),
      make("Var-TARVI", true, true, true, VideoFlavor::raw, true, true, true),
      // Module ablations of the full model.
      make("Var-CIHF", true, true, true, VideoFlavor::desc, false, true, true),
      make("Var-FEHF", true, true, true, VideoFlavor::desc, true, false, true),
      make("Var-FEAC", true, true, true, VideoFlavor::desc, true, true, false),
      make("full", true, true, true, VideoFlavor::desc, true, true, true),
  };
  return registry;
}

VariantSpec resolve_variant(const std::string& name) {
  for (const char* alias : kJointTrainingAliases) {
    if (name == alias) {
      throw std::runtime_error("variant '" + name +
                               "' is out of scope: requires trainable encoders (JT)");
    }
  }
  for (const VariantSpec& spec : variant_registry()) {
    if (spec.name == name) return spec;
  }
  std::ostringstream os;
  os << "unknown variant '" << name << "'; registry:";
  for (const VariantSpec& spec : variant_registry()) os << ' ' << spec.name;
  throw std::invalid_argument(os.str());
}

ModelConfig apply_variant(const VariantSpec& spec, ModelConfig base) {
  base.use_text = spec.use_text;
  base.use_audio = spec.use_audio;
  base.use_video = spec.use_video;
  base.video_flavor = spec.flavor;
  base.use_instructional = spec.use_instructional;
  base.use_cross_modal = spec.use_cross_modal;
  base.use_hier_fusion = spec.use_hier_fusion;
  base.validate();
  return base;
}

}  // namespace tsa
