#include "admix/mixing.hpp"

namespace admix {

Sides sides_from_name(const std::string& name) {
  if (name == "both") return Sides::both;
  if (name == "source_only") return Sides::source_only;
  if (name == "target_only") return Sides::target_only;
  throw std::invalid_argument("unknown sides '" + name +
                              "' (expected both|source_only|target_only)");
}

const char* sides_name(Sides s) {
  switch (s) {
    case Sides::both: return "both";
    case Sides::source_only: return "source_only";
    case Sides::target_only: return "target_only";
  }
  return "?";
}

Divergence divergence_from_name(const std::string& name) {
  if (name == "js") return Divergence::js;
  if (name == "kl") return Divergence::kl;
  throw std::invalid_argument("unknown divergence '" + name + "' (expected js|kl)");
}

const char* divergence_name(Divergence d) {
  return d == Divergence::js ? "js" : "kl";
}

void AdmixConfig::validate() const {
  if (ops.empty())
    throw std::invalid_argument("admix: ops must be nonempty when augmentation is enabled");
  if (!(alpha > 0.0)) throw std::invalid_argument("admix: alpha must be positive");
  if (!(beta > 0.0)) throw std::invalid_argument("admix: beta must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("admix: gamma must be in [0, 1)");
  if (lambda < 0.0) throw std::invalid_argument("admix: lambda must be nonnegative");
  for (size_t i = 0; i < ops.size(); ++i)
    for (size_t j = i + 1; j < ops.size(); ++j)
      if (ops[i] == ops[j]) throw std::invalid_argument("admix: duplicate op in ops list");
}

}  // namespace admix
