#include "dae_asym/activation.hpp"

#include "dae_asym/errors.hpp"

namespace dae {

Activation Activation::parse(const std::string& name) {
  if (name == "tanh") return tanh_act();
  if (name == "identity") return identity();
  if (name == "zero") return zero();
  throw ConfigError("unknown activation '" + name + "' (expected tanh|identity)");
}

const char* Activation::name() const {
  switch (kind) {
    case Kind::tanh_act: return "tanh";
    case Kind::identity: return "identity";
    default: return "zero";
  }
}

}  // namespace dae
