#pragma once

#include "vibctl/molecular_model.hpp"

namespace vibctl::test {

/// Default model, built once per process.
inline const MolecularModel& default_model() {
  static const MolecularModel m = MolecularModel::build(ModelConfig::defaults());
  return m;
}

}  // namespace vibctl::test
