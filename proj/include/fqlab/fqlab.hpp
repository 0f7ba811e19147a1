#pragma once

// Umbrella header: the whole library in one include.

#include "fqlab/data_distribution.hpp"
#include "fqlab/env_model.hpp"
#include "fqlab/experiment_harness.hpp"
#include "fqlab/igm_operator.hpp"
#include "fqlab/lstsq_oracle.hpp"
#include "fqlab/lvf_operator.hpp"
#include "fqlab/rng.hpp"
#include "fqlab/serialization.hpp"
#include "fqlab/value_tables.hpp"

namespace fqlab {

inline constexpr const char* kLibraryVersion = "1.0.0";

}  // namespace fqlab
