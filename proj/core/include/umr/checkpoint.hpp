#pragma once

#include "umr/autodiff.hpp"
#include "umr/named_array_file.hpp"

namespace umr::ad {

/// Stores every parameter as "param/<name>", and with `with_state` its
/// optimizer moments and step count as well.
void store_parameters(NamedArrayFile& file, const ParameterStore& store, bool with_state = true);

/// Fills an already-built store. Every parameter must be present with a
/// matching shape; missing optimizer state resets it.
void load_parameters(const NamedArrayFile& file, ParameterStore& store);

}  // namespace umr::ad
