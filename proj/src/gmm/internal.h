#pragma once

#include "lu/gmm.h"

namespace lu::gmm::detail {

Point sample_from(Rng& rng, const GaussianMixtureSpec& spec, std::size_t g);

}  // namespace lu::gmm::detail
