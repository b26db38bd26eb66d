#pragma once

#include <functional>

#include "lu/bigram.h"

namespace lu::bigram::detail {

AttnTransformer fit_lm_checked(AttnTransformer model, const TransitionMatrix& matrix,
                               const core::UnlearnConfig& config, const TokenSet& mask_tokens,
                               std::vector<double>* trace, double divergence_threshold);

/// Calls `visit(sequence, t, distribution)` for positions 0..6 of every sequence.
void predict_positions(const AttnTransformer& model, std::span<const Sequence> sequences,
                       const std::function<void(const Sequence&, std::size_t, const Row&)>& visit);

}  // namespace lu::bigram::detail
