#pragma once

// Three-token bigram testbed with a one-layer, attention-only transformer.
//
// Tokens are a, b, r. The base chain sends a and b to r with probability
// 1 - 2 eps and r to a or b with probability (1 - eps) / 2 each; every other
// transition has probability eps.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lu/common.h"
#include "lu/core.h"

namespace lu::bigram {

enum class Token : std::uint8_t { a = 0, b = 1, r = 2 };

inline constexpr std::size_t kVocab = 3;
inline constexpr std::size_t kSeqLen = 8;
inline constexpr std::size_t kModel = 32;

inline std::size_t index(Token t) { return static_cast<std::size_t>(t); }
std::string_view token_name(Token t);
/// "a", "b" or "r"; throws ValidationError otherwise.
Token parse_token(std::string_view name);

using TokenSet = core::ExampleSet<Token>;
using Row = std::array<double, kVocab>;

struct TransitionMatrix {
  std::array<Row, kVocab> rows{};
  double epsilon = 0.05;

  const Row& row(Token t) const { return rows[index(t)]; }
  Row& row(Token t) { return rows[index(t)]; }
};

/// Throws ValidationError unless 0 < epsilon < 1/3.
TransitionMatrix base_transition(double epsilon = 0.05);

/// Forget rows become uniform, retain rows are copied from the base chain,
/// other rows are kept from `matrix`. Throws on overlap.
TransitionMatrix flatten_rows(const TransitionMatrix& matrix, const TokenSet& forget, const TokenSet& retain);

/// Relearning data: rows in `relearn` follow the base chain, all others are uniform.
TransitionMatrix relearn_matrix(double epsilon, const TokenSet& relearn);

using Sequence = std::array<Token, kSeqLen>;

struct SequenceBatch {
  std::vector<Sequence> sequences;
  std::uint64_t seed = 0;
};

/// First token uniform, then the chain. Deterministic in seed.
SequenceBatch sample_sequences(const TransitionMatrix& matrix, std::size_t n, std::uint64_t seed);
void sample_sequences_into(const TransitionMatrix& matrix, std::size_t n, Rng& rng, std::vector<Sequence>& out);

/// Weight blocks in serialization order.
enum class Weight : std::uint8_t { E = 0, Q, K, V, O, U };
inline constexpr std::array<Weight, 6> kAllWeights{Weight::E, Weight::Q, Weight::K, Weight::V, Weight::O, Weight::U};
std::string_view weight_name(Weight w);  // "W_E", "W_Q", ...

struct BlockShape {
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;
};
BlockShape block_shape(Weight w);

inline constexpr std::size_t kParamCount = 2 * kVocab * kModel + 4 * kModel * kModel;

/// One-layer attention-only transformer: embedding W_E (3x32), a single
/// causal head W_Q, W_K, W_V, W_O (32x32 each) and unembedding W_U (32x3).
/// No biases, no positional parameters, no normalization.
struct AttnTransformer {
  ParamVector params = ParamVector(kParamCount, 0.0);

  AttnTransformer() = default;
  explicit AttnTransformer(ParamVector p);

  std::span<double> block(Weight w);
  std::span<const double> block(Weight w) const;
  double& at(Weight w, std::size_t row, std::size_t col);
  double at(Weight w, std::size_t row, std::size_t col) const;
};

/// I.i.d. normal weights with standard deviation `init_std`.
AttnTransformer init_transformer(double init_std, std::uint64_t seed);

/// Next-token distribution at every position of `sequence` (length <= 8).
std::vector<Row> forward(const AttnTransformer& model, std::span<const Token> sequence);

/// keep[s][t] selects the prediction of token t+1 of sequence s.
using PositionMask = std::vector<std::array<bool, kSeqLen - 1>>;

PositionMask mask_all(const SequenceBatch& batch);
/// Positions whose current (predecessor) token is in `tokens`.
PositionMask mask_after(const SequenceBatch& batch, const TokenSet& tokens);

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean next-token cross-entropy over masked positions with analytic gradients.
/// Throws ValidationError when the mask selects nothing.
LossAndGrad lm_loss_and_grad(const AttnTransformer& model, const SequenceBatch& batch, const PositionMask& mask);
double lm_loss(const AttnTransformer& model, const SequenceBatch& batch, const PositionMask& mask);

struct TrainConfig {
  core::UnlearnConfig stage{.steps = 2000, .learning_rate = 1e-3, .batch_size = 64};
  double init_std = 0.25;
  double epsilon = 0.05;
};

/// Adam on the language-modeling loss with fresh batches from `matrix` every step.
/// `mask_tokens` empty means every position counts.
AttnTransformer fit_lm(AttnTransformer model, const TransitionMatrix& matrix, const core::UnlearnConfig& config,
                       const TokenSet& mask_tokens = {}, std::vector<double>* trace = nullptr);

/// Base model theta_0. Throws NumericalError if the loss exceeds 10.
AttnTransformer train_base(const TrainConfig& config, std::uint64_t seed, std::vector<double>* trace = nullptr);

/// Unlearning primitive over tokens: LM loss on data from flatten_rows(base, forget, retain).
core::UnlearnPrimitive<Token> bigram_unlearn_primitive(double epsilon = 0.05);

struct RelearnConfig {
  core::UnlearnConfig stage{.steps = 100, .learning_rate = 1e-3, .batch_size = 64};
  double epsilon = 0.05;
  /// Restrict the loss to positions following a relearned token. When false,
  /// every position of the relearn-matrix data is trained.
  bool masked = true;
};

AttnTransformer bigram_relearn(const AttnTransformer& model, const TokenSet& relearn, const RelearnConfig& config);

struct BigramMetrics {
  double acc_a = 0.0;
  double acc_b = 0.0;
  double tv_r = 0.0;

  MetricList to_metrics() const;  // names "A", "B", "R"
};

/// Evaluation on i.i.d. uniform token contexts (n_eval contexts, 7 per sequence).
/// acc_x is the mean probability of r after x; tv_r is the total variation
/// between the model's {a, b} conditional after r and (1/2, 1/2).
BigramMetrics eval_bigram(const AttnTransformer& model, std::size_t n_eval, std::uint64_t seed);

struct ComponentMask {
  bool qk = false;
  bool ov = false;
  bool ue = false;

  /// Masks 0..7 in the order 000, 001, ..., 111 (qk is the high bit).
  static ComponentMask from_index(unsigned index);
  std::string label() const;  // e.g. "110"

  friend bool operator==(const ComponentMask&, const ComponentMask&) = default;
};

/// Takes the masked weight groups from `model_lu` and the rest from `model_u`.
AttnTransformer substitute_components(const AttnTransformer& model_u, const AttnTransformer& model_lu,
                                      ComponentMask mask);

struct AblationRow {
  ComponentMask mask;
  std::uint64_t seed = 0;
  BigramMetrics unlearned;
  BigramMetrics relearned_a;  // after relearning token a
  BigramMetrics relearned_b;  // after relearning token b
};

/// Every mask x {relearn a, relearn b} for every seed. Relearning always
/// starts from the hybrid model.
std::vector<AblationRow> ablation_sweep(const AttnTransformer& model_u, const AttnTransformer& model_lu,
                                        const RelearnConfig& relearn, std::size_t n_eval,
                                        std::span<const std::uint64_t> seeds);

}  // namespace lu::bigram
