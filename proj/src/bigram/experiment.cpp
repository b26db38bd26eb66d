#include <cmath>

#include "internal.h"

namespace lu::bigram {

AttnTransformer train_base(const TrainConfig& config, std::uint64_t seed, std::vector<double>* trace) {
  constexpr double kDivergenceLoss = 10.0;
  AttnTransformer model = init_transformer(config.init_std, derive_seed(seed, "init"));
  core::UnlearnConfig stage = config.stage;
  stage.seed = derive_seed(seed, "base-data");
  return detail::fit_lm_checked(std::move(model), base_transition(config.epsilon), stage, {}, trace,
                                kDivergenceLoss);
}

core::UnlearnPrimitive<Token> bigram_unlearn_primitive(double epsilon) {
  const TransitionMatrix base = base_transition(epsilon);
  return [base](const ParamVector& theta, const TokenSet& forget, const TokenSet& retain,
                const core::UnlearnConfig& hyper) {
    const TransitionMatrix target = flatten_rows(base, forget, retain);
    return fit_lm(AttnTransformer(theta), target, hyper).params;
  };
}

AttnTransformer bigram_relearn(const AttnTransformer& model, const TokenSet& relearn, const RelearnConfig& config) {
  if (relearn.empty()) throw ValidationError("relearn needs at least one token");
  const TransitionMatrix data = relearn_matrix(config.epsilon, relearn);
  return fit_lm(model, data, config.stage, config.masked ? relearn : TokenSet{});
}

MetricList BigramMetrics::to_metrics() const { return {{"A", acc_a}, {"B", acc_b}, {"R", tv_r}}; }

BigramMetrics eval_bigram(const AttnTransformer& model, std::size_t n_eval, std::uint64_t seed) {
  if (n_eval < 1000) throw ValidationError("eval_bigram needs n_eval >= 1000 contexts");
  constexpr std::size_t kPerSequence = kSeqLen - 1;
  const std::size_t n_seq = (n_eval + kPerSequence - 1) / kPerSequence;
  std::vector<Sequence> seqs(n_seq);
  Rng rng(seed);
  for (auto& s : seqs) {
    for (auto& t : s) t = static_cast<Token>(uniform_index(rng, kVocab));
  }

  std::array<double, kVocab> sum{};
  std::array<std::size_t, kVocab> count{};
  detail::predict_positions(model, seqs, [&](const Sequence& seq, std::size_t t, const Row& p) {
    const Token cur = seq[t];
    ++count[index(cur)];
    if (cur == Token::r) {
      const double pa = p[index(Token::a)] / (p[index(Token::a)] + p[index(Token::b)]);
      sum[index(cur)] += 0.5 * (std::abs(pa - 0.5) + std::abs((1.0 - pa) - 0.5));
    } else {
      sum[index(cur)] += p[index(Token::r)];
    }
  });
  const auto mean = [&](Token t) {
    return count[index(t)] == 0 ? 0.0 : sum[index(t)] / static_cast<double>(count[index(t)]);
  };
  return {mean(Token::a), mean(Token::b), mean(Token::r)};
}

ComponentMask ComponentMask::from_index(unsigned i) {
  if (i > 7) throw ValidationError("component mask index must be 0..7");
  return {(i & 4U) != 0, (i & 2U) != 0, (i & 1U) != 0};
}

std::string ComponentMask::label() const {
  return std::string{qk ? '1' : '0', ov ? '1' : '0', ue ? '1' : '0'};
}

AttnTransformer substitute_components(const AttnTransformer& model_u, const AttnTransformer& model_lu,
                                      ComponentMask mask) {
  AttnTransformer out = model_u;
  const auto take = [&](Weight w) {
    const auto src = model_lu.block(w);
    std::copy(src.begin(), src.end(), out.block(w).begin());
  };
  if (mask.qk) {
    take(Weight::Q);
    take(Weight::K);
  }
  if (mask.ov) {
    take(Weight::O);
    take(Weight::V);
  }
  if (mask.ue) {
    take(Weight::U);
    take(Weight::E);
  }
  return out;
}

std::vector<AblationRow> ablation_sweep(const AttnTransformer& model_u, const AttnTransformer& model_lu,
                                        const RelearnConfig& relearn, std::size_t n_eval,
                                        std::span<const std::uint64_t> seeds) {
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    for (unsigned i = 0; i < 8; ++i) {
      AblationRow row;
      row.mask = ComponentMask::from_index(i);
      row.seed = seed;
      const AttnTransformer hybrid = substitute_components(model_u, model_lu, row.mask);
      const std::uint64_t eval_seed = derive_seed(seed, "eval");
      row.unlearned = eval_bigram(hybrid, n_eval, eval_seed);
      RelearnConfig cfg = relearn;
      cfg.stage.seed = derive_seed(seed, "relearn-a");
      row.relearned_a = eval_bigram(bigram_relearn(hybrid, {Token::a}, cfg), n_eval, eval_seed);
      cfg.stage.seed = derive_seed(seed, "relearn-b");
      row.relearned_b = eval_bigram(bigram_relearn(hybrid, {Token::b}, cfg), n_eval, eval_seed);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace lu::bigram
