#include <algorithm>
#include <cmath>
#include <limits>

#include "internal.h"
#include "lu/optim.h"

namespace lu::bigram {

namespace {

const double kScale = 1.0 / std::sqrt(static_cast<double>(kModel));

using Vec = std::array<double, kModel>;

// x (row vector, length rows) times the rows x cols block `m`.
template <std::size_t Cols>
std::array<double, Cols> row_times(std::span<const double> x, std::span<const double> m) {
  std::array<double, Cols> out{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* mi = m.data() + i * Cols;
    for (std::size_t j = 0; j < Cols; ++j) out[j] += xi * mi[j];
  }
  return out;
}

// m (rows x Cols) times column vector y (length Cols), giving a length-rows vector.
template <std::size_t Rows, std::size_t Cols>
std::array<double, Rows> times_col(std::span<const double> m, const std::array<double, Cols>& y) {
  std::array<double, Rows> out{};
  for (std::size_t i = 0; i < Rows; ++i) {
    double s = 0.0;
    const double* mi = m.data() + i * Cols;
    for (std::size_t j = 0; j < Cols; ++j) s += mi[j] * y[j];
    out[i] = s;
  }
  return out;
}

// g += x^T y for a rows x cols gradient block.
template <std::size_t Rows, std::size_t Cols>
void add_outer(std::span<double> g, const std::array<double, Rows>& x, const std::array<double, Cols>& y) {
  for (std::size_t i = 0; i < Rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* gi = g.data() + i * Cols;
    for (std::size_t j = 0; j < Cols; ++j) gi[j] += xi * y[j];
  }
}

template <std::size_t N>
void add_into(std::array<double, N>& a, const std::array<double, N>& b) {
  for (std::size_t i = 0; i < N; ++i) a[i] += b[i];
}

Row softmax(const Row& z) {
  const double mx = std::max({z[0], z[1], z[2]});
  Row p{};
  double s = 0.0;
  for (std::size_t k = 0; k < kVocab; ++k) {
    p[k] = std::exp(z[k] - mx);
    s += p[k];
  }
  for (auto& v : p) v /= s;
  return p;
}

// Every activation of the network depends on a position only through its token
// and its attention weights, so the whole forward pass reduces to per-token tables.
struct TokenTables {
  std::array<Vec, kVocab> e{}, q{}, k{}, v{}, vo{};
  std::array<Row, kVocab> e_u{};   // e_w W_U
  std::array<Row, kVocab> vo_u{};  // v_w W_O W_U
  std::array<std::array<double, kVocab>, kVocab> score{};  // q_u . k_w / sqrt(d)

  explicit TokenTables(const AttnTransformer& m) {
    for (std::size_t w = 0; w < kVocab; ++w) {
      const auto ew = m.block(Weight::E).subspan(w * kModel, kModel);
      std::copy(ew.begin(), ew.end(), e[w].begin());
      q[w] = row_times<kModel>(e[w], m.block(Weight::Q));
      k[w] = row_times<kModel>(e[w], m.block(Weight::K));
      v[w] = row_times<kModel>(e[w], m.block(Weight::V));
      vo[w] = row_times<kModel>(v[w], m.block(Weight::O));
      e_u[w] = row_times<kVocab>(e[w], m.block(Weight::U));
      vo_u[w] = row_times<kVocab>(vo[w], m.block(Weight::U));
    }
    for (std::size_t u = 0; u < kVocab; ++u) {
      for (std::size_t w = 0; w < kVocab; ++w) {
        double s = 0.0;
        for (std::size_t i = 0; i < kModel; ++i) s += q[u][i] * k[w][i];
        score[u][w] = s * kScale;
      }
    }
  }
};

struct TableGrads {
  std::array<Row, kVocab> e_u{};
  std::array<Row, kVocab> vo_u{};
  std::array<std::array<double, kVocab>, kVocab> score{};
};

// Causal attention weights of position t over positions 0..t.
void attention_weights(const TokenTables& tab, std::span<const Token> seq, std::size_t t,
                       std::array<double, kSeqLen>& alpha) {
  const std::size_t u = index(seq[t]);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j <= t; ++j) mx = std::max(mx, tab.score[u][index(seq[j])]);
  double s = 0.0;
  for (std::size_t j = 0; j <= t; ++j) {
    alpha[j] = std::exp(tab.score[u][index(seq[j])] - mx);
    s += alpha[j];
  }
  for (std::size_t j = 0; j <= t; ++j) alpha[j] /= s;
}

struct BatchResult {
  double loss = 0.0;
  std::size_t count = 0;
};

BatchResult run_batch(const AttnTransformer& model, const SequenceBatch& batch, const PositionMask& mask,
                      ParamVector* grad) {
  if (mask.size() != batch.sequences.size()) throw ValidationError("position mask does not match batch size");
  std::size_t count = 0;
  for (const auto& row : mask) count += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
  if (count == 0) throw ValidationError("position mask selects no positions");

  const TokenTables tab(model);
  TableGrads tg;
  const double inv_n = 1.0 / static_cast<double>(count);
  double loss = 0.0;
  std::array<double, kSeqLen> alpha{};
  std::array<double, kSeqLen> dalpha{};

  for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
    const Sequence& seq = batch.sequences[s];
    for (std::size_t t = 0; t + 1 < kSeqLen; ++t) {
      if (!mask[s][t]) continue;
      const std::size_t u = index(seq[t]);
      attention_weights(tab, seq, t, alpha);
      Row beta{};
      for (std::size_t j = 0; j <= t; ++j) beta[index(seq[j])] += alpha[j];
      Row z = tab.e_u[u];
      for (std::size_t w = 0; w < kVocab; ++w) {
        for (std::size_t c = 0; c < kVocab; ++c) z[c] += beta[w] * tab.vo_u[w][c];
      }
      const Row p = softmax(z);
      const std::size_t y = index(seq[t + 1]);
      loss -= std::log(p[y]) * inv_n;
      if (!grad) continue;

      Row dz = p;
      dz[y] -= 1.0;
      for (auto& d : dz) d *= inv_n;
      Row dbeta{};
      for (std::size_t c = 0; c < kVocab; ++c) tg.e_u[u][c] += dz[c];
      for (std::size_t w = 0; w < kVocab; ++w) {
        for (std::size_t c = 0; c < kVocab; ++c) {
          tg.vo_u[w][c] += beta[w] * dz[c];
          dbeta[w] += tab.vo_u[w][c] * dz[c];
        }
      }
      double mean_dalpha = 0.0;
      for (std::size_t j = 0; j <= t; ++j) {
        dalpha[j] = dbeta[index(seq[j])];
        mean_dalpha += alpha[j] * dalpha[j];
      }
      for (std::size_t j = 0; j <= t; ++j) tg.score[u][index(seq[j])] += alpha[j] * (dalpha[j] - mean_dalpha);
    }
  }

  if (grad) {
    grad->assign(kParamCount, 0.0);
    AttnTransformer g(std::move(*grad));
    std::array<Vec, kVocab> de{}, dvo{}, dv{}, dq{}, dk{};
    const auto W_U = model.block(Weight::U);
    const auto W_O = model.block(Weight::O);
    const auto W_V = model.block(Weight::V);
    const auto W_Q = model.block(Weight::Q);
    const auto W_K = model.block(Weight::K);
    for (std::size_t w = 0; w < kVocab; ++w) {
      add_outer<kModel, kVocab>(g.block(Weight::U), tab.e[w], tg.e_u[w]);
      add_outer<kModel, kVocab>(g.block(Weight::U), tab.vo[w], tg.vo_u[w]);
      add_into(de[w], times_col<kModel, kVocab>(W_U, tg.e_u[w]));
      dvo[w] = times_col<kModel, kVocab>(W_U, tg.vo_u[w]);
      add_outer<kModel, kModel>(g.block(Weight::O), tab.v[w], dvo[w]);
      dv[w] = times_col<kModel, kModel>(W_O, dvo[w]);
      add_outer<kModel, kModel>(g.block(Weight::V), tab.e[w], dv[w]);
      add_into(de[w], times_col<kModel, kModel>(W_V, dv[w]));
    }
    for (std::size_t u = 0; u < kVocab; ++u) {
      for (std::size_t w = 0; w < kVocab; ++w) {
        const double ds = tg.score[u][w] * kScale;
        if (ds == 0.0) continue;
        for (std::size_t i = 0; i < kModel; ++i) {
          dq[u][i] += ds * tab.k[w][i];
          dk[w][i] += ds * tab.q[u][i];
        }
      }
    }
    for (std::size_t w = 0; w < kVocab; ++w) {
      add_outer<kModel, kModel>(g.block(Weight::Q), tab.e[w], dq[w]);
      add_outer<kModel, kModel>(g.block(Weight::K), tab.e[w], dk[w]);
      add_into(de[w], times_col<kModel, kModel>(W_Q, dq[w]));
      add_into(de[w], times_col<kModel, kModel>(W_K, dk[w]));
      auto ge = g.block(Weight::E).subspan(w * kModel, kModel);
      for (std::size_t i = 0; i < kModel; ++i) ge[i] += de[w][i];
    }
    *grad = std::move(g.params);
  }
  return {loss, count};
}

}  // namespace

std::string_view weight_name(Weight w) {
  switch (w) {
    case Weight::E:
      return "W_E";
    case Weight::Q:
      return "W_Q";
    case Weight::K:
      return "W_K";
    case Weight::V:
      return "W_V";
    case Weight::O:
      return "W_O";
    case Weight::U:
      return "W_U";
  }
  return "?";
}

BlockShape block_shape(Weight w) {
  constexpr std::size_t kEmbed = kVocab * kModel;
  constexpr std::size_t kSquare = kModel * kModel;
  switch (w) {
    case Weight::E:
      return {kVocab, kModel, 0};
    case Weight::Q:
      return {kModel, kModel, kEmbed};
    case Weight::K:
      return {kModel, kModel, kEmbed + kSquare};
    case Weight::V:
      return {kModel, kModel, kEmbed + 2 * kSquare};
    case Weight::O:
      return {kModel, kModel, kEmbed + 3 * kSquare};
    case Weight::U:
      return {kModel, kVocab, kEmbed + 4 * kSquare};
  }
  throw ValidationError("unknown weight block");
}

AttnTransformer::AttnTransformer(ParamVector p) : params(std::move(p)) {
  if (params.size() != kParamCount) {
    throw ValidationError("transformer expects " + std::to_string(kParamCount) + " parameters, got " +
                          std::to_string(params.size()));
  }
}

std::span<double> AttnTransformer::block(Weight w) {
  const auto s = block_shape(w);
  return {params.data() + s.offset, s.rows * s.cols};
}

std::span<const double> AttnTransformer::block(Weight w) const {
  const auto s = block_shape(w);
  return {params.data() + s.offset, s.rows * s.cols};
}

double& AttnTransformer::at(Weight w, std::size_t row, std::size_t col) {
  const auto s = block_shape(w);
  return params[s.offset + row * s.cols + col];
}

double AttnTransformer::at(Weight w, std::size_t row, std::size_t col) const {
  const auto s = block_shape(w);
  return params[s.offset + row * s.cols + col];
}

AttnTransformer init_transformer(double init_std, std::uint64_t seed) {
  if (!(init_std >= 0.0)) throw ValidationError("init_std must be non-negative");
  AttnTransformer m;
  Rng rng(seed);
  for (double& p : m.params) p = init_std * standard_normal(rng);
  return m;
}

std::vector<Row> forward(const AttnTransformer& model, std::span<const Token> sequence) {
  if (sequence.size() > kSeqLen) throw ValidationError("sequence longer than 8 tokens");
  for (Token t : sequence) {
    if (index(t) >= kVocab) throw ValidationError("invalid token id " + std::to_string(index(t)));
  }
  const std::size_t n = sequence.size();
  std::vector<Vec> x(n), q(n), k(n), v(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto e = model.block(Weight::E).subspan(index(sequence[t]) * kModel, kModel);
    std::copy(e.begin(), e.end(), x[t].begin());
    q[t] = row_times<kModel>(x[t], model.block(Weight::Q));
    k[t] = row_times<kModel>(x[t], model.block(Weight::K));
    v[t] = row_times<kModel>(x[t], model.block(Weight::V));
  }
  std::vector<Row> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    // Scores over the whole sequence; future positions are masked to -inf.
    std::vector<double> s(n, -std::numeric_limits<double>::infinity());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= t; ++j) {
      double d = 0.0;
      for (std::size_t i = 0; i < kModel; ++i) d += q[t][i] * k[j][i];
      s[j] = d * kScale;
      mx = std::max(mx, s[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = std::exp(s[j] - mx);
      total += s[j];
    }
    Vec c{};
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < kModel; ++i) c[i] += (s[j] / total) * v[j][i];
    }
    Vec resid = row_times<kModel>(c, model.block(Weight::O));
    add_into(resid, x[t]);
    out[t] = softmax(row_times<kVocab>(resid, model.block(Weight::U)));
  }
  return out;
}

PositionMask mask_all(const SequenceBatch& batch) {
  PositionMask m(batch.sequences.size());
  for (auto& row : m) row.fill(true);
  return m;
}

PositionMask mask_after(const SequenceBatch& batch, const TokenSet& tokens) {
  PositionMask m(batch.sequences.size());
  for (std::size_t s = 0; s < m.size(); ++s) {
    for (std::size_t t = 0; t + 1 < kSeqLen; ++t) {
      m[s][t] = std::find(tokens.begin(), tokens.end(), batch.sequences[s][t]) != tokens.end();
    }
  }
  return m;
}

LossAndGrad lm_loss_and_grad(const AttnTransformer& model, const SequenceBatch& batch, const PositionMask& mask) {
  LossAndGrad out;
  out.loss = run_batch(model, batch, mask, &out.grad).loss;
  return out;
}

double lm_loss(const AttnTransformer& model, const SequenceBatch& batch, const PositionMask& mask) {
  return run_batch(model, batch, mask, nullptr).loss;
}

namespace detail {

AttnTransformer fit_lm_checked(AttnTransformer model, const TransitionMatrix& matrix,
                               const core::UnlearnConfig& config, const TokenSet& mask_tokens,
                               std::vector<double>* trace, double divergence_threshold) {
  config.validate(/*allow_zero_steps=*/true);
  if (config.steps == 0) return model;
  auto state = optim::AdamState::fresh(kParamCount, config.learning_rate);
  Rng rng(config.seed);
  SequenceBatch batch;
  ParamVector grad;
  for (std::size_t step = 0; step < config.steps; ++step) {
    sample_sequences_into(matrix, config.batch_size, rng, batch.sequences);
    const PositionMask mask = mask_tokens.empty() ? mask_all(batch) : mask_after(batch, mask_tokens);
    const bool any = std::any_of(mask.begin(), mask.end(),
                                 [](const auto& row) { return std::find(row.begin(), row.end(), true) != row.end(); });
    if (!any) continue;
    const double loss = run_batch(model, batch, mask, &grad).loss;
    if (!std::isfinite(loss) || loss > divergence_threshold) {
      throw NumericalError("language-model loss diverged at step " + std::to_string(step) + " (" +
                           std::to_string(loss) + ")");
    }
    if (trace) trace->push_back(loss);
    optim::adam_update(state, model.params, grad);
  }
  return model;
}

void predict_positions(const AttnTransformer& model, std::span<const Sequence> sequences,
                       const std::function<void(const Sequence&, std::size_t, const Row&)>& visit) {
  const TokenTables tab(model);
  std::array<double, kSeqLen> alpha{};
  for (const Sequence& seq : sequences) {
    for (std::size_t t = 0; t + 1 < kSeqLen; ++t) {
      attention_weights(tab, seq, t, alpha);
      Row z = tab.e_u[index(seq[t])];
      for (std::size_t j = 0; j <= t; ++j) {
        const auto& vo_u = tab.vo_u[index(seq[j])];
        for (std::size_t c = 0; c < kVocab; ++c) z[c] += alpha[j] * vo_u[c];
      }
      visit(seq, t, softmax(z));
    }
  }
}

}  // namespace detail

AttnTransformer fit_lm(AttnTransformer model, const TransitionMatrix& matrix, const core::UnlearnConfig& config,
                       const TokenSet& mask_tokens, std::vector<double>* trace) {
  return detail::fit_lm_checked(std::move(model), matrix, config, mask_tokens, trace,
                                std::numeric_limits<double>::infinity());
}

}  // namespace lu::bigram
