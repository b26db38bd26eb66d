#include <cmath>

#include "lu/bigram.h"

namespace lu::bigram {

std::string_view token_name(Token t) {
  switch (t) {
    case Token::a:
      return "a";
    case Token::b:
      return "b";
    case Token::r:
      return "r";
  }
  return "?";
}

Token parse_token(std::string_view name) {
  if (name == "a" || name == "A") return Token::a;
  if (name == "b" || name == "B") return Token::b;
  if (name == "r" || name == "R") return Token::r;
  throw ValidationError("unknown token '" + std::string(name) + "'");
}

TransitionMatrix base_transition(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0 / 3.0)) {
    throw ValidationError("epsilon must lie in (0, 1/3), got " + std::to_string(epsilon));
  }
  TransitionMatrix m;
  m.epsilon = epsilon;
  m.row(Token::a) = {epsilon, epsilon, 1.0 - 2.0 * epsilon};
  m.row(Token::b) = {epsilon, epsilon, 1.0 - 2.0 * epsilon};
  m.row(Token::r) = {0.5 - 0.5 * epsilon, 0.5 - 0.5 * epsilon, epsilon};
  return m;
}

TransitionMatrix flatten_rows(const TransitionMatrix& matrix, const TokenSet& forget, const TokenSet& retain) {
  for (Token f : forget) {
    for (Token r : retain) {
      if (f == r) throw ValidationError("token " + std::string(token_name(f)) + " is in both forget and retain");
    }
  }
  const TransitionMatrix base = base_transition(matrix.epsilon);
  TransitionMatrix out = matrix;
  for (Token f : forget) out.row(f) = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  for (Token r : retain) out.row(r) = base.row(r);
  return out;
}

TransitionMatrix relearn_matrix(double epsilon, const TokenSet& relearn) {
  const TransitionMatrix base = base_transition(epsilon);
  TransitionMatrix out;
  out.epsilon = epsilon;
  for (auto& row : out.rows) row = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  for (Token t : relearn) out.row(t) = base.row(t);
  return out;
}

namespace {

Token draw(const Row& row, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < kVocab; ++k) {
    acc += row[k];
    if (u < acc) return static_cast<Token>(k);
  }
  return static_cast<Token>(kVocab - 1);
}

}  // namespace

void sample_sequences_into(const TransitionMatrix& matrix, std::size_t n, Rng& rng, std::vector<Sequence>& out) {
  out.resize(n);
  for (auto& seq : out) {
    seq[0] = static_cast<Token>(uniform_index(rng, kVocab));
    for (std::size_t t = 1; t < kSeqLen; ++t) seq[t] = draw(matrix.row(seq[t - 1]), rng);
  }
}

SequenceBatch sample_sequences(const TransitionMatrix& matrix, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_sequences needs n >= 1");
  SequenceBatch batch;
  batch.seed = seed;
  Rng rng(seed);
  sample_sequences_into(matrix, n, rng, batch.sequences);
  return batch;
}

}  // namespace lu::bigram
