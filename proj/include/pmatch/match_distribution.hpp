#pragma once

// Probability vectors over candidate matches and the matching cost
// functionals evaluated on them.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pmatch {

/// A candidate match: a Y-label, or std::nullopt for "unmatched".
using Label = std::optional<std::int64_t>;

inline std::int64_t encode_label(const Label& l) { return l ? *l : -1; }
inline Label decode_label(std::int64_t v) {
  return v < 0 ? Label{} : Label{v};
}

struct MatchDistribution {
  std::vector<Label> labels;
  std::vector<double> probs;

  std::size_t size() const { return labels.size(); }
  /// P(label); 0 if the label is absent.
  double prob(const Label& label) const;
  double total() const;
  /// Point mass at one label.
  static MatchDistribution point_mass(const Label& label);
  /// Drop entries with probability <= threshold.
  void prune(double threshold = 0.0);
  /// Throws ContractViolation unless labels are distinct and probabilities
  /// are nonnegative and sum to 1 within tol.
  void check(double tol = 1e-12) const;
};

/// Half the L1 distance over the union of the two label sets.
double tv_distance(const MatchDistribution& a, const MatchDistribution& b);

/// Randomized Bayes credible set. Probabilities are ranked in descending
/// order with ties in uniform random order; the first k-1 ranked labels are
/// always members and the k-th is added with probability xi, so that
/// mass(first k-1) + xi * P(k-th) = 1 - alpha.
struct CredibleSet {
  double alpha = 0.1;
  std::vector<Label> order;    // full ranking used
  std::vector<Label> members;  // deterministic part, ranks 1..k-1
  Label boundary_label;
  std::size_t k = 1;
  double xi = 1.0;
  std::vector<Label> realization;  // one draw of C(P)
};

/// alpha must lie in [0, 1); alpha = 0 gives the full support.
CredibleSet credible_set(const MatchDistribution& P, double alpha,
                         std::uint64_t seed);

/// E|C(P)| = (k - 1) + xi.
double expected_cardinality(const MatchDistribution& P, double alpha);

/// P[j* in C(P)], averaged over tie orders. Returns 0 and sets *missing when
/// j* is not among the labels.
double expected_coverage(const MatchDistribution& P, const Label& j_star,
                         double alpha, bool* missing = nullptr);

/// P(j*), 0 if absent.
double cost_true_match(const MatchDistribution& P, const Label& j_star);

/// One of the three cost functionals, named as "true_match_prob",
/// "expected_card:<alpha>" or "coverage:<alpha>".
struct FSpec {
  enum class Kind { kTrueMatchProb, kExpectedCard, kCoverage };
  Kind kind = Kind::kTrueMatchProb;
  double alpha = 0.1;

  static FSpec parse(std::string_view text);
  std::string name() const;
  double operator()(const MatchDistribution& P, const Label& j_star) const;
};

/// (1/N) sum_i f(P_i, truth_i). Throws ContractViolation on length mismatch.
double empirical_cost_average(std::span<const MatchDistribution> rows,
                              std::span<const Label> truth, const FSpec& f);

}  // namespace pmatch
