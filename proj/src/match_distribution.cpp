#include "pmatch/match_distribution.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "pmatch/error.hpp"
#include "pmatch/rng.hpp"

namespace pmatch {
namespace {

// Ranking tolerance: cumulative sums such as 0.6 + 0.3 land a few ulps off 0.9.
constexpr double kCumTol = 1e-12;

struct Ranked {
  std::vector<std::size_t> idx;  // indices into P, descending probability
  std::size_t k = 1;             // 1-based boundary rank
  double xi = 1.0;
};

// Rank without tie randomization (stable by position); k and xi do not depend
// on the order inside tie groups.
Ranked rank(const MatchDistribution& P, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw DomainError("credible-set alpha must lie in [0, 1)");
  }
  if (P.size() == 0) throw DomainError("credible set of an empty distribution");
  Ranked r;
  r.idx.resize(P.size());
  std::iota(r.idx.begin(), r.idx.end(), 0);
  std::stable_sort(r.idx.begin(), r.idx.end(), [&](std::size_t a, std::size_t b) {
    return P.probs[a] > P.probs[b];
  });
  const double target = 1.0 - alpha;
  double cum = 0.0;
  for (std::size_t pos = 0; pos < r.idx.size(); ++pos) {
    const double p = P.probs[r.idx[pos]];
    if (cum + p >= target - kCumTol && p > 0.0) {
      r.k = pos + 1;
      // cum < target - kCumTol here, so xi > 0.
      r.xi = std::min(1.0, (target - cum) / p);
      if (r.xi > 1.0 - kCumTol) r.xi = 1.0;
      return r;
    }
    cum += p;
  }
  // Mass deficit below tolerance: take everything with positive mass.
  std::size_t last = 0;
  for (std::size_t pos = 0; pos < r.idx.size(); ++pos) {
    if (P.probs[r.idx[pos]] > 0.0) last = pos;
  }
  r.k = last + 1;
  r.xi = 1.0;
  return r;
}

}  // namespace

double MatchDistribution::prob(const Label& label) const {
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == label) return probs[k];
  }
  return 0.0;
}

double MatchDistribution::total() const {
  return std::accumulate(probs.begin(), probs.end(), 0.0);
}

MatchDistribution MatchDistribution::point_mass(const Label& label) {
  return {{label}, {1.0}};
}

void MatchDistribution::prune(double threshold) {
  std::size_t out = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (probs[k] > threshold) {
      labels[out] = labels[k];
      probs[out] = probs[k];
      ++out;
    }
  }
  labels.resize(out);
  probs.resize(out);
}

void MatchDistribution::check(double tol) const {
  if (labels.size() != probs.size()) {
    throw ContractViolation("labels and probs differ in length");
  }
  std::vector<std::int64_t> enc;
  for (const auto& l : labels) enc.push_back(encode_label(l));
  std::sort(enc.begin(), enc.end());
  if (std::adjacent_find(enc.begin(), enc.end()) != enc.end()) {
    throw ContractViolation("duplicate label in match distribution");
  }
  for (double p : probs) {
    if (!(p >= 0.0)) throw ContractViolation("negative probability");
  }
  const double t = total();
  if (std::abs(t - 1.0) > tol) {
    std::ostringstream msg;
    msg << "match distribution sums to " << t;
    throw ContractViolation(msg.str());
  }
}

double tv_distance(const MatchDistribution& a, const MatchDistribution& b) {
  std::map<std::int64_t, double> diff;
  for (std::size_t k = 0; k < a.size(); ++k) diff[encode_label(a.labels[k])] += a.probs[k];
  for (std::size_t k = 0; k < b.size(); ++k) diff[encode_label(b.labels[k])] -= b.probs[k];
  double s = 0.0;
  for (const auto& [label, d] : diff) s += std::abs(d);
  return 0.5 * s;
}

CredibleSet credible_set(const MatchDistribution& P, double alpha,
                         std::uint64_t seed) {
  Ranked r = rank(P, alpha);
  CounterRng rng(seed, 0);
  // Shuffle each tie group in place.
  for (std::size_t lo = 0; lo < r.idx.size();) {
    std::size_t hi = lo + 1;
    while (hi < r.idx.size() && P.probs[r.idx[hi]] == P.probs[r.idx[lo]]) ++hi;
    for (std::size_t m = hi - lo; m > 1; --m) {
      const std::size_t j = lo + rng.below(m);
      std::swap(r.idx[lo + m - 1], r.idx[j]);
    }
    lo = hi;
  }
  CredibleSet c;
  c.alpha = alpha;
  c.k = r.k;
  c.xi = r.xi;
  for (std::size_t idx : r.idx) c.order.push_back(P.labels[idx]);
  c.members.assign(c.order.begin(), c.order.begin() + (r.k - 1));
  c.boundary_label = c.order[r.k - 1];
  c.realization = c.members;
  if (rng.uniform() < r.xi) c.realization.push_back(c.boundary_label);
  return c;
}

double expected_cardinality(const MatchDistribution& P, double alpha) {
  const Ranked r = rank(P, alpha);
  return static_cast<double>(r.k - 1) + r.xi;
}

double expected_coverage(const MatchDistribution& P, const Label& j_star,
                         double alpha, bool* missing) {
  const Ranked r = rank(P, alpha);
  std::size_t where = P.size();
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (P.labels[k] == j_star) where = k;
  }
  if (missing) *missing = where == P.size();
  if (where == P.size()) return 0.0;
  const double pj = P.probs[where];
  // 1-based ranks a..b occupied by the tie group of j*.
  std::size_t a = 1;
  std::size_t b = 0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (P.probs[k] > pj) ++a;
    if (P.probs[k] >= pj) ++b;
  }
  double sum = 0.0;
  for (std::size_t rk = a; rk <= b; ++rk) {
    sum += rk < r.k ? 1.0 : (rk == r.k ? r.xi : 0.0);
  }
  return sum / static_cast<double>(b - a + 1);
}

double cost_true_match(const MatchDistribution& P, const Label& j_star) {
  return P.prob(j_star);
}

FSpec FSpec::parse(std::string_view text) {
  FSpec f;
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  if (head == "true_match_prob") {
    if (colon != std::string_view::npos) {
      throw ConfigError("true_match_prob takes no parameter");
    }
    f.kind = Kind::kTrueMatchProb;
    return f;
  }
  if (head == "expected_card") {
    f.kind = Kind::kExpectedCard;
  } else if (head == "coverage") {
    f.kind = Kind::kCoverage;
  } else {
    throw ConfigError("unknown cost functional '" + std::string(text) + "'");
  }
  if (colon == std::string_view::npos) {
    throw ConfigError("cost functional '" + std::string(text) + "' needs :alpha");
  }
  const std::string_view num = text.substr(colon + 1);
  const auto res = std::from_chars(num.data(), num.data() + num.size(), f.alpha);
  if (res.ec != std::errc() || res.ptr != num.data() + num.size() ||
      !(f.alpha >= 0.0 && f.alpha < 1.0)) {
    throw ConfigError("bad alpha in cost functional '" + std::string(text) + "'");
  }
  return f;
}

std::string FSpec::name() const {
  std::ostringstream s;
  switch (kind) {
    case Kind::kTrueMatchProb:
      return "true_match_prob";
    case Kind::kExpectedCard:
      s << "expected_card:" << alpha;
      return s.str();
    case Kind::kCoverage:
      s << "coverage:" << alpha;
      return s.str();
  }
  return "";
}

double FSpec::operator()(const MatchDistribution& P, const Label& j_star) const {
  switch (kind) {
    case Kind::kTrueMatchProb:
      return cost_true_match(P, j_star);
    case Kind::kExpectedCard:
      return expected_cardinality(P, alpha);
    case Kind::kCoverage:
      return expected_coverage(P, j_star, alpha);
  }
  return 0.0;
}

double empirical_cost_average(std::span<const MatchDistribution> rows,
                              std::span<const Label> truth, const FSpec& f) {
  if (rows.size() != truth.size()) {
    throw ContractViolation("rows and truth differ in length");
  }
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) s += f(rows[i], truth[i]);
  return s / static_cast<double>(rows.size());
}

}  // namespace pmatch
