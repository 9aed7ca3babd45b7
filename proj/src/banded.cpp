// Transfer DP over bijections with |pi(r) - r| <= B in sorted coordinates.
//
// Before row r is assigned, every column below r - B is used and no column at
// or above r + B is, so the state is the set of used columns in the window
// [r - B, r + B - 1] (bit k <-> column r - B + k; columns below 0 count as
// used). Row r takes an unused column c in [r - B, r + B]; column r - B must
// be used afterwards, then the window slides by one.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "pmatch/error.hpp"
#include "pmatch/gibbs_exact.hpp"

namespace pmatch {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::ptrdiff_t BandedTransfer::Stage::find(std::uint64_t m) const {
  const auto it = std::lower_bound(masks.begin(), masks.end(), m);
  if (it == masks.end() || *it != m) return -1;
  return it - masks.begin();
}

BandedTransfer::BandedTransfer(const LogMatrix& sorted, const BandedOptions& opt)
    : a_(sorted), n_(sorted.n) {
  if (opt.bandwidth < 0) throw DomainError("bandwidth must be >= 0");
  band_ = std::min(opt.bandwidth, std::max(n_ - 1, 0));
  if (band_ > 31) {
    std::ostringstream msg;
    msg << "bandwidth " << band_ << " exceeds the transfer-DP limit of 31";
    throw EngineCapError(msg.str());
  }
  row_max_.assign(n_, kNegInf);
  for (int r = 0; r < n_; ++r) {
    for (int c = std::max(0, r - band_); c <= std::min(n_ - 1, r + band_); ++c) {
      row_max_[r] = std::max(row_max_[r], a_(r, c));
    }
    if (row_max_[r] == kNegInf) {
      throw NumericError("a row has no admissible column inside the band");
    }
  }
  forward(opt);
  backward();
}

void BandedTransfer::forward(const BandedOptions& opt) {
  const int B = band_;
  const std::uint64_t init = (std::uint64_t{1} << B) - 1;
  stages_.assign(n_ + 1, Stage{});
  stages_[0].masks = {init};
  stages_[0].fwd = {1.0};
  std::vector<double> wrow(2 * B + 1);
  std::unordered_map<std::uint64_t, double> next;
  std::vector<std::pair<double, std::uint64_t>> scored;
  for (int r = 0; r < n_; ++r) {
    const Stage& cur = stages_[r];
    for (int k = 0; k <= 2 * B; ++k) {
      const int c = r - B + k;
      wrow[k] = (c >= 0 && c < n_) ? std::exp(a_(r, c) - row_max_[r]) : 0.0;
    }
    next.clear();
    next.reserve(cur.masks.size() * 2);
    for (std::size_t s = 0; s < cur.masks.size(); ++s) {
      const std::uint64_t m = cur.masks[s];
      const double f = cur.fwd[s];
      for (int k = 0; k <= 2 * B; ++k) {
        if (wrow[k] == 0.0 || (m >> k & 1u)) continue;
        const std::uint64_t full = m | (std::uint64_t{1} << k);
        if (!(full & 1u)) continue;
        next[full >> 1] += f * wrow[k];
      }
    }
    if (next.empty()) throw NumericError("no bijection fits inside the band");
    // Score: forward value times the completion that hands the remaining
    // window holes to the next rows in sorted order (the best completion when
    // V is convex; columns past the window then sit on the diagonal for every
    // state alike).
    const int r1 = r + 1;
    scored.clear();
    double top = kNegInf;
    double vmax = 0.0;
    const std::uint64_t window = (B == 0) ? 0 : ((std::uint64_t{1} << (2 * B)) - 1);
    for (const auto& [m, v] : next) {
      if (!(v > 0.0)) continue;
      double score = std::log(v);
      int rr = r1;
      for (std::uint64_t holes = ~m & window; holes && rr < n_; holes &= holes - 1, ++rr) {
        const int c = r1 - B + std::countr_zero(holes);
        if (c >= n_) break;
        score += a_(rr, c) - row_max_[rr];
      }
      scored.emplace_back(score, m);
      top = std::max(top, score);
    }
    if (scored.empty()) throw NumericError("forward pass underflowed");
    if (std::isfinite(opt.prune_log)) {
      const double cut = top - opt.prune_log;
      std::erase_if(scored, [cut](const auto& e) { return e.first < cut; });
    }
    if (scored.size() > opt.max_states) {
      std::nth_element(scored.begin(), scored.begin() + opt.max_states, scored.end(),
                       [](const auto& x, const auto& y) { return x.first > y.first; });
      scored.resize(opt.max_states);
    }
    Stage& nxt = stages_[r1];
    nxt.masks.reserve(scored.size());
    for (const auto& e : scored) nxt.masks.push_back(e.second);
    std::sort(nxt.masks.begin(), nxt.masks.end());
    nxt.fwd.resize(nxt.masks.size());
    for (std::size_t s = 0; s < nxt.masks.size(); ++s) {
      nxt.fwd[s] = next[nxt.masks[s]];
      vmax = std::max(vmax, nxt.fwd[s]);
    }
    for (double& v : nxt.fwd) v /= vmax;
    nxt.fwd_log = cur.fwd_log + row_max_[r] + std::log(vmax);
  }
  if (stages_[n_].find(init) < 0) throw NumericError("transfer DP lost the final state");
}

void BandedTransfer::backward() {
  const int B = band_;
  Stage& last = stages_[n_];
  last.bwd.assign(last.masks.size(), 0.0);
  last.bwd[last.find((std::uint64_t{1} << B) - 1)] = 1.0;
  last.bwd_log = 0.0;
  std::vector<double> wrow(2 * B + 1);
  for (int r = n_ - 1; r >= 0; --r) {
    Stage& cur = stages_[r];
    const Stage& nxt = stages_[r + 1];
    for (int k = 0; k <= 2 * B; ++k) {
      const int c = r - B + k;
      wrow[k] = (c >= 0 && c < n_) ? std::exp(a_(r, c) - row_max_[r]) : 0.0;
    }
    cur.bwd.assign(cur.masks.size(), 0.0);
    double vmax = 0.0;
    for (std::size_t s = 0; s < cur.masks.size(); ++s) {
      const std::uint64_t m = cur.masks[s];
      double b = 0.0;
      for (int k = 0; k <= 2 * B; ++k) {
        if (wrow[k] == 0.0 || (m >> k & 1u)) continue;
        const std::uint64_t full = m | (std::uint64_t{1} << k);
        if (!(full & 1u)) continue;
        const std::ptrdiff_t t = nxt.find(full >> 1);
        if (t >= 0) b += wrow[k] * nxt.bwd[t];
      }
      cur.bwd[s] = b;
      vmax = std::max(vmax, b);
    }
    if (!(vmax > 0.0)) throw NumericError("backward pass has no mass");
    for (double& v : cur.bwd) v /= vmax;
    cur.bwd_log = nxt.bwd_log + row_max_[r] + std::log(vmax);
  }
  log_z_ = stages_[0].bwd_log + std::log(stages_[0].bwd[0]);
}

MarginalMatrix BandedTransfer::marginals() const {
  const int B = band_;
  MarginalMatrix m(n_);
  std::vector<double> wrow(2 * B + 1), acc(2 * B + 1);
  for (int r = 0; r < n_; ++r) {
    const Stage& cur = stages_[r];
    const Stage& nxt = stages_[r + 1];
    for (int k = 0; k <= 2 * B; ++k) {
      const int c = r - B + k;
      wrow[k] = (c >= 0 && c < n_) ? std::exp(a_(r, c) - row_max_[r]) : 0.0;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t s = 0; s < cur.masks.size(); ++s) {
      const std::uint64_t mask = cur.masks[s];
      const double f = cur.fwd[s];
      if (f == 0.0) continue;
      for (int k = 0; k <= 2 * B; ++k) {
        if (wrow[k] == 0.0 || (mask >> k & 1u)) continue;
        const std::uint64_t full = mask | (std::uint64_t{1} << k);
        if (!(full & 1u)) continue;
        const std::ptrdiff_t t = nxt.find(full >> 1);
        if (t >= 0) acc[k] += f * wrow[k] * nxt.bwd[t];
      }
    }
    double total = 0.0;
    for (double v : acc) total += v;
    if (!(total > 0.0)) throw NumericError("marginal row has no mass");
    for (int k = 0; k <= 2 * B; ++k) {
      const int c = r - B + k;
      if (c >= 0 && c < n_) m(r, c) = acc[k] / total;
    }
  }
  return m;
}

std::vector<int> BandedTransfer::sample(CounterRng& rng) const {
  const int B = band_;
  std::vector<int> pi(n_);
  std::uint64_t mask = stages_[0].masks[0];
  std::vector<double> w(2 * B + 1);
  std::vector<std::uint64_t> to(2 * B + 1);
  for (int r = 0; r < n_; ++r) {
    const Stage& nxt = stages_[r + 1];
    double total = 0.0;
    for (int k = 0; k <= 2 * B; ++k) {
      w[k] = 0.0;
      const int c = r - B + k;
      if (c < 0 || c >= n_ || (mask >> k & 1u)) continue;
      const std::uint64_t full = mask | (std::uint64_t{1} << k);
      if (!(full & 1u)) continue;
      const std::ptrdiff_t t = nxt.find(full >> 1);
      if (t < 0) continue;
      w[k] = std::exp(a_(r, c) - row_max_[r]) * nxt.bwd[t];
      to[k] = full >> 1;
      total += w[k];
    }
    double u = rng.uniform() * total;
    int pick = -1;
    for (int k = 0; k <= 2 * B; ++k) {
      if (w[k] <= 0.0) continue;
      pick = k;
      if (u < w[k]) break;
      u -= w[k];
    }
    if (pick < 0) throw NumericError("sampler reached a dead state");
    pi[r] = r - B + pick;
    mask = to[pick];
  }
  return pi;
}

std::size_t BandedTransfer::max_stage_states() const {
  std::size_t m = 0;
  for (const auto& s : stages_) m = std::max(m, s.masks.size());
  return m;
}

MarginalMatrix banded_marginals(const LogMatrix& sorted, const BandedOptions& opt) {
  return BandedTransfer(sorted, opt).marginals();
}

}  // namespace pmatch
