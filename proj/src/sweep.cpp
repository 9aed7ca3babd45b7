// Sweep transfer DP for the partial posterior.
//
// All points are visited left to right. A matched pair is opened by its left
// point and closed by its right point, so before step t the state is the set
// of earlier points still waiting for a partner. Bit k of the state stands
// for the point visited k + 1 steps ago; a point that would be shifted past
// bit 63 while open drops the configuration.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "pmatch/error.hpp"
#include "pmatch/gibbs_partial.hpp"

namespace pmatch {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kSpan = 64;
constexpr int kEmpty = -1;
constexpr int kOpen = -2;

struct Point {
  double pos;
  bool is_x;
  int id;
};

// Open-addressing map from masks to dense ids, reused across stages.
class MaskIndex {
 public:
  void reset(std::size_t expected) {
    std::size_t cap = 16;
    while (cap < 2 * expected + 2) cap <<= 1;
    if (slots_.size() < cap) slots_.resize(cap);
    std::fill(slots_.begin(), slots_.begin() + static_cast<std::ptrdiff_t>(cap), Slot{});
    cap_ = cap;
    keys_.clear();
  }
  // Id of m, inserting it if new.
  std::uint32_t insert(std::uint64_t m) {
    if (2 * (keys_.size() + 1) > cap_) grow();
    std::size_t h = hash(m) & (cap_ - 1);
    while (slots_[h].used) {
      if (slots_[h].key == m) return slots_[h].id;
      h = (h + 1) & (cap_ - 1);
    }
    slots_[h] = {m, static_cast<std::uint32_t>(keys_.size()), true};
    keys_.push_back(m);
    return slots_[h].id;
  }
  const std::vector<std::uint64_t>& keys() const { return keys_; }

 private:
  struct Slot {
    std::uint64_t key = 0;
    std::uint32_t id = 0;
    bool used = false;
  };
  static std::size_t hash(std::uint64_t m) {
    return static_cast<std::size_t>(mix64(m));
  }
  void grow() {
    const std::vector<std::uint64_t> old = keys_;
    reset(2 * old.size() + 8);
    for (std::uint64_t m : old) insert(m);
  }

  std::vector<Slot> slots_;
  std::size_t cap_ = 0;
  std::vector<std::uint64_t> keys_;
};

struct Edge {
  std::uint32_t from;
  std::int32_t to;  // -1 once the target is pruned
  int kind;         // kEmpty, kOpen, or the bit of the closed partner
  double w;
};

struct Stage {
  std::vector<std::uint64_t> masks;
  std::vector<double> fwd;
  std::vector<double> bwd;
  std::vector<Edge> out;  // transitions to the next stage
};

class Sweep {
 public:
  Sweep(const PartialPosteriorProblem& p, const SweepOptions& opt) : p_(p) {
    for (int i = 0; i < p.nx(); ++i) pts_.push_back({p.X()[i], true, i});
    for (int j = 0; j < p.ny(); ++j) pts_.push_back({p.Y()[j], false, j});
    std::stable_sort(pts_.begin(), pts_.end(),
                     [](const Point& a, const Point& b) { return a.pos < b.pos; });
    T_ = static_cast<int>(pts_.size());
    // best_[t * (kSpan + 1) + d]: the largest a(t, u) over opposite points u
    // with t + d <= u <= t + kSpan.
    best_.assign(static_cast<std::size_t>(T_) * (kSpan + 1), kNegInf);
    ew_.assign(static_cast<std::size_t>(T_) * (kSpan + 1), 0.0);
    for (int t = 0; t < T_; ++t) {
      double run = kNegInf;
      for (int d = kSpan; d >= 1; --d) {
        const int u = t + d;
        if (u < T_ && pts_[u].is_x != pts_[t].is_x) {
          const double a = pair(t, u);
          run = std::max(run, a);
          ew_[static_cast<std::size_t>(t) * (kSpan + 1) + d] = std::exp(a);
        }
        best_[static_cast<std::size_t>(t) * (kSpan + 1) + d] = run;
      }
    }
    forward(opt);
    backward();
  }

  PartialMarginalTable marginals() const {
    PartialMarginalTable tab(p_.nx(), p_.ny());
    std::vector<double> close(kSpan);
    for (int t = 0; t < T_; ++t) {
      const Stage& cur = stages_[t];
      const Stage& nxt = stages_[t + 1];
      const Point& pt = pts_[t];
      double total = 0.0, empty = 0.0;
      std::fill(close.begin(), close.end(), 0.0);
      for (const Edge& e : cur.out) {
        if (e.to < 0) continue;
        const double v = cur.fwd[e.from] * e.w * nxt.bwd[e.to];
        total += v;
        if (e.kind == kEmpty) {
          empty += v;
        } else if (e.kind >= 0) {
          close[e.kind] += v;
        }
      }
      if (!(total > 0.0)) throw NumericError("sweep stage has no mass");
      if (pt.is_x) tab.empty(pt.id) = empty / total;
      for (int b = 0; b < kSpan; ++b) {
        if (close[b] == 0.0) continue;
        const Point& other = pts_[t - 1 - b];
        const int xi = pt.is_x ? pt.id : other.id;
        const int yj = pt.is_x ? other.id : pt.id;
        tab.at(xi, yj) = close[b] / total;
      }
    }
    return tab;
  }

 private:
  double pair(int t, int u) const {
    const Point& a = pts_[t];
    const Point& b = pts_[u];
    return a.is_x ? p_.a(a.id, b.id) : p_.a(b.id, a.id);
  }

  void forward(const SweepOptions& opt) {
    stages_.assign(T_ + 1, Stage{});
    stages_[0].masks = {0};
    stages_[0].fwd = {1.0};
    MaskIndex index;
    std::vector<double> val;
    std::vector<std::pair<double, std::uint32_t>> scored;
    std::vector<std::int32_t> remap;
    for (int t = 0; t < T_; ++t) {
      Stage& cur = stages_[t];
      const bool can_open = best_[static_cast<std::size_t>(t) * (kSpan + 1) + 1] > kNegInf;
      index.reset(cur.masks.size() * 3);
      val.clear();
      cur.out.clear();
      auto emit = [&](std::uint32_t s, std::uint64_t to, int kind, double w) {
        const std::uint32_t id = index.insert(to);
        if (id == val.size()) val.push_back(0.0);
        val[id] += cur.fwd[s] * w;
        cur.out.push_back({s, static_cast<std::int32_t>(id), kind, w});
      };
      for (std::uint32_t s = 0; s < cur.masks.size(); ++s) {
        const std::uint64_t m = cur.masks[s];
        if (m >> 63) continue;
        emit(s, m << 1, kEmpty, 1.0);
        if (can_open) emit(s, (m << 1) | 1u, kOpen, 1.0);
        for (std::uint64_t open = m; open; open &= open - 1) {
          const int b = std::countr_zero(open);
          const int u = t - 1 - b;
          if (pts_[u].is_x == pts_[t].is_x) continue;
          const double w = ew_[static_cast<std::size_t>(u) * (kSpan + 1) + (b + 1)];
          if (w == 0.0) continue;
          emit(s, (m & ~(std::uint64_t{1} << b)) << 1, b, w);
        }
      }
      // Optimistic score: every open point still gets its best partner.
      const auto& keys = index.keys();
      scored.clear();
      double top = kNegInf;
      const int t1 = t + 1;
      for (std::uint32_t id = 0; id < keys.size(); ++id) {
        if (!(val[id] > 0.0)) continue;
        double score = std::log(val[id]);
        for (std::uint64_t open = keys[id]; open; open &= open - 1) {
          const int b = std::countr_zero(open);
          const int u = t1 - 1 - b;
          score += best_[static_cast<std::size_t>(u) * (kSpan + 1) + (b + 1)];
        }
        if (score == kNegInf) continue;
        scored.emplace_back(score, id);
        top = std::max(top, score);
      }
      if (scored.empty()) throw NumericError("sweep lost every configuration");
      if (std::isfinite(opt.prune_log)) {
        const double cut = top - opt.prune_log;
        std::erase_if(scored, [cut](const auto& e) { return e.first < cut; });
      }
      if (scored.size() > opt.max_states) {
        std::nth_element(scored.begin(), scored.begin() + opt.max_states, scored.end(),
                         [](const auto& x, const auto& y) { return x.first > y.first; });
        scored.resize(opt.max_states);
      }
      // Keep a deterministic state order independent of hashing.
      std::sort(scored.begin(), scored.end(),
                [&](const auto& x, const auto& y) { return keys[x.second] < keys[y.second]; });
      remap.assign(keys.size(), -1);
      Stage& nxt = stages_[t1];
      double vmax = 0.0;
      for (std::size_t k = 0; k < scored.size(); ++k) {
        const std::uint32_t id = scored[k].second;
        remap[id] = static_cast<std::int32_t>(k);
        nxt.masks.push_back(keys[id]);
        nxt.fwd.push_back(val[id]);
        vmax = std::max(vmax, val[id]);
      }
      for (double& v : nxt.fwd) v /= vmax;
      for (Edge& e : cur.out) e.to = remap[e.to];
      std::erase_if(cur.out, [](const Edge& e) { return e.to < 0; });
    }
    const auto& last = stages_[T_].masks;
    if (std::find(last.begin(), last.end(), 0) == last.end()) {
      throw NumericError("sweep lost the closed final state");
    }
  }

  void backward() {
    Stage& last = stages_[T_];
    last.bwd.assign(last.masks.size(), 0.0);
    last.bwd[std::find(last.masks.begin(), last.masks.end(), 0) - last.masks.begin()] = 1.0;
    for (int t = T_ - 1; t >= 0; --t) {
      Stage& cur = stages_[t];
      const Stage& nxt = stages_[t + 1];
      cur.bwd.assign(cur.masks.size(), 0.0);
      for (const Edge& e : cur.out) cur.bwd[e.from] += e.w * nxt.bwd[e.to];
      double vmax = 0.0;
      for (double v : cur.bwd) vmax = std::max(vmax, v);
      if (!(vmax > 0.0)) throw NumericError("sweep backward pass has no mass");
      for (double& v : cur.bwd) v /= vmax;
    }
  }

  const PartialPosteriorProblem& p_;
  std::vector<Point> pts_;
  int T_ = 0;
  std::vector<double> best_;
  std::vector<double> ew_;
  std::vector<Stage> stages_;
};

}  // namespace

PartialMarginalTable marginals_sweep_partial(const PartialPosteriorProblem& prob,
                                             const SweepOptions& opt) {
  if (prob.nx() == 0) return PartialMarginalTable(0, prob.ny());
  return Sweep(prob, opt).marginals();
}

}  // namespace pmatch
