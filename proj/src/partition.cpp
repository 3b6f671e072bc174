/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/compiler.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <limits>

namespace pucoord::compiler {

std::vector<PoolEntry> pool_of(const SystemSpec &spec, const std::vector<int> &pids) {
  std::vector<PoolEntry> pool;
  if (pids.empty()) {
    for (const auto &p : spec.pus)
      pool.push_back({p.pid, p.type});
    return pool;
  }
  for (int pid : pids) {
    for (const auto &q : pool)
      if (q.pid == pid)
        throw Error(ErrorKind::Usage, "pid " + std::to_string(pid) + " listed twice");
    pool.push_back({pid, spec.pu(pid).type});
  }
  return pool;
}

std::size_t Partition::occupied() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    n += cuts[k + 1] > cuts[k] ? 1 : 0;
  return n;
}

std::vector<int> Partition::occupied_pids() const {
  std::vector<int> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    if (cuts[k + 1] > cuts[k])
      out.push_back(pus[k]);
  return out;
}

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

struct Table {
  std::size_t a, b;
  std::vector<std::int64_t> v;
  Table(std::size_t n, std::size_t a_, std::size_t b_)
      : a(a_ + 1), b(b_ + 1), v((n + 1) * a * b, kInf) {}
  std::int64_t &at(std::size_t i, std::size_t x, std::size_t y) { return v[(i * a + x) * b + y]; }
};

} // namespace

Partition partition(const std::vector<std::int64_t> &cost_1x,
                    const std::vector<std::int64_t> &cost_2x, const std::vector<PoolEntry> &pool) {
  const std::size_t n = cost_1x.size();
  if (n == 0)
    throw Error(ErrorKind::EmptyGraph, "nothing to partition");
  if (cost_2x.size() != n)
    throw Error(ErrorKind::Usage, "profile vectors differ in length");
  if (pool.empty())
    throw Error(ErrorKind::Infeasible, "empty PU pool");
  std::size_t A = 0, B = 0;
  for (const auto &p : pool)
    (p.type == PuType::X1 ? A : B) += 1;

  std::vector<std::int64_t> s1(n + 1, 0), s2(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + cost_1x[i];
    s2[i + 1] = s2[i] + cost_2x[i];
  }
  auto cost = [&](std::size_t i, std::size_t j, int t) { return t == 0 ? s1[j] - s1[i] : s2[j] - s2[i]; };

  // phase 1: min makespan over suffixes
  Table f(n, A, B);
  for (std::size_t i = n + 1; i-- > 0;) {
    for (std::size_t a = 0; a <= A; ++a)
      for (std::size_t b = 0; b <= B; ++b) {
        if (i == n) {
          f.at(i, a, b) = 0;
          continue;
        }
        std::int64_t best = kInf;
        for (int t = 0; t < 2; ++t) {
          if ((t == 0 ? a : b) == 0)
            continue;
          const std::size_t a2 = t == 0 ? a - 1 : a, b2 = t == 1 ? b - 1 : b;
          for (std::size_t j = i; j <= n; ++j) {
            const std::int64_t rest = f.at(j, a2, b2);
            if (rest >= kInf)
              continue;
            best = std::min(best, std::max(cost(i, j, t), rest));
          }
        }
        f.at(i, a, b) = best;
      }
  }
  const std::int64_t mstar = f.at(0, A, B);

  // phase 2: fewest occupied slices within the optimal makespan
  Table g(n, A, B);
  for (std::size_t i = n + 1; i-- > 0;) {
    for (std::size_t a = 0; a <= A; ++a)
      for (std::size_t b = 0; b <= B; ++b) {
        if (i == n) {
          g.at(i, a, b) = 0;
          continue;
        }
        std::int64_t best = kInf;
        for (int t = 0; t < 2; ++t) {
          if ((t == 0 ? a : b) == 0)
            continue;
          const std::size_t a2 = t == 0 ? a - 1 : a, b2 = t == 1 ? b - 1 : b;
          for (std::size_t j = i; j <= n && cost(i, j, t) <= mstar; ++j) {
            const std::int64_t rest = g.at(j, a2, b2);
            if (rest < kInf)
              best = std::min(best, rest + (j > i ? 1 : 0));
          }
        }
        g.at(i, a, b) = best;
      }
  }

  // forward reconstruction: earliest cut, 1x before 2x
  std::vector<int> types;
  Partition part;
  part.cuts.push_back(0);
  std::size_t i = 0, a = A, b = B;
  while (a + b > 0) {
    bool found = false;
    for (std::size_t j = i; j <= n && !found; ++j)
      for (int t = 0; t < 2 && !found; ++t) {
        if ((t == 0 ? a : b) == 0 || cost(i, j, t) > mstar)
          continue;
        const std::size_t a2 = t == 0 ? a - 1 : a, b2 = t == 1 ? b - 1 : b;
        const std::int64_t rest = g.at(j, a2, b2);
        if (rest < kInf && rest + (j > i ? 1 : 0) == g.at(i, a, b)) {
          types.push_back(t);
          part.cuts.push_back(j);
          part.stage_time.push_back(cost(i, j, t));
          i = j;
          a = a2;
          b = b2;
          found = true;
        }
      }
    if (!found)
      throw Error(ErrorKind::Infeasible, "partition reconstruction failed");
  }

  std::vector<bool> used(pool.size(), false);
  for (int t : types) {
    const PuType want = t == 0 ? PuType::X1 : PuType::X2;
    for (std::size_t q = 0; q < pool.size(); ++q)
      if (!used[q] && pool[q].type == want) {
        used[q] = true;
        part.pus.push_back(pool[q].pid);
        break;
      }
  }
  part.node_pid.assign(n, -1);
  for (std::size_t k = 0; k + 1 < part.cuts.size(); ++k)
    for (std::size_t v = part.cuts[k]; v < part.cuts[k + 1]; ++v)
      part.node_pid[v] = part.pus[k];
  part.makespan = mstar;
  return part;
}

Partition partition(const graph::NodeDag &dag, const std::vector<PoolEntry> &pool,
                    const Profiles &profiles) {
  if (dag.nodes.empty())
    throw Error(ErrorKind::EmptyGraph, "DAG has no nodes");
  return partition(profiles.x1, profiles.x2, pool);
}

double pbe(const std::vector<std::int64_t> &stage_times) {
  double sum = 0, mx = 0;
  std::size_t n = 0;
  for (auto t : stage_times) {
    if (t <= 0)
      continue;
    sum += static_cast<double>(t);
    mx = std::max(mx, static_cast<double>(t));
    ++n;
  }
  return n == 0 || mx <= 0 ? 0.0 : sum / (static_cast<double>(n) * mx);
}

} // namespace pucoord::compiler
