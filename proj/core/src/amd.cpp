// Approximate minimum degree ordering on the quotient graph.
//
// Eliminated variables become elements; a variable's approximate external
// degree is bounded as in Amestoy, Davis & Duff (1996):
//   d_i <= |A_i \ i| + |L_p \ i| + sum_{e in E_i \ p} |L_e \ L_p|
// together with the previous degree plus |L_p \ i| and the number of
// remaining variables. Supervariable detection is not performed. Ties go
// to the larger original index, so a hub listed first is eliminated last.

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "snuts/sparse_linalg.hpp"

namespace snuts {

Permutation minimum_degree_order(const SparseSymMatrix& a) {
  const int n = a.dim();
  std::vector<std::vector<int>> var_adj(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> elem_adj(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> elem_vars(static_cast<std::size_t>(n));
  std::vector<char> eliminated(static_cast<std::size_t>(n), 0);
  std::vector<char> elem_alive(static_cast<std::size_t>(n), 0);

  const auto cp = a.col_ptr();
  const auto ri = a.row_idx();
  for (int j = 0; j < n; ++j) {
    for (int p = cp[j]; p < cp[j + 1]; ++p) {
      const int i = ri[p];
      if (i == j) continue;
      var_adj[i].push_back(j);
      var_adj[j].push_back(i);
    }
  }

  std::vector<int> degree(static_cast<std::size_t>(n));
  std::set<std::pair<int, int>> queue;  // (degree, n - 1 - index)
  for (int i = 0; i < n; ++i) {
    degree[i] = static_cast<int>(var_adj[i].size());
    queue.emplace(degree[i], n - 1 - i);
  }

  std::vector<int> mark(static_cast<std::size_t>(n), -1);
  std::vector<int> wmark(static_cast<std::size_t>(n), -1);
  std::vector<int> w(static_cast<std::size_t>(n), 0);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));

  for (int k = 0; k < n; ++k) {
    const int p = n - 1 - queue.begin()->second;
    queue.erase(queue.begin());
    order.push_back(p);
    eliminated[p] = 1;

    // L_p = (A_p ∪ L_e for e in E_p) \ {p}; elements in E_p are absorbed.
    std::vector<int> lp;
    mark[p] = k;
    for (const int v : var_adj[p]) {
      if (!eliminated[v] && mark[v] != k) {
        mark[v] = k;
        lp.push_back(v);
      }
    }
    for (const int e : elem_adj[p]) {
      if (!elem_alive[e]) continue;
      for (const int v : elem_vars[e]) {
        if (!eliminated[v] && mark[v] != k) {
          mark[v] = k;
          lp.push_back(v);
        }
      }
      elem_alive[e] = 0;
      std::vector<int>().swap(elem_vars[e]);
    }
    std::vector<int>().swap(var_adj[p]);
    std::vector<int>().swap(elem_adj[p]);
    elem_alive[p] = 1;

    // w[e] = |L_e \ L_p| for live elements touching L_p.
    for (const int i : lp) {
      for (const int e : elem_adj[i]) {
        if (!elem_alive[e] || e == p) continue;
        if (wmark[e] != k) {
          wmark[e] = k;
          w[e] = static_cast<int>(elem_vars[e].size());
        }
        --w[e];
      }
    }
    // Aggressive absorption of elements contained in L_p.
    for (const int i : lp) {
      for (const int e : elem_adj[i]) {
        if (elem_alive[e] && e != p && wmark[e] == k && w[e] == 0) {
          elem_alive[e] = 0;
          std::vector<int>().swap(elem_vars[e]);
        }
      }
    }

    const int lp_size = static_cast<int>(lp.size());
    const int remaining_others = n - k - 2;
    for (const int i : lp) {
      queue.erase({degree[i], n - 1 - i});

      auto& ea = elem_adj[i];
      ea.erase(std::remove_if(ea.begin(), ea.end(),
                              [&](int e) { return !elem_alive[e] || e == p; }),
               ea.end());
      int external = 0;
      for (const int e : ea) external += (wmark[e] == k) ? w[e] : static_cast<int>(elem_vars[e].size()) - 1;
      ea.push_back(p);

      auto& va = var_adj[i];
      va.erase(std::remove_if(va.begin(), va.end(),
                              [&](int v) { return eliminated[v] || mark[v] == k; }),
               va.end());

      const int approx = static_cast<int>(va.size()) + (lp_size - 1) + external;
      const int d = std::max(0, std::min({approx, degree[i] + lp_size - 1, remaining_others}));
      degree[i] = d;
      queue.emplace(d, n - 1 - i);
    }
    elem_vars[p] = std::move(lp);
  }
  return Permutation(std::move(order));
}

Permutation amd_order(const SparseSymMatrix& a) {
  Permutation md = minimum_degree_order(a);
  const Permutation natural = Permutation::identity(a.dim());
  if (symbolic_nnz(a, natural) < symbolic_nnz(a, md)) return natural;
  return md;
}

}  // namespace snuts
