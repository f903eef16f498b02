#pragma once

// Test-side oracles, independent of the Tape evaluation path:
//  - naive_eval: direct recursive evaluation of the atomized DAG
//  - random_dag: seeded random expression builder over given leaves
//  - central finite differences

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "railsim/sym/atom_table.hpp"

namespace testsupport {

using railsim::sym::AtomTable;
using railsim::sym::Expr;
using railsim::sym::Op;
using railsim::sym::Ref;
using railsim::sym::SymbolId;

using SymValues = std::unordered_map<std::uint32_t, double>;

inline double naive_eval(const Expr& e, const SymValues& vals) {
  if (e.is_constant()) return e.constant_value();
  const AtomTable& tab = *e.table();

  auto sym_value = [&](std::uint32_t id) -> double {
    auto it = vals.find(id);
    if (it != vals.end()) return it->second;
    const auto& si = tab.info(SymbolId{id});
    if (si.bound) return *si.bound;
    throw std::runtime_error("naive_eval: no value for symbol '" + si.name + "'");
  };
  if (e.is_symbol()) {
    const double v = sym_value(e.symbol_id().value);
    return e.negated() ? -v : v;
  }

  // Iterative: collect reachable atoms, evaluate in ascending (topological) order.
  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> stack{e.atom_id()};
  std::unordered_map<std::uint32_t, bool> seen;
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    if (seen.count(id)) continue;
    seen.emplace(id, true);
    order.push_back(id);
    const auto& at = tab.atom(id);
    if (at.a.tag() == Ref::kAtom) stack.push_back(at.a.index());
    if (railsim::sym::op_is_binary(at.op) && at.b.tag() == Ref::kAtom) stack.push_back(at.b.index());
  }
  std::sort(order.begin(), order.end());

  std::unordered_map<std::uint32_t, double> val;
  auto ref_val = [&](Ref r) -> double {
    switch (r.tag()) {
      case Ref::kConst: return tab.const_value(r.index());
      case Ref::kSym: return sym_value(r.index());
      default: return val.at(r.index());
    }
  };
  for (const auto id : order) {
    const auto& at = tab.atom(id);
    const double a = ref_val(at.a);
    double v = 0;
    switch (at.op) {
      case Op::Add: v = a + ref_val(at.b); break;
      case Op::Sub: v = a - ref_val(at.b); break;
      case Op::Mul: v = a * ref_val(at.b); break;
      case Op::Div: v = a / ref_val(at.b); break;
      case Op::Neg: v = -a; break;
      case Op::Sin: v = std::sin(a); break;
      case Op::Cos: v = std::cos(a); break;
      case Op::Sqrt: v = std::sqrt(a); break;
      case Op::Abs: v = std::abs(a); break;
      case Op::Pow: v = std::pow(a, ref_val(at.b)); break;
    }
    val.emplace(id, v);
  }
  const double v = val.at(e.atom_id());
  return e.negated() ? -v : v;
}

/// Builds a random smooth DAG (division and sqrt guarded away from
/// singularities) with roughly `n_ops` operations over the given leaves.
inline Expr random_dag(AtomTable& tab, const std::vector<Expr>& leaves, int n_ops, std::mt19937& rng) {
  std::vector<Expr> pool = leaves;
  std::uniform_real_distribution<double> cdist(-2.0, 2.0);
  for (int i = 0; i < 3; ++i) pool.push_back(Expr(cdist(rng)));

  auto pick = [&]() -> Expr {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };
  std::uniform_int_distribution<int> opd(0, 7);
  for (int i = 0; i < n_ops; ++i) {
    const Expr a = pick();
    const Expr b = pick();
    Expr r;
    switch (opd(rng)) {
      case 0: r = a + b; break;
      case 1: r = a - b; break;
      case 2: r = a * b; break;
      case 3: r = a / (Expr(1.5) + b * b); break;
      case 4: r = sin(a); break;
      case 5: r = cos(a); break;
      case 6: r = sqrt(Expr(0.5) + a * a); break;
      case 7: r = pow(Expr(1.2) + a * a, 1.5); break;
    }
    pool.push_back(r);
  }
  return pool.back();
}

inline double central_diff(const Expr& e, SymValues vals, std::uint32_t sym, double h = 1e-6) {
  const double x0 = vals.at(sym);
  vals[sym] = x0 + h;
  const double fp = naive_eval(e, vals);
  vals[sym] = x0 - h;
  const double fm = naive_eval(e, vals);
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  const double scale = std::max({std::abs(got), std::abs(want), 0.1});
  return std::abs(got - want) / scale;
}

}  // namespace testsupport
