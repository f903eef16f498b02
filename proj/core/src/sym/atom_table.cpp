#include "railsim/sym/atom_table.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "railsim/sym/tape.hpp"

namespace railsim::sym {

namespace {

constexpr std::uint32_t kMaxIndex = 1u << 26;

std::uint64_t pack_ref(Ref r) {
  assert(r.index() < kMaxIndex);
  return (static_cast<std::uint64_t>(r.tag()) << 26) | r.index();
}

std::uint64_t atom_key(Op op, Ref a, Ref b) {
  return (static_cast<std::uint64_t>(op) << 56) | (pack_ref(a) << 28) | pack_ref(b);
}

std::uint64_t const_key(double v) {
  if (v == 0.0) v = 0.0;  // collapse -0.0
  std::uint64_t k;
  std::memcpy(&k, &v, sizeof(k));
  return k;
}

bool same_node(const Expr& a, const Expr& b) {
  if (a.is_symbol() && b.is_symbol()) return a.symbol_id() == b.symbol_id();
  if (a.is_atom() && b.is_atom()) return a.atom_id() == b.atom_id() && a.table() == b.table();
  return false;
}

bool is_integer(double v) { return std::floor(v) == v && std::abs(v) < 1e15; }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Sqrt: return "sqrt";
    case Op::Abs: return "abs";
    case Op::Pow: return "pow";
  }
  return "?";
}

bool op_is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div || op == Op::Pow;
}

AtomTable::AtomTable() {
  time_ = make_symbol("t", SymbolKind::Time).symbol_id();
}

Expr AtomTable::make_symbol(std::string name, SymbolKind kind) {
  if (symbol_index_.count(name)) {
    throw std::invalid_argument("make_symbol: name already registered: '" + name + "'");
  }
  const auto id = static_cast<std::uint32_t>(symbols_.size());
  if (id >= kMaxIndex) throw std::length_error("symbol table overflow");
  symbol_index_.emplace(name, id);
  symbols_.push_back(SymbolInfo{std::move(name), kind, std::nullopt, std::nullopt});
  return Expr(this, Expr::Kind::Sym, id, false);
}

AtomTable::CoordTriple AtomTable::make_coordinate(const std::string& name, bool contact) {
  CoordTriple t{
      make_symbol(name, contact ? SymbolKind::ContactCoord : SymbolKind::Coordinate),
      make_symbol("d" + name, contact ? SymbolKind::ContactVel : SymbolKind::Velocity),
      make_symbol("dd" + name, contact ? SymbolKind::ContactAccel : SymbolKind::Acceleration)};
  link_time_derivative(t.q.symbol_id(), t.qd.symbol_id());
  link_time_derivative(t.qd.symbol_id(), t.qdd.symbol_id());
  return t;
}

Expr AtomTable::symbol(std::string_view name) const {
  return symbol_expr(symbol_id(name));
}

SymbolId AtomTable::symbol_id(std::string_view name) const {
  auto it = symbol_index_.find(std::string(name));
  if (it == symbol_index_.end()) {
    throw std::invalid_argument("unknown symbol: '" + std::string(name) + "'");
  }
  return SymbolId{it->second};
}

bool AtomTable::has_symbol(std::string_view name) const {
  return symbol_index_.count(std::string(name)) != 0;
}

Expr AtomTable::symbol_expr(SymbolId id) const {
  return Expr(const_cast<AtomTable*>(this), Expr::Kind::Sym, id.value, false);
}

const SymbolInfo& AtomTable::info(SymbolId id) const { return symbols_.at(id.value); }

void AtomTable::link_time_derivative(SymbolId sym, SymbolId dsym) {
  symbols_.at(sym.value).dt = dsym;
}

void AtomTable::bind_parameter(SymbolId sym, double value) {
  symbols_.at(sym.value).bound = value;
}

Expr AtomTable::atom_expr(std::uint32_t id, bool neg) const {
  return Expr(const_cast<AtomTable*>(this), Expr::Kind::Atom, id, neg);
}

Ref AtomTable::const_ref(double v) {
  if (v == 0.0) v = 0.0;
  auto [it, fresh] = const_index_.try_emplace(const_key(v), static_cast<std::uint32_t>(consts_.size()));
  if (fresh) {
    if (consts_.size() >= kMaxIndex) throw std::length_error("constant pool overflow");
    consts_.push_back(v);
  }
  return Ref::make(Ref::kConst, it->second);
}

Ref AtomTable::operand(const Expr& e) {
  assert(!e.negated());
  switch (e.kind_) {
    case Expr::Kind::Const: return const_ref(e.cval_);
    case Expr::Kind::Sym: return Ref::make(Ref::kSym, e.idx_);
    case Expr::Kind::Atom: return Ref::make(Ref::kAtom, e.idx_);
  }
  return Ref{};
}

std::uint32_t AtomTable::intern(Op op, Ref a, Ref b) {
  if (op == Op::Add || op == Op::Mul) {
    if (b < a) std::swap(a, b);  // canonical commutative order
  }
  auto [it, fresh] = atom_index_.try_emplace(atom_key(op, a, b), static_cast<std::uint32_t>(atoms_.size()));
  if (fresh) {
    if (atoms_.size() >= kMaxIndex) throw std::length_error("atom table overflow");
    atoms_.push_back(Atom{op, a, b});
  }
  return it->second;
}

Expr AtomTable::binop(Op op, const Expr& a, const Expr& b) {
  switch (op) {
    case Op::Add: {
      if (a.is_constant() && b.is_constant()) return Expr(a.cval_ + b.cval_);
      if (a.is_zero()) return b;
      if (b.is_zero()) return a;
      if (same_node(a, b) && a.neg_ != b.neg_) return Expr(0.0);
      if (!a.neg_ && !b.neg_) return atom_expr(intern(Op::Add, operand(a), operand(b)), false);
      Expr pa = a, pb = b;
      pa.neg_ = pb.neg_ = false;
      if (a.neg_ && b.neg_) return atom_expr(intern(Op::Add, operand(pa), operand(pb)), true);
      if (b.neg_) return atom_expr(intern(Op::Sub, operand(pa), operand(pb)), false);
      return atom_expr(intern(Op::Sub, operand(pb), operand(pa)), false);
    }
    case Op::Sub: {
      Expr nb = b;
      if (nb.is_constant()) nb.cval_ = -nb.cval_;
      else nb.neg_ = !nb.neg_;
      return binop(Op::Add, a, nb);
    }
    case Op::Mul: {
      if (a.is_constant() && b.is_constant()) return Expr(a.cval_ * b.cval_);
      if (a.is_zero() || b.is_zero()) return Expr(0.0);
      if (a.is_one()) return b;
      if (b.is_one()) return a;
      if (a.is_constant() && a.cval_ == -1.0) { Expr r = b; r.neg_ = !r.neg_; return r; }
      if (b.is_constant() && b.cval_ == -1.0) { Expr r = a; r.neg_ = !r.neg_; return r; }
      Expr pa = a, pb = b;
      const bool neg = pa.neg_ != pb.neg_;
      pa.neg_ = pb.neg_ = false;
      return atom_expr(intern(Op::Mul, operand(pa), operand(pb)), neg);
    }
    case Op::Div: {
      if (b.is_constant() && b.cval_ == 0.0) throw std::domain_error("division by literal zero");
      if (a.is_constant() && b.is_constant()) return Expr(a.cval_ / b.cval_);
      if (a.is_zero()) return Expr(0.0);
      if (b.is_one()) return a;
      if (b.is_constant() && b.cval_ == -1.0) { Expr r = a; r.neg_ = !r.neg_; return r; }
      Expr pa = a, pb = b;
      const bool neg = pa.neg_ != pb.neg_;
      pa.neg_ = pb.neg_ = false;
      return atom_expr(intern(Op::Div, operand(pa), operand(pb)), neg);
    }
    default:
      throw std::logic_error("binop: not a binary op");
  }
}

Expr AtomTable::transcendental(Op op, const Expr& a) {
  if (a.is_constant()) {
    const double v = a.cval_;
    switch (op) {
      case Op::Sin: return Expr(std::sin(v));
      case Op::Cos: return Expr(std::cos(v));
      case Op::Sqrt:
        if (v < 0.0) throw std::domain_error("sqrt of negative literal");
        return Expr(std::sqrt(v));
      case Op::Abs: return Expr(std::abs(v));
      case Op::Neg: return Expr(-v);
      default: throw std::logic_error("transcendental: bad op");
    }
  }
  Expr base = a;
  if (op == Op::Abs && base.neg_) base.neg_ = false;  // |-x| = |x|
  if (op == Op::Neg) {
    Expr r = base;
    r.neg_ = !r.neg_;
    return r;
  }
  if (base.neg_) {
    // A sign cannot be absorbed into sin/cos/sqrt without a parity identity,
    // which we do not apply; materialize the negation.
    base.neg_ = false;
    base = atom_expr(intern(Op::Neg, operand(base), Ref{}), false);
  }
  return atom_expr(intern(op, operand(base), Ref{}), false);
}

Expr AtomTable::pow(const Expr& a, double exponent) {
  if (a.is_constant()) {
    const double r = std::pow(a.cval_, exponent);
    if (!std::isfinite(r)) throw std::domain_error("pow: non-finite constant fold");
    return Expr(r);
  }
  if (exponent == 0.0) return Expr(1.0);
  if (exponent == 1.0) return a;
  Expr base = a;
  bool neg = false;
  if (base.neg_) {
    if (is_integer(exponent)) {
      neg = std::fmod(exponent, 2.0) != 0.0;
      base.neg_ = false;
    } else {
      base.neg_ = false;
      base = atom_expr(intern(Op::Neg, operand(base), Ref{}), false);
    }
  }
  return atom_expr(intern(Op::Pow, operand(base), const_ref(exponent)), neg);
}

// ---------------------------------------------------------------------------
// calculus

namespace {
std::uint64_t diff_key(std::uint32_t atom, SymbolId wrt) {
  return (static_cast<std::uint64_t>(atom) << 32) | wrt.value;
}
}  // namespace

Expr AtomTable::derivative_of_ref(Ref r, bool neg, SymbolId wrt,
                                  const std::unordered_map<std::uint32_t, Expr>& memo) const {
  Expr d;
  switch (r.tag()) {
    case Ref::kConst: d = Expr(0.0); break;
    case Ref::kSym: d = (r.index() == wrt.value) ? Expr(1.0) : Expr(0.0); break;
    case Ref::kAtom: d = memo.at(r.index()); break;
  }
  if (neg) d = const_cast<AtomTable*>(this)->transcendental(Op::Neg, d);
  return d;
}

Expr AtomTable::differentiate(const Expr& e, SymbolId wrt) {
  if (wrt.value >= symbols_.size()) throw std::invalid_argument("differentiate: unknown symbol");
  if (e.is_constant()) return Expr(0.0);
  if (e.is_symbol()) {
    const double v = (e.symbol_id() == wrt) ? 1.0 : 0.0;
    return Expr(e.neg_ ? -v : v);
  }

  // Collect reachable atoms that are not yet memoized, then fold in
  // ascending-id (topological) order. Results for each (atom, wrt) pair are
  // cached for the table's lifetime.
  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> stack{e.atom_id()};
  std::unordered_map<std::uint32_t, bool> seen;
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    if (seen.count(id) || diff_memo_.count(diff_key(id, wrt))) continue;
    seen.emplace(id, true);
    order.push_back(id);
    const Atom& at = atoms_[id];
    if (at.a.tag() == Ref::kAtom) stack.push_back(at.a.index());
    if (op_is_binary(at.op) && at.b.tag() == Ref::kAtom) stack.push_back(at.b.index());
  }
  std::sort(order.begin(), order.end());

  std::unordered_map<std::uint32_t, Expr> local;
  auto ref_d = [&](Ref r) -> Expr {
    if (r.tag() == Ref::kAtom) {
      auto it = local.find(r.index());
      if (it != local.end()) return it->second;
      return diff_memo_.at(diff_key(r.index(), wrt));
    }
    return derivative_of_ref(r, false, wrt, local);
  };
  auto ref_e = [&](Ref r) -> Expr {
    switch (r.tag()) {
      case Ref::kConst: return Expr(consts_[r.index()]);
      case Ref::kSym: return symbol_expr(SymbolId{r.index()});
      default: return atom_expr(r.index(), false);
    }
  };

  for (const auto id : order) {
    const Atom at = atoms_[id];  // copy: atoms_ may grow while we build
    Expr d;
    switch (at.op) {
      case Op::Add: d = binop(Op::Add, ref_d(at.a), ref_d(at.b)); break;
      case Op::Sub: d = binop(Op::Sub, ref_d(at.a), ref_d(at.b)); break;
      case Op::Mul: {
        const Expr da = ref_d(at.a), db = ref_d(at.b);
        d = binop(Op::Add, binop(Op::Mul, da, ref_e(at.b)), binop(Op::Mul, ref_e(at.a), db));
        break;
      }
      case Op::Div: {
        // d(a/b) = (da - (a/b) db) / b, reusing this very atom for a/b.
        const Expr da = ref_d(at.a), db = ref_d(at.b);
        const Expr self = atom_expr(id, false);
        d = binop(Op::Div, binop(Op::Sub, da, binop(Op::Mul, self, db)), ref_e(at.b));
        break;
      }
      case Op::Neg: d = transcendental(Op::Neg, ref_d(at.a)); break;
      case Op::Sin: d = binop(Op::Mul, transcendental(Op::Cos, ref_e(at.a)), ref_d(at.a)); break;
      case Op::Cos:
        d = transcendental(Op::Neg, binop(Op::Mul, transcendental(Op::Sin, ref_e(at.a)), ref_d(at.a)));
        break;
      case Op::Sqrt: {
        const Expr self = atom_expr(id, false);
        d = binop(Op::Div, ref_d(at.a), binop(Op::Mul, Expr(2.0), self));
        break;
      }
      case Op::Abs: {
        const Expr self = atom_expr(id, false);
        d = binop(Op::Mul, binop(Op::Div, ref_e(at.a), self), ref_d(at.a));
        break;
      }
      case Op::Pow: {
        const double c = consts_[at.b.index()];
        const Expr inner = binop(Op::Mul, Expr(c), pow(ref_e(at.a), c - 1.0));
        d = binop(Op::Mul, inner, ref_d(at.a));
        break;
      }
    }
    local.emplace(id, d);
    diff_memo_.emplace(diff_key(id, wrt), d);
  }

  const Expr d = diff_memo_.at(diff_key(e.atom_id(), wrt));
  return e.neg_ ? transcendental(Op::Neg, d) : d;
}

Expr AtomTable::dt_of_symbol(SymbolId id) {
  const SymbolInfo& si = symbols_.at(id.value);
  switch (si.kind) {
    case SymbolKind::Time: return Expr(1.0);
    case SymbolKind::Parameter:
    case SymbolKind::ExternalForce: return Expr(0.0);
    default: break;
  }
  if (!si.dt) {
    throw std::runtime_error("time_derivative: no derivative symbol registered for '" + si.name + "'");
  }
  return symbol_expr(*si.dt);
}

Expr AtomTable::time_derivative(const Expr& e) {
  if (e.is_constant()) return Expr(0.0);
  if (e.is_symbol()) {
    Expr d = dt_of_symbol(e.symbol_id());
    return e.neg_ ? transcendental(Op::Neg, d) : d;
  }

  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> stack{e.atom_id()};
  std::unordered_map<std::uint32_t, bool> seen;
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    if (seen.count(id) || tdiff_memo_.count(id)) continue;
    seen.emplace(id, true);
    order.push_back(id);
    const Atom& at = atoms_[id];
    if (at.a.tag() == Ref::kAtom) stack.push_back(at.a.index());
    if (op_is_binary(at.op) && at.b.tag() == Ref::kAtom) stack.push_back(at.b.index());
  }
  std::sort(order.begin(), order.end());

  auto ref_d = [&](Ref r) -> Expr {
    switch (r.tag()) {
      case Ref::kConst: return Expr(0.0);
      case Ref::kSym: return dt_of_symbol(SymbolId{r.index()});
      default: return tdiff_memo_.at(r.index());
    }
  };
  auto ref_e = [&](Ref r) -> Expr {
    switch (r.tag()) {
      case Ref::kConst: return Expr(consts_[r.index()]);
      case Ref::kSym: return symbol_expr(SymbolId{r.index()});
      default: return atom_expr(r.index(), false);
    }
  };

  for (const auto id : order) {
    const Atom at = atoms_[id];
    Expr d;
    switch (at.op) {
      case Op::Add: d = binop(Op::Add, ref_d(at.a), ref_d(at.b)); break;
      case Op::Sub: d = binop(Op::Sub, ref_d(at.a), ref_d(at.b)); break;
      case Op::Mul:
        d = binop(Op::Add, binop(Op::Mul, ref_d(at.a), ref_e(at.b)),
                  binop(Op::Mul, ref_e(at.a), ref_d(at.b)));
        break;
      case Op::Div: {
        const Expr self = atom_expr(id, false);
        d = binop(Op::Div, binop(Op::Sub, ref_d(at.a), binop(Op::Mul, self, ref_d(at.b))), ref_e(at.b));
        break;
      }
      case Op::Neg: d = transcendental(Op::Neg, ref_d(at.a)); break;
      case Op::Sin: d = binop(Op::Mul, transcendental(Op::Cos, ref_e(at.a)), ref_d(at.a)); break;
      case Op::Cos:
        d = transcendental(Op::Neg, binop(Op::Mul, transcendental(Op::Sin, ref_e(at.a)), ref_d(at.a)));
        break;
      case Op::Sqrt: {
        const Expr self = atom_expr(id, false);
        d = binop(Op::Div, ref_d(at.a), binop(Op::Mul, Expr(2.0), self));
        break;
      }
      case Op::Abs: {
        const Expr self = atom_expr(id, false);
        d = binop(Op::Mul, binop(Op::Div, ref_e(at.a), self), ref_d(at.a));
        break;
      }
      case Op::Pow: {
        const double c = consts_[at.b.index()];
        const Expr inner = binop(Op::Mul, Expr(c), pow(ref_e(at.a), c - 1.0));
        d = binop(Op::Mul, inner, ref_d(at.a));
        break;
      }
    }
    tdiff_memo_.emplace(id, d);
  }

  const Expr d = tdiff_memo_.at(e.atom_id());
  return e.neg_ ? transcendental(Op::Neg, d) : d;
}

Expr AtomTable::substitute(const Expr& e, const std::vector<std::pair<SymbolId, Expr>>& bindings) {
  if (bindings.empty() || e.is_constant()) return e;
  std::unordered_map<std::uint32_t, Expr> bind;
  for (const auto& [id, ex] : bindings) bind.emplace(id.value, ex);

  auto subst_sym = [&](SymbolId id, bool neg) -> Expr {
    auto it = bind.find(id.value);
    Expr r = (it != bind.end()) ? it->second : symbol_expr(id);
    return neg ? transcendental(Op::Neg, r) : r;
  };
  if (e.is_symbol()) return subst_sym(e.symbol_id(), e.neg_);

  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> stack{e.atom_id()};
  std::unordered_map<std::uint32_t, bool> seen;
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    if (seen.count(id)) continue;
    seen.emplace(id, true);
    order.push_back(id);
    const Atom& at = atoms_[id];
    if (at.a.tag() == Ref::kAtom) stack.push_back(at.a.index());
    if (op_is_binary(at.op) && at.b.tag() == Ref::kAtom) stack.push_back(at.b.index());
  }
  std::sort(order.begin(), order.end());

  std::unordered_map<std::uint32_t, Expr> memo;
  auto rewritten = [&](Ref r) -> Expr {
    switch (r.tag()) {
      case Ref::kConst: return Expr(consts_[r.index()]);
      case Ref::kSym: return subst_sym(SymbolId{r.index()}, false);
      default: return memo.at(r.index());
    }
  };
  auto unchanged = [&](Ref r, const Expr& ex) -> bool {
    switch (r.tag()) {
      case Ref::kConst: return ex.is_constant() && ex.constant_value() == consts_[r.index()];
      case Ref::kSym: return ex.is_symbol() && !ex.negated() && ex.symbol_id().value == r.index();
      default: return ex.is_atom() && !ex.negated() && ex.atom_id() == r.index();
    }
  };

  for (const auto id : order) {
    const Atom at = atoms_[id];
    const Expr ea = rewritten(at.a);
    Expr r;
    if (op_is_binary(at.op)) {
      if (at.op == Op::Pow) {
        if (unchanged(at.a, ea)) r = atom_expr(id, false);
        else r = pow(ea, consts_[at.b.index()]);
      } else {
        const Expr eb = rewritten(at.b);
        if (unchanged(at.a, ea) && unchanged(at.b, eb)) r = atom_expr(id, false);
        else r = binop(at.op, ea, eb);
      }
    } else {
      if (unchanged(at.a, ea)) r = atom_expr(id, false);
      else r = transcendental(at.op, ea);
    }
    memo.emplace(id, r);
  }

  const Expr r = memo.at(e.atom_id());
  return e.neg_ ? transcendental(Op::Neg, r) : r;
}

// ---------------------------------------------------------------------------
// free operator glue

namespace {
AtomTable* table_of(const Expr& a, const Expr& b) {
  if (a.table()) return a.table();
  return b.table();
}
}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
  AtomTable* t = table_of(a, b);
  if (!t) return Expr(a.constant_value() + b.constant_value());
  return t->binop(Op::Add, a, b);
}
Expr operator-(const Expr& a, const Expr& b) {
  AtomTable* t = table_of(a, b);
  if (!t) return Expr(a.constant_value() - b.constant_value());
  return t->binop(Op::Sub, a, b);
}
Expr operator*(const Expr& a, const Expr& b) {
  AtomTable* t = table_of(a, b);
  if (!t) return Expr(a.constant_value() * b.constant_value());
  return t->binop(Op::Mul, a, b);
}
Expr operator/(const Expr& a, const Expr& b) {
  AtomTable* t = table_of(a, b);
  if (!t) {
    if (b.constant_value() == 0.0) throw std::domain_error("division by literal zero");
    return Expr(a.constant_value() / b.constant_value());
  }
  return t->binop(Op::Div, a, b);
}
Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr(-a.constant_value());
  return a.table()->transcendental(Op::Neg, a);
}
Expr sin(const Expr& x) {
  if (x.is_constant()) return Expr(std::sin(x.constant_value()));
  return x.table()->transcendental(Op::Sin, x);
}
Expr cos(const Expr& x) {
  if (x.is_constant()) return Expr(std::cos(x.constant_value()));
  return x.table()->transcendental(Op::Cos, x);
}
Expr sqrt(const Expr& x) {
  if (x.is_constant()) {
    if (x.constant_value() < 0.0) throw std::domain_error("sqrt of negative literal");
    return Expr(std::sqrt(x.constant_value()));
  }
  return x.table()->transcendental(Op::Sqrt, x);
}
Expr abs(const Expr& x) {
  if (x.is_constant()) return Expr(std::abs(x.constant_value()));
  return x.table()->transcendental(Op::Abs, x);
}
Expr pow(const Expr& x, double exponent) {
  if (x.is_constant()) {
    const double r = std::pow(x.constant_value(), exponent);
    if (!std::isfinite(r)) throw std::domain_error("pow: non-finite constant fold");
    return Expr(r);
  }
  return x.table()->pow(x, exponent);
}

}  // namespace railsim::sym
