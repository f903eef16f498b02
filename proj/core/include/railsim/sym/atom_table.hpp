#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "railsim/sym/expr.hpp"

namespace railsim::sym {

class Tape;

enum class Op : std::uint8_t {
  Add, Sub, Mul, Div,   // binary
  Neg,                  // unary (materialized only when a sign cannot be absorbed)
  Sin, Cos, Sqrt, Abs,  // unary transcendental
  Pow,                  // base ** constant-exponent (exponent operand is a const ref)
};

const char* op_name(Op op);
bool op_is_binary(Op op);

/// One interned operation. Operands are unsigned Refs whose ids always
/// precede this atom in table order (the table is topologically ordered by
/// construction).
struct Atom {
  Op op;
  Ref a;
  Ref b;  // unused for unary ops other than Pow (exponent const)
};

struct SymbolInfo {
  std::string name;
  SymbolKind kind;
  std::optional<SymbolId> dt;       // d(symbol)/dt, when linked
  std::optional<double> bound;      // bound parameter value, when set
};

/// Hash-consed symbolic engine: single-writer model construction, append-only
/// atom storage. Structurally identical sub-expressions always resolve to the
/// same atom id; commutative operands are canonically ordered before
/// interning so a*b and b*a share an atom. Exported Tapes are immutable and
/// independent of the table.
class AtomTable {
 public:
  AtomTable();
  AtomTable(const AtomTable&) = delete;
  AtomTable& operator=(const AtomTable&) = delete;

  // --- symbols -------------------------------------------------------------
  Expr make_symbol(std::string name, SymbolKind kind);
  /// Registers q plus its linked dq, ddq (kind chain Coordinate/Velocity/
  /// Acceleration or ContactCoord/ContactVel/ContactAccel).
  struct CoordTriple { Expr q, qd, qdd; };
  CoordTriple make_coordinate(const std::string& name, bool contact = false);
  Expr symbol(std::string_view name) const;
  SymbolId symbol_id(std::string_view name) const;
  bool has_symbol(std::string_view name) const;
  Expr symbol_expr(SymbolId id) const;
  const SymbolInfo& info(SymbolId id) const;
  std::size_t num_symbols() const { return symbols_.size(); }
  void link_time_derivative(SymbolId sym, SymbolId dsym);
  void bind_parameter(SymbolId sym, double value);
  Expr time_symbol() const { return symbol_expr(time_); }

  // --- algebra ---------------------------------------------------------------
  Expr binop(Op op, const Expr& a, const Expr& b);
  Expr transcendental(Op op, const Expr& a);
  Expr pow(const Expr& a, double exponent);

  // --- calculus on the atomized DAG ------------------------------------------
  /// Partial derivative; per-atom derivatives are memoized for the table's
  /// lifetime, so shared sub-atoms are differentiated once across all calls.
  Expr differentiate(const Expr& e, SymbolId wrt);
  /// Total time derivative using kind rules (q->qdot, qdot->qddot, s->sdot,
  /// sdot->sddot, p->0, f->0, t->1). Throws if a needed derivative symbol was
  /// never linked, naming the offender.
  Expr time_derivative(const Expr& e);
  /// Memoized rewrite; unbound symbols pass through, and an expression whose
  /// reachable symbols are all unbound comes back with the same atom id.
  Expr substitute(const Expr& e, const std::vector<std::pair<SymbolId, Expr>>& bindings);

  // --- export ------------------------------------------------------------------
  /// Compiles `outputs` into a straight-line numeric tape over `inputs`.
  /// Reachable symbols must be inputs or bound parameters (baked in as
  /// constants); anything else is an error listing the free names.
  Tape export_tape(std::string name, const ExprMatrix& outputs,
                   std::span<const SymbolId> inputs) const;

  // --- introspection -------------------------------------------------------------
  std::size_t num_atoms() const { return atoms_.size(); }
  const Atom& atom(std::uint32_t id) const { return atoms_[id]; }
  double const_value(std::uint32_t id) const { return consts_[id]; }

 private:
  Expr atom_expr(std::uint32_t id, bool neg) const;
  Ref operand(const Expr& e);         // interns constants; e must be non-negated
  Ref const_ref(double v);
  std::uint32_t intern(Op op, Ref a, Ref b);
  Expr derivative_of_ref(Ref r, bool neg, SymbolId wrt,
                         const std::unordered_map<std::uint32_t, Expr>& memo) const;
  Expr dt_of_symbol(SymbolId id);

  std::vector<SymbolInfo> symbols_;
  std::unordered_map<std::string, std::uint32_t, std::hash<std::string>, std::equal_to<>> symbol_index_;
  std::vector<double> consts_;
  std::unordered_map<std::uint64_t, std::uint32_t> const_index_;  // keyed on bit pattern
  std::vector<Atom> atoms_;
  std::unordered_map<std::uint64_t, std::uint32_t> atom_index_;   // keyed on (op, a, b)

  SymbolId time_;

  // Memo tables. Entries store the resulting Expr compactly.
  std::unordered_map<std::uint64_t, Expr> diff_memo_;   // (atom id, wrt)
  std::unordered_map<std::uint32_t, Expr> tdiff_memo_;  // atom id
};

}  // namespace railsim::sym
