#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace railsim::sym {

class AtomTable;

/// What a registered symbol stands for. The kind drives time differentiation
/// (q -> qdot -> qddot chains), the qddot/force substitutions used by the
/// dynamics assembly, and input-vector classification.
enum class SymbolKind : std::uint8_t {
  Coordinate,     // generalized coordinate q
  Velocity,       // generalized velocity qdot
  Acceleration,   // generalized acceleration qddot
  ContactCoord,   // contact surface coordinate s
  ContactVel,     // sdot
  ContactAccel,   // sddot (internal, used when forming gamma)
  Parameter,      // geometric/inertial parameter, or runtime-updated input
  ExternalForce,  // creep force/moment symbol (f_x, f_y, m_z)
  Time,
};

struct SymbolId {
  std::uint32_t value = 0;
  friend bool operator==(SymbolId a, SymbolId b) { return a.value == b.value; }
  friend bool operator!=(SymbolId a, SymbolId b) { return a.value != b.value; }
  friend bool operator<(SymbolId a, SymbolId b) { return a.value < b.value; }
};

/// Packed reference to an interned entity inside an AtomTable.
/// Atom operands are always unsigned references; signs are carried by Expr
/// and absorbed into the surrounding operation when atoms are built.
struct Ref {
  enum Tag : std::uint32_t { kConst = 0, kSym = 1, kAtom = 2 };
  std::uint32_t bits = 0;

  static Ref make(Tag t, std::uint32_t idx) {
    return Ref{(static_cast<std::uint32_t>(t) << 30) | idx};
  }
  Tag tag() const { return static_cast<Tag>(bits >> 30); }
  std::uint32_t index() const { return bits & 0x3fffffffu; }
  friend bool operator==(Ref a, Ref b) { return a.bits == b.bits; }
  friend bool operator!=(Ref a, Ref b) { return a.bits != b.bits; }
  friend bool operator<(Ref a, Ref b) { return a.bits < b.bits; }
};

/// Value-semantic handle to an atomized expression: a literal constant, a
/// (possibly negated) symbol, or a (possibly negated) atom in an AtomTable.
/// Constants carry their value inline and need no table. All algebra goes
/// through the owning AtomTable, which hash-conses every operation.
class Expr {
 public:
  Expr() = default;  // literal 0.0
  explicit Expr(double v) : kind_(Kind::Const), cval_(v) {}

  static Expr constant(double v) { return Expr(v); }

  bool is_constant() const { return kind_ == Kind::Const; }
  bool is_symbol() const { return kind_ == Kind::Sym; }
  bool is_atom() const { return kind_ == Kind::Atom; }
  bool is_zero() const { return kind_ == Kind::Const && cval_ == 0.0; }
  bool is_one() const { return kind_ == Kind::Const && cval_ == 1.0; }
  bool negated() const { return neg_; }

  double constant_value() const {
    if (kind_ != Kind::Const) throw std::logic_error("Expr: not a constant");
    return cval_;
  }
  SymbolId symbol_id() const {
    if (kind_ != Kind::Sym) throw std::logic_error("Expr: not a symbol");
    return SymbolId{idx_};
  }
  std::uint32_t atom_id() const {
    if (kind_ != Kind::Atom) throw std::logic_error("Expr: not an atom");
    return idx_;
  }
  AtomTable* table() const { return tab_; }

  /// Structural identity (same table, same node, same sign).
  friend bool operator==(const Expr& a, const Expr& b) {
    if (a.kind_ != b.kind_) return false;
    if (a.kind_ == Kind::Const) return a.cval_ == b.cval_;
    return a.tab_ == b.tab_ && a.idx_ == b.idx_ && a.neg_ == b.neg_;
  }
  friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr operator+(const Expr& a, double b) { return a + Expr(b); }
  friend Expr operator+(double a, const Expr& b) { return Expr(a) + b; }
  friend Expr operator-(const Expr& a, double b) { return a - Expr(b); }
  friend Expr operator-(double a, const Expr& b) { return Expr(a) - b; }
  friend Expr operator*(const Expr& a, double b) { return a * Expr(b); }
  friend Expr operator*(double a, const Expr& b) { return Expr(a) * b; }
  friend Expr operator/(const Expr& a, double b) { return a / Expr(b); }
  friend Expr operator/(double a, const Expr& b) { return Expr(a) / b; }

 private:
  enum class Kind : std::uint8_t { Const, Sym, Atom };

  friend class AtomTable;
  Expr(AtomTable* t, Kind k, std::uint32_t idx, bool neg)
      : tab_(t), kind_(k), idx_(idx), neg_(neg) {}

  AtomTable* tab_ = nullptr;
  Kind kind_ = Kind::Const;
  std::uint32_t idx_ = 0;
  bool neg_ = false;
  double cval_ = 0.0;
};

Expr sin(const Expr& x);
Expr cos(const Expr& x);
Expr sqrt(const Expr& x);
Expr abs(const Expr& x);
Expr pow(const Expr& x, double exponent);

/// Dense row-major matrix of expressions; the unit exported as a Tape.
class ExprMatrix {
 public:
  ExprMatrix() = default;
  ExprMatrix(int rows, int cols) : rows_(rows), cols_(cols), m_(static_cast<std::size_t>(rows) * cols) {}
  static ExprMatrix row_vector(int n) { return ExprMatrix(1, n); }
  static ExprMatrix column_vector(int n) { return ExprMatrix(n, 1); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return m_.size(); }
  Expr& at(int i, int j) { return m_[static_cast<std::size_t>(i) * cols_ + j]; }
  const Expr& at(int i, int j) const { return m_[static_cast<std::size_t>(i) * cols_ + j]; }
  Expr& operator[](std::size_t i) { return m_[i]; }
  const Expr& operator[](std::size_t i) const { return m_[i]; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Expr> m_;
};

}  // namespace railsim::sym
