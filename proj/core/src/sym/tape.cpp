#include "railsim/sym/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "railsim/sym/atom_table.hpp"

namespace railsim::sym {

namespace {
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

Tape AtomTable::export_tape(std::string name, const ExprMatrix& outputs,
                            std::span<const SymbolId> inputs) const {
  Tape t;
  t.name_ = std::move(name);
  t.num_inputs_ = inputs.size();
  t.out_rows_ = outputs.rows();
  t.out_cols_ = outputs.cols();

  std::unordered_map<std::uint32_t, std::uint32_t> input_pos;  // symbol -> position
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!input_pos.emplace(inputs[i].value, static_cast<std::uint32_t>(i)).second) {
      throw std::invalid_argument("export_tape('" + t.name_ + "'): duplicate input symbol '" +
                                  info(inputs[i]).name + "'");
    }
    t.input_names_.push_back(info(inputs[i]).name);
  }

  // Reachable atoms from the outputs.
  std::unordered_set<std::uint32_t> needed;
  std::vector<std::uint32_t> stack;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    if (outputs[k].is_atom()) stack.push_back(outputs[k].atom_id());
  }
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    if (!needed.insert(id).second) continue;
    const Atom& at = atoms_[id];
    if (at.a.tag() == Ref::kAtom) stack.push_back(at.a.index());
    if (op_is_binary(at.op) && at.b.tag() == Ref::kAtom) stack.push_back(at.b.index());
  }
  std::vector<std::uint32_t> order(needed.begin(), needed.end());
  std::sort(order.begin(), order.end());

  // Register plan: gathered inputs, then constants, then atom results.
  std::unordered_map<std::uint32_t, std::uint32_t> sym_reg;    // symbol -> reg
  std::unordered_map<std::uint64_t, std::uint32_t> const_reg;  // value bits -> reg
  std::unordered_map<std::uint32_t, std::uint32_t> atom_reg;   // atom id -> reg
  std::uint32_t next_reg = 0;
  std::vector<std::string> missing;

  auto reg_for_const = [&](double v) -> std::uint32_t {
    if (v == 0.0) v = 0.0;
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    auto [it, fresh] = const_reg.try_emplace(bits, next_reg);
    if (fresh) {
      t.const_preload_.push_back({next_reg, v});
      ++next_reg;
    }
    return it->second;
  };
  auto reg_for_symbol = [&](std::uint32_t sym) -> std::uint32_t {
    auto it = sym_reg.find(sym);
    if (it != sym_reg.end()) return it->second;
    std::uint32_t reg;
    if (auto pit = input_pos.find(sym); pit != input_pos.end()) {
      reg = next_reg++;
      t.gather_.push_back({pit->second, reg, sym});
    } else if (symbols_[sym].bound) {
      reg = reg_for_const(*symbols_[sym].bound);
    } else {
      missing.push_back(symbols_[sym].name);
      reg = 0;
    }
    sym_reg.emplace(sym, reg);
    return reg;
  };
  auto reg_for_ref = [&](Ref r) -> std::uint32_t {
    switch (r.tag()) {
      case Ref::kConst: return reg_for_const(consts_[r.index()]);
      case Ref::kSym: return reg_for_symbol(r.index());
      default: return atom_reg.at(r.index());
    }
  };

  for (const auto id : order) {
    const Atom& at = atoms_[id];
    Tape::Instr ins;
    ins.op = static_cast<std::uint8_t>(at.op);
    ins.a = reg_for_ref(at.a);
    ins.b = op_is_binary(at.op) ? reg_for_ref(at.b) : 0;
    ins.dst = next_reg++;
    ins.atom_id = id;
    atom_reg.emplace(id, ins.dst);
    t.instrs_.push_back(ins);
  }

  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const Expr& e = outputs[k];
    Tape::OutSlot slot;
    if (e.is_constant()) {
      slot.imm = e.constant_value();
    } else if (e.is_symbol()) {
      slot.reg = static_cast<std::int32_t>(reg_for_symbol(e.symbol_id().value));
      slot.sign = e.negated() ? -1.0f : 1.0f;
      // A bound parameter referenced directly becomes an immediate.
      if (!input_pos.count(e.symbol_id().value) && symbols_[e.symbol_id().value].bound) {
        slot.reg = -1;
        slot.imm = *symbols_[e.symbol_id().value].bound * (e.negated() ? -1.0 : 1.0);
        slot.sign = 1.0f;
      }
    } else {
      slot.reg = static_cast<std::int32_t>(atom_reg.at(e.atom_id()));
      slot.sign = e.negated() ? -1.0f : 1.0f;
    }
    t.outs_.push_back(slot);
  }

  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::string msg = "export_tape('" + t.name_ + "'): free symbols not in inputs:";
    for (const auto& m : missing) msg += " " + m;
    throw std::invalid_argument(msg);
  }

  t.num_regs_ = next_reg;
  t.stats_.atom_count = t.instrs_.size();
  t.stats_.operation_count = t.instrs_.size();
  return t;
}

void Tape::prepare(std::vector<double>& scratch) const {
  scratch.assign(num_regs_, 0.0);
  for (const auto& [reg, v] : const_preload_) scratch[reg] = v;
}

EvalStatus Tape::eval(std::span<const double> values, std::span<double> out,
                      std::vector<double>& scratch) const {
  if (values.size() != num_inputs_) throw std::invalid_argument("Tape::eval('" + name_ + "'): input size mismatch");
  if (out.size() != static_cast<std::size_t>(out_rows_) * out_cols_) {
    throw std::invalid_argument("Tape::eval('" + name_ + "'): output size mismatch");
  }
  if (scratch.size() != num_regs_) prepare(scratch);

  double* r = scratch.data();
  for (const auto& g : gather_) r[g.reg] = values[g.input_pos];
  for (const auto& ins : instrs_) {
    const double a = r[ins.a];
    switch (static_cast<Op>(ins.op)) {
      case Op::Add: r[ins.dst] = a + r[ins.b]; break;
      case Op::Sub: r[ins.dst] = a - r[ins.b]; break;
      case Op::Mul: r[ins.dst] = a * r[ins.b]; break;
      case Op::Div: r[ins.dst] = a / r[ins.b]; break;
      case Op::Neg: r[ins.dst] = -a; break;
      case Op::Sin: r[ins.dst] = std::sin(a); break;
      case Op::Cos: r[ins.dst] = std::cos(a); break;
      case Op::Sqrt: r[ins.dst] = std::sqrt(a); break;
      case Op::Abs: r[ins.dst] = std::abs(a); break;
      case Op::Pow: r[ins.dst] = std::pow(a, r[ins.b]); break;
    }
  }
  bool finite = true;
  for (std::size_t k = 0; k < outs_.size(); ++k) {
    const auto& s = outs_[k];
    const double v = s.reg < 0 ? s.imm : r[s.reg] * s.sign;
    out[k] = v;
    finite &= std::isfinite(v);
  }
  return finite ? EvalStatus::Ok : EvalStatus::NonFinite;
}

// ---------------------------------------------------------------------------
// dumps

void Tape::dump(std::ostream& os) const {
  std::unordered_map<std::uint32_t, std::string> label;
  for (const auto& g : gather_) label[g.reg] = input_names_[g.input_pos];
  for (const auto& [reg, v] : const_preload_) label[reg] = fmt_double(v);
  for (const auto& ins : instrs_) label[ins.dst] = "atom" + std::to_string(ins.atom_id);

  for (const auto& ins : instrs_) {
    os << "atom" << ins.atom_id << " = " << op_name(static_cast<Op>(ins.op)) << "(" << label[ins.a];
    if (op_is_binary(static_cast<Op>(ins.op))) os << ", " << label[ins.b];
    os << ")\n";
  }
  for (int i = 0; i < out_rows_; ++i) {
    for (int j = 0; j < out_cols_; ++j) {
      const auto& s = outs_[static_cast<std::size_t>(i) * out_cols_ + j];
      os << "OUT[" << i << "," << j << "] = ";
      if (s.reg < 0) os << fmt_double(s.imm);
      else os << (s.sign < 0 ? "-" : "") << label[static_cast<std::uint32_t>(s.reg)];
      os << "\n";
    }
  }
  os << "atoms=" << stats_.atom_count << " ops=" << stats_.operation_count << "\n";
}

void Tape::dump_c(std::ostream& os) const {
  // Use counts over instruction operands and outputs decide which atoms get a
  // named local; single-use atoms are inlined into their consumer.
  std::unordered_map<std::uint32_t, int> uses;  // reg -> count
  std::unordered_map<std::uint32_t, std::size_t> instr_of_reg;
  for (std::size_t i = 0; i < instrs_.size(); ++i) instr_of_reg[instrs_[i].dst] = i;
  auto bump = [&](std::uint32_t reg) {
    if (instr_of_reg.count(reg)) ++uses[reg];
  };
  for (const auto& ins : instrs_) {
    bump(ins.a);
    if (op_is_binary(static_cast<Op>(ins.op))) bump(ins.b);
  }
  for (const auto& s : outs_) {
    if (s.reg >= 0) bump(static_cast<std::uint32_t>(s.reg));
  }

  std::unordered_map<std::uint32_t, std::string> base;  // reg -> leaf label
  for (const auto& g : gather_) base[g.reg] = input_names_[g.input_pos];
  for (const auto& [reg, v] : const_preload_) base[reg] = fmt_double(v);

  // Renders the expression tree rooted at reg, inlining single-use atoms.
  auto render = [&](auto&& self, std::uint32_t reg, bool named_ok) -> std::string {
    auto bit = base.find(reg);
    if (bit != base.end()) return bit->second;
    const Tape::Instr& ins = instrs_[instr_of_reg.at(reg)];
    if (named_ok && uses[reg] > 1) return "atom" + std::to_string(ins.atom_id);
    const Op op = static_cast<Op>(ins.op);
    const std::string a = self(self, ins.a, true);
    switch (op) {
      case Op::Add: return "(" + a + " + " + self(self, ins.b, true) + ")";
      case Op::Sub: return "(" + a + " - " + self(self, ins.b, true) + ")";
      case Op::Mul: return a + "*" + self(self, ins.b, true);
      case Op::Div: return a + "/" + self(self, ins.b, true);
      case Op::Neg: return "-" + a;
      case Op::Pow: return "pow(" + a + ", " + self(self, ins.b, true) + ")";
      default: return std::string(op_name(op)) + "(" + a + ")";
    }
  };

  for (const auto& ins : instrs_) {
    if (uses[ins.dst] > 1) {
      os << "atom" << ins.atom_id << " = " << render(render, ins.dst, false) << ";\n";
    }
  }
  for (std::size_t k = 0; k < outs_.size(); ++k) {
    const auto& s = outs_[k];
    os << "_" << name_ << "[" << k << "] = ";
    if (s.reg < 0) os << fmt_double(s.imm);
    else os << (s.sign < 0 ? "-" : "") << render(render, static_cast<std::uint32_t>(s.reg), true);
    os << ";\n";
  }
}

}  // namespace railsim::sym
