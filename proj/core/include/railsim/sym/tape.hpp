#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "railsim/sym/expr.hpp"

namespace railsim::sym {

struct TapeStats {
  std::size_t atom_count = 0;       // retained atom assignments (= instructions)
  std::size_t operation_count = 0;  // arithmetic/transcendental ops per evaluation
};

enum class EvalStatus : std::uint8_t { Ok = 0, NonFinite = 1 };

/// Straight-line numeric program compiled from an atomized expression matrix.
/// Dead atoms are pruned, instruction order is topological, and instructions
/// index a flat register file: [needed inputs | constants | atom results].
/// Immutable; safe to evaluate concurrently, one TapeScratch per thread.
class Tape {
 public:
  struct Instr {
    std::uint8_t op;  // sym::Op
    std::uint32_t dst, a, b;
    std::uint32_t atom_id;  // id in the source table (debug dump naming)
  };
  struct OutSlot {
    std::int32_t reg = -1;  // register, or -1 for an immediate constant
    double imm = 0.0;
    float sign = 1.0f;
  };
  struct InputBinding {
    std::uint32_t input_pos;  // position in the declared input list
    std::uint32_t reg;
    std::uint32_t symbol;     // SymbolId.value (dump only)
  };

  const std::string& name() const { return name_; }
  const TapeStats& stats() const { return stats_; }
  int output_rows() const { return out_rows_; }
  int output_cols() const { return out_cols_; }
  std::size_t num_inputs() const { return num_inputs_; }
  std::size_t num_registers() const { return num_regs_; }
  const std::vector<Instr>& instructions() const { return instrs_; }

  /// values must have the declared input list's length; out receives
  /// rows*cols results row-major. Allocation-free after prepare().
  EvalStatus eval(std::span<const double> values, std::span<double> out,
                  std::vector<double>& scratch) const;
  /// Sizes a scratch buffer and preloads constants (one-time warm-up).
  void prepare(std::vector<double>& scratch) const;

  /// Debug dump: one instruction per line `atomN = <op>(args)`, then
  /// `OUT[i,j] = ...`, then a stats footer `atoms=<n> ops=<m>`.
  void dump(std::ostream& os) const;
  /// C-like source export for inspection: single-use atoms are inlined into
  /// their consumer, multi-use atoms become named locals.
  void dump_c(std::ostream& os) const;

 private:
  friend class AtomTable;
  std::string name_;
  std::size_t num_inputs_ = 0;
  std::size_t num_regs_ = 0;
  std::vector<InputBinding> gather_;
  std::vector<std::pair<std::uint32_t, double>> const_preload_;  // (reg, value)
  std::vector<Instr> instrs_;
  int out_rows_ = 0;
  int out_cols_ = 0;
  std::vector<OutSlot> outs_;
  std::vector<std::string> input_names_;  // aligned with declared inputs (dump)
  TapeStats stats_;
};

}  // namespace railsim::sym
