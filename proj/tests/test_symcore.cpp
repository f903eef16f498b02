#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "railsim/sym/atom_table.hpp"
#include "railsim/sym/tape.hpp"
#include "support/oracle.hpp"

using namespace railsim::sym;
using testsupport::central_diff;
using testsupport::naive_eval;
using testsupport::random_dag;
using testsupport::rel_err;
using testsupport::SymValues;

TEST_CASE("symbol registration") {
  AtomTable tab;
  const Expr th = tab.make_symbol("theta2", SymbolKind::Coordinate);
  CHECK(th.is_symbol());
  CHECK_THROWS_WITH_AS(tab.make_symbol("theta2", SymbolKind::Coordinate),
                       doctest::Contains("theta2"), std::invalid_argument);

  const Expr dth = tab.make_symbol("dtheta2", SymbolKind::Velocity);
  tab.link_time_derivative(th.symbol_id(), dth.symbol_id());
  CHECK(tab.time_derivative(th) == dth);
}

TEST_CASE("binop identities and hash consing") {
  AtomTable tab;
  const Expr x = tab.make_symbol("x", SymbolKind::Parameter);
  const Expr v = tab.make_symbol("v_y", SymbolKind::Parameter);

  CHECK(x + Expr(0.0) == x);
  CHECK(Expr(0.0) + x == x);
  CHECK(x * Expr(1.0) == x);
  CHECK((x * Expr(0.0)).is_zero());
  CHECK((x - x).is_zero());
  CHECK(tab.num_atoms() == 0);

  const Expr a = sin(x) * v;
  const Expr b = sin(x) * v;
  CHECK(a == b);
  CHECK(a.atom_id() == b.atom_id());
  // commutative canonicalization
  CHECK(v * sin(x) == a);

  CHECK_THROWS_AS(x / Expr(0.0), std::domain_error);
}

TEST_CASE("constant folding in transcendentals") {
  AtomTable tab;
  CHECK(sin(Expr(0.0)).is_zero());
  CHECK(sqrt(Expr(4.0)).constant_value() == 2.0);
  CHECK_THROWS_AS(sqrt(Expr(-1.0)), std::domain_error);

  const Expr th = tab.make_symbol("theta3", SymbolKind::Coordinate);
  const Expr c1 = cos(th);
  const Expr c2 = cos(th);
  CHECK(c1.atom_id() == c2.atom_id());
  CHECK(sin(th).atom_id() != c1.atom_id());
  CHECK(tab.num_atoms() == 2);
}

// The worked rotation example: u + R(theta) v with R an elementary x-rotation
// must produce exactly 11 atoms when built in that order.
TEST_CASE("on-the-way atomization worked example: 11 atoms") {
  AtomTable tab;
  const Expr th = tab.make_symbol("theta", SymbolKind::Coordinate);
  Expr u[3] = {tab.make_symbol("u_x", SymbolKind::Parameter),
               tab.make_symbol("u_y", SymbolKind::Parameter),
               tab.make_symbol("u_z", SymbolKind::Parameter)};
  Expr v[3] = {tab.make_symbol("v_x", SymbolKind::Parameter),
               tab.make_symbol("v_y", SymbolKind::Parameter),
               tab.make_symbol("v_z", SymbolKind::Parameter)};

  const std::size_t before = tab.num_atoms();
  const Expr c = cos(th), s = sin(th);
  Expr R[3][3] = {{Expr(1), Expr(0), Expr(0)},
                  {Expr(0), c, -s},
                  {Expr(0), s, c}};
  Expr rv[3], w[3];
  for (int i = 0; i < 3; ++i) {
    rv[i] = Expr(0.0);
    for (int j = 0; j < 3; ++j) rv[i] = rv[i] + R[i][j] * v[j];
  }
  for (int i = 0; i < 3; ++i) w[i] = u[i] + rv[i];
  CHECK(tab.num_atoms() - before == 11);

  // identity rotation evaluation: theta=0, u=(1,2,3), v=(4,5,6) -> (5,7,9)
  SymValues vals{{th.symbol_id().value, 0.0}};
  const double uv[3] = {1, 2, 3}, vv[3] = {4, 5, 6};
  for (int i = 0; i < 3; ++i) {
    vals[u[i].symbol_id().value] = uv[i];
    vals[v[i].symbol_id().value] = vv[i];
  }
  ExprMatrix out(3, 1);
  for (int i = 0; i < 3; ++i) out.at(i, 0) = w[i];
  std::vector<SymbolId> ins{th.symbol_id()};
  for (int i = 0; i < 3; ++i) ins.push_back(u[i].symbol_id());
  for (int i = 0; i < 3; ++i) ins.push_back(v[i].symbol_id());
  const Tape tape = tab.export_tape("fig3", out, ins);
  std::vector<double> in{0, 1, 2, 3, 4, 5, 6}, res(3), scratch;
  CHECK(tape.eval(in, res, scratch) == EvalStatus::Ok);
  CHECK(res[0] == doctest::Approx(5));
  CHECK(res[1] == doctest::Approx(7));
  CHECK(res[2] == doctest::Approx(9));
}

TEST_CASE("differentiate basics") {
  AtomTable tab;
  const Expr th = tab.make_symbol("theta", SymbolKind::Coordinate);
  const Expr c = tab.make_symbol("c", SymbolKind::Parameter);

  CHECK(tab.differentiate(sin(th), th.symbol_id()) == cos(th));
  CHECK(tab.differentiate(c, th.symbol_id()).is_zero());
  CHECK(tab.differentiate(c * th, th.symbol_id()) == c);
}

TEST_CASE("differentiate matches finite differences on random DAGs") {
  AtomTable tab;
  std::vector<Expr> leaves;
  for (int i = 0; i < 4; ++i) {
    leaves.push_back(tab.make_symbol("x" + std::to_string(i), SymbolKind::Parameter));
  }
  std::mt19937 rng(20240817);
  const Expr e = random_dag(tab, leaves, 50, rng);
  const Expr d0 = tab.differentiate(e, leaves[0].symbol_id());

  std::uniform_real_distribution<double> pd(-1.2, 1.2);
  for (int trial = 0; trial < 10; ++trial) {
    SymValues vals;
    for (const auto& l : leaves) vals[l.symbol_id().value] = pd(rng);
    const double sym = naive_eval(d0, vals);
    const double fd = central_diff(e, vals, leaves[0].symbol_id().value);
    CHECK(rel_err(sym, fd) < 1e-6);
  }
}

TEST_CASE("time derivative") {
  AtomTable tab;
  auto [q, qd, qdd] = tab.make_coordinate("theta");
  const Expr l = tab.make_symbol("l", SymbolKind::Parameter);

  CHECK(tab.time_derivative(sin(q)) == cos(q) * qd);
  CHECK(tab.time_derivative(l).is_zero());

  // ddtheta exists via make_coordinate; an unlinked velocity must fail by name
  const Expr w = tab.make_symbol("w", SymbolKind::Velocity);
  CHECK_THROWS_WITH_AS(tab.time_derivative(sin(q) * w), doctest::Contains("w"), std::runtime_error);

  // numeric check along theta(t) = 0.3 + 0.7 t + 0.2 t^2 at t = 0.4
  const Expr e = sin(q) * q + cos(q * q);
  const Expr de = tab.time_derivative(e);
  auto theta_of = [](double t) { return 0.3 + 0.7 * t + 0.2 * t * t; };
  auto dtheta_of = [](double t) { return 0.7 + 0.4 * t; };
  const double t0 = 0.4, h = 1e-6;
  SymValues vals{{q.symbol_id().value, theta_of(t0)},
                 {qd.symbol_id().value, dtheta_of(t0)},
                 {qdd.symbol_id().value, 0.4}};
  const double sym = naive_eval(de, vals);
  SymValues vp{{q.symbol_id().value, theta_of(t0 + h)}};
  SymValues vm{{q.symbol_id().value, theta_of(t0 - h)}};
  const double fd = (naive_eval(e, vp) - naive_eval(e, vm)) / (2 * h);
  CHECK(rel_err(sym, fd) < 1e-6);
}

TEST_CASE("substitute") {
  AtomTable tab;
  const Expr fx = tab.make_symbol("f_x", SymbolKind::ExternalForce);
  const Expr tsym = tab.time_symbol();
  const Expr g = tab.make_symbol("g", SymbolKind::Parameter);

  const Expr e = fx * tsym + g;
  const Expr r = tab.substitute(e, {{fx.symbol_id(), Expr(0.0)}});
  CHECK(r == g);

  const Expr same = tab.substitute(e, {});
  CHECK(same == e);
  const Expr nothing = tab.substitute(e, {{tab.make_symbol("unused", SymbolKind::Parameter).symbol_id(), Expr(1.0)}});
  CHECK(nothing == e);
}

TEST_CASE("export: single literal") {
  AtomTable tab;
  ExprMatrix out(1, 1);
  out.at(0, 0) = Expr(3.5);
  const Tape t = tab.export_tape("lit", out, {});
  CHECK(t.instructions().empty());
  CHECK(t.stats().operation_count == 0);
  std::vector<double> res(1), scratch;
  CHECK(t.eval({}, res, scratch) == EvalStatus::Ok);
  CHECK(res[0] == 3.5);
}

TEST_CASE("export: shared atoms appear once; free symbols rejected") {
  AtomTable tab;
  const Expr th = tab.make_symbol("theta2", SymbolKind::Coordinate);
  const Expr a = tab.make_symbol("a", SymbolKind::Parameter);
  const Expr b = tab.make_symbol("b", SymbolKind::Parameter);

  ExprMatrix out(1, 2);
  out.at(0, 0) = sin(th) * a;
  out.at(0, 1) = sin(th) * b;
  const std::vector<SymbolId> ins{th.symbol_id(), a.symbol_id(), b.symbol_id()};
  const Tape t = tab.export_tape("m", out, ins);
  int sin_count = 0;
  for (const auto& i : t.instructions()) {
    if (static_cast<Op>(i.op) == Op::Sin) ++sin_count;
  }
  CHECK(sin_count == 1);

  const std::vector<SymbolId> missing{th.symbol_id()};
  CHECK_THROWS_WITH_AS(tab.export_tape("m2", out, missing), doctest::Contains("a"),
                       std::invalid_argument);
}

TEST_CASE("export: duplicated output adds no instructions") {
  AtomTable tab;
  std::vector<Expr> leaves;
  for (int i = 0; i < 3; ++i) leaves.push_back(tab.make_symbol("y" + std::to_string(i), SymbolKind::Parameter));
  std::mt19937 rng(7);
  const Expr e = random_dag(tab, leaves, 40, rng);

  std::vector<SymbolId> ins;
  for (const auto& l : leaves) ins.push_back(l.symbol_id());

  ExprMatrix one(1, 1);
  one.at(0, 0) = e;
  ExprMatrix two(1, 2);
  two.at(0, 0) = e;
  two.at(0, 1) = e;
  const Tape t1 = tab.export_tape("one", one, ins);
  const Tape t2 = tab.export_tape("two", two, ins);
  CHECK(t1.stats().operation_count == t2.stats().operation_count);
}

TEST_CASE("tape evaluation matches naive DAG evaluation (oracle)") {
  std::mt19937 rng(123456);
  std::uniform_real_distribution<double> pd(-1.4, 1.4);
  for (int rep = 0; rep < 8; ++rep) {
    AtomTable tab;
    std::vector<Expr> leaves;
    std::vector<SymbolId> ins;
    for (int i = 0; i < 5; ++i) {
      leaves.push_back(tab.make_symbol("z" + std::to_string(i), SymbolKind::Parameter));
      ins.push_back(leaves.back().symbol_id());
    }
    ExprMatrix out(2, 2);
    for (int k = 0; k < 4; ++k) out[k] = random_dag(tab, leaves, 60, rng);
    const Tape t = tab.export_tape("r", out, ins);

    std::vector<double> scratch;
    for (int pt = 0; pt < 13; ++pt) {
      std::vector<double> in(5);
      SymValues vals;
      for (int i = 0; i < 5; ++i) {
        in[i] = pd(rng);
        vals[ins[i].value] = in[i];
      }
      std::vector<double> res(4);
      REQUIRE(t.eval(in, res, scratch) == EvalStatus::Ok);
      for (int k = 0; k < 4; ++k) {
        const double want = naive_eval(out[k], vals);
        CHECK(std::abs(res[k] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
      }
    }
  }
}

TEST_CASE("idempotent interning: identical construction gives identical ids and stats") {
  auto build = [](AtomTable& tab) {
    std::vector<Expr> leaves;
    std::vector<SymbolId> ins;
    for (int i = 0; i < 4; ++i) {
      leaves.push_back(tab.make_symbol("p" + std::to_string(i), SymbolKind::Parameter));
      ins.push_back(leaves.back().symbol_id());
    }
    std::mt19937 rng(99);
    ExprMatrix out(1, 3);
    for (int k = 0; k < 3; ++k) out[k] = random_dag(tab, leaves, 35, rng);
    return tab.export_tape("d", out, ins);
  };
  AtomTable t1, t2;
  const Tape a = build(t1);
  const Tape b = build(t2);
  CHECK(t1.num_atoms() == t2.num_atoms());
  CHECK(a.stats().operation_count == b.stats().operation_count);
  REQUIRE(a.instructions().size() == b.instructions().size());
  for (std::size_t i = 0; i < a.instructions().size(); ++i) {
    CHECK(a.instructions()[i].atom_id == b.instructions()[i].atom_id);
    CHECK(a.instructions()[i].op == b.instructions()[i].op);
  }
}

TEST_CASE("bound parameters are baked; NaN is flagged") {
  AtomTable tab;
  const Expr x = tab.make_symbol("x", SymbolKind::Parameter);
  const Expr k = tab.make_symbol("k", SymbolKind::Parameter);
  tab.bind_parameter(k.symbol_id(), 2.5);

  ExprMatrix out(1, 1);
  out.at(0, 0) = k * x;
  const std::vector<SymbolId> ins{x.symbol_id()};
  const Tape t = tab.export_tape("kx", out, ins);
  std::vector<double> res(1), scratch;
  CHECK(t.eval(std::vector<double>{3.0}, res, scratch) == EvalStatus::Ok);
  CHECK(res[0] == 7.5);

  ExprMatrix div(1, 1);
  div.at(0, 0) = k / x;
  const Tape td = tab.export_tape("kdx", div, ins);
  CHECK(td.eval(std::vector<double>{0.0}, res, scratch) == EvalStatus::NonFinite);
}

TEST_CASE("debug dump format") {
  AtomTable tab;
  const Expr th = tab.make_symbol("q1", SymbolKind::Coordinate);
  ExprMatrix out(1, 1);
  out.at(0, 0) = sin(th) * sin(th);
  const std::vector<SymbolId> ins{th.symbol_id()};
  const Tape t = tab.export_tape("s2", out, ins);

  std::ostringstream os;
  t.dump(os);
  const std::string s = os.str();
  CHECK(s.find("= sin(q1)") != std::string::npos);
  CHECK(s.find("OUT[0,0] = ") != std::string::npos);
  CHECK(s.find("atoms=2 ops=2") != std::string::npos);

  std::ostringstream oc;
  t.dump_c(oc);
  CHECK(oc.str().find("sin(q1)") != std::string::npos);
}
