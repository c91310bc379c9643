#include <doctest.h>

#include <array>
#include <cmath>

#include "nseg/autodiff.hpp"
#include "nseg/errors.hpp"
#include "support.hpp"

using namespace nseg;
using testing::random_matrix;

namespace {

// Contracts an arbitrary output with fixed random weights so every output
// entry contributes a distinct amount to the scalar loss.
ad::Var contract(const ad::Var& out, std::uint64_t seed) {
    Rng rng(seed);
    const Matrix w = random_matrix(out.rows(), out.cols(), -1.0, 1.0, rng);
    return ad::sum(ad::mul(out, out.tape().constant(w)));
}

double check(const std::function<ad::Var(ad::Tape&)>& fn, std::vector<Parameter*> params) {
    return finite_diff_check(fn, params).max_rel_error;
}

}  // namespace

TEST_CASE("elementwise and matrix ops match finite differences") {
    Rng rng(1);
    Parameter a("a", random_matrix(3, 4, -1, 1, rng));
    Parameter b("b", random_matrix(4, 2, -1, 1, rng));
    Parameter c("c", random_matrix(3, 4, -1, 1, rng));
    Parameter row("row", random_matrix(1, 4, -1, 1, rng));
    Parameter pos("pos", random_matrix(3, 4, 0.5, 2.0, rng));

    CHECK(check([&](ad::Tape& t) { return contract(ad::matmul(t.param(a), t.param(b)), 2); }, {&a, &b}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::add(t.param(a), t.param(c)), 3); }, {&a, &c}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::sub(t.param(a), t.param(c)), 4); }, {&a, &c}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::mul(t.param(a), t.param(c)), 5); }, {&a, &c}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::add_row(t.param(a), t.param(row)), 6); }, {&a, &row}) <
          1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::scale(t.param(a), -2.5), 7); }, {&a}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::transpose(t.param(a)), 8); }, {&a}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::tanh(t.param(a)), 9); }, {&a}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::sigmoid(t.param(a)), 10); }, {&a}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::exp(t.param(a)), 11); }, {&a}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::log(t.param(pos)), 12); }, {&pos}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::softmax_rows(t.param(a)), 13); }, {&a}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::log_softmax_rows(t.param(a)), 14); }, {&a}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return ad::mean(ad::tanh(t.param(a))); }, {&a}) < 1e-7);
}

TEST_CASE("structural ops match finite differences") {
    Rng rng(2);
    Parameter a("a", random_matrix(3, 2, -1, 1, rng));
    Parameter b("b", random_matrix(3, 3, -1, 1, rng));
    Parameter c("c", random_matrix(2, 2, -1, 1, rng));

    CHECK(check(
              [&](ad::Tape& t) {
                  const std::array<ad::Var, 2> parts = {t.param(a), t.param(b)};
                  return contract(ad::tanh(ad::concat_cols(parts)), 1);
              },
              {&a, &b}) < 1e-7);
    CHECK(check(
              [&](ad::Tape& t) {
                  const std::array<ad::Var, 2> parts = {t.param(a), t.param(c)};
                  return contract(ad::tanh(ad::concat_rows(parts)), 2);
              },
              {&a, &c}) < 1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::slice_rows(ad::tanh(t.param(b)), 1, 2), 3); }, {&b}) <
          1e-7);
    CHECK(check([&](ad::Tape& t) { return contract(ad::slice_cols(ad::tanh(t.param(b)), 0, 2), 4); }, {&b}) <
          1e-7);
    CHECK(check(
              [&](ad::Tape& t) {
                  const std::vector<std::size_t> rows = {2, 0, 2};
                  return contract(ad::select_rows(ad::tanh(t.param(b)), rows), 5);
              },
              {&b}) < 1e-7);
    const Matrix mask = (Matrix(3, 3) << 1, 0, 1, 1, 1, 0, 0, 1, 1).finished();
    CHECK(check([&](ad::Tape& t) { return contract(ad::dropout(t.param(b), mask, 0.4), 6); }, {&b}) < 1e-7);
}

TEST_CASE("embedding gathers rows and scatters gradients") {
    Rng rng(3);
    Parameter table("table", random_matrix(5, 3, -1, 1, rng));
    const std::vector<int> ids = {4, 1, 4, 0};
    ad::Tape tape;
    const ad::Var e = ad::embedding(tape, table, ids);
    CHECK(e.value().row(0) == table.value.row(4));
    CHECK(e.value().row(3) == table.value.row(0));
    tape.backward(ad::sum(e));
    CHECK(table.grad(4, 0) == doctest::Approx(2.0));
    CHECK(table.grad(1, 2) == doctest::Approx(1.0));
    CHECK(table.grad(2, 1) == 0.0);
    table.zero_grad();

    CHECK(check([&](ad::Tape& t) { return contract(ad::tanh(ad::embedding(t, table, ids)), 4); }, {&table}) <
          1e-7);

    ad::Tape bad;
    const std::vector<int> oob = {5};
    CHECK_THROWS_AS(ad::embedding(bad, table, oob), InvalidInput);
}

TEST_CASE("shape mismatches and non-scalar losses are rejected") {
    ad::Tape t;
    const ad::Var a = t.constant(Matrix::Zero(2, 3));
    const ad::Var b = t.constant(Matrix::Zero(2, 2));
    CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
    CHECK_THROWS_AS(ad::add(a, b), ShapeError);
    Parameter p("p", Matrix::Ones(2, 2));
    ad::Tape t2;
    CHECK_THROWS_AS(t2.backward(t2.param(p)), InvalidInput);
}

TEST_CASE("gradients accumulate across backward passes") {
    Parameter p("p", Matrix::Constant(1, 1, 3.0));
    for (int i = 0; i < 2; ++i) {
        ad::Tape t;
        const ad::Var x = t.param(p);
        t.backward(ad::sum(ad::mul(x, x)));
    }
    CHECK(p.grad(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("constants receive no parameter gradient") {
    Parameter p("p", Matrix::Constant(2, 2, 1.0));
    ad::Tape t;
    const ad::Var c = t.constant(p.value);
    t.backward(ad::sum(ad::tanh(c)));
    CHECK(p.grad.isZero());
}

TEST_CASE("gradient checker reports a wrong gradient") {
    Parameter p("p", Matrix::Constant(1, 1, 0.7));
    const auto wrong = [&](ad::Tape& t) {
        const ad::Var x = t.param(p);
        // Value x², gradient deliberately reported as x.
        return t.record(x.value().array().square().matrix(), true,
                        [x](ad::Tape& tape, const Matrix& g, const Matrix&) {
                            tape.accumulate(x, g.cwiseProduct(x.value()));
                        });
    };
    std::vector<Parameter*> params = {&p};
    const auto r = finite_diff_check(wrong, params);
    CHECK(r.max_rel_error > 0.1);
    CHECK(r.worst_parameter == "p");
}
