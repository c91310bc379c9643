#include "nseg/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "nseg/errors.hpp"

namespace nseg {

namespace ad {

namespace {

std::string shape(const Matrix& m) {
    std::ostringstream s;
    s << m.rows() << "x" << m.cols();
    return s.str();
}

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape(a) + " and " + shape(b));
}

bool any_requires(std::initializer_list<Var> vars) {
    for (const auto& v : vars) {
        if (v.tape().requires_grad(v)) return true;
    }
    return false;
}

template <typename Fn>
Var unary(const Var& a, Matrix value, Fn&& local_grad) {
    Tape& tape = a.tape();
    return tape.record(std::move(value), tape.requires_grad(a),
                       [a, local_grad](Tape& t, const Matrix& g, const Matrix& y) {
                           t.accumulate(a, local_grad(g, y, a.value()));
                       });
}

}  // namespace

const Matrix& Var::value() const { return tape_->nodes_[id_].value; }

const Matrix& Var::grad() const {
    static const Matrix empty;
    const auto& node = tape_->nodes_[id_];
    return node.has_grad ? node.grad : empty;
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
    Var v = record(p.value, true, nullptr);
    nodes_.back().param = &p;
    return v;
}

Var Tape::record(Matrix value, bool requires_grad, Backprop backprop) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
    Node& node = nodes_[v.id_];
    if (!node.requires_grad) return;
    if (g.rows() != node.value.rows() || g.cols() != node.value.cols()) {
        shape_error("accumulate", node.value, g);
    }
    if (node.has_grad) {
        node.grad += g;
    } else {
        node.grad = g;
        node.has_grad = true;
    }
}

void Tape::backward(const Var& loss) {
    if (loss.tape_ != this) {
        throw InvalidInput("backward: loss belongs to another tape");
    }
    const Matrix& lv = nodes_[loss.id_].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw InvalidInput("backward: loss must be scalar, got " + shape(lv));
    }
    for (auto& node : nodes_) {
        node.has_grad = false;
    }
    if (!nodes_[loss.id_].requires_grad) return;
    nodes_[loss.id_].grad = Matrix::Ones(1, 1);
    nodes_[loss.id_].has_grad = true;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.has_grad) continue;
        if (node.param != nullptr) node.param->grad += node.grad;
        if (node.backprop) node.backprop(*this, node.grad, node.value);
    }
}

Var matmul(const Var& a, const Var& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
    return a.tape().record(av * bv, any_requires({a, b}), [a, b](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
        if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
    });
}

Var add(const Var& a, const Var& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("add", av, bv);
    return a.tape().record(av + bv, any_requires({a, b}), [a, b](Tape& t, const Matrix& g, const Matrix&) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var sub(const Var& a, const Var& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("sub", av, bv);
    return a.tape().record(av - bv, any_requires({a, b}), [a, b](Tape& t, const Matrix& g, const Matrix&) {
        t.accumulate(a, g);
        if (t.requires_grad(b)) t.accumulate(b, -g);
    });
}

Var add_row(const Var& a, const Var& row) {
    const Matrix& av = a.value();
    const Matrix& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", av, rv);
    Matrix out = av.rowwise() + rv.row(0);
    return a.tape().record(std::move(out), any_requires({a, row}),
                           [a, row](Tape& t, const Matrix& g, const Matrix&) {
                               t.accumulate(a, g);
                               if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
                           });
}

Var mul(const Var& a, const Var& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("mul", av, bv);
    return a.tape().record(av.cwiseProduct(bv), any_requires({a, b}),
                           [a, b](Tape& t, const Matrix& g, const Matrix&) {
                               if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                               if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                           });
}

Var scale(const Var& a, double s) {
    return unary(a, a.value() * s, [s](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g * s; });
}

Var transpose(const Var& a) {
    return unary(a, a.value().transpose(),
                 [](const Matrix& g, const Matrix&, const Matrix&) -> Matrix { return g.transpose(); });
}

Var tanh(const Var& a) {
    return unary(a, a.value().array().tanh().matrix(),
                 [](const Matrix& g, const Matrix& y, const Matrix&) -> Matrix {
                     return (g.array() * (1.0 - y.array().square())).matrix();
                 });
}

Var sigmoid(const Var& a) {
    Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return unary(a, std::move(y), [](const Matrix& g, const Matrix& y, const Matrix&) -> Matrix {
        return (g.array() * y.array() * (1.0 - y.array())).matrix();
    });
}

Var exp(const Var& a) {
    return unary(a, a.value().array().exp().matrix(),
                 [](const Matrix& g, const Matrix& y, const Matrix&) -> Matrix { return g.cwiseProduct(y); });
}

Var log(const Var& a) {
    return unary(a, a.value().array().log().matrix(),
                 [](const Matrix& g, const Matrix&, const Matrix& x) -> Matrix {
                     return (g.array() / x.array()).matrix();
                 });
}

namespace {

Matrix row_softmax(const Matrix& x) {
    Matrix y = x;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double m = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - m).exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
    return y;
}

}  // namespace

Var softmax_rows(const Var& a) {
    return unary(a, row_softmax(a.value()), [](const Matrix& g, const Matrix& y, const Matrix&) -> Matrix {
        const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
        return (y.array() * (g.colwise() - dot).array()).matrix();
    });
}

Var log_softmax_rows(const Var& a) {
    Matrix y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double m = y.row(r).maxCoeff();
        const double lse = m + std::log((y.row(r).array() - m).exp().sum());
        y.row(r).array() -= lse;
    }
    return unary(a, std::move(y), [](const Matrix& g, const Matrix& y, const Matrix&) -> Matrix {
        const Eigen::VectorXd total = g.rowwise().sum();
        Matrix p = y.array().exp().matrix();
        return g - (p.array().colwise() * total.array()).matrix();
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    bool needs_grad = false;
    for (const auto& p : parts) {
        if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
        cols += p.cols();
        needs_grad = needs_grad || p.tape().requires_grad(p);
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    std::vector<Var> held(parts.begin(), parts.end());
    return parts[0].tape().record(std::move(out), needs_grad,
                                  [held = std::move(held)](Tape& t, const Matrix& g, const Matrix&) {
                                      Eigen::Index at = 0;
                                      for (const auto& p : held) {
                                          if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, p.cols()));
                                          at += p.cols();
                                      }
                                  });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no operands");
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    bool needs_grad = false;
    for (const auto& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
        rows += p.rows();
        needs_grad = needs_grad || p.tape().requires_grad(p);
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    std::vector<Var> held(parts.begin(), parts.end());
    return parts[0].tape().record(std::move(out), needs_grad,
                                  [held = std::move(held)](Tape& t, const Matrix& g, const Matrix&) {
                                      Eigen::Index at = 0;
                                      for (const auto& p : held) {
                                          if (t.requires_grad(p)) t.accumulate(p, g.middleRows(at, p.rows()));
                                          at += p.rows();
                                      }
                                  });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
    const Matrix& av = a.value();
    if (begin < 0 || count < 0 || begin + count > av.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape(av));
    }
    return unary(a, av.middleRows(begin, count), [begin, count](const Matrix& g, const Matrix&, const Matrix& x) -> Matrix {
        Matrix full = Matrix::Zero(x.rows(), x.cols());
        full.middleRows(begin, count) = g;
        return full;
    });
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
    const Matrix& av = a.value();
    if (begin < 0 || count < 0 || begin + count > av.cols()) {
        throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape(av));
    }
    return unary(a, av.middleCols(begin, count), [begin, count](const Matrix& g, const Matrix&, const Matrix& x) -> Matrix {
        Matrix full = Matrix::Zero(x.rows(), x.cols());
        full.middleCols(begin, count) = g;
        return full;
    });
}

Var select_rows(const Var& a, std::span<const std::size_t> rows) {
    const Matrix& av = a.value();
    Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(av.rows())) {
            throw ShapeError("select_rows: row " + std::to_string(rows[i]) + " out of range for " + shape(av));
        }
        out.row(static_cast<Eigen::Index>(i)) = av.row(static_cast<Eigen::Index>(rows[i]));
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return unary(a, std::move(out), [idx = std::move(idx)](const Matrix& g, const Matrix&, const Matrix& x) -> Matrix {
        Matrix full = Matrix::Zero(x.rows(), x.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            full.row(static_cast<Eigen::Index>(idx[i])) += g.row(static_cast<Eigen::Index>(i));
        }
        return full;
    });
}

Var dropout(const Var& a, const Matrix& mask, double rate) {
    const Matrix& av = a.value();
    if (mask.rows() != av.rows() || mask.cols() != av.cols()) shape_error("dropout", av, mask);
    if (rate < 0.0 || rate >= 1.0) throw InvalidInput("dropout: rate must lie in [0, 1)");
    Matrix m = mask / (1.0 - rate);
    Matrix out = av.cwiseProduct(m);
    return unary(a, std::move(out), [m = std::move(m)](const Matrix& g, const Matrix&, const Matrix&) -> Matrix {
        return g.cwiseProduct(m);
    });
}

Var embedding(Tape& tape, Parameter& p, std::span<const int> ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), p.value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= p.value.rows()) {
            throw InvalidInput("embedding lookup: id " + std::to_string(ids[i]) + " out of range for table '" +
                               p.name + "' with " + std::to_string(p.value.rows()) + " rows");
        }
        out.row(static_cast<Eigen::Index>(i)) = p.value.row(ids[i]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    Parameter* table = &p;
    return tape.record(std::move(out), true, [table, idx = std::move(idx)](Tape&, const Matrix& g, const Matrix&) {
        for (std::size_t i = 0; i < idx.size(); ++i) {
            table->grad.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        }
    });
}

Var sum(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return unary(a, std::move(out), [](const Matrix& g, const Matrix&, const Matrix& x) -> Matrix {
        return Matrix::Constant(x.rows(), x.cols(), g(0, 0));
    });
}

Var mean(const Var& a) {
    const auto n = static_cast<double>(a.value().size());
    Matrix out(1, 1);
    out(0, 0) = a.value().sum() / n;
    return unary(a, std::move(out), [n](const Matrix& g, const Matrix&, const Matrix& x) -> Matrix {
        return Matrix::Constant(x.rows(), x.cols(), g(0, 0) / n);
    });
}

}  // namespace ad

}  // namespace nseg
