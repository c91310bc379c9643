#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nseg {

using Matrix = Eigen::MatrixXd;

// A learnable tensor. `grad` always has the shape of `value` and is
// accumulated into by Tape::backward.
struct Parameter {
    Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
        grad = Matrix::Zero(value.rows(), value.cols());
    }

    void zero_grad() { grad.setZero(); }

    std::string name;
    Matrix value;
    Matrix grad;
};

namespace ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Records operations in creation order, which is a topological order since
// every node is created after its operands. Single owner per pass.
class Tape {
public:
    using Backprop =
        std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var param(Parameter& p);

    // Pushes a node computed outside the built-in primitives. `backprop`
    // receives the node's gradient and value and must call accumulate()
    // on its parents.
    Var record(Matrix value, bool requires_grad, Backprop backprop);

    void accumulate(const Var& v, const Matrix& g);
    bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }

    // Reverse sweep from a 1x1 loss. Parameter gradients are added to
    // Parameter::grad; parameters the loss does not reach are untouched.
    void backward(const Var& loss);

    std::size_t size() const { return nodes_.size(); }

private:
    friend class Var;

    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        bool has_grad = false;
        Parameter* param = nullptr;
        Backprop backprop;
    };

    std::vector<Node> nodes_;
};

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Adds a 1 x c row to every row of a.
Var add_row(const Var& a, const Var& row);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var transpose(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);
Var select_rows(const Var& a, std::span<const std::size_t> rows);

// Inverted dropout: a * mask / (1 - rate). mask holds 0/1 entries.
Var dropout(const Var& a, const Matrix& mask, double rate);

// Row gather from an embedding table; gradients scatter back into p.grad.
Var embedding(Tape& tape, Parameter& p, std::span<const int> ids);

Var sum(const Var& a);
Var mean(const Var& a);

}  // namespace ad

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    Eigen::Index worst_row = 0;
    Eigen::Index worst_col = 0;
};

// Compares Tape::backward against central differences
//   |analytic - numeric| / max(1, |numeric|)
// over every entry of every parameter (or a strided subset when
// max_entries_per_param is nonzero). fn must rebuild the same scalar loss
// on each call; a changing value raises CheckError.
GradCheckResult finite_diff_check(const std::function<ad::Var(ad::Tape&)>& fn,
                                  std::span<Parameter* const> params, double eps = 1e-5,
                                  std::size_t max_entries_per_param = 0);

}  // namespace nseg
