#pragma once

#include "kt/matrix.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kt {

/// A trainable tensor and its gradient accumulator.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix gradient;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), gradient(value.rows(), value.cols()) {}

    void zero_grad() { gradient = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Handle to one node of a Tape.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    std::size_t id() const noexcept { return id_; }
    Tape& tape() const noexcept { return *tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Wengert list of the primitive operations applied during one forward pass.
///
/// Nodes are appended in evaluation order; backward() walks them in exact
/// reverse order. A tape belongs to a single thread.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    /// Drop node values and gradients as soon as backward() no longer needs them.
    enum class Release { keep, free };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value) {
        nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, "constant"});
        return {this, nodes_.size() - 1};
    }

    /// Leaf whose gradient is accumulated into p.gradient by backward().
    Var param(Parameter& p) {
        nodes_.push_back(Node{p.value, {}, {}, &p, true, "param"});
        return {this, nodes_.size() - 1};
    }

    /// Read-only leaf: behaves like a constant.
    Var param(const Parameter& p) {
        nodes_.push_back(Node{p.value, {}, {}, nullptr, false, "param"});
        return {this, nodes_.size() - 1};
    }

    Var record(Matrix value, std::initializer_list<Var> inputs, Backward fn, const char* op) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn), op);
    }

    Var record(Matrix value, std::span<const Var> inputs, Backward fn, const char* op) {
        bool needs = false;
        for (const Var& in : inputs) {
            if (in.tape_ != this) {
                throw ContractError(std::string(op) + ": operand belongs to another tape");
            }
            needs = needs || nodes_[in.id_].requires_grad;
        }
        if (!all_finite(value)) {
            throw NumericError(std::string(op) + ": produced a non-finite value");
        }
        nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, nullptr, needs, op});
        return {this, nodes_.size() - 1};
    }

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }

    /// Gradient slot of a node, zero-initialized on first access.
    Matrix& grad(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.empty() && !n.value.empty()) {
            n.grad = Matrix(n.value.rows(), n.value.cols());
        }
        return n.grad;
    }

    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }
    const char* op_name(std::size_t id) const { return nodes_[id].op; }

    /// Accumulate d(loss)/d(param) into every Parameter bound with param(Parameter&).
    void backward(Var loss, Release release = Release::keep) {
        if (loss.tape_ != this) {
            throw ContractError("backward: loss node belongs to another tape");
        }
        if (loss.value().size() != 1) {
            throw ContractError("backward: loss must be a scalar, got " + loss.value().shape());
        }
        if (!nodes_[loss.id_].requires_grad) {
            return;
        }
        grad(loss.id_)[0] = 1.0;
        for (std::size_t i = loss.id_ + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.requires_grad && !n.grad.empty()) {
                if (n.backward) {
                    n.backward(*this, i);
                }
                if (n.target != nullptr) {
                    n.target->gradient += n.grad;
                }
            }
            if (release == Release::free) {
                nodes_[i].grad = Matrix();
                nodes_[i].value = Matrix();
                nodes_[i].backward = nullptr;
            }
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        Parameter* target;
        bool requires_grad;
        const char* op;
    };

    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

} // namespace kt
