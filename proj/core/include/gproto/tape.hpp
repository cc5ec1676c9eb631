#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace gproto {

// Reverse-mode autodiff on scalars. A Tape records one node per operation
// with eagerly evaluated local partials; backward() is a single reverse scan.
// Parents always precede children, so the scan order is valid by
// construction. Model code is templated on the scalar type and instantiated
// with either double (fast evaluation, finite differences) or Var (analytic
// gradients over this tape).
class Tape {
public:
    struct Node {
        double da, db;
        int32_t ia, ib;
    };

    int32_t leaf() {
        nodes_.push_back({0.0, 0.0, -1, -1});
        return static_cast<int32_t>(nodes_.size()) - 1;
    }

    int32_t node1(int32_t ia, double da) {
        nodes_.push_back({da, 0.0, ia, -1});
        return static_cast<int32_t>(nodes_.size()) - 1;
    }

    int32_t node2(int32_t ia, double da, int32_t ib, double db) {
        nodes_.push_back({da, db, ia, ib});
        return static_cast<int32_t>(nodes_.size()) - 1;
    }

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    void reserve(size_t n) { nodes_.reserve(n); }

    // Adjoints of every node with respect to the node at `root`.
    std::vector<double> backward(int32_t root) const {
        std::vector<double> adj(nodes_.size(), 0.0);
        adj[static_cast<size_t>(root)] = 1.0;
        for (int32_t i = root; i >= 0; --i) {
            const Node& n = nodes_[static_cast<size_t>(i)];
            const double a = adj[static_cast<size_t>(i)];
            if (a == 0.0) continue;
            if (n.ia >= 0) adj[static_cast<size_t>(n.ia)] += n.da * a;
            if (n.ib >= 0) adj[static_cast<size_t>(n.ib)] += n.db * a;
        }
        return adj;
    }

private:
    std::vector<Node> nodes_;
};

class Var {
public:
    Var() : tape_(nullptr), idx_(-1), val_(0.0) {}
    Var(Tape* tape, int32_t idx, double val) : tape_(tape), idx_(idx), val_(val) {}

    static Var leaf(Tape& tape, double val) { return Var(&tape, tape.leaf(), val); }

    double val() const { return val_; }
    int32_t index() const { return idx_; }
    Tape* tape() const { return tape_; }

    Var operator-() const { return Var(tape_, tape_->node1(idx_, -1.0), -val_); }

    friend Var operator+(const Var& a, const Var& b) {
        return Var(a.tape_, a.tape_->node2(a.idx_, 1.0, b.idx_, 1.0), a.val_ + b.val_);
    }
    friend Var operator+(const Var& a, double b) {
        return Var(a.tape_, a.tape_->node1(a.idx_, 1.0), a.val_ + b);
    }
    friend Var operator+(double a, const Var& b) { return b + a; }

    friend Var operator-(const Var& a, const Var& b) {
        return Var(a.tape_, a.tape_->node2(a.idx_, 1.0, b.idx_, -1.0), a.val_ - b.val_);
    }
    friend Var operator-(const Var& a, double b) {
        return Var(a.tape_, a.tape_->node1(a.idx_, 1.0), a.val_ - b);
    }
    friend Var operator-(double a, const Var& b) {
        return Var(b.tape_, b.tape_->node1(b.idx_, -1.0), a - b.val_);
    }

    friend Var operator*(const Var& a, const Var& b) {
        return Var(a.tape_, a.tape_->node2(a.idx_, b.val_, b.idx_, a.val_), a.val_ * b.val_);
    }
    friend Var operator*(const Var& a, double b) {
        return Var(a.tape_, a.tape_->node1(a.idx_, b), a.val_ * b);
    }
    friend Var operator*(double a, const Var& b) { return b * a; }

    friend Var operator/(const Var& a, const Var& b) {
        const double inv = 1.0 / b.val_;
        return Var(a.tape_, a.tape_->node2(a.idx_, inv, b.idx_, -a.val_ * inv * inv),
                   a.val_ * inv);
    }
    friend Var operator/(const Var& a, double b) {
        const double inv = 1.0 / b;
        return Var(a.tape_, a.tape_->node1(a.idx_, inv), a.val_ * inv);
    }
    friend Var operator/(double a, const Var& b) {
        const double inv = 1.0 / b.val_;
        return Var(b.tape_, b.tape_->node1(b.idx_, -a * inv * inv), a * inv);
    }

    Var& operator+=(const Var& o) { return *this = *this + o; }
    Var& operator+=(double o) { return *this = *this + o; }
    Var& operator-=(const Var& o) { return *this = *this - o; }
    Var& operator*=(const Var& o) { return *this = *this * o; }

private:
    Tape* tape_;
    int32_t idx_;
    double val_;
};

// Bring the std overload sets into scope so that unqualified calls in
// templated model code resolve for both double and Var.
using std::abs;
using std::exp;
using std::log;
using std::sqrt;

inline Var exp(const Var& x) {
    const double e = std::exp(x.val());
    return Var(x.tape(), x.tape()->node1(x.index(), e), e);
}

inline Var log(const Var& x) {
    return Var(x.tape(), x.tape()->node1(x.index(), 1.0 / x.val()), std::log(x.val()));
}

inline Var sqrt(const Var& x) {
    const double s = std::sqrt(x.val());
    return Var(x.tape(), x.tape()->node1(x.index(), 0.5 / s), s);
}

inline Var abs(const Var& x) {
    const double sgn = x.val() > 0.0 ? 1.0 : (x.val() < 0.0 ? -1.0 : 0.0);
    return Var(x.tape(), x.tape()->node1(x.index(), sgn), std::abs(x.val()));
}

inline double sigmoid_value(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline Var softplus(const Var& x) {
    return Var(x.tape(), x.tape()->node1(x.index(), sigmoid_value(x.val())),
               softplus(x.val()));
}

// max(x, 0); subgradient 0 at the kink.
inline double max0(double x) { return x > 0.0 ? x : 0.0; }

inline Var max0(const Var& x) {
    return Var(x.tape(), x.tape()->node1(x.index(), x.val() > 0.0 ? 1.0 : 0.0),
               max0(x.val()));
}

inline double scalar_value(double x) { return x; }
inline double scalar_value(const Var& x) { return x.val(); }

// Wraps a plain data value in the scalar type of `exemplar`: a no-op for
// double, a fresh leaf on the exemplar's tape for Var. Lets templated code
// mix parameters with embedding data.
inline double constant_like(double /*exemplar*/, double v) { return v; }
inline Var constant_like(const Var& exemplar, double v) { return Var::leaf(*exemplar.tape(), v); }

// Numerically stable log(1 + sum_i exp(x_i)) via a shift by max(0, max x_i).
// The shift is an affine function of the inputs, so gradients stay exact.
// Callers handle the empty case (log 1 = 0) themselves.
template <class S>
S log1p_sum_exp(const std::vector<S>& xs) {
    assert(!xs.empty());
    size_t arg = 0;
    for (size_t i = 1; i < xs.size(); ++i) {
        if (scalar_value(xs[i]) > scalar_value(xs[arg])) arg = i;
    }
    if (scalar_value(xs[arg]) <= 0.0) {
        S s = xs[0] * 0.0;
        for (const S& x : xs) s += exp(x);
        return log(1.0 + s);
    }
    const S& m = xs[arg];
    S s = exp(-m);
    for (const S& x : xs) s += exp(x - m);
    return m + log(s);
}

template <>
inline double log1p_sum_exp<double>(const std::vector<double>& xs) {
    assert(!xs.empty());
    double m = 0.0;
    for (double x : xs) m = std::max(m, x);
    double s = std::exp(-m);
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// Softmax over a small vector; shift by the max keeps exponents bounded.
template <class S>
std::vector<S> softmax(const std::vector<S>& xs) {
    assert(!xs.empty());
    size_t arg = 0;
    for (size_t i = 1; i < xs.size(); ++i) {
        if (scalar_value(xs[i]) > scalar_value(xs[arg])) arg = i;
    }
    std::vector<S> out;
    out.reserve(xs.size());
    S denom = exp(xs[0] - xs[arg]);
    for (size_t i = 1; i < xs.size(); ++i) denom += exp(xs[i] - xs[arg]);
    for (size_t i = 0; i < xs.size(); ++i) out.push_back(exp(xs[i] - xs[arg]) / denom);
    return out;
}

}  // namespace gproto
