#pragma once

// Differentiable tensor operations. Each op records itself on the tape of
// its inputs when any input requires a gradient.
//
// Broadcasting is limited to two cases: a one-element operand against any
// shape, and an operand whose shape (leading 1s dropped) equals the trailing
// dimensions of the other, e.g. a bias row [n] against an [m, n] matrix.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "unimom/diff/tape.hpp"

namespace unimom::diff {

Var matmul(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Throws DomainError when any divisor is exactly zero.
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
/// Throws DomainError for non-positive input.
Var log(const Var& a);
/// Throws DomainError for negative input. The gradient at exactly 0 is taken as 0.
Var sqrt(const Var& a);
/// Sub-gradient sign(x) with sign(0) = 0.
Var abs(const Var& a);
Var square(const Var& a);

/// Softmax over the last axis.
Var softmax(const Var& a);
/// Concatenate along the last axis; all leading dimensions must agree.
Var concat(std::span<const Var> parts);
/// Columns [begin, end) of the last axis.
Var slice(const Var& a, std::size_t begin, std::size_t end);

/// Mean of all elements (scalar result).
Var mean(const Var& a);
/// Population standard deviation of all elements, max(std, floor). Where the
/// floor binds the gradient is zero.
Var std_dev(const Var& a, double floor = 0.0);

/// [m, n] -> [m, 1] row sums.
Var row_sum(const Var& a);
/// out[i, j] = x[i, j] * s[i] for x [m, n] and s [m, 1].
Var scale_rows(const Var& x, const Var& s);

/// Row segments of an [m, n] matrix: segment d spans rows
/// [offsets[d], offsets[d + 1]). offsets.front() == 0, offsets.back() == m,
/// and every segment must be non-empty.
Var segment_mean(const Var& x, std::span<const std::size_t> offsets);
/// Per-segment, per-column population std with the same floor rule as std_dev.
Var segment_std(const Var& x, std::span<const std::size_t> offsets, double floor);

/// Elementwise f with user-supplied derivative df.
Var map(const Var& a, std::function<double(double)> f, std::function<double(double)> df);

/// Single LSTM layer unrolled over `steps` time steps with zero initial state.
///
/// x is step-major: rows [t*R, (t+1)*R) hold step t for R independent
/// sequences. wx is [in, 4H], wh is [H, 4H] and bias is [4H] with gate blocks
/// ordered input, forget, cell, output. Returns the hidden state of every step
/// ([steps*R, H]) or only the last one ([R, H]).
Var lstm_sequence(const Var& x, const Var& wx, const Var& wh, const Var& bias, std::size_t steps,
                  bool return_sequence);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

}  // namespace unimom::diff
