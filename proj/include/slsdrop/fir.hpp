#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "slsdrop/errors.hpp"

namespace slsdrop {

template <class Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = DenseMatrix<double>;
using Vector = DenseVector<double>;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// FirTaps: the spectral taps of a strictly causal FIR operator.
//
// blocks[k] weighs the input from k+1 steps in the past,
//   (F w)_t = sum_k blocks[k] * w_{t-k-1},
// so an operator of order L covers lags 1..L and (F w)_0 = 0.
// Signal sequences are stored as matrices whose column t is the sample at
// time t.
// ---------------------------------------------------------------------------
template <class Scalar>
struct FirTaps {
  std::vector<DenseMatrix<Scalar>> blocks;

  Index order() const { return static_cast<Index>(blocks.size()); }
  Index rows() const { return blocks.empty() ? 0 : blocks.front().rows(); }
  Index cols() const { return blocks.empty() ? 0 : blocks.front().cols(); }

  static FirTaps zero(Index order, Index rows, Index cols) {
    FirTaps taps;
    taps.blocks.assign(static_cast<std::size_t>(order),
                       DenseMatrix<Scalar>::Zero(rows, cols));
    return taps;
  }
};

template <class Scalar>
void check_uniform_taps(const FirTaps<Scalar>& taps, const char* name) {
  for (std::size_t k = 0; k < taps.blocks.size(); ++k) {
    if (taps.blocks[k].rows() != taps.rows() ||
        taps.blocks[k].cols() != taps.cols()) {
      throw DimensionError(std::string(name) + " tap " + std::to_string(k + 1) +
                           " is " + std::to_string(taps.blocks[k].rows()) + "x" +
                           std::to_string(taps.blocks[k].cols()) +
                           ", expected " + std::to_string(taps.rows()) + "x" +
                           std::to_string(taps.cols()));
    }
  }
}

template <class Scalar>
FirTaps<Scalar> scaled(const FirTaps<Scalar>& taps, Scalar factor) {
  FirTaps<Scalar> out = taps;
  for (auto& block : out.blocks) block *= factor;
  return out;
}

// Composition of two strictly causal operators: lags add, so the first tap of
// the product sits at lag 2 (tap index 1).
template <class Scalar>
FirTaps<Scalar> convolve(const FirTaps<Scalar>& a, const FirTaps<Scalar>& b) {
  check_uniform_taps(a, "convolve lhs");
  check_uniform_taps(b, "convolve rhs");
  if (a.cols() != b.rows()) {
    throw DimensionError("convolve: inner dimensions disagree (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  FirTaps<Scalar> out =
      FirTaps<Scalar>::zero(a.order() + b.order(), a.rows(), b.cols());
  for (Index i = 0; i < a.order(); ++i) {
    for (Index j = 0; j < b.order(); ++j) {
      out.blocks[static_cast<std::size_t>(i + j + 1)] +=
          a.blocks[static_cast<std::size_t>(i)] *
          b.blocks[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

// Applies the operator to a finite input sequence w (column t = sample t).
// The result has w.cols() + order() columns so the full tail is kept.
template <class Scalar>
DenseMatrix<Scalar> apply_fir(const FirTaps<Scalar>& taps,
                              const DenseMatrix<Scalar>& w) {
  check_uniform_taps(taps, "apply_fir");
  if (taps.order() > 0 && taps.cols() != w.rows()) {
    throw DimensionError("apply_fir: input sample dimension " +
                         std::to_string(w.rows()) + " does not match tap width " +
                         std::to_string(taps.cols()));
  }
  const Index out_len = w.cols() + taps.order();
  DenseMatrix<Scalar> y = DenseMatrix<Scalar>::Zero(
      taps.order() > 0 ? taps.rows() : w.rows(), out_len);
  for (Index k = 0; k < taps.order(); ++k) {
    const auto& block = taps.blocks[static_cast<std::size_t>(k)];
    for (Index t = 0; t < w.cols(); ++t) {
      y.col(t + k + 1) += block * w.col(t);
    }
  }
  return y;
}

// Same as apply_fir but the output is truncated/padded to exactly max_len
// columns. Dropping trailing columns only discards tail mass.
template <class Scalar>
DenseMatrix<Scalar> apply_fir_truncated(const FirTaps<Scalar>& taps,
                                        const DenseMatrix<Scalar>& w,
                                        Index max_len) {
  check_uniform_taps(taps, "apply_fir");
  const Index n_out = taps.order() > 0 ? taps.rows() : w.rows();
  DenseMatrix<Scalar> y = DenseMatrix<Scalar>::Zero(n_out, max_len);
  for (Index k = 0; k < taps.order(); ++k) {
    const auto& block = taps.blocks[static_cast<std::size_t>(k)];
    const Index last = std::min(w.cols(), max_len - k - 1);
    for (Index t = 0; t < last; ++t) {
      y.col(t + k + 1) += block * w.col(t);
    }
  }
  return y;
}

// Largest column absolute sum, taken over all scalar input coordinates and
// stacked across taps. For a strictly causal FIR operator this equals the
// induced l1 -> l1 norm: the worst input is a unit impulse on one coordinate.
template <class Scalar>
Scalar l1_column_norm(const FirTaps<Scalar>& taps) {
  check_uniform_taps(taps, "l1_column_norm");
  Scalar worst = Scalar(0);
  for (Index c = 0; c < taps.cols(); ++c) {
    Scalar sum = Scalar(0);
    for (const auto& block : taps.blocks) {
      sum += block.col(c).template lpNorm<1>();
    }
    worst = std::max(worst, sum);
  }
  return worst;
}

// Induced l1 -> l2 norm: the supremum of the output energy over unit-l1
// inputs, attained at a unit impulse on the worst scalar coordinate.
template <class Scalar>
Scalar norm_2to1(const FirTaps<Scalar>& taps) {
  check_uniform_taps(taps, "norm_2to1");
  Scalar worst = Scalar(0);
  for (Index c = 0; c < taps.cols(); ++c) {
    Scalar sum_sq = Scalar(0);
    for (const auto& block : taps.blocks) {
      sum_sq += block.col(c).squaredNorm();
    }
    worst = std::max(worst, std::sqrt(sum_sq));
  }
  return worst;
}

// Square root of the summed squared Frobenius norms of all taps.
template <class Scalar>
Scalar h2_norm(const FirTaps<Scalar>& taps) {
  Scalar sum_sq = Scalar(0);
  for (const auto& block : taps.blocks) sum_sq += block.squaredNorm();
  return std::sqrt(sum_sq);
}

// Evaluates sum_{k=0..terms} F^k applied to the sequence w via the Horner
// recursion y <- w + F y. With max_len >= 0 every intermediate sequence is
// truncated to that many columns (only tail mass is lost); the default keeps
// the exact support of the truncated series.
template <class Scalar>
DenseMatrix<Scalar> neumann_sum(const FirTaps<Scalar>& taps,
                                const DenseMatrix<Scalar>& w, int terms,
                                Index max_len = -1) {
  check_uniform_taps(taps, "neumann_sum");
  if (taps.order() > 0 && taps.rows() != taps.cols()) {
    throw DimensionError("neumann_sum: operator must be square, got " +
                         std::to_string(taps.rows()) + "x" +
                         std::to_string(taps.cols()));
  }
  const Index full_len = w.cols() + static_cast<Index>(terms) * taps.order();
  const Index len = max_len >= 0 ? std::min(max_len, full_len) : full_len;
  DenseMatrix<Scalar> y = DenseMatrix<Scalar>::Zero(w.rows(), len);
  const Index lead = std::min(w.cols(), len);
  y.leftCols(lead) = w.leftCols(lead);
  for (int j = 0; j < terms; ++j) {
    DenseMatrix<Scalar> fy = apply_fir_truncated(taps, y, len);
    y = fy;
    y.leftCols(lead) += w.leftCols(lead);
  }
  return y;
}

}  // namespace slsdrop
