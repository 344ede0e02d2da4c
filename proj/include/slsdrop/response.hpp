#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "slsdrop/fir.hpp"
#include "slsdrop/system_model.hpp"

namespace slsdrop {

// ---------------------------------------------------------------------------
// Closed-loop FIR responses. Spectral index k = 1..T is stored at vector
// index k-1. phi_x[k] maps the disturbance injected k steps ago to the
// current state; phi_x at spectral index 1 is pinned to the identity so the
// achievability residual stays strictly causal.
// ---------------------------------------------------------------------------

// Full system response pair (Phi_x, Phi_u), each tap n x n resp. p x n.
struct FirResponse {
  int horizon = 0;
  std::vector<Matrix> phi_x;
  std::vector<Matrix> phi_u;
};

// One subsystem's block column of the response. Rows outside `support`
// (a sorted set of subsystem indices, always containing the owner) are
// identically zero.
struct ColumnResponse {
  int owner = 0;
  int horizon = 0;
  std::vector<Matrix> phi_x;  // each state_dim x width
  std::vector<Matrix> phi_u;  // each input_dim x width
  std::vector<int> support;

  Index width() const { return phi_x.empty() ? 0 : phi_x.front().cols(); }
};

// Achievability defect of a column: block k (spectral index k = 1..T) is
//   delta[k] = phi_x[k+1] - A phi_x[k] - B phi_u[k],
// with phi_x[T+1] taken as zero.
struct ResidualColumn {
  int owner = 0;
  std::vector<Matrix> blocks;  // each state_dim x width
};

inline void validate_fir_response(const FirResponse& resp) {
  if (resp.horizon < 1) {
    throw DimensionError("FirResponse: horizon must be >= 1");
  }
  if (static_cast<int>(resp.phi_x.size()) != resp.horizon ||
      static_cast<int>(resp.phi_u.size()) != resp.horizon) {
    throw DimensionError("FirResponse: expected " +
                         std::to_string(resp.horizon) +
                         " taps in phi_x and phi_u");
  }
  const Index n = resp.phi_x.front().rows();
  if (resp.phi_x.front() != Matrix::Identity(n, n)) {
    throw DimensionError("FirResponse: phi_x at spectral index 1 must be the "
                         "identity");
  }
}

inline void validate_column(const ColumnResponse& col, const SystemModel& sys) {
  if (col.owner < 0 || col.owner >= sys.subsystem_count()) {
    throw DimensionError("ColumnResponse: owner " + std::to_string(col.owner) +
                         " out of range");
  }
  if (col.horizon < 1 ||
      static_cast<int>(col.phi_x.size()) != col.horizon ||
      static_cast<int>(col.phi_u.size()) != col.horizon) {
    throw DimensionError("ColumnResponse: tap count does not match horizon " +
                         std::to_string(col.horizon));
  }
  const Index w = sys.state_blocks.size(col.owner);
  for (int k = 0; k < col.horizon; ++k) {
    if (col.phi_x[k].rows() != sys.state_dim() || col.phi_x[k].cols() != w) {
      throw DimensionError("ColumnResponse: phi_x[" + std::to_string(k + 1) +
                           "] is " + std::to_string(col.phi_x[k].rows()) + "x" +
                           std::to_string(col.phi_x[k].cols()) + ", expected " +
                           std::to_string(sys.state_dim()) + "x" +
                           std::to_string(w));
    }
    if (col.phi_u[k].rows() != sys.input_dim() || col.phi_u[k].cols() != w) {
      throw DimensionError("ColumnResponse: phi_u[" + std::to_string(k + 1) +
                           "] is " + std::to_string(col.phi_u[k].rows()) + "x" +
                           std::to_string(col.phi_u[k].cols()) + ", expected " +
                           std::to_string(sys.input_dim()) + "x" +
                           std::to_string(w));
    }
  }
  if (col.phi_x.front() != identity_block_column(sys, col.owner)) {
    throw DimensionError("ColumnResponse: phi_x[1] must equal the owner's "
                         "block column of the identity");
  }
  if (!std::is_sorted(col.support.begin(), col.support.end())) {
    throw DimensionError("ColumnResponse: support must be sorted");
  }
  if (!std::binary_search(col.support.begin(), col.support.end(), col.owner)) {
    throw DimensionError("ColumnResponse: support must contain the owner");
  }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline ResidualColumn achievability_residual(const ColumnResponse& col,
                                             const SystemModel& sys) {
  validate_column(col, sys);
  ResidualColumn res;
  res.owner = col.owner;
  res.blocks.resize(static_cast<std::size_t>(col.horizon));
  for (int k = 0; k < col.horizon; ++k) {
    Matrix next = (k + 1 < col.horizon)
                      ? col.phi_x[k + 1]
                      : Matrix::Zero(sys.state_dim(), col.width());
    res.blocks[k] = next - sys.A * col.phi_x[k] - sys.B * col.phi_u[k];
  }
  return res;
}

// Largest stacked absolute column sum across the owner's scalar columns.
inline double l1_column_norm(const ResidualColumn& res) {
  double worst = 0.0;
  if (res.blocks.empty()) return worst;
  for (Index c = 0; c < res.blocks.front().cols(); ++c) {
    double sum = 0.0;
    for (const auto& block : res.blocks) sum += block.col(c).lpNorm<1>();
    worst = std::max(worst, sum);
  }
  return worst;
}

// Induced l1 -> l2 norm of the weighted column [Qh phi_x; Rh phi_u]: the
// worst scalar column's stacked Euclidean norm.
inline double norm_2to1(const ColumnResponse& col, const Matrix& q_sqrt,
                        const Matrix& r_sqrt) {
  double worst = 0.0;
  for (Index c = 0; c < col.width(); ++c) {
    double sum_sq = 0.0;
    for (int k = 0; k < col.horizon; ++k) {
      sum_sq += (q_sqrt * col.phi_x[k].col(c)).squaredNorm();
      sum_sq += (r_sqrt * col.phi_u[k].col(c)).squaredNorm();
    }
    worst = std::max(worst, std::sqrt(sum_sq));
  }
  return worst;
}

// Weighted Frobenius norm over the full column block (all scalar columns).
inline double frobenius_2to1(const ColumnResponse& col, const Matrix& q_sqrt,
                             const Matrix& r_sqrt) {
  double sum_sq = 0.0;
  for (int k = 0; k < col.horizon; ++k) {
    sum_sq += (q_sqrt * col.phi_x[k]).squaredNorm();
    sum_sq += (r_sqrt * col.phi_u[k]).squaredNorm();
  }
  return std::sqrt(sum_sq);
}

// H2 norm of the weighted response stack [Qh Phi_x; Rh Phi_u].
inline double h2_norm_fir(const FirResponse& resp, const Matrix& q_sqrt,
                          const Matrix& r_sqrt) {
  double sum_sq = 0.0;
  for (int k = 0; k < resp.horizon; ++k) {
    sum_sq += (q_sqrt * resp.phi_x[k]).squaredNorm();
    sum_sq += (r_sqrt * resp.phi_u[k]).squaredNorm();
  }
  return std::sqrt(sum_sq);
}

// Zeroes every row belonging to a subsystem outside `receivers` (sorted).
// The owner must be listed, so the leading identity block survives.
inline ColumnResponse project(const ColumnResponse& col,
                              const std::vector<int>& receivers,
                              const SystemModel& sys) {
  if (!std::binary_search(receivers.begin(), receivers.end(), col.owner)) {
    throw DimensionError("project: receiver set must contain the owner " +
                         std::to_string(col.owner));
  }
  ColumnResponse out = col;
  std::vector<int> keep;
  std::set_intersection(col.support.begin(), col.support.end(),
                        receivers.begin(), receivers.end(),
                        std::back_inserter(keep));
  out.support = keep;
  for (Index j = 0; j < sys.subsystem_count(); ++j) {
    if (std::binary_search(receivers.begin(), receivers.end(),
                           static_cast<int>(j))) {
      continue;
    }
    for (int k = 0; k < col.horizon; ++k) {
      out.phi_x[k]
          .block(sys.state_blocks.start(j), 0, sys.state_blocks.size(j),
                 col.width())
          .setZero();
      out.phi_u[k]
          .block(sys.input_blocks.start(j), 0, sys.input_blocks.size(j),
                 col.width())
          .setZero();
    }
  }
  return out;
}

// Stitches one column per subsystem into the full response pair.
inline FirResponse assemble_response(const std::vector<ColumnResponse>& cols,
                                     const SystemModel& sys) {
  if (static_cast<Index>(cols.size()) != sys.subsystem_count()) {
    throw DimensionError("assemble_response: expected one column per "
                         "subsystem");
  }
  const int horizon = cols.front().horizon;
  FirResponse resp;
  resp.horizon = horizon;
  resp.phi_x.assign(horizon, Matrix::Zero(sys.state_dim(), sys.state_dim()));
  resp.phi_u.assign(horizon, Matrix::Zero(sys.input_dim(), sys.state_dim()));
  for (const auto& col : cols) {
    validate_column(col, sys);
    if (col.horizon != horizon) {
      throw DimensionError("assemble_response: column horizons disagree");
    }
    const Index start = sys.state_blocks.start(col.owner);
    for (int k = 0; k < horizon; ++k) {
      resp.phi_x[k].middleCols(start, col.width()) = col.phi_x[k];
      resp.phi_u[k].middleCols(start, col.width()) = col.phi_u[k];
    }
  }
  validate_fir_response(resp);
  return resp;
}

// Extracts subsystem i's block column from a full response.
inline ColumnResponse column_of_response(const FirResponse& resp,
                                         const SystemModel& sys, int owner) {
  ColumnResponse col;
  col.owner = owner;
  col.horizon = resp.horizon;
  const Index start = sys.state_blocks.start(owner);
  const Index w = sys.state_blocks.size(owner);
  for (int k = 0; k < resp.horizon; ++k) {
    col.phi_x.push_back(resp.phi_x[k].middleCols(start, w));
    col.phi_u.push_back(resp.phi_u[k].middleCols(start, w));
  }
  col.support.resize(static_cast<std::size_t>(sys.subsystem_count()));
  for (std::size_t j = 0; j < col.support.size(); ++j) {
    col.support[j] = static_cast<int>(j);
  }
  return col;
}

// Places per-subsystem residual columns side by side into square FIR taps.
inline FirTaps<double> assemble_residual_taps(
    const std::vector<ResidualColumn>& residuals, const SystemModel& sys) {
  if (static_cast<Index>(residuals.size()) != sys.subsystem_count()) {
    throw DimensionError("assemble_residual_taps: expected one residual "
                         "column per subsystem");
  }
  std::size_t order = 0;
  for (const auto& res : residuals) {
    order = std::max(order, res.blocks.size());
  }
  FirTaps<double> taps = FirTaps<double>::zero(
      static_cast<Index>(order), sys.state_dim(), sys.state_dim());
  for (const auto& res : residuals) {
    const Index start = sys.state_blocks.start(res.owner);
    for (std::size_t k = 0; k < res.blocks.size(); ++k) {
      if (res.blocks[k].rows() != sys.state_dim()) {
        throw DimensionError("assemble_residual_taps: residual block of "
                             "subsystem " +
                             std::to_string(res.owner) + " has " +
                             std::to_string(res.blocks[k].rows()) +
                             " rows, expected " +
                             std::to_string(sys.state_dim()));
      }
      taps.blocks[k].middleCols(start, res.blocks[k].cols()) = res.blocks[k];
    }
  }
  return taps;
}

// Assembled l1 norm: the maximum over subsystems of the per-column norms.
inline double l1_column_norm(const std::vector<ResidualColumn>& residuals,
                             const SystemModel& sys) {
  return l1_column_norm(assemble_residual_taps(residuals, sys));
}

inline ResidualColumn negated(const ResidualColumn& res) {
  ResidualColumn out = res;
  for (auto& block : out.blocks) block = -block;
  return out;
}

// Truncated Neumann sum sum_{k=0..terms} Delta^k applied to a disturbance
// sequence. Refuses to run when the small-gain certificate fails.
inline Matrix neumann_apply(const std::vector<ResidualColumn>& residuals,
                            const SystemModel& sys, const Matrix& w, int terms,
                            Index max_len = -1) {
  FirTaps<double> delta = assemble_residual_taps(residuals, sys);
  const double norm = l1_column_norm(delta);
  if (norm >= 1.0) {
    throw CertificationError(
        "neumann_apply: residual l1 norm " + std::to_string(norm) +
        " is not < 1; the Neumann series is not certified to converge");
  }
  return neumann_sum(delta, w, terms, max_len);
}

}  // namespace slsdrop
