#include "slsdrop/solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "slsdrop/errors.hpp"

namespace slsdrop {

namespace {

constexpr double kRelaxation = 1.6;  // over-relaxation factor
constexpr int kRhoInterval = 50;     // penalty rebalancing period

// Threshold for projecting a vector with the given sorted |entries| onto the
// l1 ball of radius `radius`; 0 when the vector is already inside.
double l1_projection_threshold(const std::vector<double>& sorted_abs,
                               const std::vector<double>& prefix,
                               double radius) {
  const std::size_t d = sorted_abs.size();
  if (d == 0 || prefix.back() <= radius) return 0.0;
  if (radius <= 0.0) return sorted_abs.front();  // project onto the origin
  double threshold = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double candidate =
        (prefix[k] - radius) / static_cast<double>(k + 1);
    if (sorted_abs[k] > candidate) {
      threshold = candidate;
    } else {
      break;
    }
  }
  return threshold;
}

void sorted_abs_and_prefix(const Eigen::Ref<const Vector>& v,
                           std::vector<double>& sorted_abs,
                           std::vector<double>& prefix) {
  sorted_abs.resize(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    sorted_abs[static_cast<std::size_t>(i)] = std::abs(v[i]);
  }
  std::sort(sorted_abs.begin(), sorted_abs.end(), std::greater<double>());
  prefix.resize(sorted_abs.size());
  double run = 0.0;
  for (std::size_t i = 0; i < sorted_abs.size(); ++i) {
    run += sorted_abs[i];
    prefix[i] = run;
  }
}

// Projects every column of V onto the l1 ball of radius `radius`, in place.
void project_columns_l1(Matrix& V, double radius) {
  std::vector<double> sorted_abs, prefix;
  for (Index c = 0; c < V.cols(); ++c) {
    if (V.col(c).lpNorm<1>() <= radius) continue;
    sorted_abs_and_prefix(V.col(c), sorted_abs, prefix);
    const double tau = l1_projection_threshold(sorted_abs, prefix, radius);
    for (Index r = 0; r < V.rows(); ++r) {
      const double mag = std::abs(V(r, c)) - tau;
      V(r, c) = mag > 0.0 ? (V(r, c) > 0.0 ? mag : -mag) : 0.0;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem geometry and the pattern-projected linear maps
// ---------------------------------------------------------------------------

struct ColumnAdmm::Impl {
  // Static problem data.
  SystemModel sys;
  int owner = 0;
  int horizon = 0;
  Matrix q_sqrt, r_sqrt;
  std::vector<int> support;
  SolverOptions opts;

  Index n = 0, p = 0, w = 0;
  std::vector<Index> rows_x, rows_u;  // global indices of free rows
  Index nx = 0, nu = 0, mz = 0, x_total = 0;

  struct Mask {
    std::vector<int> receivers;
    // (local free-row index, global row) pairs that survive the projection
    std::vector<std::pair<Index, Index>> active_x, active_u;
  };
  std::vector<Mask> masks;
  std::vector<std::pair<int, double>> obj_splits;  // (mask index, weight)
  std::vector<int> con_splits;                     // mask index

  Matrix e_owner;  // identity block column of the owner
  Matrix c_obj;    // constant part of every objective split
  Matrix c_con;    // constant part of every constraint split
  double prox_sigma = 0.0;
  double feas_sigma = 0.0;
  Eigen::LDLT<Matrix> h_main;
  std::optional<Eigen::LDLT<Matrix>> h_feas;

  // Warm state reused across lambda values.
  bool warm = false;
  Matrix z;
  std::vector<Matrix> y_split, u_split;  // objective splits + scaled duals
  std::vector<Matrix> r_split, v_split;  // constraint splits + scaled duals
  double rho = 1.0;

  // min_residual cache
  bool feas_done = false;
  double feas_value = 0.0;
  std::vector<double> feas_by_pattern;

  // ---- setup -------------------------------------------------------------

  explicit Impl(const ColumnProblem& prob) {
    if (prob.system == nullptr) {
      throw DimensionError("ColumnProblem: system must be set");
    }
    sys = *prob.system;
    sys.validate();
    owner = prob.owner;
    horizon = prob.horizon;
    q_sqrt = prob.q_sqrt;
    r_sqrt = prob.r_sqrt;
    support = prob.support;
    opts = prob.options;
    n = sys.state_dim();
    p = sys.input_dim();
    if (owner < 0 || owner >= sys.subsystem_count()) {
      throw DimensionError("ColumnProblem: owner out of range");
    }
    if (horizon < 1) {
      throw DimensionError("ColumnProblem: horizon must be >= 1");
    }
    if (q_sqrt.rows() != n || q_sqrt.cols() != n) {
      throw DimensionError("ColumnProblem: q_sqrt must be state_dim square");
    }
    if (r_sqrt.rows() != p || r_sqrt.cols() != p) {
      throw DimensionError("ColumnProblem: r_sqrt must be input_dim square");
    }
    if (prob.objective_family.empty() || prob.constraint_family.empty()) {
      throw DimensionError(
          "ColumnProblem: objective and constraint families must be nonempty");
    }
    if (!std::is_sorted(support.begin(), support.end()) ||
        !std::binary_search(support.begin(), support.end(), owner)) {
      throw DimensionError(
          "ColumnProblem: support must be sorted and contain the owner");
    }
    w = sys.state_blocks.size(owner);

    for (int s : support) {
      for (Index r = 0; r < sys.state_blocks.size(s); ++r) {
        rows_x.push_back(sys.state_blocks.start(s) + r);
      }
      for (Index r = 0; r < sys.input_blocks.size(s); ++r) {
        rows_u.push_back(sys.input_blocks.start(s) + r);
      }
    }
    nx = static_cast<Index>(rows_x.size());
    nu = static_cast<Index>(rows_u.size());
    x_total = static_cast<Index>(horizon - 1) * nx;
    mz = x_total + static_cast<Index>(horizon) * nu;

    for (const auto& pw : prob.objective_family) {
      if (pw.probability <= 0.0) {
        throw DimensionError("ColumnProblem: objective weights must be > 0");
      }
      obj_splits.emplace_back(mask_index(pw.receivers), pw.probability);
    }
    for (const auto& set : prob.constraint_family) {
      con_splits.push_back(mask_index(set));
    }

    e_owner = identity_block_column(sys, owner);
    c_obj = Matrix::Zero(static_cast<Index>(horizon) * (n + p), w);
    c_obj.topRows(n) = q_sqrt * e_owner;
    c_con = Matrix::Zero(static_cast<Index>(horizon) * n, w);
    c_con.topRows(n) = -sys.A * e_owner;

    build_main_factor();
  }

  int mask_index(const std::vector<int>& receivers) {
    if (!std::is_sorted(receivers.begin(), receivers.end()) ||
        !std::binary_search(receivers.begin(), receivers.end(), owner)) {
      throw DimensionError(
          "ColumnProblem: every pattern must be sorted and contain the owner");
    }
    for (std::size_t m = 0; m < masks.size(); ++m) {
      if (masks[m].receivers == receivers) return static_cast<int>(m);
    }
    Mask mask;
    mask.receivers = receivers;
    for (Index local = 0; local < nx; ++local) {
      const int owner_of = block_of(sys.state_blocks, rows_x[local]);
      if (std::binary_search(receivers.begin(), receivers.end(), owner_of)) {
        mask.active_x.emplace_back(local, rows_x[local]);
      }
    }
    for (Index local = 0; local < nu; ++local) {
      const int owner_of = block_of(sys.input_blocks, rows_u[local]);
      if (std::binary_search(receivers.begin(), receivers.end(), owner_of)) {
        mask.active_u.emplace_back(local, rows_u[local]);
      }
    }
    masks.push_back(std::move(mask));
    return static_cast<int>(masks.size()) - 1;
  }

  static int block_of(const BlockPartition& part, Index flat) {
    for (Index i = 0; i < part.count(); ++i) {
      if (flat >= part.start(i) && flat < part.start(i) + part.size(i)) {
        return static_cast<int>(i);
      }
    }
    throw DimensionError("block_of: index outside partition");
  }

  // ---- pattern-projected linear maps (constants excluded) ------------------

  Index x_row(int spectral, Index local) const {
    return static_cast<Index>(spectral - 2) * nx + local;
  }
  Index u_row(int spectral, Index local) const {
    return x_total + static_cast<Index>(spectral - 1) * nu + local;
  }

  // Masked scatter of the decision matrix into a dense spectral block.
  Matrix masked_x(const Matrix& zm, const Mask& mask, int spectral) const {
    Matrix full = Matrix::Zero(n, zm.cols());
    for (const auto& [local, global] : mask.active_x) {
      full.row(global) = zm.row(x_row(spectral, local));
    }
    return full;
  }
  Matrix masked_u(const Matrix& zm, const Mask& mask, int spectral) const {
    Matrix full = Matrix::Zero(p, zm.cols());
    for (const auto& [local, global] : mask.active_u) {
      full.row(global) = zm.row(u_row(spectral, local));
    }
    return full;
  }

  // Weighted stacked column of the projected response (linear part).
  Matrix forward_obj(const Matrix& zm, const Mask& mask) const {
    Matrix out = Matrix::Zero(static_cast<Index>(horizon) * (n + p), zm.cols());
    for (int s = 1; s <= horizon; ++s) {
      const Index base = static_cast<Index>(s - 1) * (n + p);
      if (s >= 2) out.middleRows(base, n) = q_sqrt * masked_x(zm, mask, s);
      out.middleRows(base + n, p) = r_sqrt * masked_u(zm, mask, s);
    }
    return out;
  }

  void adjoint_obj(const Matrix& bar, const Mask& mask, Matrix& acc) const {
    for (int s = 1; s <= horizon; ++s) {
      const Index base = static_cast<Index>(s - 1) * (n + p);
      if (s >= 2) {
        const Matrix g = q_sqrt.transpose() * bar.middleRows(base, n);
        for (const auto& [local, global] : mask.active_x) {
          acc.row(x_row(s, local)) += g.row(global);
        }
      }
      const Matrix gu = r_sqrt.transpose() * bar.middleRows(base + n, p);
      for (const auto& [local, global] : mask.active_u) {
        acc.row(u_row(s, local)) += gu.row(global);
      }
    }
  }

  // Achievability residual of the projected column (linear part).
  Matrix forward_con(const Matrix& zm, const Mask& mask) const {
    Matrix out = Matrix::Zero(static_cast<Index>(horizon) * n, zm.cols());
    Matrix prev_x;  // masked X at the current spectral index (zero for s = 1)
    for (int s = 1; s <= horizon; ++s) {
      const Index base = static_cast<Index>(s - 1) * n;
      Matrix next_x = (s + 1 <= horizon) ? masked_x(zm, mask, s + 1)
                                         : Matrix::Zero(n, zm.cols());
      out.middleRows(base, n) = next_x - sys.B * masked_u(zm, mask, s);
      if (s >= 2) {
        out.middleRows(base, n) -= sys.A * prev_x;
      }
      prev_x = std::move(next_x);
    }
    return out;
  }

  void adjoint_con(const Matrix& bar, const Mask& mask, Matrix& acc) const {
    for (int s = 2; s <= horizon; ++s) {
      const Matrix f =
          bar.middleRows(static_cast<Index>(s - 2) * n, n) -
          sys.A.transpose() * bar.middleRows(static_cast<Index>(s - 1) * n, n);
      for (const auto& [local, global] : mask.active_x) {
        acc.row(x_row(s, local)) += f.row(global);
      }
    }
    for (int s = 1; s <= horizon; ++s) {
      const Matrix gu =
          -sys.B.transpose() *
          bar.middleRows(static_cast<Index>(s - 1) * n, n);
      for (const auto& [local, global] : mask.active_u) {
        acc.row(u_row(s, local)) += gu.row(global);
      }
    }
  }

  // ---- factorizations ------------------------------------------------------

  void build_main_factor() {
    Matrix h = Matrix::Zero(mz, mz);
    Matrix unit = Matrix::Zero(mz, 1);
    for (Index j = 0; j < mz; ++j) {
      unit.setZero();
      unit(j, 0) = 1.0;
      Matrix acc = Matrix::Zero(mz, 1);
      for (const auto& [m, weight] : obj_splits) {
        (void)weight;
        adjoint_obj(forward_obj(unit, masks[static_cast<std::size_t>(m)]),
                    masks[static_cast<std::size_t>(m)], acc);
      }
      for (int m : con_splits) {
        adjoint_con(forward_con(unit, masks[static_cast<std::size_t>(m)]),
                    masks[static_cast<std::size_t>(m)], acc);
      }
      h.col(j) = acc;
    }
    h = 0.5 * (h + h.transpose());
    prox_sigma = 1e-10 * (1.0 + h.trace() / static_cast<double>(mz));
    h.diagonal().array() += prox_sigma;
    h_main.compute(h);
    if (h_main.info() != Eigen::Success) {
      throw SolverError("column solver: failed to factor the normal matrix");
    }
  }

  void build_feas_factor() {
    Matrix h = Matrix::Zero(mz, mz);
    Matrix unit = Matrix::Zero(mz, 1);
    for (Index j = 0; j < mz; ++j) {
      unit.setZero();
      unit(j, 0) = 1.0;
      Matrix acc = Matrix::Zero(mz, 1);
      for (int m : con_splits) {
        adjoint_con(forward_con(unit, masks[static_cast<std::size_t>(m)]),
                    masks[static_cast<std::size_t>(m)], acc);
      }
      h.col(j) = acc;
    }
    h = 0.5 * (h + h.transpose());
    feas_sigma = 1e-8 * (1.0 + h.trace() / static_cast<double>(mz));
    h.diagonal().array() += feas_sigma;
    h_feas.emplace();
    h_feas->compute(h);
    if (h_feas->info() != Eigen::Success) {
      throw SolverError("column solver: failed to factor the feasibility "
                        "normal matrix");
    }
  }

  // ---- column extraction and true measures --------------------------------

  ColumnResponse extract_column(const Matrix& zm) const {
    ColumnResponse col;
    col.owner = owner;
    col.horizon = horizon;
    col.support = support;
    col.phi_x.resize(static_cast<std::size_t>(horizon));
    col.phi_u.resize(static_cast<std::size_t>(horizon));
    col.phi_x[0] = e_owner;
    for (int s = 2; s <= horizon; ++s) {
      Matrix full = Matrix::Zero(n, w);
      for (Index local = 0; local < nx; ++local) {
        full.row(rows_x[local]) = zm.row(x_row(s, local));
      }
      col.phi_x[static_cast<std::size_t>(s - 1)] = std::move(full);
    }
    for (int s = 1; s <= horizon; ++s) {
      Matrix full = Matrix::Zero(p, w);
      for (Index local = 0; local < nu; ++local) {
        full.row(rows_u[local]) = zm.row(u_row(s, local));
      }
      col.phi_u[static_cast<std::size_t>(s - 1)] = std::move(full);
    }
    return col;
  }

  // Residual of each constraint-family projection, recomputed from scratch.
  std::vector<double> true_residuals(const ColumnResponse& col) const {
    std::vector<double> out;
    out.reserve(con_splits.size());
    for (int m : con_splits) {
      const auto& mask = masks[static_cast<std::size_t>(m)];
      out.push_back(l1_column_norm(
          achievability_residual(project(col, mask.receivers, sys), sys)));
    }
    return out;
  }

  double true_objective(const ColumnResponse& col) const {
    double total = 0.0;
    for (const auto& [m, weight] : obj_splits) {
      const auto& mask = masks[static_cast<std::size_t>(m)];
      total += weight *
               frobenius_2to1(project(col, mask.receivers, sys), q_sqrt, r_sqrt);
    }
    return total;
  }

  // ---- main ADMM loop ------------------------------------------------------

  void cold_start(double lambda) {
    z = Matrix::Zero(mz, w);
    y_split.assign(obj_splits.size(), c_obj);
    u_split.assign(obj_splits.size(),
                   Matrix::Zero(static_cast<Index>(horizon) * (n + p), w));
    r_split.clear();
    v_split.clear();
    for (std::size_t j = 0; j < con_splits.size(); ++j) {
      Matrix r0 = c_con;
      project_columns_l1(r0, lambda);
      r_split.push_back(std::move(r0));
      v_split.push_back(Matrix::Zero(static_cast<Index>(horizon) * n, w));
    }
    rho = opts.rho;
    warm = true;
  }

  ColumnSolution run(double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
      throw DimensionError("solve_column: lambda must lie in (0, 1)");
    }
    if (!warm) cold_start(lambda);

    const Index split_rows =
        static_cast<Index>(obj_splits.size()) * static_cast<Index>(horizon) *
            (n + p) +
        static_cast<Index>(con_splits.size()) * static_cast<Index>(horizon) * n;
    const double sqrt_split_dim =
        std::sqrt(static_cast<double>(split_rows * w));
    const double sqrt_var_dim = std::sqrt(static_cast<double>(mz * w));

    double eps_scale = 1.0;
    int iter = 0;
    bool converged = false;
    double pri = 0.0, dual = 0.0;

    SolveReport report;
    ColumnResponse col;

    while (iter < opts.max_iterations) {
      ++iter;

      // z-update (the factor is lambda- and rho-independent)
      Matrix rhs = prox_sigma * z;
      for (std::size_t j = 0; j < obj_splits.size(); ++j) {
        const auto& mask =
            masks[static_cast<std::size_t>(obj_splits[j].first)];
        adjoint_obj(y_split[j] - c_obj - u_split[j], mask, rhs);
      }
      for (std::size_t j = 0; j < con_splits.size(); ++j) {
        const auto& mask = masks[static_cast<std::size_t>(con_splits[j])];
        adjoint_con(r_split[j] - c_con - v_split[j], mask, rhs);
      }
      z = h_main.solve(rhs);

      // split updates with relaxation, tracking residual ingredients
      double pri_sq = 0.0, axis_sq = 0.0, split_sq = 0.0;
      Matrix dual_vec = Matrix::Zero(mz, w);
      for (std::size_t j = 0; j < obj_splits.size(); ++j) {
        const auto& mask =
            masks[static_cast<std::size_t>(obj_splits[j].first)];
        const Matrix ax = forward_obj(z, mask) + c_obj;
        const Matrix relaxed =
            kRelaxation * ax + (1.0 - kRelaxation) * y_split[j];
        const Matrix v = relaxed + u_split[j];
        const double threshold = obj_splits[j].second / rho;
        const double norm = v.norm();
        const Matrix y_new =
            norm > threshold ? ((1.0 - threshold / norm) * v).eval()
                             : Matrix::Zero(v.rows(), v.cols()).eval();
        u_split[j] += relaxed - y_new;
        pri_sq += (ax - y_new).squaredNorm();
        axis_sq += ax.squaredNorm();
        split_sq += y_new.squaredNorm();
        adjoint_obj(y_new - y_split[j], mask, dual_vec);
        y_split[j] = y_new;
      }
      for (std::size_t j = 0; j < con_splits.size(); ++j) {
        const auto& mask = masks[static_cast<std::size_t>(con_splits[j])];
        const Matrix ax = forward_con(z, mask) + c_con;
        const Matrix relaxed =
            kRelaxation * ax + (1.0 - kRelaxation) * r_split[j];
        Matrix r_new = relaxed + v_split[j];
        project_columns_l1(r_new, lambda);
        v_split[j] += relaxed - r_new;
        pri_sq += (ax - r_new).squaredNorm();
        axis_sq += ax.squaredNorm();
        split_sq += r_new.squaredNorm();
        adjoint_con(r_new - r_split[j], mask, dual_vec);
        r_split[j] = r_new;
      }
      pri = std::sqrt(pri_sq);
      dual = rho * dual_vec.norm();

      // stopping thresholds
      Matrix dual_acc = Matrix::Zero(mz, w);
      for (std::size_t j = 0; j < obj_splits.size(); ++j) {
        adjoint_obj(u_split[j],
                    masks[static_cast<std::size_t>(obj_splits[j].first)],
                    dual_acc);
      }
      for (std::size_t j = 0; j < con_splits.size(); ++j) {
        adjoint_con(v_split[j],
                    masks[static_cast<std::size_t>(con_splits[j])], dual_acc);
      }
      const double eps_abs = opts.eps_abs * eps_scale;
      const double eps_rel = opts.eps_rel * eps_scale;
      const double eps_pri =
          sqrt_split_dim * eps_abs +
          eps_rel * std::max(std::sqrt(axis_sq), std::sqrt(split_sq));
      const double eps_dual =
          sqrt_var_dim * eps_abs + eps_rel * rho * dual_acc.norm();

      if (pri <= eps_pri && dual <= eps_dual) {
        // candidate solution; accept only if the certificate passes
        col = extract_column(z);
        report = assess(col, lambda, iter, pri, dual);
        if (report.kkt_residual() <= opts.kkt_tolerance) {
          converged = true;
          break;
        }
        if (eps_scale <= 1e-6) {  // tightened as far as is productive
          converged = true;
          break;
        }
        eps_scale *= 0.1;
        continue;
      }

      if (opts.adaptive_rho && iter % kRhoInterval == 0) {
        const double pri_ratio = pri / std::max(eps_pri, 1e-300);
        const double dual_ratio = dual / std::max(eps_dual, 1e-300);
        if (pri_ratio > 10.0 * dual_ratio && rho < 1e6) {
          rho *= 2.0;
          for (auto& u : u_split) u *= 0.5;
          for (auto& v : v_split) v *= 0.5;
        } else if (dual_ratio > 10.0 * pri_ratio && rho > 1e-6) {
          rho *= 0.5;
          for (auto& u : u_split) u *= 2.0;
          for (auto& v : v_split) v *= 2.0;
        }
      }
    }

    if (!converged) {
      col = extract_column(z);
      report = assess(col, lambda, iter, pri, dual);
    }
    const double feas_slack = lambda * (1.0 + 1e-6) + 1e-9;
    if (report.achieved_lambda > feas_slack) {
      report.status = SolveStatus::kInfeasible;
    } else if (converged) {
      report.status = SolveStatus::kConverged;
    } else {
      report.status = SolveStatus::kIterationLimit;
    }
    return ColumnSolution{std::move(col), report};
  }

  SolveReport assess(const ColumnResponse& col, double lambda, int iter,
                     double pri, double dual) const {
    SolveReport report;
    report.iterations = iter;
    report.primal_residual = pri;
    report.dual_residual = dual;
    report.objective = true_objective(col);
    const auto residuals = true_residuals(col);
    report.achieved_lambda =
        *std::max_element(residuals.begin(), residuals.end());

    // stationarity: the adjoint images of all unscaled duals must cancel
    Matrix grad = Matrix::Zero(mz, w);
    double dual_scale = 1.0;
    for (std::size_t j = 0; j < obj_splits.size(); ++j) {
      const Matrix mu = rho * u_split[j];
      adjoint_obj(mu, masks[static_cast<std::size_t>(obj_splits[j].first)],
                  grad);
      dual_scale = std::max(dual_scale, mu.lpNorm<Eigen::Infinity>());
    }
    for (std::size_t j = 0; j < con_splits.size(); ++j) {
      const Matrix nu_d = rho * v_split[j];
      adjoint_con(nu_d, masks[static_cast<std::size_t>(con_splits[j])], grad);
      dual_scale = std::max(dual_scale, nu_d.lpNorm<Eigen::Infinity>());
    }
    report.kkt_stationarity = grad.lpNorm<Eigen::Infinity>() / dual_scale;

    // cone membership and complementarity of the duals
    double gap = 0.0;
    for (std::size_t j = 0; j < obj_splits.size(); ++j) {
      const Matrix mu = rho * u_split[j];
      const double weight = obj_splits[j].second;
      gap = std::max(gap, (mu.norm() - weight) / weight);
      const double lin = weight * y_split[j].norm() -
                         (mu.array() * y_split[j].array()).sum();
      gap = std::max(gap, lin / std::max(1.0, weight * y_split[j].norm()));
    }
    for (std::size_t j = 0; j < con_splits.size(); ++j) {
      const Matrix nu_d = rho * v_split[j];
      for (Index c = 0; c < w; ++c) {
        const double support_fn =
            lambda * nu_d.col(c).lpNorm<Eigen::Infinity>();
        const double attained = nu_d.col(c).dot(r_split[j].col(c));
        gap = std::max(gap,
                       (support_fn - attained) / std::max(1.0, support_fn));
      }
    }
    report.kkt_cone_gap = gap;
    report.kkt_feasibility =
        std::max(0.0, report.achieved_lambda - lambda) / lambda;
    return report;
  }

  // ---- feasibility (min-max residual) solve --------------------------------

  // prox of t * max_g l1(group g) over the stacked constraint splits
  void prox_max_l1(std::vector<Matrix>& groups, double t) const {
    struct ColData {
      std::vector<double> sorted_abs, prefix;
      Matrix* owner;
      Index col;
    };
    std::vector<ColData> cols;
    double max_l1 = 0.0;
    for (auto& g : groups) {
      for (Index c = 0; c < g.cols(); ++c) {
        ColData data;
        data.owner = &g;
        data.col = c;
        sorted_abs_and_prefix(g.col(c), data.sorted_abs, data.prefix);
        if (!data.prefix.empty()) max_l1 = std::max(max_l1, data.prefix.back());
        cols.push_back(std::move(data));
      }
    }
    if (max_l1 == 0.0) return;

    auto pressure = [&](double m) {
      double total = 0.0;
      for (const auto& data : cols) {
        total += l1_projection_threshold(data.sorted_abs, data.prefix, m);
      }
      return total;
    };

    double m_star;
    if (pressure(0.0) <= t) {
      m_star = 0.0;
    } else {
      double lo = 0.0, hi = max_l1;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (pressure(mid) > t) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      m_star = 0.5 * (lo + hi);
    }
    for (auto& data : cols) {
      auto col = data.owner->col(data.col);
      const double tau =
          l1_projection_threshold(data.sorted_abs, data.prefix, m_star);
      if (col.lpNorm<1>() <= m_star) continue;
      for (Index r = 0; r < col.size(); ++r) {
        const double mag = std::abs(col[r]) - tau;
        col[r] = mag > 0.0 ? (col[r] > 0.0 ? mag : -mag) : 0.0;
      }
    }
  }

  void run_feasibility() {
    if (!h_feas) build_feas_factor();
    const double sigma = feas_sigma;
    Matrix zf = Matrix::Zero(mz, w);
    std::vector<Matrix> rf(con_splits.size()), vf(con_splits.size());
    for (std::size_t j = 0; j < con_splits.size(); ++j) {
      rf[j] = c_con;
      vf[j] = Matrix::Zero(static_cast<Index>(horizon) * n, w);
    }
    double rho_f = 1.0;
    const int cap = std::min(opts.max_iterations, 50000);
    const double eps = std::max(opts.eps_abs, 1e-10);
    const Index split_rows = static_cast<Index>(con_splits.size()) *
                             static_cast<Index>(horizon) * n;
    const double sqrt_split_dim =
        std::sqrt(static_cast<double>(split_rows * w));

    for (int iter = 0; iter < cap; ++iter) {
      Matrix rhs = sigma * zf;
      for (std::size_t j = 0; j < con_splits.size(); ++j) {
        adjoint_con(rf[j] - c_con - vf[j],
                    masks[static_cast<std::size_t>(con_splits[j])], rhs);
      }
      zf = h_feas->solve(rhs);

      std::vector<Matrix> prox_in(con_splits.size());
      std::vector<Matrix> ax(con_splits.size());
      for (std::size_t j = 0; j < con_splits.size(); ++j) {
        ax[j] = forward_con(zf, masks[static_cast<std::size_t>(con_splits[j])]) +
                c_con;
        const Matrix relaxed = kRelaxation * ax[j] +
                               (1.0 - kRelaxation) * rf[j];
        prox_in[j] = relaxed + vf[j];
      }
      std::vector<Matrix> r_new = prox_in;
      prox_max_l1(r_new, 1.0 / rho_f);

      double pri_sq = 0.0, axn = 0.0, rn = 0.0;
      Matrix dual_vec = Matrix::Zero(mz, w);
      for (std::size_t j = 0; j < con_splits.size(); ++j) {
        const Matrix relaxed = kRelaxation * ax[j] +
                               (1.0 - kRelaxation) * rf[j];
        vf[j] += relaxed - r_new[j];
        pri_sq += (ax[j] - r_new[j]).squaredNorm();
        axn += ax[j].squaredNorm();
        rn += r_new[j].squaredNorm();
        adjoint_con(r_new[j] - rf[j],
                    masks[static_cast<std::size_t>(con_splits[j])], dual_vec);
        rf[j] = r_new[j];
      }
      const double pri_f = std::sqrt(pri_sq);
      const double dual_f = rho_f * dual_vec.norm();
      const double eps_pri =
          sqrt_split_dim * eps +
          1e-8 * std::max(std::sqrt(axn), std::sqrt(rn));
      const double eps_dual = std::sqrt(static_cast<double>(mz * w)) * eps +
                              1e-8 * rho_f;
      if (pri_f <= eps_pri && dual_f <= eps_dual) break;
      if ((iter + 1) % kRhoInterval == 0) {
        if (pri_f > 10.0 * dual_f && rho_f < 1e6) {
          rho_f *= 2.0;
          for (auto& v : vf) v *= 0.5;
        } else if (dual_f > 10.0 * pri_f && rho_f > 1e-6) {
          rho_f *= 0.5;
          for (auto& v : vf) v *= 2.0;
        }
      }
    }

    const ColumnResponse col = extract_column(zf);
    feas_by_pattern = true_residuals(col);
    feas_value =
        *std::max_element(feas_by_pattern.begin(), feas_by_pattern.end());
    feas_done = true;
  }
};

// ---------------------------------------------------------------------------
// Public interface
// ---------------------------------------------------------------------------

ColumnAdmm::ColumnAdmm(const ColumnProblem& problem)
    : impl_(std::make_unique<Impl>(problem)) {}
ColumnAdmm::~ColumnAdmm() = default;
ColumnAdmm::ColumnAdmm(ColumnAdmm&&) noexcept = default;
ColumnAdmm& ColumnAdmm::operator=(ColumnAdmm&&) noexcept = default;

ColumnSolution ColumnAdmm::solve(double lambda) { return impl_->run(lambda); }

double ColumnAdmm::min_residual() {
  if (!impl_->feas_done) impl_->run_feasibility();
  return impl_->feas_value;
}

const std::vector<double>& ColumnAdmm::min_residual_by_pattern() {
  if (!impl_->feas_done) impl_->run_feasibility();
  return impl_->feas_by_pattern;
}

ColumnSolution solve_column(const ColumnProblem& problem) {
  ColumnAdmm solver(problem);
  return solver.solve(problem.lambda);
}

double min_achievable_residual(const ColumnProblem& problem) {
  ColumnAdmm solver(problem);
  return solver.min_residual();
}

}  // namespace slsdrop
