#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "slsdrop/response.hpp"
#include "slsdrop/rng.hpp"
#include "slsdrop/system_model.hpp"

using namespace slsdrop;

namespace {

SystemModel scalar_chain(int count, double coupling, SeedStream& stream) {
  SystemModel sys;
  sys.A = Matrix::Zero(count, count);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < count; ++j) {
      if (std::abs(i - j) <= 1) {
        sys.A(i, j) = coupling * (0.5 + 0.5 * stream.next_unit());
      }
    }
  }
  sys.B = Matrix::Identity(count, count);
  for (int i = 0; i < count; ++i) {
    sys.B(i, i) += 0.2 * stream.next_gaussian();
  }
  std::vector<Index> ones(static_cast<std::size_t>(count), 1);
  sys.state_blocks = BlockPartition::from_sizes(ones);
  sys.input_blocks = BlockPartition::from_sizes(ones);
  sys.validate();
  return sys;
}

// Exactly achievable column: run the spectral recursion forward and cancel
// the final tap through the (invertible) input matrix.
ColumnResponse achievable_column(const SystemModel& sys, int owner, int horizon,
                                 SeedStream& stream) {
  ColumnResponse col;
  col.owner = owner;
  col.horizon = horizon;
  for (Index j = 0; j < sys.subsystem_count(); ++j) {
    col.support.push_back(static_cast<int>(j));
  }
  col.phi_x.resize(static_cast<std::size_t>(horizon));
  col.phi_u.resize(static_cast<std::size_t>(horizon));
  col.phi_x[0] = identity_block_column(sys, owner);
  for (int k = 0; k + 1 < horizon; ++k) {
    Matrix u(sys.input_dim(), col.phi_x[0].cols());
    for (Index r = 0; r < u.rows(); ++r) {
      for (Index c = 0; c < u.cols(); ++c) u(r, c) = 0.3 * stream.next_gaussian();
    }
    col.phi_u[static_cast<std::size_t>(k)] = u;
    col.phi_x[static_cast<std::size_t>(k + 1)] =
        sys.A * col.phi_x[static_cast<std::size_t>(k)] + sys.B * u;
  }
  col.phi_u[static_cast<std::size_t>(horizon - 1)] =
      sys.B.partialPivLu().solve(-sys.A *
                                 col.phi_x[static_cast<std::size_t>(horizon - 1)]);
  return col;
}

}  // namespace

TEST_CASE("achievability residual vanishes on an exactly achievable column") {
  SeedStream stream(5);
  const SystemModel sys = scalar_chain(4, 0.6, stream);
  const ColumnResponse col = achievable_column(sys, 1, 5, stream);
  const ResidualColumn res = achievability_residual(col, sys);
  REQUIRE(res.blocks.size() == 5);
  CHECK(l1_column_norm(res) < 1e-12);
}

TEST_CASE("achievability residual isolates the truncation tap") {
  SeedStream stream(6);
  const SystemModel sys = scalar_chain(3, 0.5, stream);
  ColumnResponse col = achievable_column(sys, 0, 4, stream);
  // Forget the cancelling final input: only the last residual tap changes.
  col.phi_u[3] = Matrix::Zero(sys.input_dim(), col.width());
  const ResidualColumn res = achievability_residual(col, sys);
  for (std::size_t k = 0; k + 1 < res.blocks.size(); ++k) {
    CHECK(res.blocks[k].cwiseAbs().maxCoeff() < 1e-12);
  }
  const Matrix expected = -sys.A * col.phi_x[3];
  CHECK((res.blocks[3] - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("residual blocks follow the defining recursion") {
  SeedStream stream(7);
  const SystemModel sys = scalar_chain(3, 0.7, stream);
  ColumnResponse col = achievable_column(sys, 2, 3, stream);
  // Perturb an interior state tap so every residual is nonzero.
  col.phi_x[1](0, 0) += 0.25;
  const ResidualColumn res = achievability_residual(col, sys);
  for (int k = 0; k < col.horizon; ++k) {
    const Matrix next = (k + 1 < col.horizon)
                            ? col.phi_x[static_cast<std::size_t>(k + 1)]
                            : Matrix::Zero(sys.state_dim(), col.width());
    const Matrix expected = next -
                            sys.A * col.phi_x[static_cast<std::size_t>(k)] -
                            sys.B * col.phi_u[static_cast<std::size_t>(k)];
    CHECK((res.blocks[static_cast<std::size_t>(k)] - expected)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("column validation spots malformed columns") {
  SeedStream stream(8);
  const SystemModel sys = scalar_chain(3, 0.5, stream);
  const ColumnResponse good = achievable_column(sys, 1, 3, stream);
  validate_column(good, sys);  // must not throw

  ColumnResponse bad_identity = good;
  bad_identity.phi_x[0](1, 0) = 0.5;
  CHECK_THROWS_AS(validate_column(bad_identity, sys), DimensionError);

  ColumnResponse bad_support = good;
  bad_support.support = {2, 0, 1};
  CHECK_THROWS_AS(validate_column(bad_support, sys), DimensionError);

  ColumnResponse no_owner = good;
  no_owner.support = {0, 2};
  CHECK_THROWS_AS(validate_column(no_owner, sys), DimensionError);

  ColumnResponse short_taps = good;
  short_taps.phi_u.pop_back();
  CHECK_THROWS_AS(validate_column(short_taps, sys), DimensionError);
}

TEST_CASE("projection zeroes exactly the non-receiver rows") {
  SeedStream stream(9);
  const SystemModel sys = scalar_chain(4, 0.6, stream);
  const ColumnResponse col = achievable_column(sys, 1, 4, stream);
  const std::vector<int> receivers = {0, 1, 2};
  const ColumnResponse cut = project(col, receivers, sys);
  CHECK(cut.support == receivers);
  for (int k = 0; k < col.horizon; ++k) {
    const std::size_t kk = static_cast<std::size_t>(k);
    CHECK(cut.phi_x[kk](3, 0) == 0.0);
    CHECK(cut.phi_u[kk](3, 0) == 0.0);
    for (int row = 0; row < 3; ++row) {
      CHECK(cut.phi_x[kk](row, 0) == col.phi_x[kk](row, 0));
      CHECK(cut.phi_u[kk](row, 0) == col.phi_u[kk](row, 0));
    }
  }
  CHECK_THROWS_AS(project(col, std::vector<int>{0, 2}, sys), DimensionError);
}

TEST_CASE("assembling columns and re-extracting them round-trips") {
  SeedStream stream(10);
  const SystemModel sys = scalar_chain(3, 0.5, stream);
  std::vector<ColumnResponse> cols;
  for (int i = 0; i < 3; ++i) {
    cols.push_back(achievable_column(sys, i, 4, stream));
  }
  const FirResponse resp = assemble_response(cols, sys);
  validate_fir_response(resp);
  for (int i = 0; i < 3; ++i) {
    const ColumnResponse back = column_of_response(resp, sys, i);
    for (int k = 0; k < 4; ++k) {
      const std::size_t kk = static_cast<std::size_t>(k);
      CHECK((back.phi_x[kk] - cols[static_cast<std::size_t>(i)].phi_x[kk])
                .cwiseAbs()
                .maxCoeff() == 0.0);
      CHECK((back.phi_u[kk] - cols[static_cast<std::size_t>(i)].phi_u[kk])
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("assembled residual norm is the worst per-column norm") {
  SeedStream stream(11);
  const SystemModel sys = scalar_chain(3, 0.6, stream);
  std::vector<ResidualColumn> residuals;
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    ColumnResponse col = achievable_column(sys, i, 3, stream);
    col.phi_x[1](i, 0) += 0.1 * (i + 1);  // distinct defects per column
    residuals.push_back(achievability_residual(col, sys));
    worst = std::max(worst, l1_column_norm(residuals.back()));
  }
  CHECK(l1_column_norm(residuals, sys) == doctest::Approx(worst));

  const FirTaps<double> taps = assemble_residual_taps(residuals, sys);
  CHECK(taps.rows() == sys.state_dim());
  CHECK(taps.cols() == sys.state_dim());
  CHECK(l1_column_norm(taps) == doctest::Approx(worst));
}

TEST_CASE("neumann_apply refuses an uncertified contraction") {
  SeedStream stream(12);
  const SystemModel sys = scalar_chain(2, 0.8, stream);
  ColumnResponse col = achievable_column(sys, 0, 3, stream);
  col.phi_x[1](0, 0) += 5.0;  // large defect: residual norm >= 1
  std::vector<ResidualColumn> residuals;
  residuals.push_back(achievability_residual(col, sys));
  ColumnResponse other = achievable_column(sys, 1, 3, stream);
  residuals.push_back(achievability_residual(other, sys));
  REQUIRE(l1_column_norm(residuals, sys) >= 1.0);
  const Matrix w = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(neumann_apply(residuals, sys, w, 10), CertificationError);
}

TEST_CASE("weighted norms match hand-stacked computations") {
  SeedStream stream(13);
  const SystemModel sys = scalar_chain(3, 0.5, stream);
  const ColumnResponse col = achievable_column(sys, 0, 3, stream);
  Matrix q = Matrix::Identity(3, 3) * 2.0;
  Matrix r = Matrix::Identity(3, 3) * 0.5;

  double sum_sq = 0.0;
  for (int k = 0; k < 3; ++k) {
    sum_sq += (q * col.phi_x[static_cast<std::size_t>(k)]).squaredNorm();
    sum_sq += (r * col.phi_u[static_cast<std::size_t>(k)]).squaredNorm();
  }
  CHECK(frobenius_2to1(col, q, r) == doctest::Approx(std::sqrt(sum_sq)));
  // Width-one columns: the worst-column norm and the Frobenius norm agree.
  CHECK(norm_2to1(col, q, r) == doctest::Approx(frobenius_2to1(col, q, r)));

  std::vector<ColumnResponse> cols = {col, achievable_column(sys, 1, 3, stream),
                                      achievable_column(sys, 2, 3, stream)};
  const FirResponse resp = assemble_response(cols, sys);
  double stack_sq = 0.0;
  for (int k = 0; k < 3; ++k) {
    stack_sq += (q * resp.phi_x[static_cast<std::size_t>(k)]).squaredNorm();
    stack_sq += (r * resp.phi_u[static_cast<std::size_t>(k)]).squaredNorm();
  }
  CHECK(h2_norm_fir(resp, q, r) == doctest::Approx(std::sqrt(stack_sq)));
}
