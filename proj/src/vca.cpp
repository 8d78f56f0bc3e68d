#include "ssmix/vca.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ssmix/rng.hpp"

namespace ssmix {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  const std::size_t r = t.dim(0), c = t.dim(1);
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t[i * c + j];
  return m;
}

// Top-d eigenvectors (descending eigenvalue) of the symmetric matrix m.
Eigen::MatrixXd top_eigenvectors(const Eigen::MatrixXd& m, std::size_t d,
                                 const char* step) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw std::runtime_error(std::string("vca: eigendecomposition failed during ") + step);
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd u(n, static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k)
    u.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(n - 1 - static_cast<Eigen::Index>(k));
  return u;
}

}  // namespace

VcaResult vca(const Tensor& y, std::size_t num_endmembers, std::uint64_t seed) {
  if (y.ndim() != 2) throw std::invalid_argument("vca: input must be [C,N]");
  const std::size_t C = y.dim(0), N = y.dim(1);
  const std::size_t P = num_endmembers;
  if (P == 0) throw std::invalid_argument("vca: need at least one endmember");
  if (C < P)
    throw std::invalid_argument("vca: more endmembers than bands (P=" + std::to_string(P) +
                                ", C=" + std::to_string(C) + ")");
  if (N < P)
    throw std::invalid_argument("vca: more endmembers than pixels");

  Rng rng(seed);
  Eigen::MatrixXd Y = to_eigen(y);  // C x N

  VcaResult res;
  res.indices.resize(P);

  if (P == 1) {
    // Degenerate case: the extreme pixel along a single random direction.
    Eigen::VectorXd f(static_cast<Eigen::Index>(C));
    for (std::size_t i = 0; i < C; ++i) f(static_cast<Eigen::Index>(i)) = rng.normal();
    Eigen::RowVectorXd v = f.transpose() * Y;
    Eigen::Index best = 0;
    v.cwiseAbs().maxCoeff(&best);
    res.indices[0] = static_cast<std::size_t>(best);
    res.spectra = Tensor(Shape{1, C});
    for (std::size_t c = 0; c < C; ++c)
      res.spectra[c] = Y(static_cast<Eigen::Index>(c), best);
    res.snr_estimate_db = std::numeric_limits<double>::infinity();
    res.projective_path = true;
    return res;
  }

  const double dN = static_cast<double>(N);
  Eigen::VectorXd mu = Y.rowwise().mean();
  Eigen::MatrixXd Y0 = Y.colwise() - mu;

  // SNR estimate from the energy captured by the top-P mean-removed subspace.
  Eigen::MatrixXd Ud = top_eigenvectors((Y0 * Y0.transpose()) / dN, P, "SNR estimation");
  Eigen::MatrixXd Xp = Ud.transpose() * Y0;  // P x N
  const double p_y = Y.squaredNorm() / dN;
  const double p_x = Xp.squaredNorm() / dN + mu.squaredNorm();
  double snr_db;
  if (p_y - p_x <= 0.0) {
    snr_db = std::numeric_limits<double>::infinity();
  } else {
    const double num = p_x - (static_cast<double>(P) / static_cast<double>(C)) * p_y;
    snr_db = num <= 0.0 ? -std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(num / (p_y - p_x));
  }
  res.snr_estimate_db = snr_db;
  const double snr_threshold = 15.0 + 10.0 * std::log10(static_cast<double>(P));

  Eigen::MatrixXd Yp;  // P x N projected data fed to the extraction loop
  if (snr_db > snr_threshold) {
    res.projective_path = true;
    // Projective projection in the top-P subspace of the raw correlation.
    Eigen::MatrixXd Ur = top_eigenvectors((Y * Y.transpose()) / dN, P, "projective projection");
    Eigen::MatrixXd X = Ur.transpose() * Y;  // P x N
    Eigen::VectorXd u = X.rowwise().mean();
    Yp.resize(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(N));
    for (std::size_t j = 0; j < N; ++j) {
      const double denom = X.col(static_cast<Eigen::Index>(j)).dot(u);
      if (denom == 0.0)
        throw std::runtime_error(
            "vca: projective projection hit a zero denominator at pixel " + std::to_string(j));
      Yp.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(j)) / denom;
    }
  } else {
    res.projective_path = false;
    // Mean-removed subspace of dimension P-1, lifted by a constant row.
    const std::size_t d = P - 1;
    Eigen::MatrixXd X = Ud.leftCols(static_cast<Eigen::Index>(d)).transpose() * Y0;  // d x N
    double cmax = 0.0;
    for (std::size_t j = 0; j < N; ++j)
      cmax = std::max(cmax, X.col(static_cast<Eigen::Index>(j)).norm());
    if (cmax == 0.0)
      throw std::runtime_error("vca: mean-removed projection collapsed to a point");
    Yp.resize(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(N));
    Yp.topRows(static_cast<Eigen::Index>(d)) = X;
    Yp.row(static_cast<Eigen::Index>(d)).setConstant(cmax);
  }

  // Iteratively pick the extreme pixel along directions orthogonal to the
  // simplex found so far.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P),
                                            static_cast<Eigen::Index>(P));
  A(static_cast<Eigen::Index>(P) - 1, 0) = 1.0;
  for (std::size_t i = 0; i < P; ++i) {
    Eigen::VectorXd f;
    double fnorm = 0.0;
    for (int attempt = 0; attempt < 32 && fnorm < 1e-12; ++attempt) {
      Eigen::VectorXd w(static_cast<Eigen::Index>(P));
      for (std::size_t k = 0; k < P; ++k) w(static_cast<Eigen::Index>(k)) = rng.normal();
      Eigen::MatrixXd pinv = A.completeOrthogonalDecomposition().pseudoInverse();
      f = w - A * (pinv * w);
      fnorm = f.norm();
    }
    if (fnorm < 1e-12)
      throw std::runtime_error(
          "vca: could not find a direction orthogonal to the current simplex (step " +
          std::to_string(i) + ")");
    f /= fnorm;
    Eigen::RowVectorXd v = f.transpose() * Yp;
    Eigen::Index best = 0;
    v.cwiseAbs().maxCoeff(&best);
    res.indices[i] = static_cast<std::size_t>(best);
    A.col(static_cast<Eigen::Index>(i)) = Yp.col(best);
  }

  res.spectra = Tensor(Shape{P, C});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c)
      res.spectra[p * C + c] =
          Y(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(res.indices[p]));
  return res;
}

}  // namespace ssmix
