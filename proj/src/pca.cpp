#include "rtx/pca.hpp"

#include <Eigen/Eigenvalues>
#include <string>

namespace rtx {

PcaProjection pca_fit(const Matrix& samples, int components) {
  const Eigen::Index dim = samples.rows();
  const Eigen::Index n = samples.cols();
  if (components < 1 || components > dim) {
    throw ShapeError("pca_fit: components must lie in [1, " + std::to_string(dim) + "]");
  }
  if (n < dim || n < 2) {
    throw RankError("pca_fit: need at least " + std::to_string(std::max<Eigen::Index>(dim, 2)) +
                    " samples, got " + std::to_string(n));
  }

  PcaProjection proj;
  proj.mean = samples.rowwise().mean();
  const Matrix centered = samples.colwise() - proj.mean;
  Matrix cov = Matrix::Zero(dim, dim);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw RankError("pca_fit: eigen decomposition failed");
  // Eigen returns ascending eigenvalues.
  const Vector eigenvalues = solver.eigenvalues().cwiseMax(0.0);
  const Matrix& vectors = solver.eigenvectors();

  proj.basis.resize(components, dim);
  double top = 0.0;
  for (int i = 0; i < components; ++i) {
    const Eigen::Index col = dim - 1 - i;
    Vector row = vectors.col(col);
    Eigen::Index arg = 0;
    row.cwiseAbs().maxCoeff(&arg);
    if (row(arg) < 0.0) row = -row;
    proj.basis.row(i) = row.transpose();
    top += eigenvalues(col);
  }
  const double total = eigenvalues.sum();
  proj.explained_variance_fraction = total > 0.0 ? std::min(1.0, top / total) : 1.0;
  return proj;
}

Matrix pca_reduce(const Matrix& x, const PcaProjection& proj) {
  if (x.rows() != proj.input_channels()) {
    throw ShapeError("pca_reduce: expected " + std::to_string(proj.input_channels()) +
                     " channels, got " + std::to_string(x.rows()));
  }
  return proj.basis * (x.colwise() - proj.mean);
}

FeatureMap pca_reduce(const FeatureMap& x, const PcaProjection& proj) {
  return FeatureMap(x.height, x.width, pca_reduce(x.data, proj));
}

Matrix pca_reduce_backward(const Matrix& dout, const PcaProjection& proj) {
  return proj.basis.transpose() * dout;
}

}  // namespace rtx
