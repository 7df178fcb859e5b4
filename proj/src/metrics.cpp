#include "poselift/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "poselift/ops.hpp"

namespace poselift {

Tensor mpjpe_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.rank() != 2 || pred.dim(1) != 3) {
    throw ShapeError("mpjpe: prediction must be [J,3], got " + shape_str(pred.shape()));
  }
  if (pred.shape() != gt.shape()) {
    throw ShapeError("mpjpe: prediction " + shape_str(pred.shape()) +
                     " does not match target " + shape_str(gt.shape()));
  }
  Tensor diff = ops::sub(pred, gt);
  Tensor dist = ops::sqrt(ops::sum(ops::mul(diff, diff), 1));  // [J]
  return ops::mean(dist, 0);
}

double mpjpe(const Tensor& pred, const Tensor& gt) {
  return mpjpe_loss(pred.detached(), gt.detached()).item();
}

double p_mpjpe(const Tensor& pred, const Tensor& gt) {
  if (pred.rank() != 2 || pred.dim(1) != 3 || pred.shape() != gt.shape()) {
    throw ShapeError("p_mpjpe: need matching [J,3] inputs, got " +
                     shape_str(pred.shape()) + " and " + shape_str(gt.shape()));
  }
  const std::size_t joints = pred.dim(0);
  if (joints < 3) {
    throw AlignmentError("p_mpjpe: need at least 3 joints, got " +
                         std::to_string(joints));
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
  Eigen::Map<const RowMat> x(pred.values().data(), static_cast<Eigen::Index>(joints), 3);
  Eigen::Map<const RowMat> y(gt.values().data(), static_cast<Eigen::Index>(joints), 3);

  const Eigen::RowVector3d mu_x = x.colwise().mean();
  const Eigen::RowVector3d mu_y = y.colwise().mean();
  RowMat x0 = x.rowwise() - mu_x;
  RowMat y0 = y.rowwise() - mu_y;

  // Collinear target: centered covariance has rank <= 1.
  Eigen::Matrix3d cov_y = y0.transpose() * y0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov_y);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  if (evals(2) <= 0.0 || evals(1) <= 1e-12 * evals(2)) {
    throw AlignmentError("p_mpjpe: target joints are collinear or coincident");
  }
  const double x_norm_sq = x0.squaredNorm();
  if (x_norm_sq <= 0.0) {
    throw AlignmentError("p_mpjpe: prediction collapsed to a single point");
  }

  Eigen::Matrix3d cross = x0.transpose() * y0;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  const Eigen::Vector3d sigma = svd.singularValues();
  const double det_sign = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Eigen::Vector3d correction(1.0, 1.0, det_sign);
  const Eigen::Matrix3d rotation = u * correction.asDiagonal() * v.transpose();
  const double scale =
      (sigma(0) + sigma(1) + det_sign * sigma(2)) / x_norm_sq;

  RowMat aligned = (scale * (x0 * rotation)).rowwise() + mu_y;
  double total = 0.0;
  for (Eigen::Index r = 0; r < aligned.rows(); ++r) {
    total += (aligned.row(r) - y.row(r)).norm();
  }
  return total / static_cast<double>(joints);
}

FlippedPair flip_augment(const Tensor& seq2d, const Tensor& gt3d,
                         const SkeletonTopology& topology) {
  if (topology.flip_pairs.empty()) {
    throw ConfigError("flip_augment: topology defines no flip pairs");
  }
  if (seq2d.rank() != 3 || seq2d.dim(2) != 2 || seq2d.dim(1) != topology.num_joints) {
    throw ShapeError("flip_augment: sequence must be [T,J,2] over " +
                     std::to_string(topology.num_joints) + " joints, got " +
                     shape_str(seq2d.shape()));
  }
  if (gt3d.shape() != Shape{topology.num_joints, 3}) {
    throw ShapeError("flip_augment: target must be [J,3], got " +
                     shape_str(gt3d.shape()));
  }
  const std::size_t joints = topology.num_joints;
  std::vector<std::size_t> remap(joints);
  for (std::size_t j = 0; j < joints; ++j) remap[j] = j;
  for (const auto& [l, r] : topology.flip_pairs) std::swap(remap[l], remap[r]);

  std::vector<double> seq_out(seq2d.numel());
  const auto& sv = seq2d.values();
  const std::size_t frames = seq2d.dim(0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < joints; ++j) {
      const std::size_t src = (t * joints + remap[j]) * 2;
      seq_out[(t * joints + j) * 2 + 0] = -sv[src + 0];
      seq_out[(t * joints + j) * 2 + 1] = sv[src + 1];
    }
  }
  std::vector<double> gt_out(gt3d.numel());
  const auto& gv = gt3d.values();
  for (std::size_t j = 0; j < joints; ++j) {
    const std::size_t src = remap[j] * 3;
    gt_out[j * 3 + 0] = -gv[src + 0];
    gt_out[j * 3 + 1] = gv[src + 1];
    gt_out[j * 3 + 2] = gv[src + 2];
  }
  FlippedPair out;
  out.seq2d = Tensor::from_values(seq2d.shape(), std::move(seq_out));
  out.gt3d = Tensor::from_values(gt3d.shape(), std::move(gt_out));
  return out;
}

}  // namespace poselift
