#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "poselift/gradcheck.hpp"
#include "poselift/metrics.hpp"
#include "poselift/ops.hpp"

using namespace poselift;

namespace {

std::mt19937_64& rng() {
  static std::mt19937_64 gen(0x3e7a1u);
  return gen;
}

Tensor random_pose(std::size_t joints, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> vals(joints * 3);
  for (double& v : vals) v = dist(rng());
  return Tensor::from_values({joints, 3}, vals);
}

using Mat3 = std::array<std::array<double, 3>, 3>;

// Rodrigues formula; independent of the alignment code under test.
Mat3 rotation_from_axis_angle(double ax, double ay, double az, double angle) {
  const double norm = std::sqrt(ax * ax + ay * ay + az * az);
  ax /= norm;
  ay /= norm;
  az /= norm;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  return {{{t * ax * ax + c, t * ax * ay - s * az, t * ax * az + s * ay},
           {t * ax * ay + s * az, t * ay * ay + c, t * ay * az - s * ax},
           {t * ax * az - s * ay, t * ay * az + s * ax, t * az * az + c}}};
}

Mat3 random_rotation() {
  std::uniform_real_distribution<double> axis(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.1, 3.0);
  return rotation_from_axis_angle(axis(rng()), axis(rng()), axis(rng()), angle(rng()));
}

Tensor apply_similarity(const Tensor& pose, const Mat3& rot, double scale,
                        const std::array<double, 3>& shift) {
  const std::size_t joints = pose.dim(0);
  std::vector<double> out(joints * 3);
  for (std::size_t j = 0; j < joints; ++j) {
    for (std::size_t r = 0; r < 3; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 3; ++c) acc += rot[r][c] * pose.at({j, c});
      out[j * 3 + r] = scale * acc + shift[r];
    }
  }
  return Tensor::from_values({joints, 3}, out);
}

}  // namespace

TEST_CASE("mpjpe of identical poses is zero") {
  Tensor pose = random_pose(6);
  CHECK(mpjpe(pose, pose) == 0.0);
}

TEST_CASE("single joint offset along a 3-4-5 triangle") {
  Tensor gt = Tensor::from_values({1, 3}, {1.0, 2.0, 3.0});
  Tensor pred = Tensor::from_values({1, 3}, {4.0, 6.0, 3.0});
  CHECK(mpjpe(pred, gt) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("mpjpe matches a per-joint loop oracle") {
  std::uniform_int_distribution<std::size_t> joints_dist(1, 5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t joints = joints_dist(rng());
    Tensor pred = random_pose(joints), gt = random_pose(joints);
    double expect = 0.0;
    for (std::size_t j = 0; j < joints; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = pred.at({j, c}) - gt.at({j, c});
        sq += d * d;
      }
      expect += std::sqrt(sq);
    }
    expect /= static_cast<double>(joints);
    CHECK(mpjpe(pred, gt) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(mpjpe(pred, gt) == mpjpe(gt, pred));
  }
}

TEST_CASE("mpjpe rejects mismatched shapes") {
  CHECK_THROWS_AS(mpjpe(random_pose(4), random_pose(5)), ShapeError);
  CHECK_THROWS_AS(mpjpe_loss(Tensor::zeros({4, 2}), Tensor::zeros({4, 2})), ShapeError);
}

TEST_CASE("mpjpe loss gradient matches finite differences") {
  Tensor gt = random_pose(4);
  auto f = [&](const Tensor& flat) {
    return mpjpe_loss(ops::reshape(flat, {4, 3}), gt);
  };
  Tensor start = Tensor::from_values({12}, std::vector<double>(12, 2.5));
  CHECK(finite_difference_check(f, start) < 1e-5);
}

TEST_CASE("mpjpe loss keeps finite gradients at the optimum") {
  Tensor gt = random_pose(3);
  Tensor pred = Tensor::from_values({3, 3}, gt.values(), true);
  mpjpe_loss(pred, gt).backward();
  for (double g : pred.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("similarity transforms of the target align to zero error") {
  std::uniform_real_distribution<double> scale_dist(0.3, 3.0);
  std::uniform_real_distribution<double> shift_dist(-2.0, 2.0);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor gt = random_pose(17);
    Tensor pred = apply_similarity(gt, random_rotation(), scale_dist(rng()),
                                   {shift_dist(rng()), shift_dist(rng()), shift_dist(rng())});
    CHECK(p_mpjpe(pred, gt) < 1e-6);
  }
}

TEST_CASE("identical poses have zero aligned error") {
  Tensor pose = random_pose(5);
  CHECK(p_mpjpe(pose, pose) < 1e-9);
}

TEST_CASE("alignment never hurts") {
  for (int trial = 0; trial < 30; ++trial) {
    Tensor pred = random_pose(8), gt = random_pose(8);
    CHECK(p_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-9);
  }
}

TEST_CASE("aligned error is invariant to similarity transforms of the prediction") {
  std::uniform_real_distribution<double> scale_dist(0.5, 2.0);
  std::uniform_real_distribution<double> shift_dist(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor pred = random_pose(9), gt = random_pose(9);
    const double base = p_mpjpe(pred, gt);
    Tensor moved = apply_similarity(pred, random_rotation(), scale_dist(rng()),
                                    {shift_dist(rng()), shift_dist(rng()), shift_dist(rng())});
    CHECK(std::abs(p_mpjpe(moved, gt) - base) < 1e-6);
  }
}

TEST_CASE("degenerate alignment inputs are rejected") {
  // fewer than three joints
  CHECK_THROWS_AS(p_mpjpe(random_pose(2), random_pose(2)), AlignmentError);
  // collinear target
  std::vector<double> line;
  for (std::size_t j = 0; j < 5; ++j) {
    line.push_back(static_cast<double>(j));
    line.push_back(2.0 * static_cast<double>(j));
    line.push_back(-1.0 * static_cast<double>(j));
  }
  Tensor collinear = Tensor::from_values({5, 3}, line);
  CHECK_THROWS_AS(p_mpjpe(random_pose(5), collinear), AlignmentError);
  // collapsed prediction
  Tensor flat = Tensor::full({5, 3}, 0.7);
  CHECK_THROWS_AS(p_mpjpe(flat, random_pose(5)), AlignmentError);
}

TEST_CASE("double flip is the identity") {
  auto topo = tiny5_topology();
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> seq_vals(3 * 5 * 2);
  for (double& v : seq_vals) v = dist(rng());
  Tensor seq = Tensor::from_values({3, 5, 2}, seq_vals);
  Tensor gt = random_pose(5);

  auto once = flip_augment(seq, gt, topo);
  auto twice = flip_augment(once.seq2d, once.gt3d, topo);
  CHECK(twice.seq2d.values() == seq.values());  // bitwise: negation is exact
  CHECK(twice.gt3d.values() == gt.values());
}

TEST_CASE("flip negates x sums and permutes joints") {
  auto topo = tiny5_topology();
  Tensor seq = Tensor::from_values(
      {1, 5, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
  Tensor gt = random_pose(5);
  auto flipped = flip_augment(seq, gt, topo);

  double x_sum = 0.0, flipped_x_sum = 0.0, y_sum = 0.0, flipped_y_sum = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    x_sum += seq.at({0, j, 0});
    flipped_x_sum += flipped.seq2d.at({0, j, 0});
    y_sum += seq.at({0, j, 1});
    flipped_y_sum += flipped.seq2d.at({0, j, 1});
  }
  CHECK(flipped_x_sum == doctest::Approx(-x_sum).epsilon(1e-15));
  CHECK(flipped_y_sum == doctest::Approx(y_sum).epsilon(1e-15));

  // left-right pairs exchanged: joint 1 now carries joint 3's (negated-x) data
  CHECK(flipped.seq2d.at({0, 1, 0}) == -seq.at({0, 3, 0}));
  CHECK(flipped.seq2d.at({0, 1, 1}) == seq.at({0, 3, 1}));
  CHECK(flipped.gt3d.at({2, 0}) == -gt.at({4, 0}));
  CHECK(flipped.gt3d.at({2, 2}) == gt.at({4, 2}));
}

TEST_CASE("flipping both poses preserves their distance") {
  auto topo = tiny5_topology();
  Tensor seq = Tensor::zeros({1, 5, 2});
  Tensor a = random_pose(5), b = random_pose(5);
  auto fa = flip_augment(seq, a, topo);
  auto fb = flip_augment(seq, b, topo);
  CHECK(mpjpe(fa.gt3d, fb.gt3d) == doctest::Approx(mpjpe(a, b)).epsilon(1e-12));
}

TEST_CASE("flip requires flip pairs") {
  SkeletonTopology bare;
  bare.num_joints = 5;
  bare.edges = {{0, 1}, {1, 2}, {0, 3}, {3, 4}};
  CHECK_THROWS_AS(flip_augment(Tensor::zeros({2, 5, 2}), Tensor::zeros({5, 3}), bare),
                  ConfigError);
  CHECK_THROWS_AS(
      flip_augment(Tensor::zeros({2, 4, 2}), Tensor::zeros({5, 3}), tiny5_topology()),
      ShapeError);
}
