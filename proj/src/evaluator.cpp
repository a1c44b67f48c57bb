#include "wmrl/evaluator.hpp"

#include <cmath>

namespace wmrl {

namespace {

struct PyramidLevel {
  Image intensity;
  Image inv_depth;  // 0 where depth is invalid
  CameraIntrinsics k;
};

PyramidLevel finest_level(const Frame& frame, const CameraIntrinsics& k) {
  PyramidLevel level;
  level.intensity = frame.intensity;
  level.inv_depth = Image::Zero(k.height, k.width);
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u)
      if (frame.depth(v, u) > 0.0)
        level.inv_depth(v, u) = 1.0 / frame.depth(v, u);
  level.k = k;
  return level;
}

PyramidLevel downsample(const PyramidLevel& fine) {
  PyramidLevel coarse;
  const int h = fine.k.height / 2;
  const int w = fine.k.width / 2;
  coarse.intensity = Image::Zero(h, w);
  coarse.inv_depth = Image::Zero(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      coarse.intensity(v, u) =
          0.25 * (fine.intensity(2 * v, 2 * u) + fine.intensity(2 * v, 2 * u + 1) +
                  fine.intensity(2 * v + 1, 2 * u) +
                  fine.intensity(2 * v + 1, 2 * u + 1));
      double sum = 0.0;
      int n = 0;
      for (int dv = 0; dv < 2; ++dv) {
        for (int du = 0; du < 2; ++du) {
          const double q = fine.inv_depth(2 * v + dv, 2 * u + du);
          if (q > 0.0) {
            sum += q;
            ++n;
          }
        }
      }
      // a coarse pixel is valid only if most children are; mixing across
      // depth edges would fabricate surfaces
      coarse.inv_depth(v, u) = (n >= 3) ? sum / n : 0.0;
    }
  }
  coarse.k.width = w;
  coarse.k.height = h;
  coarse.k.fx = fine.k.fx / 2.0;
  coarse.k.fy = fine.k.fy / 2.0;
  coarse.k.cx = (fine.k.cx - 0.5) / 2.0;
  coarse.k.cy = (fine.k.cy - 0.5) / 2.0;
  return coarse;
}

struct Interp {
  double value;
  double du, dv;  // gradient of the interpolant
  bool ok;
};

// Catmull-Rom weights and derivatives for one axis.
inline void cubic_weights(double t, double* w, double* dw) {
  const double t2 = t * t, t3 = t2 * t;
  w[0] = -0.5 * t3 + t2 - 0.5 * t;
  w[1] = 1.5 * t3 - 2.5 * t2 + 1.0;
  w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
  w[3] = 0.5 * t3 - 0.5 * t2;
  dw[0] = -1.5 * t2 + 2.0 * t - 0.5;
  dw[1] = 4.5 * t2 - 5.0 * t;
  dw[2] = -4.5 * t2 + 4.0 * t + 0.5;
  dw[3] = 1.5 * t2 - t;
}

// Bilinear sample with the analytic gradient of the interpolant.
Interp sample_bilinear(const Image& img, double u, double v) {
  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1.0 && v <= h - 1.0)) {
    return {0.0, 0.0, 0.0, false};
  }
  int u0 = static_cast<int>(u);
  int v0 = static_cast<int>(v);
  if (u0 > w - 2) u0 = w - 2;
  if (v0 > h - 2) v0 = h - 2;
  const double fu = u - u0;
  const double fv = v - v0;
  const double a00 = img(v0, u0), a01 = img(v0, u0 + 1);
  const double a10 = img(v0 + 1, u0), a11 = img(v0 + 1, u0 + 1);
  Interp out;
  out.value = (1 - fv) * ((1 - fu) * a00 + fu * a01) +
              fv * ((1 - fu) * a10 + fu * a11);
  out.du = (1 - fv) * (a01 - a00) + fv * (a11 - a10);
  out.dv = (1 - fu) * (a10 - a00) + fu * (a11 - a01);
  out.ok = true;
  return out;
}

// Catmull-Rom sample for the photometric term; its interpolation bias is
// O(h^4) instead of bilinear's O(h^2), which otherwise displaces the cost
// minimum by a noticeable fraction of a pixel at 32x32. Falls back to
// bilinear in the one-pixel border.
Interp sample_intensity(const Image& img, double u, double v) {
  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1.0 && v <= h - 1.0)) {
    return {0.0, 0.0, 0.0, false};
  }
  int u0 = static_cast<int>(u);
  int v0 = static_cast<int>(v);
  if (u0 > w - 2) u0 = w - 2;
  if (v0 > h - 2) v0 = h - 2;
  if (u0 < 1 || v0 < 1 || u0 > w - 3 || v0 > h - 3) {
    return sample_bilinear(img, u, v);
  }
  double wu[4], dwu[4], wv[4], dwv[4];
  cubic_weights(u - u0, wu, dwu);
  cubic_weights(v - v0, wv, dwv);
  Interp out{0.0, 0.0, 0.0, true};
  for (int j = 0; j < 4; ++j) {
    double row = 0.0, drow = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double a = img(v0 - 1 + j, u0 - 1 + i);
      row += wu[i] * a;
      drow += dwu[i] * a;
    }
    out.value += wv[j] * row;
    out.du += wv[j] * drow;
    out.dv += dwv[j] * row;
  }
  return out;
}

// Inverse depth sampled like above, but requiring all four neighbours valid.
Interp sample_inv_depth(const Image& q, double u, double v) {
  const int w = static_cast<int>(q.cols());
  const int h = static_cast<int>(q.rows());
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1.0 && v <= h - 1.0)) {
    return {0.0, 0.0, 0.0, false};
  }
  int u0 = static_cast<int>(u);
  int v0 = static_cast<int>(v);
  if (u0 > w - 2) u0 = w - 2;
  if (v0 > h - 2) v0 = h - 2;
  if (q(v0, u0) <= 0.0 || q(v0, u0 + 1) <= 0.0 || q(v0 + 1, u0) <= 0.0 ||
      q(v0 + 1, u0 + 1) <= 0.0) {
    return {0.0, 0.0, 0.0, false};
  }
  return sample_bilinear(q, u, v);
}

double valid_fraction(const Frame& frame) {
  int n = 0;
  for (int v = 0; v < frame.height(); ++v)
    for (int u = 0; u < frame.width(); ++u)
      if (frame.depth(v, u) > 0.0) ++n;
  return static_cast<double>(n) / (frame.height() * frame.width());
}

struct Residual {
  double r;         // normalized by the huber scale
  Eigen::Matrix<double, 6, 1> j;
};

// Accumulates the robust cost and normal equations for the current warp.
// ksi layout: [translation; rotation], left-multiplied update.
struct NormalEquations {
  Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
  double cost = 0.0;
  int pixels = 0;
  int inliers = 0;

  void add(const Residual& res) {
    const double a = std::abs(res.r);
    const double w = a <= 1.0 ? 1.0 : 1.0 / a;  // Huber IRLS weight
    h.noalias() += w * res.j * res.j.transpose();
    g.noalias() += w * res.r * res.j;
    cost += a <= 1.0 ? 0.5 * res.r * res.r : a - 0.5;
  }
};

struct LevelEval {
  NormalEquations eq;
  bool degenerate = false;
};

LevelEval evaluate_level(const PyramidLevel& a, const PyramidLevel& b,
                         const Pose& warp, const Evaluator3DConfig& cfg,
                         bool with_jacobians) {
  LevelEval out;
  const CameraIntrinsics& k = a.k;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double qa = a.inv_depth(v, u);
      if (qa <= 0.0) continue;
      const Vec3 x = backproject(Vec2(u, v), 1.0 / qa, k);
      const Vec3 xb = warp * x;
      if (xb.z() < 0.05) continue;
      const double iz = 1.0 / xb.z();
      const double ub = b.k.fx * xb.x() * iz + b.k.cx;
      const double vb = b.k.fy * xb.y() * iz + b.k.cy;

      const Interp ib = sample_intensity(b.intensity, ub, vb);
      if (!ib.ok) continue;
      const Interp qb = sample_inv_depth(b.inv_depth, ub, vb);
      if (qb.ok) {
        // occlusion / depth-discontinuity gate: when the observed surface
        // sits far from the warped point, both residuals compare unrelated
        // surfaces and only bias the estimate
        const double observed = 1.0 / qb.value;
        if (std::abs(observed - xb.z()) >
            std::max(cfg.occlusion_band, 0.1 * xb.z())) {
          continue;
        }
      }

      // d(pixel)/d(point) and d(point)/d(ksi) = [I  -[xb]_x]
      const double dudx = b.k.fx * iz;
      const double dudz = -b.k.fx * xb.x() * iz * iz;
      const double dvdy = b.k.fy * iz;
      const double dvdz = -b.k.fy * xb.y() * iz * iz;

      auto chain = [&](double gu, double gv, double gz) {
        // gradient w.r.t. the warped point
        const Vec3 gp(gu * dudx, gv * dvdy, gu * dudz + gv * dvdz + gz);
        Eigen::Matrix<double, 6, 1> j;
        j.head<3>() = gp;
        j.tail<3>() = xb.cross(gp);  // -[xb]_x^T gp
        return j;
      };

      ++out.eq.pixels;
      bool inlier = true;
      {
        Residual res;
        res.r = (ib.value - a.intensity(v, u)) / cfg.huber_intensity;
        if (std::abs(res.r) > 1.0) inlier = false;
        if (with_jacobians) {
          res.j = chain(ib.du / cfg.huber_intensity,
                        ib.dv / cfg.huber_intensity, 0.0);
        } else {
          res.j.setZero();
        }
        out.eq.add(res);
      }
      if (qb.ok) {
        // depth consistency: 1/q_b(target pixel) vs the warped z
        const double db = 1.0 / qb.value;
        Residual res;
        res.r = (db - xb.z()) / cfg.huber_depth;
        if (std::abs(res.r) > 1.0) inlier = false;
        if (with_jacobians) {
          const double dd = -db * db;  // d(1/q)/dq
          res.j = chain(dd * qb.du / cfg.huber_depth,
                        dd * qb.dv / cfg.huber_depth, -1.0 / cfg.huber_depth);
        } else {
          res.j.setZero();
        }
        out.eq.add(res);
      }
      if (inlier) ++out.eq.inliers;
    }
  }
  return out;
}

}  // namespace

PoseEstimate Evaluator3D::estimate_relative_pose(const Frame& a,
                                                 const Frame& b,
                                                 const CameraIntrinsics& k,
                                                 const Pose& init) const {
  const PoseEstimate failure{Pose::identity(), 0.0};
  if (a.width() != b.width() || a.height() != b.height()) return failure;
  if (valid_fraction(a) < config_.min_valid_fraction ||
      valid_fraction(b) < config_.min_valid_fraction) {
    return failure;
  }

  std::vector<PyramidLevel> pyr_a{finest_level(a, k)};
  std::vector<PyramidLevel> pyr_b{finest_level(b, k)};
  for (int l = 1; l < config_.pyramid_levels; ++l) {
    pyr_a.push_back(downsample(pyr_a.back()));
    pyr_b.push_back(downsample(pyr_b.back()));
  }

  // warp maps a-frame points into the b frame; the estimate is its inverse
  Pose warp = invert(init);
  bool converged = false;
  for (int level = config_.pyramid_levels - 1; level >= 0; --level) {
    const PyramidLevel& la = pyr_a[level];
    const PyramidLevel& lb = pyr_b[level];
    const bool finest = level == 0;
    converged = false;
    double cost = evaluate_level(la, lb, warp, config_, false).eq.cost;
    for (int iter = 0; iter < config_.max_iterations; ++iter) {
      LevelEval eval = evaluate_level(la, lb, warp, config_, true);
      if (eval.eq.pixels < 8) {
        if (finest) return failure;
        break;  // coarse levels are best-effort initialization
      }
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(eval.eq.h);
      const double lmax = eig.eigenvalues().maxCoeff();
      if (!(lmax > 0.0) ||
          eig.eigenvalues().minCoeff() < config_.min_eigen_ratio * lmax) {
        if (finest) return failure;  // rank-deficient normal equations
        break;
      }
      if (eval.eq.g.cwiseAbs().maxCoeff() < config_.gradient_tol) {
        converged = true;
        break;
      }
      Eigen::Matrix<double, 6, 6> h = eval.eq.h;
      h.diagonal().array() += 1e-12 * lmax;
      Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-eval.eq.g);
      if (!delta.allFinite()) {
        if (finest) return failure;
        break;
      }

      // backtracking on the robust cost
      double step = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 6; ++bt) {
        const Pose update{exp_so3(step * delta.tail<3>()),
                          step * delta.head<3>()};
        const Pose trial = compose(update, warp);
        const double trial_cost =
            evaluate_level(la, lb, trial, config_, false).eq.cost;
        if (trial_cost <= cost) {
          warp = trial;
          cost = trial_cost;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        // the line search cannot improve: a local minimum at this
        // resolution, which counts as convergence
        converged = true;
        break;
      }
      const double step_norm = step * delta.norm();
      if (step_norm < config_.step_tol) {
        converged = true;
        break;
      }
      // still moving at the iteration cap: non-convergence
      if (iter == config_.max_iterations - 1) {
        converged = step_norm < config_.accept_step_tol;
      }
    }
  }
  if (!converged) return failure;

  const LevelEval final_eval =
      evaluate_level(pyr_a[0], pyr_b[0], warp, config_, false);
  if (final_eval.eq.pixels < 8) return failure;
  const double confidence =
      static_cast<double>(final_eval.eq.inliers) / final_eval.eq.pixels;
  if (!warp.translation.allFinite()) return failure;
  return {invert(warp), confidence};
}

EvalOutput3D Evaluator3D::evaluate_rollout(const std::vector<Frame>& frames,
                                           const CameraIntrinsics& k) const {
  EvalOutput3D out;
  if (frames.size() < 2) return out;
  out.relatives.reserve(frames.size() - 1);
  for (size_t t = 0; t + 1 < frames.size(); ++t) {
    out.relatives.push_back(
        estimate_relative_pose(frames[t], frames[t + 1], k));
  }
  return out;
}

double VideoEvaluator::sharpness_statistic(const std::vector<Frame>& frames) {
  double sum = 0.0;
  long count = 0;
  for (const Frame& f : frames) {
    for (int v = 1; v + 1 < f.height(); ++v) {
      for (int u = 1; u + 1 < f.width(); ++u) {
        const double lap = 4.0 * f.intensity(v, u) - f.intensity(v - 1, u) -
                           f.intensity(v + 1, u) - f.intensity(v, u - 1) -
                           f.intensity(v, u + 1);
        sum += lap * lap;
        ++count;
      }
    }
  }
  return count > 0 ? sum / count : 0.0;
}

double VideoEvaluator::motion_statistic(const std::vector<Frame>& frames) {
  if (frames.size() < 3) return 0.0;
  double sum = 0.0;
  long count = 0;
  for (size_t t = 1; t + 1 < frames.size(); ++t) {
    const Image diff = frames[t + 1].intensity - 2.0 * frames[t].intensity +
                       frames[t - 1].intensity;
    sum += diff.array().square().sum();
    count += diff.size();
  }
  return count > 0 ? sum / count : 0.0;
}

VideoScores VideoEvaluator::evaluate(const std::vector<Frame>& frames) const {
  const double noise =
      std::max(0.0, sharpness_statistic(frames) - config_.reference_sharpness);
  VideoScores scores;
  scores.visual = std::exp(-config_.lambda_visual * noise);
  scores.motion = std::exp(-config_.lambda_motion * motion_statistic(frames));
  return scores;
}

}  // namespace wmrl
