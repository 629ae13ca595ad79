#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "uprop/core.hpp"
#include "uprop/errors.hpp"
#include "uprop/psis.hpp"

namespace uprop {

enum class TransformKind { kT1, kT2, kT3 };

/// Affine draw transform theta -> A theta + b with its log |det A|.
struct AffineMap {
  TransformKind kind = TransformKind::kT1;
  Matrix linear;
  Vector shift;
  double log_abs_det = 0.0;

  DrawMatrix apply(const DrawMatrix& draws) const {
    return (draws * linear.transpose()).rowwise() + shift.transpose();
  }
};

namespace detail {

inline void check_conditioning(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin >= 1e12)
    throw DegenerateGeometryError("affine map is not invertible (cond >= 1e12)");
}

inline Vector plain_mean(const DrawMatrix& d) {
  return d.colwise().mean().transpose();
}

}  // namespace detail

/// T1: shift the plain mean onto the importance-weighted mean.
inline std::pair<DrawMatrix, AffineMap> apply_t1(const DrawMatrix& draws,
                                                 const LogWeights& w) {
  const Vector bar = detail::plain_mean(draws);
  const Vector tilde = weighted_mean(draws, w);
  AffineMap map;
  map.kind = TransformKind::kT1;
  map.linear = Matrix::Identity(draws.cols(), draws.cols());
  map.shift = tilde - bar;
  map.log_abs_det = 0.0;
  return {map.apply(draws), map};
}

/// T2: additionally match the marginal variances (diagonal scaling).
inline std::pair<DrawMatrix, AffineMap> apply_t2(const DrawMatrix& draws,
                                                 const LogWeights& w) {
  const Index d = draws.cols();
  const Vector bar = detail::plain_mean(draws);
  const Vector tilde = weighted_mean(draws, w);
  const DrawMatrix centered = draws.rowwise() - bar.transpose();
  const Vector v = centered.array().square().colwise().mean().transpose();
  const DrawMatrix wcentered = draws.rowwise() - tilde.transpose();
  const Vector vt = (wcentered.array().square().colwise() * w.weights.array())
                        .colwise()
                        .sum()
                        .transpose();
  for (Index j = 0; j < d; ++j) {
    if (!(v[j] > 0.0) || !(vt[j] > 0.0))
      throw DegenerateGeometryError("apply_t2: zero marginal variance");
  }
  AffineMap map;
  map.kind = TransformKind::kT2;
  map.linear = (vt.array() / v.array()).sqrt().matrix().asDiagonal();
  detail::check_conditioning(map.linear);
  map.shift = tilde - map.linear * bar;
  map.log_abs_det = 0.5 * (vt.array().log() - v.array().log()).sum();
  return {map.apply(draws), map};
}

/// T3: match mean and full covariance through Cholesky factors.
inline std::pair<DrawMatrix, AffineMap> apply_t3(const DrawMatrix& draws,
                                                 const LogWeights& w) {
  const Vector bar = detail::plain_mean(draws);
  const Vector tilde = weighted_mean(draws, w);
  const DrawMatrix centered = draws.rowwise() - bar.transpose();
  const Matrix sigma = centered.transpose() * centered / static_cast<double>(draws.rows());
  const Matrix sigma_w = weighted_cov(draws, w);

  Eigen::LLT<Matrix> llt(sigma);
  Eigen::LLT<Matrix> llt_w(sigma_w);
  if (llt.info() != Eigen::Success || llt_w.info() != Eigen::Success)
    throw DegenerateGeometryError("apply_t3: covariance not positive definite");
  const Matrix l = llt.matrixL();
  const Matrix lw = llt_w.matrixL();

  AffineMap map;
  map.kind = TransformKind::kT3;
  map.linear = l.triangularView<Eigen::Lower>()
                   .solve<Eigen::OnTheRight>(lw);  // Lw * L^{-1}
  detail::check_conditioning(map.linear);
  map.shift = tilde - map.linear * bar;
  map.log_abs_det =
      lw.diagonal().array().log().sum() - l.diagonal().array().log().sum();
  return {map.apply(draws), map};
}

/// Batch unnormalized log-density evaluator: one value per draw row.
using LogDensityFn = std::function<Vector(const DrawMatrix&)>;

struct IwmmResult {
  DrawMatrix transformed;
  LogWeights weights;
  double k_hat_mm = 0.0;
  std::vector<AffineMap> accepted_maps;
  bool success = false;
};

namespace detail {

inline void check_no_nan(const Vector& v, const char* what) {
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i]))
      throw EvaluationError(std::string(what) + " returned NaN", static_cast<long>(i));
  }
}

}  // namespace detail

/// Importance-weighted moment matching. Candidate transforms are tried in
/// order of increasing complexity (T1, then T2, then T3), each level repeated
/// while it strictly lowers k_hat_MM. Ratios after a transform use the
/// implicit proposal density p(theta) / |det A|, so the proposal is only ever
/// evaluated at the original draws.
inline IwmmResult iwmm_adapt(const LogDensityFn& target_logp,
                             const LogDensityFn& proposal_logp,
                             const DrawMatrix& draws, int max_iters = 30) {
  const Vector lp_prop = proposal_logp(draws);
  detail::check_no_nan(lp_prop, "proposal_logp");
  const Vector lp_targ = target_logp(draws);
  detail::check_no_nan(lp_targ, "target_logp");

  IwmmResult res;
  res.transformed = draws;
  PsisResult cur = psis_smooth(lp_targ - lp_prop);
  res.weights = cur.smoothed;
  res.k_hat_mm = cur.k_hat;
  if (cur.reliable) {
    res.success = true;
    return res;
  }

  double cum_log_det = 0.0;
  int level = 1;
  for (int cand = 0; cand < max_iters && level <= 3; ++cand) {
    std::pair<DrawMatrix, AffineMap> proposal;
    try {
      switch (level) {
        case 1: proposal = apply_t1(res.transformed, res.weights); break;
        case 2: proposal = apply_t2(res.transformed, res.weights); break;
        default: proposal = apply_t3(res.transformed, res.weights); break;
      }
    } catch (const DegenerateGeometryError&) {
      ++level;
      continue;
    }

    const Vector lt = target_logp(proposal.first);
    detail::check_no_nan(lt, "target_logp");
    const double log_det = cum_log_det + proposal.second.log_abs_det;
    PsisResult cand_res = psis_smooth(lt - (lp_prop.array() - log_det).matrix());

    if (cand_res.k_hat < res.k_hat_mm) {
      res.transformed = proposal.first;
      res.weights = cand_res.smoothed;
      res.k_hat_mm = cand_res.k_hat;
      res.accepted_maps.push_back(proposal.second);
      cum_log_det = log_det;
      if (cand_res.reliable) {
        res.success = true;
        return res;
      }
    } else {
      ++level;
    }
  }
  res.success = false;
  return res;
}

}  // namespace uprop
