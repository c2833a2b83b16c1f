#include "rfl/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace rfl {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& step, const NelderMeadOptions& opt, const Eigen::VectorXd* lo,
                             const Eigen::VectorXd* hi) {
  const Eigen::Index d = x0.size();
  NelderMeadResult res;
  auto clamp = [&](Eigen::VectorXd p) {
    if (lo && hi) p = p.cwiseMax(*lo).cwiseMin(*hi);
    return p;
  };
  auto value = [&](const Eigen::VectorXd& p) {
    ++res.evals;
    const double v = f(p);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> fv;
  simplex.push_back(clamp(x0));
  fv.push_back(value(simplex[0]));
  if (d == 0) {
    res.x = simplex[0];
    res.f = fv[0];
    return res;
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd p = x0;
    p[i] += step[i];
    p = clamp(p);
    if (p[i] == simplex[0][i]) {
      p[i] = x0[i] - step[i];  // bounded on that side; go the other way
      p = clamp(p);
    }
    simplex.push_back(p);
    fv.push_back(value(p));
  }
  const double step_scale = std::max(step.cwiseAbs().maxCoeff(), 1e-300);

  std::vector<std::size_t> order(static_cast<std::size_t>(d) + 1);
  while (res.evals < opt.max_evals) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double diameter = 0.0;
    for (const auto& p : simplex) diameter = std::max(diameter, (p - simplex[best]).cwiseAbs().maxCoeff());
    const bool flat = std::isfinite(fv[worst]) &&
                      std::abs(fv[worst] - fv[best]) <= opt.ftol * (std::abs(fv[best]) + 1e-300);
    if (flat || diameter <= opt.xtol * step_scale) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i : order) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = clamp(centroid + (centroid - simplex[worst]));
    const double fr = value(xr);
    if (fr < fv[best]) {
      const Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - simplex[worst]));
      const double fe = value(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Eigen::VectorXd xc =
        clamp(outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                      : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid)));
    const double fc = value(xc);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i : order) {
      if (i == best) continue;
      simplex[i] = clamp(simplex[best] + 0.5 * (simplex[i] - simplex[best]));
      fv[i] = value(simplex[i]);
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  res.x = simplex[static_cast<std::size_t>(it - fv.begin())];
  res.f = *it;
  return res;
}

}  // namespace rfl
