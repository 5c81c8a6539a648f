#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pixelbytes/parameter.hpp"

namespace gradcheck {

struct Result {
  std::string name;
  double rel_error = 0.0;
};

// Central differences of `loss` for every entry of each parameter, compared
// with the analytic gradients already stored in the parameters. The error is
// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12) per group.
// Row 0 of the parameters named in `pad_tables` is frozen and skipped.
inline std::vector<Result> check(const pixelbytes::ParameterList& params, const std::function<double()>& loss,
                                 const std::vector<std::string>& pad_tables = {}, double eps = 1e-6) {
  std::vector<Result> out;
  for (pixelbytes::Parameter* p : params) {
    pixelbytes::Mat numeric = pixelbytes::Mat::Zero(p->value.rows(), p->value.cols());
    const bool skip_row0 = std::find(pad_tables.begin(), pad_tables.end(), p->name) != pad_tables.end();
    for (Eigen::Index i = skip_row0 ? p->value.cols() : 0; i < p->value.size(); ++i) {
      double& v = p->value.data()[i];
      const double saved = v;
      v = saved + eps;
      const double up = loss();
      v = saved - eps;
      const double down = loss();
      v = saved;
      numeric.data()[i] = (up - down) / (2.0 * eps);
    }
    const double denom = std::max({p->grad.norm(), numeric.norm(), 1e-12});
    out.push_back({p->name, (p->grad - numeric).norm() / denom});
  }
  return out;
}

}  // namespace gradcheck
