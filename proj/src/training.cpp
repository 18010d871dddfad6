#include "eventcast/training.hpp"

#include <cmath>

namespace eventcast {

Scaling Scaling::fit(const RowMatrixXd& x) {
    Scaling s;
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
    for (auto& v : s.scale)
        if (!(v > 0.0)) v = 1.0;
    return s;
}

Scaling Scaling::identity(Eigen::Index dim) {
    return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
}

TargetScaling TargetScaling::fit(const Eigen::Ref<const Eigen::VectorXd>& y) {
    TargetScaling t;
    t.mean = y.mean();
    t.scale = std::sqrt((y.array() - t.mean).square().mean());
    if (!(t.scale > 0.0)) t.scale = 1.0;
    return t;
}

}  // namespace eventcast
