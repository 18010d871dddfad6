#include "eventcast/feedforward.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eventcast/errors.hpp"

namespace eventcast {

using Eigen::Index;
using Eigen::VectorXd;
using RowMap = Eigen::Map<const RowMatrixXd>;

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::LogSigmoid: return "logsig";
        case Activation::Linear: return "linear";
    }
    return "?";
}

Activation activation_from_string(std::string_view name) {
    for (auto a : {Activation::Tanh, Activation::LogSigmoid, Activation::Linear})
        if (to_string(a) == name) return a;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

void FfConfig::validate() const {
    for (Index w : layer_sizes)
        if (w < 1) throw ConfigError("feedforward layer widths must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(lm_lambda0 > 0.0) || !(lm_up > 1.0) || !(lm_down > 0.0 && lm_down < 1.0))
        throw ConfigError("invalid Levenberg-Marquardt damping controls");
}

namespace {

void activate(Activation a, Eigen::Ref<RowMatrixXd> z) {
    switch (a) {
        case Activation::Tanh: z = z.array().tanh(); break;
        case Activation::LogSigmoid: z = (1.0 + (-z.array()).exp()).inverse(); break;
        case Activation::Linear: break;
    }
}

// Derivative expressed through the activation output.
RowMatrixXd activation_slope(Activation a, const RowMatrixXd& h) {
    switch (a) {
        case Activation::Tanh: return 1.0 - h.array().square();
        case Activation::LogSigmoid: return h.array() * (1.0 - h.array());
        case Activation::Linear: break;
    }
    return RowMatrixXd::Ones(h.rows(), h.cols());
}

}  // namespace

FfNetwork::FfNetwork(Index input_dim, std::vector<Index> hidden, Activation activation)
    : input_dim_(input_dim), hidden_(std::move(hidden)), activation_(activation) {
    if (input_dim < 1) throw ShapeError("feedforward input dimension must be >= 1");
    Index offset = 0, in = input_dim;
    for (Index width : hidden_) {
        if (width < 1) throw ConfigError("feedforward layer widths must be >= 1");
        layers_.push_back({in, width, offset, offset + width * in});
        offset += width * in + width;
        in = width;
    }
    out_w_ = offset;
    out_b_ = offset + in;
    params_ = VectorXd::Zero(out_b_ + 1);
}

void FfNetwork::init_glorot(Rng& rng) {
    params_.setZero();
    auto fill = [&](Index offset, Index fan_in, Index fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Index k = 0; k < fan_in * fan_out; ++k) params_(offset + k) = u(rng);
    };
    for (const auto& l : layers_) fill(l.w, l.in, l.out);
    fill(out_w_, out_b_ - out_w_, 1);
}

VectorXd FfNetwork::forward(const Eigen::Ref<const RowMatrixXd>& x) const {
    if (x.cols() != input_dim_) throw ShapeError("feedforward input has the wrong width");
    RowMatrixXd h = x;
    for (const auto& l : layers_) {
        RowMatrixXd z = h * RowMap(params_.data() + l.w, l.out, l.in).transpose();
        z.rowwise() += params_.segment(l.b, l.out).transpose();
        activate(activation_, z);
        h.swap(z);
    }
    return (h * params_.segment(out_w_, h.cols())).array() + params_(out_b_);
}

double FfNetwork::forward_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return forward(RowMatrixXd(x))(0);
}

void FfNetwork::jacobian(const Eigen::Ref<const RowMatrixXd>& x, Eigen::Ref<VectorXd> out,
                         Eigen::Ref<RowMatrixXd> jac) const {
    if (x.cols() != input_dim_) throw ShapeError("feedforward input has the wrong width");
    if (jac.rows() != x.rows() || jac.cols() != num_params() || out.size() != x.rows())
        throw ShapeError("jacobian buffers have the wrong shape");
    std::vector<RowMatrixXd> acts;
    acts.reserve(layers_.size() + 1);
    acts.emplace_back(x);
    for (const auto& l : layers_) {
        RowMatrixXd z = acts.back() * RowMap(params_.data() + l.w, l.out, l.in).transpose();
        z.rowwise() += params_.segment(l.b, l.out).transpose();
        activate(activation_, z);
        acts.push_back(std::move(z));
    }
    const RowMatrixXd& top = acts.back();
    const auto w_out = params_.segment(out_w_, top.cols());
    out = (top * w_out).array() + params_(out_b_);
    jac.middleCols(out_w_, top.cols()) = top;
    jac.col(out_b_).setOnes();

    if (layers_.empty()) return;
    // g(s, i) = d out(s) / d z_i for the current layer's pre-activations
    RowMatrixXd g = activation_slope(activation_, top).array().rowwise() * w_out.transpose().array();
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& l = layers_[li];
        const RowMatrixXd& below = acts[li];
        for (Index i = 0; i < l.out; ++i)
            jac.middleCols(l.w + i * l.in, l.in) = below.array().colwise() * g.col(i).array();
        jac.middleCols(l.b, l.out) = g;
        if (li > 0)
            g = (g * RowMap(params_.data() + l.w, l.out, l.in)).cwiseProduct(activation_slope(activation_, below));
    }
}

std::optional<VectorXd> lm_step(const Eigen::MatrixXd& jtj, const VectorXd& g, double mu) {
    Eigen::MatrixXd a = jtj;
    a.diagonal().array() += mu;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    VectorXd dx = ldlt.solve(-g);
    if (!dx.allFinite()) return std::nullopt;
    // an indefinite factorisation means mu was too small to regularise rounding
    if (!ldlt.isPositive() && mu > 0.0) return std::nullopt;
    return dx;
}

VectorXd FfModel::predict(const RowMatrixXd& x) const { return target.invert(net.forward(input.apply(x))); }

namespace {

constexpr Index kChunk = 1024;

struct NormalEquations {
    Eigen::MatrixXd jtj;
    VectorXd g;  // J^T e
    double sse = 0.0;
};

void accumulate(const FfNetwork& net, const RowMatrixXd& x, const VectorXd& y, NormalEquations& ne) {
    const Index p = net.num_params();
    ne.jtj.setZero(p, p);
    ne.g.setZero(p);
    ne.sse = 0.0;
    RowMatrixXd jac(std::min(kChunk, x.rows()), p);
    VectorXd out(jac.rows());
    for (Index start = 0; start < x.rows(); start += kChunk) {
        const Index n = std::min(kChunk, x.rows() - start);
        auto jb = jac.topRows(n);
        auto ob = out.head(n);
        net.jacobian(x.middleRows(start, n), ob, jb);
        const VectorXd e = ob - y.segment(start, n);
        ne.jtj.selfadjointView<Eigen::Lower>().rankUpdate(jb.transpose());
        ne.g.noalias() += jb.transpose() * e;
        ne.sse += e.squaredNorm();
    }
    ne.jtj.triangularView<Eigen::StrictlyUpper>() = ne.jtj.transpose();
}

double sse(const FfNetwork& net, const RowMatrixXd& x, const VectorXd& y) {
    return (net.forward(x) - y).squaredNorm();
}

}  // namespace

FfModel ff_train(const RowMatrixXd& x, const VectorXd& y, const FfConfig& config, std::uint64_t seed,
                 TrainingLog* log) {
    config.validate();
    if (x.rows() != y.size()) throw ShapeError("ff_train: inputs and targets differ in length");
    if (x.rows() < 3) throw InsufficientData("ff_train needs at least three training pairs");

    FfModel model;
    model.input = Scaling::fit(x);
    model.target = TargetScaling::fit(y);
    const RowMatrixXd xs = model.input.apply(x);
    const VectorXd ys = model.target.apply(y);

    std::vector<Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = make_rng(seed, "validation-split");
    std::shuffle(order.begin(), order.end(), split_rng);
    const auto n_val = std::clamp<Index>(static_cast<Index>(std::llround(config.val_fraction * double(x.rows()))), 1,
                                         x.rows() - 2);
    std::sort(order.begin(), order.begin() + n_val);
    std::sort(order.begin() + n_val, order.end());
    const std::vector<Index> val_idx(order.begin(), order.begin() + n_val), train_idx(order.begin() + n_val, order.end());
    const RowMatrixXd xt = xs(train_idx, Eigen::all), xv = xs(val_idx, Eigen::all);
    const VectorXd yt = ys(train_idx), yv = ys(val_idx);

    model.net = FfNetwork(x.cols(), config.layer_sizes, config.activation);
    Rng init_rng = make_rng(seed, "init");
    model.net.init_glorot(init_rng);

    TrainingLog local;
    TrainingLog& out = log ? *log : local;
    out = {};
    EarlyStopper stopper(config.patience);
    VectorXd best = model.net.params();
    stopper.update(sse(model.net, xv, yv) / double(yv.size()));

    double mu = config.lm_lambda0;
    NormalEquations ne;
    out.stop_reason = "max_epochs";
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        accumulate(model.net, xt, yt, ne);
        if (!std::isfinite(ne.sse) || !ne.jtj.allFinite()) throw TrainingFailure("feedforward loss became non-finite");
        if (ne.sse == 0.0) {
            out.stop_reason = "exact_fit";
            break;
        }
        if (ne.g.norm() / double(yt.size()) < config.min_grad) {
            out.stop_reason = "min_grad";
            break;
        }
        const VectorXd current = model.net.params();
        bool accepted = false;
        double new_sse = ne.sse;
        while (mu <= config.lm_lambda_max) {
            if (auto dx = lm_step(ne.jtj, ne.g, mu)) {
                model.net.params() = current + *dx;
                new_sse = sse(model.net, xt, yt);
                if (std::isfinite(new_sse) && new_sse < ne.sse) {
                    mu *= config.lm_down;
                    accepted = true;
                    break;
                }
            }
            mu *= config.lm_up;
        }
        if (!accepted) {
            model.net.params() = current;
            out.stop_reason = "max_damping";
            break;
        }
        const double val = sse(model.net, xv, yv) / double(yv.size());
        if (!std::isfinite(val)) throw TrainingFailure("feedforward validation loss became non-finite");
        const bool stop = stopper.update(val);
        if (stopper.improved()) best = model.net.params();
        out.train_loss.push_back(new_sse / double(yt.size()));
        out.val_loss.push_back(val);
        out.best_val_loss.push_back(stopper.best());
        if (stop) {
            out.stop_reason = "validation";
            break;
        }
    }
    model.net.params() = best;
    spdlog::debug("ff_train: {} epochs, stop={}, best val mse={:.3e}", out.train_loss.size(), out.stop_reason,
                  stopper.best());
    return model;
}

}  // namespace eventcast
