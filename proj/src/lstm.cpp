#include "eventcast/lstm.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "eventcast/errors.hpp"

namespace eventcast {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;

void LstmConfig::validate() const {
    if (hidden.empty() || hidden.size() > 3) throw ConfigError("LSTM needs between 1 and 3 layers");
    for (Index h : hidden)
        if (h < 1) throw ConfigError("LSTM hidden units must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
        throw ConfigError("invalid Adam settings");
    if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) throw ConfigError("lr_final_fraction must lie in (0, 1]");
    if (bptt_chunk < 1 || streams < 1) throw ConfigError("bptt_chunk and streams must be >= 1");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
}

namespace {

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
    return (1.0 + (-z).exp()).inverse();
}

}  // namespace

std::pair<VectorXd, VectorXd> lstm_cell_step(const LstmCellWeights& w, const VectorXd& x, const VectorXd& h_prev,
                                             const VectorXd& c_prev) {
    const Index hn = h_prev.size();
    if (w.wx.rows() != 4 * hn || w.wx.cols() != x.size() || w.wh.rows() != 4 * hn || w.wh.cols() != hn ||
        w.b.size() != 4 * hn || c_prev.size() != hn)
        throw ShapeError("lstm_cell_step: inconsistent dimensions");
    const VectorXd z = w.wx * x + w.wh * h_prev + w.b;
    const VectorXd i = sigmoid(z.segment(0, hn).array());
    const VectorXd f = sigmoid(z.segment(hn, hn).array());
    const VectorXd g = z.segment(2 * hn, hn).array().tanh();
    const VectorXd o = sigmoid(z.segment(3 * hn, hn).array());
    VectorXd c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    VectorXd h = o.array() * c.array().tanh();
    return {std::move(h), std::move(c)};
}

LstmNetwork::LstmNetwork(Index input_dim, std::vector<Index> hidden) : input_dim_(input_dim), hidden_(std::move(hidden)) {
    if (input_dim < 1) throw ShapeError("LSTM input dimension must be >= 1");
    if (hidden_.empty()) throw ConfigError("LSTM needs at least one layer");
    Index offset = 0, in = input_dim;
    for (Index h : hidden_) {
        if (h < 1) throw ConfigError("LSTM hidden units must be >= 1");
        Layer l{in, h, offset, offset + 4 * h * in, offset + 4 * h * in + 4 * h * h};
        layers_.push_back(l);
        offset = l.b + 4 * h;
        in = h;
    }
    out_w_ = offset;
    out_b_ = offset + in;
    params_ = VectorXd::Zero(out_b_ + 1);
}

void LstmNetwork::init(Rng& rng) {
    params_.setZero();
    auto fill = [&](Index offset, Index count, Index fan_in, Index fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Index k = 0; k < count; ++k) params_(offset + k) = u(rng);
    };
    for (const auto& l : layers_) {
        fill(l.wx, 4 * l.h * l.in, l.in + l.h, 4 * l.h);
        fill(l.wh, 4 * l.h * l.h, l.in + l.h, 4 * l.h);
        params_.segment(l.b + l.h, l.h).setOnes();
    }
    fill(out_w_, out_b_ - out_w_, out_b_ - out_w_, 1);
}

LstmCellWeights LstmNetwork::layer_weights(std::size_t layer) const {
    const auto& l = layers_.at(layer);
    return {CMap(params_.data() + l.wx, 4 * l.h, l.in), CMap(params_.data() + l.wh, 4 * l.h, l.h),
            params_.segment(l.b, 4 * l.h)};
}

LstmState LstmNetwork::zero_state(Index streams) const {
    LstmState s;
    for (const auto& l : layers_) {
        s.h.push_back(MatrixXd::Zero(l.h, streams));
        s.c.push_back(MatrixXd::Zero(l.h, streams));
    }
    return s;
}

namespace {

// Gates (post-activation), cell and tanh(cell) of one layer at one time step.
struct StepCache {
    MatrixXd gates;
    MatrixXd c;
    MatrixXd tanh_c;
    MatrixXd h;
};

}  // namespace

MatrixXd LstmNetwork::forward(const std::vector<MatrixXd>& x, LstmState& state) const {
    const auto t_len = static_cast<Index>(x.size());
    const Index streams = state.h.empty() ? 0 : state.h[0].cols();
    MatrixXd out(t_len, streams);
    MatrixXd z;
    for (Index t = 0; t < t_len; ++t) {
        const MatrixXd* in = &x[static_cast<std::size_t>(t)];
        if (in->rows() != input_dim_ || in->cols() != streams) throw ShapeError("LSTM input has the wrong shape");
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const auto& l = layers_[li];
            const Index hn = l.h;
            z.noalias() = CMap(params_.data() + l.wx, 4 * hn, l.in) * *in;
            z.noalias() += CMap(params_.data() + l.wh, 4 * hn, hn) * state.h[li];
            z.colwise() += params_.segment(l.b, 4 * hn);
            auto i = sigmoid(z.topRows(hn).array());
            auto f = sigmoid(z.middleRows(hn, hn).array());
            auto g = z.middleRows(2 * hn, hn).array().tanh();
            auto o = sigmoid(z.bottomRows(hn).array());
            state.c[li] = (f * state.c[li].array() + i * g).matrix();
            state.h[li] = (o * state.c[li].array().tanh()).matrix();
            in = &state.h[li];
        }
        out.row(t) = (params_.segment(out_w_, layers_.back().h).transpose() * state.h.back()).array() + params_(out_b_);
    }
    return out;
}

double LstmNetwork::loss_and_gradient(const std::vector<MatrixXd>& x, const MatrixXd& y, LstmState& state,
                                      VectorXd& grad) const {
    const auto t_len = static_cast<Index>(x.size());
    const Index streams = state.h.empty() ? 0 : state.h[0].cols();
    const std::size_t n_layers = layers_.size();
    if (y.rows() != t_len || y.cols() != streams) throw ShapeError("LSTM targets have the wrong shape");
    grad.setZero(num_params());

    const LstmState initial = state;
    std::vector<std::vector<StepCache>> cache(n_layers, std::vector<StepCache>(static_cast<std::size_t>(t_len)));
    MatrixXd yhat(t_len, streams);
    MatrixXd z;
    for (Index t = 0; t < t_len; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const MatrixXd* in = &x[ts];
        if (in->rows() != input_dim_ || in->cols() != streams) throw ShapeError("LSTM input has the wrong shape");
        for (std::size_t li = 0; li < n_layers; ++li) {
            const auto& l = layers_[li];
            const Index hn = l.h;
            auto& sc = cache[li][ts];
            z.noalias() = CMap(params_.data() + l.wx, 4 * hn, l.in) * *in;
            z.noalias() += CMap(params_.data() + l.wh, 4 * hn, hn) * state.h[li];
            z.colwise() += params_.segment(l.b, 4 * hn);
            sc.gates.resize(4 * hn, streams);
            sc.gates.topRows(hn) = sigmoid(z.topRows(hn).array());
            sc.gates.middleRows(hn, hn) = sigmoid(z.middleRows(hn, hn).array());
            sc.gates.middleRows(2 * hn, hn) = z.middleRows(2 * hn, hn).array().tanh();
            sc.gates.bottomRows(hn) = sigmoid(z.bottomRows(hn).array());
            sc.c = (sc.gates.middleRows(hn, hn).array() * state.c[li].array() +
                    sc.gates.topRows(hn).array() * sc.gates.middleRows(2 * hn, hn).array())
                       .matrix();
            sc.tanh_c = sc.c.array().tanh();
            sc.h = (sc.gates.bottomRows(hn).array() * sc.tanh_c.array()).matrix();
            state.c[li] = sc.c;
            state.h[li] = sc.h;
            in = &sc.h;
        }
        yhat.row(t) = (params_.segment(out_w_, layers_.back().h).transpose() * state.h.back()).array() + params_(out_b_);
    }

    const double count = static_cast<double>(t_len * streams);
    const MatrixXd err = yhat - y;
    const double loss = err.squaredNorm() / count;

    const Index top_h = layers_.back().h;
    const auto w_out = params_.segment(out_w_, top_h);
    std::vector<MatrixXd> dh_carry(n_layers), dc_carry(n_layers);
    for (std::size_t li = 0; li < n_layers; ++li) {
        dh_carry[li] = MatrixXd::Zero(layers_[li].h, streams);
        dc_carry[li] = MatrixXd::Zero(layers_[li].h, streams);
    }
    MatrixXd dh, dc, dz, dh_above;
    for (Index t = t_len - 1; t >= 0; --t) {
        const auto ts = static_cast<std::size_t>(t);
        const Eigen::RowVectorXd dy = (2.0 / count) * err.row(t);
        grad.segment(out_w_, top_h).noalias() += cache.back()[ts].h * dy.transpose();
        grad(out_b_) += dy.sum();
        dh_above.noalias() = w_out * dy;
        for (std::size_t li = n_layers; li-- > 0;) {
            const auto& l = layers_[li];
            const Index hn = l.h;
            const auto& sc = cache[li][ts];
            const MatrixXd& c_prev = t > 0 ? cache[li][ts - 1].c : initial.c[li];
            const MatrixXd& h_prev = t > 0 ? cache[li][ts - 1].h : initial.h[li];
            const MatrixXd& in = li > 0 ? cache[li - 1][ts].h : x[ts];
            const auto i = sc.gates.topRows(hn).array();
            const auto f = sc.gates.middleRows(hn, hn).array();
            const auto g = sc.gates.middleRows(2 * hn, hn).array();
            const auto o = sc.gates.bottomRows(hn).array();

            dh = dh_above + dh_carry[li];
            dc = (dh.array() * o * (1.0 - sc.tanh_c.array().square()) + dc_carry[li].array()).matrix();
            dz.resize(4 * hn, streams);
            dz.topRows(hn) = dc.array() * g * i * (1.0 - i);
            dz.middleRows(hn, hn) = dc.array() * c_prev.array() * f * (1.0 - f);
            dz.middleRows(2 * hn, hn) = dc.array() * i * (1.0 - g.square());
            dz.bottomRows(hn) = dh.array() * sc.tanh_c.array() * o * (1.0 - o);
            dc_carry[li] = (dc.array() * f).matrix();

            MMap(grad.data() + l.wx, 4 * hn, l.in).noalias() += dz * in.transpose();
            MMap(grad.data() + l.wh, 4 * hn, hn).noalias() += dz * h_prev.transpose();
            grad.segment(l.b, 4 * hn) += dz.rowwise().sum();
            dh_carry[li].noalias() = CMap(params_.data() + l.wh, 4 * hn, hn).transpose() * dz;
            if (li > 0) dh_above.noalias() = CMap(params_.data() + l.wx, 4 * hn, l.in).transpose() * dz;
        }
    }
    return loss;
}

VectorXd LstmModel::predict_sequence(const RowMatrixXd& p) const {
    const RowMatrixXd ps = input.apply(p);
    LstmState state = net.zero_state(1);
    constexpr Index kBlock = 4096;
    VectorXd out(p.rows());
    std::vector<MatrixXd> x;
    for (Index start = 0; start < p.rows(); start += kBlock) {
        const Index n = std::min(kBlock, p.rows() - start);
        x.assign(static_cast<std::size_t>(n), MatrixXd());
        for (Index t = 0; t < n; ++t) x[static_cast<std::size_t>(t)] = ps.row(start + t).transpose();
        out.segment(start, n) = net.forward(x, state).col(0);
    }
    return target.invert(out);
}

LstmModel lstm_train(const RowMatrixXd& p, const VectorXd& y, const LstmConfig& config, std::uint64_t seed,
                     TrainingLog* log) {
    config.validate();
    if (p.rows() != y.size()) throw ShapeError("lstm_train: inputs and targets differ in length");
    const Index streams = std::min<Index>(config.streams, std::max<Index>(1, p.rows() / 2));
    const Index seg = p.rows() / streams;
    if (seg < 2) throw InsufficientData("lstm_train: sequence too short");

    LstmModel model;
    model.input = Scaling::fit(p);
    model.target = TargetScaling::fit(y);
    const RowMatrixXd ps = model.input.apply(p);
    const VectorXd ys = model.target.apply(y);
    model.net = LstmNetwork(p.cols(), config.hidden);
    Rng rng = make_rng(seed, "init");
    model.net.init(rng);

    TrainingLog local;
    TrainingLog& out = log ? *log : local;
    out = {};
    const Index n = model.net.num_params();
    VectorXd m = VectorXd::Zero(n), v = VectorXd::Zero(n), grad(n);
    long long step = 0;
    std::vector<MatrixXd> x;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double progress = config.max_epochs > 1 ? double(epoch) / double(config.max_epochs - 1) : 0.0;
        const double lr = config.lr * std::pow(config.lr_final_fraction, progress);
        LstmState state = model.net.zero_state(streams);
        double loss_sum = 0.0;
        Index loss_count = 0;
        for (Index start = 0; start < seg; start += config.bptt_chunk) {
            const Index len = std::min(config.bptt_chunk, seg - start);
            x.assign(static_cast<std::size_t>(len), MatrixXd(p.cols(), streams));
            MatrixXd yc(len, streams);
            for (Index s = 0; s < streams; ++s) {
                for (Index t = 0; t < len; ++t) {
                    const Index row = s * seg + start + t;
                    x[static_cast<std::size_t>(t)].col(s) = ps.row(row).transpose();
                    yc(t, s) = ys(row);
                }
            }
            const double loss = model.net.loss_and_gradient(x, yc, state, grad);
            if (!std::isfinite(loss) || !grad.allFinite()) throw TrainingFailure("LSTM loss became non-finite");
            loss_sum += loss * static_cast<double>(len);
            loss_count += len;
            const double norm = grad.norm();
            if (norm > config.clip_norm) {
                grad *= config.clip_norm / norm;
                ++out.clipped_updates;
            }
            ++step;
            m = config.beta1 * m + (1.0 - config.beta1) * grad;
            v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            model.net.params().array() -=
                lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config.eps);
        }
        out.train_loss.push_back(loss_sum / static_cast<double>(loss_count));
    }
    out.stop_reason = "max_epochs";
    if (out.clipped_updates > 0)
        spdlog::info("lstm_train: gradient norm clipped on {} of {} updates", out.clipped_updates, step);
    return model;
}

}  // namespace eventcast
