#include "eventcast/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "eventcast/errors.hpp"
#include "json.hpp"

namespace eventcast {

using Eigen::Index;

std::optional<double> ConfusionCounts::precision() const {
    if (tp + fp == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::optional<double> ConfusionCounts::recall() const {
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double nrmse(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat) {
    if (q.size() != q_hat.size()) throw ShapeError("nrmse: length mismatch");
    if (q.size() < 2) throw InsufficientData("nrmse needs at least two samples");
    const double n = static_cast<double>(q.size());
    const double sigma = std::sqrt((q.array() - q.mean()).square().sum() / n);
    if (!(sigma > 0.0)) throw DegenerateTarget("nrmse: target series is constant");
    return std::sqrt((q - q_hat).squaredNorm() / n) / sigma;
}

ConfusionCounts classify(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat,
                         double q_e, double q_hat_e) {
    if (q.size() != q_hat.size()) throw ShapeError("classify: length mismatch");
    ConfusionCounts c;
    for (Index k = 0; k < q.size(); ++k) {
        const bool truth = q(k) > q_e, pred = q_hat(k) > q_hat_e;
        if (truth && pred) ++c.tp;
        else if (truth) ++c.fn;
        else if (pred) ++c.fp;
        else ++c.tn;
    }
    return c;
}

double pr_area(std::vector<double> recall, std::vector<double> precision) {
    if (recall.size() != precision.size()) throw ShapeError("pr_area: length mismatch");
    if (recall.empty()) return 0.0;
    std::vector<std::size_t> order(recall.size());
    std::iota(order.begin(), order.end(), 0);
    // walking down in threshold: recall rises, and at equal recall precision falls
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return recall[a] != recall[b] ? recall[a] < recall[b] : precision[a] > precision[b];
    });
    double prev_r = 0.0, prev_p = precision[order.front()];
    double area = 0.0;
    for (std::size_t i : order) {
        area += 0.5 * (recall[i] - prev_r) * (precision[i] + prev_p);
        prev_r = recall[i];
        prev_p = precision[i];
    }
    return std::clamp(area, 0.0, 1.0);
}

PrCurve pr_curve_on_grid(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat,
                         double q_e, const std::vector<double>& thresholds) {
    if (q.size() != q_hat.size()) throw ShapeError("pr_curve: length mismatch");
    const Index n = q.size();
    const Index events = (q.array() > q_e).count();
    if (events == 0) throw EvaluationError("no extreme events in the evaluated series; recall is undefined");

    // predictions sorted ascending, with suffix counts of true events
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return q_hat(a) < q_hat(b); });
    std::vector<double> sorted(order.size());
    std::vector<Index> events_above(order.size() + 1, 0);
    for (Index i = n - 1; i >= 0; --i) {
        const Index k = order[static_cast<std::size_t>(i)];
        sorted[static_cast<std::size_t>(i)] = q_hat(k);
        events_above[static_cast<std::size_t>(i)] = events_above[static_cast<std::size_t>(i + 1)] + (q(k) > q_e ? 1 : 0);
    }

    PrCurve curve;
    curve.grid_size = static_cast<Index>(thresholds.size());
    for (double th : thresholds) {
        const auto first_pos = static_cast<Index>(std::upper_bound(sorted.begin(), sorted.end(), th) - sorted.begin());
        ConfusionCounts c;
        c.tp = events_above[static_cast<std::size_t>(first_pos)];
        c.fp = (n - first_pos) - c.tp;
        c.fn = events - c.tp;
        c.tn = n - c.tp - c.fp - c.fn;
        const auto prec = c.precision();
        if (!prec) continue;
        curve.thresholds.push_back(th);
        curve.precision.push_back(*prec);
        curve.recall.push_back(*c.recall());
        curve.counts.push_back(c);
    }
    curve.auc = pr_area(curve.recall, curve.precision);
    return curve;
}

std::vector<double> threshold_grid(const Eigen::Ref<const Eigen::VectorXd>& q_hat, Index grid_size) {
    if (grid_size < 2) throw DomainError("threshold grid needs at least two points");
    if (q_hat.size() == 0) throw InsufficientData("threshold grid: empty series");
    std::vector<double> sorted(q_hat.data(), q_hat.data() + q_hat.size());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front(), hi = sorted.back();
    const double eps = 1e-6 * std::max(hi - lo, std::max(std::abs(lo), std::abs(hi))) + 1e-12;
    const auto n = static_cast<Index>(sorted.size());
    const Index last = grid_size - 1;
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(2 * grid_size));
    const double a = lo - eps, b = hi + eps;
    for (Index i = 0; i <= last; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(last);
        grid.push_back(i == last ? b : a + f * (b - a));
    }
    for (Index i = 1; i < last; ++i) {
        const Index rank = (i * n + last - 1) / last - 1;  // ceil(i n / last) - 1
        grid.push_back(sorted[static_cast<std::size_t>(rank)]);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

std::vector<double> event_thresholds(const Eigen::Ref<const Eigen::VectorXd>& q,
                                     const Eigen::Ref<const Eigen::VectorXd>& q_hat, double q_e, Index grid_size) {
    if (grid_size < 2) throw DomainError("threshold grid needs at least two points");
    if (q.size() != q_hat.size()) throw ShapeError("event_thresholds: length mismatch");
    std::vector<double> distinct(q_hat.data(), q_hat.data() + q_hat.size());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> at_events;
    for (Index k = 0; k < q.size(); ++k)
        if (q(k) > q_e) at_events.push_back(q_hat(k));
    std::sort(at_events.begin(), at_events.end());
    at_events.erase(std::unique(at_events.begin(), at_events.end()), at_events.end());

    std::vector<double> picked;
    const auto m = static_cast<Index>(at_events.size());
    if (m <= grid_size) {
        picked = at_events;
    } else {
        const Index last = grid_size - 1;
        picked.push_back(at_events.front());
        for (Index i = 1; i <= last; ++i) picked.push_back(at_events[static_cast<std::size_t>((i * m + last - 1) / last - 1)]);
    }
    std::vector<double> out;
    for (double v : picked) {
        out.push_back(v);  // v itself excluded
        const auto it = std::lower_bound(distinct.begin(), distinct.end(), v);
        if (it != distinct.begin()) out.push_back(*std::prev(it));  // v included
    }
    return out;
}

PrCurve pr_curve(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat, double q_e,
                 Index grid_size) {
    if (!q_hat.allFinite()) throw EvaluationError("pr_curve: non-finite predictions");
    std::vector<double> grid = threshold_grid(q_hat, grid_size);
    const auto extra = event_thresholds(q, q_hat, q_e, grid_size);
    grid.insert(grid.end(), extra.begin(), extra.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    PrCurve curve = pr_curve_on_grid(q, q_hat, q_e, grid);
    curve.grid_size = grid_size;
    return curve;
}

RepetitionStats repetition_stats(const std::vector<double>& values) {
    if (values.empty()) throw DomainError("repetition_stats: no values");
    RepetitionStats s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    s.min = *mn;
    s.max = *mx;
    return s;
}

EvalReport evaluate(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat,
                    double q_e, Index grid_size) {
    EvalReport r;
    r.nrmse = nrmse(q, q_hat);
    r.sigma_q = std::sqrt((q.array() - q.mean()).square().mean());
    r.curve = pr_curve(q, q_hat, q_e, grid_size);
    return r;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_report(const std::filesystem::path& csv_path, const EvalReport& report) {
    if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
    std::ofstream os(csv_path, std::ios::binary);
    if (!os) throw IoError("cannot write " + csv_path.string());
    os << "threshold,precision,recall,tp,fp,fn,tn\n";
    const auto& c = report.curve;
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
        os << format_double(c.thresholds[i]) << ',' << format_double(c.precision[i]) << ','
           << format_double(c.recall[i]) << ',' << c.counts[i].tp << ',' << c.counts[i].fp << ',' << c.counts[i].fn
           << ',' << c.counts[i].tn << '\n';
    }
    nlohmann::json summary = {
        {"preset", report.preset},
        {"nrmse", report.nrmse},
        {"auc", report.auc()},
        {"grid_size", c.grid_size},
        {"sigma_q", report.sigma_q},
        {"tau", report.tau},
        {"alpha_train", report.noise_alpha_train},
        {"alpha", report.noise_alpha_test},
        {"seed", report.seed},
        {"repetition", report.repetition},
    };
    auto json_path = csv_path;
    json_path.replace_extension(".json");
    std::ofstream js(json_path, std::ios::binary);
    js << summary.dump(2) << '\n';
    if (!os || !js) throw IoError("failed writing report " + csv_path.string());
}

}  // namespace eventcast
