#include "eventcast/observables.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "eventcast/rng.hpp"
#include "eventcast/trajectory_io.hpp"
#include "json.hpp"

namespace eventcast {

using Eigen::Index;

std::string_view to_string(ObservableKind kind) {
    switch (kind) {
        case ObservableKind::StateCoordinates: return "state-coordinates";
        case ObservableKind::FourierMode: return "fourier-mode";
        case ObservableKind::VorticityProbes: return "vorticity-probes";
    }
    return "?";
}

std::string_view to_string(QoiKind kind) {
    switch (kind) {
        case QoiKind::Coordinate: return "coordinate";
        case QoiKind::MeanVoltage: return "mean-voltage";
        case QoiKind::DissipationRate: return "dissipation-rate";
    }
    return "?";
}

ObservableKind observable_kind_from_string(std::string_view name) {
    for (auto k : {ObservableKind::StateCoordinates, ObservableKind::FourierMode, ObservableKind::VorticityProbes})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown observable kind '" + std::string(name) + "'");
}

QoiKind qoi_kind_from_string(std::string_view name) {
    for (auto k : {QoiKind::Coordinate, QoiKind::MeanVoltage, QoiKind::DissipationRate})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown qoi kind '" + std::string(name) + "'");
}

ObservableSpec ObservableSpec::rossler() {
    ObservableSpec s;
    s.indices = {0, 1};
    s.qoi = QoiKind::Coordinate;
    s.qoi_index = 2;
    return s;
}

ObservableSpec ObservableSpec::fhn() {
    ObservableSpec s;
    s.indices = {0, 1};
    s.qoi = QoiKind::MeanVoltage;
    return s;
}

ObservableSpec ObservableSpec::kolmogorov_fourier() {
    ObservableSpec s;
    s.kind = ObservableKind::FourierMode;
    s.qoi = QoiKind::DissipationRate;
    return s;
}

ObservableSpec ObservableSpec::kolmogorov_probes() {
    ObservableSpec s;
    s.kind = ObservableKind::VorticityProbes;
    s.points = default_probe_points();
    s.qoi = QoiKind::DissipationRate;
    return s;
}

double default_threshold(SystemTag tag) {
    switch (tag) {
        case SystemTag::Rossler: return 10.0;
        case SystemTag::FitzHughNagumo: return 0.3;
        case SystemTag::KolmogorovGrid:
        case SystemTag::KolmogorovDiagnostics: return 0.194;
        case SystemTag::Generic: break;
    }
    throw ConfigError("no default threshold for a generic trajectory");
}

namespace {

bool same_points(const std::vector<Point2>& a, const std::vector<Point2>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
    return true;
}

Observables extract_state(const TrajectoryRecord& traj, const ObservableSpec& spec) {
    if (spec.kind != ObservableKind::StateCoordinates)
        throw ConfigError("observable '" + std::string(to_string(spec.kind)) + "' needs a Kolmogorov trajectory");
    if (spec.indices.empty()) throw ConfigError("no observable coordinates selected");
    Observables out;
    out.p.resize(traj.size(), static_cast<Index>(spec.indices.size()));
    for (std::size_t j = 0; j < spec.indices.size(); ++j) {
        const Index c = spec.indices[j];
        if (c < 0 || c >= traj.dim()) throw ConfigError("observable index out of range");
        out.p.col(static_cast<Index>(j)) = traj.states.col(c);
    }
    switch (spec.qoi) {
        case QoiKind::Coordinate:
            if (spec.qoi_index < 0 || spec.qoi_index >= traj.dim()) throw ConfigError("qoi index out of range");
            out.q = traj.states.col(spec.qoi_index);
            break;
        case QoiKind::MeanVoltage: {
            if (traj.dim() % 2 != 0) throw ConfigError("mean-voltage qoi needs [v1, w1, ..., vn, wn] states");
            const Index n = traj.dim() / 2;
            out.q.resize(traj.size());
            for (Index k = 0; k < traj.size(); ++k) {
                double s = 0.0;
                for (Index i = 0; i < n; ++i) s += traj.states(k, 2 * i);
                out.q(k) = s / static_cast<double>(n);
            }
            break;
        }
        case QoiKind::DissipationRate: throw ConfigError("dissipation-rate qoi needs a Kolmogorov trajectory");
    }
    return out;
}

Observables extract_diagnostics(const TrajectoryRecord& traj, const ObservableSpec& spec) {
    if (spec.qoi != QoiKind::DissipationRate) throw ConfigError("Kolmogorov runs only carry the dissipation rate");
    Observables out;
    out.q = traj.states.col(FlowDiagnosticsLayout::dissipation);
    switch (spec.kind) {
        case ObservableKind::FourierMode:
            if (spec.kx != 1 || spec.ky != 0)
                throw ConfigError("diagnostics records store only the a(1,0) mode; simulate the full grid instead");
            out.p = traj.states.middleCols(FlowDiagnosticsLayout::mode_real, 2);
            break;
        case ObservableKind::VorticityProbes: {
            const Index n_probe = traj.dim() - FlowDiagnosticsLayout::first_probe;
            if (!spec.points.empty() && !same_points(spec.points, default_probe_points()))
                throw ConfigError("diagnostics records store only the default probe points");
            out.p = traj.states.middleCols(FlowDiagnosticsLayout::first_probe, n_probe);
            break;
        }
        case ObservableKind::StateCoordinates: {
            Observables s = extract_state(traj, spec);
            out.p = std::move(s.p);
            break;
        }
    }
    return out;
}

Observables extract_grid(const TrajectoryRecord& traj, const ObservableSpec& spec, FlowParams flow) {
    if (spec.qoi != QoiKind::DissipationRate && spec.kind == ObservableKind::StateCoordinates)
        return extract_state(traj, spec);
    flow.grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(traj.dim()))));
    if (static_cast<Index>(flow.grid) * flow.grid != traj.dim()) throw ShapeError("grid record is not square");
    const Index r = spec.kind == ObservableKind::FourierMode       ? 2
                    : spec.kind == ObservableKind::VorticityProbes ? static_cast<Index>(spec.points.size())
                                                                   : static_cast<Index>(spec.indices.size());
    if (r == 0) throw ConfigError("empty observable selection");
    Observables out;
    out.p.resize(traj.size(), r);
    out.q.resize(traj.size());
    for (Index k = 0; k < traj.size(); ++k) {
        const FlowSnapshot snap = snapshot_from_grid_row(traj, k, flow);
        switch (spec.qoi) {
            case QoiKind::DissipationRate: out.q(k) = energy_dissipation(snap, flow); break;
            case QoiKind::Coordinate: out.q(k) = traj.states(k, spec.qoi_index); break;
            case QoiKind::MeanVoltage: throw ConfigError("mean-voltage qoi needs an FHN trajectory");
        }
        switch (spec.kind) {
            case ObservableKind::FourierMode: {
                const auto a = extract_fourier_mode(snap, spec.kx, spec.ky).a;
                out.p(k, 0) = a.real();
                out.p(k, 1) = a.imag();
                break;
            }
            case ObservableKind::VorticityProbes: {
                const auto v = probe_vorticity(snap, spec.points);
                for (Index j = 0; j < r; ++j) out.p(k, j) = v[static_cast<std::size_t>(j)];
                break;
            }
            case ObservableKind::StateCoordinates:
                for (Index j = 0; j < r; ++j) out.p(k, j) = traj.states(k, spec.indices[static_cast<std::size_t>(j)]);
                break;
        }
    }
    return out;
}

}  // namespace

Observables extract(const TrajectoryRecord& traj, const ObservableSpec& spec, const FlowParams& flow) {
    switch (traj.system_tag) {
        case SystemTag::Rossler:
            if (spec.qoi == QoiKind::MeanVoltage || spec.qoi == QoiKind::DissipationRate)
                throw ConfigError("qoi '" + std::string(to_string(spec.qoi)) + "' does not apply to Rossler");
            return extract_state(traj, spec);
        case SystemTag::FitzHughNagumo:
            if (spec.qoi == QoiKind::DissipationRate) throw ConfigError("dissipation-rate qoi does not apply to FHN");
            return extract_state(traj, spec);
        case SystemTag::KolmogorovDiagnostics: return extract_diagnostics(traj, spec);
        case SystemTag::KolmogorovGrid: return extract_grid(traj, spec, flow);
        case SystemTag::Generic:
            if (spec.qoi != QoiKind::Coordinate) throw ConfigError("generic trajectories support coordinate qoi only");
            return extract_state(traj, spec);
    }
    throw ConfigError("unknown system");
}

Eigen::RowVectorXd column_std(const RowMatrixXd& p) {
    if (p.rows() == 0) return Eigen::RowVectorXd::Zero(p.cols());
    const Eigen::RowVectorXd mean = p.colwise().mean();
    return ((p.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(p.rows())).sqrt();
}

void DelayEmbedding::validate() const {
    if (m < 1) throw DomainError("delay embedding needs m >= 1");
    if (s_steps < 1) throw DomainError("delay spacing must be at least one sample");
}

void embed_row(const RowMatrixXd& p, const DelayEmbedding& emb, Index t, Eigen::Ref<Eigen::RowVectorXd> out) {
    const Index r = p.cols();
    for (Index j = 0; j < emb.m; ++j) out.segment(j * r, r) = p.row(t - j * emb.s_steps);
}

RowMatrixXd delay_embed(const RowMatrixXd& p, const DelayEmbedding& emb) {
    emb.validate();
    const Index h = emb.history();
    if (h >= p.rows()) throw InsufficientData("series too short for the requested delay embedding");
    RowMatrixXd out(p.rows() - h, p.cols() * emb.m);
    for (Index t = h; t < p.rows(); ++t) embed_row(p, emb, t, out.row(t - h));
    return out;
}

void ObservationDataset::validate() const {
    if (!(dt > 0.0)) throw DomainError("dataset dt must be positive");
    if (q.size() != p.rows()) throw ShapeError("p and q lengths differ");
    if (split_index <= 0 || split_index >= size()) throw RangeError("split index must satisfy 0 < split < K");
    if (tau_steps < 0) throw DomainError("tau must be non-negative");
    if (embedding) embedding->validate();
    if (train_end() <= train_begin()) throw InsufficientData("no training pairs for this horizon and embedding");
    if (test_end() <= test_begin()) throw InsufficientData("no test pairs for this horizon and embedding");
    if (!p.allFinite() || !q.allFinite()) throw DomainError("dataset contains non-finite values");
}

namespace {

SupervisedSet pairs(const ObservationDataset& ds, Index begin, Index end) {
    SupervisedSet out;
    const Index n = end - begin;
    out.targets = ds.q.segment(begin + ds.tau_steps, n);
    if (ds.embedding) {
        out.inputs.resize(n, ds.input_dim());
        for (Index t = begin; t < end; ++t) embed_row(ds.p, *ds.embedding, t, out.inputs.row(t - begin));
    } else {
        out.inputs = ds.p.middleRows(begin, n);
    }
    return out;
}

}  // namespace

SupervisedSet training_pairs(const ObservationDataset& ds) { return pairs(ds, ds.train_begin(), ds.train_end()); }
SupervisedSet test_pairs(const ObservationDataset& ds) { return pairs(ds, ds.test_begin(), ds.test_end()); }

Eigen::VectorXd test_targets(const ObservationDataset& ds) {
    return ds.q.segment(ds.test_begin() + ds.tau_steps, ds.test_end() - ds.test_begin());
}

Index to_steps(double duration, double dt) {
    if (!(dt > 0.0)) throw DomainError("sampling step must be positive");
    if (!(duration >= 0.0)) throw DomainError("duration must be non-negative");
    const double ratio = duration / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
        throw DomainError("duration is not a whole number of samples");
    return static_cast<Index>(rounded);
}

ObservationDataset make_dataset(const Observables& obs, double dt, const DatasetOptions& options, double t0) {
    if (obs.p.rows() != obs.q.size()) throw ShapeError("p and q lengths differ");
    if (!(options.split > 0.0 && options.split < 1.0)) throw RangeError("split fraction must lie in (0, 1)");
    ObservationDataset ds;
    ds.dt = dt;
    ds.t0 = t0;
    ds.q = obs.q;
    ds.tau_steps = to_steps(options.tau, dt);
    ds.split_index = static_cast<Index>(std::floor(options.split * static_cast<double>(obs.q.size())));
    ds.q_e = options.q_e;
    ds.noise_alpha_train = options.noise_alpha_train;
    ds.noise_alpha_test = options.noise_alpha_test;
    ds.seed = options.seed;
    ds.embedding = options.embedding;
    if (ds.split_index <= 0 || ds.split_index >= obs.q.size()) throw InsufficientData("series too short to split");

    const Index k = obs.p.rows(), s = ds.split_index;
    ds.p.resize(k, obs.p.cols());
    ds.p.topRows(s) = add_noise(obs.p.topRows(s), options.noise_alpha_train, derive_seed(options.seed, "noise-train"));
    ds.p.bottomRows(k - s) =
        add_noise(obs.p.bottomRows(k - s), options.noise_alpha_test, derive_seed(options.seed, "noise-test"));
    ds.validate();
    return ds;
}

ObservationDataset make_dataset(const TrajectoryRecord& traj, const ObservableSpec& spec, const DatasetOptions& options,
                                const FlowParams& flow) {
    return make_dataset(extract(traj, spec, flow), traj.dt, options, traj.t0);
}

Index count_events(const Eigen::Ref<const Eigen::VectorXd>& q, double q_e) {
    Index events = 0;
    bool inside = false;
    for (Index k = 0; k < q.size(); ++k) {
        const bool above = q(k) > q_e;
        if (above && !inside) ++events;
        inside = above;
    }
    return events;
}

namespace {

void append_double(std::string& line, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    line.append(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw IoError("malformed number '" + std::string(text) + "'");
    return v;
}

}  // namespace

void write_dataset(const std::filesystem::path& csv_path, const ObservationDataset& ds) {
    if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
    std::ofstream os(csv_path, std::ios::binary);
    if (!os) throw IoError("cannot write " + csv_path.string());
    std::string line = "time";
    for (Index j = 0; j < ds.dim(); ++j) line += ",p_" + std::to_string(j + 1);
    line += ",q\n";
    os << line;
    for (Index k = 0; k < ds.size(); ++k) {
        line.clear();
        append_double(line, ds.t0 + static_cast<double>(k) * ds.dt);
        for (Index j = 0; j < ds.dim(); ++j) {
            line += ',';
            append_double(line, ds.p(k, j));
        }
        line += ',';
        append_double(line, ds.q(k));
        line += '\n';
        os << line;
    }

    nlohmann::json meta = {
        {"dt", ds.dt},
        {"t0", ds.t0},
        {"tau_steps", ds.tau_steps},
        {"tau", ds.tau()},
        {"split_index", ds.split_index},
        {"q_e", ds.q_e},
        {"noise_alpha_train", ds.noise_alpha_train},
        {"noise_alpha_test", ds.noise_alpha_test},
        {"seed", ds.seed},
    };
    if (ds.embedding) meta["embedding"] = {{"m", ds.embedding->m}, {"s_steps", ds.embedding->s_steps}};
    std::ofstream js(sidecar_path(csv_path));
    js << meta.dump(2) << '\n';
    if (!os || !js) throw IoError("failed writing dataset " + csv_path.string());
}

ObservationDataset read_dataset(const std::filesystem::path& csv_path) {
    std::ifstream js(sidecar_path(csv_path));
    if (!js) throw IoError("missing dataset metadata for " + csv_path.string());
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad dataset metadata: ") + e.what());
    }
    ObservationDataset ds;
    ds.dt = meta.at("dt").get<double>();
    ds.t0 = meta.at("t0").get<double>();
    ds.tau_steps = meta.at("tau_steps").get<Index>();
    ds.split_index = meta.at("split_index").get<Index>();
    ds.q_e = meta.at("q_e").get<double>();
    ds.noise_alpha_train = meta.at("noise_alpha_train").get<double>();
    ds.noise_alpha_test = meta.at("noise_alpha_test").get<double>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    if (meta.contains("embedding"))
        ds.embedding = DelayEmbedding{meta["embedding"].at("m").get<Index>(), meta["embedding"].at("s_steps").get<Index>()};

    std::ifstream is(csv_path, std::ios::binary);
    if (!is) throw IoError("cannot read " + csv_path.string());
    std::string line;
    std::getline(is, line);
    const Index cols = static_cast<Index>(std::count(line.begin(), line.end(), ','));
    if (cols < 2) throw IoError("dataset header has no observables");
    std::vector<double> values;
    Index rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::string_view rest(line);
        for (Index c = 0; c <= cols; ++c) {
            const auto comma = rest.find(',');
            if ((comma == std::string_view::npos) != (c == cols)) throw IoError("ragged dataset row");
            const auto field = rest.substr(0, comma);
            if (c > 0) values.push_back(parse_double(field));
            if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
        }
        ++rows;
    }
    const Index r = cols - 1;
    ds.p.resize(rows, r);
    ds.q.resize(rows);
    for (Index k = 0; k < rows; ++k) {
        for (Index j = 0; j < r; ++j) ds.p(k, j) = values[static_cast<std::size_t>(k * cols + j)];
        ds.q(k) = values[static_cast<std::size_t>(k * cols + r)];
    }
    ds.validate();
    return ds;
}

}  // namespace eventcast
