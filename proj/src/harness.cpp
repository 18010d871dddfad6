#include "eventcast/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <thread>

#include "eventcast/config.hpp"
#include "eventcast/errors.hpp"
#include "eventcast/rng.hpp"
#include "eventcast/trajectory_io.hpp"

namespace eventcast {

using Eigen::Index;
using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(SystemKind kind) {
    switch (kind) {
        case SystemKind::Rossler: return "rossler";
        case SystemKind::Fhn: return "fhn";
        case SystemKind::Kolmogorov: return "kolmogorov";
    }
    return "?";
}

SystemKind system_kind_from_string(std::string_view name) {
    for (auto k : {SystemKind::Rossler, SystemKind::Fhn, SystemKind::Kolmogorov})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown system '" + std::string(name) + "'");
}

SystemSpec SystemSpec::defaults(SystemKind kind) {
    SystemSpec s;
    s.kind = kind;
    switch (kind) {
        case SystemKind::Rossler:
            s.duration = 600.0;
            s.dt = 0.05;
            s.discard = 100.0;
            break;
        case SystemKind::Fhn:
            s.duration = 50100.0;
            s.dt = 1.0;
            s.discard = 100.0;
            break;
        case SystemKind::Kolmogorov:
            s.duration = 20000.0;
            s.dt = 0.2;
            s.discard = 20.0;
            break;
    }
    return s;
}

SystemTag SystemSpec::record_tag() const {
    switch (kind) {
        case SystemKind::Rossler: return SystemTag::Rossler;
        case SystemKind::Fhn: return SystemTag::FitzHughNagumo;
        case SystemKind::Kolmogorov: return SystemTag::KolmogorovDiagnostics;
    }
    return SystemTag::Generic;
}

void SystemSpec::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("system.dt must be positive");
    if (!(discard >= 0.0)) throw ConfigError("system.discard must be non-negative");
    if (!(duration > discard + dt) || !std::isfinite(duration))
        throw ConfigError("system.duration must exceed the discarded transient by at least one sample");
    if (kind == SystemKind::Fhn && fhn_units < 1) throw ConfigError("system.units must be positive");
    if (kind == SystemKind::Kolmogorov) {
        FlowParams f = flow;
        f.dt_sample = dt;
        f.discard = discard;
        f.validate();
    }
}

json SystemSpec::to_json() const {
    json j = {{"kind", std::string(to_string(kind))}, {"duration", duration}, {"dt", dt}, {"discard", discard}};
    switch (kind) {
        case SystemKind::Rossler:
            j["x0"] = {rossler_x0(0), rossler_x0(1), rossler_x0(2)};
            j["a"] = rossler.a;
            j["b"] = rossler.b;
            j["c"] = rossler.c;
            break;
        case SystemKind::Fhn:
            j["units"] = fhn_units;
            j["v0"] = fhn_v0;
            j["w0"] = fhn_w0;
            break;
        case SystemKind::Kolmogorov:
            j["grid"] = flow.grid;
            j["reynolds"] = flow.reynolds;
            j["forcing_wavenumber"] = flow.forcing_wavenumber;
            j["dt_solver"] = flow.dt_solver;
            j["cfl_limit"] = flow.cfl_limit;
            break;
    }
    return j;
}

TrajectoryRecord simulate_system(const SystemSpec& spec, std::uint64_t master_seed) {
    spec.validate();
    IntegrationOptions o;
    o.discard = spec.discard;
    switch (spec.kind) {
        case SystemKind::Rossler: return simulate_rossler(spec.rossler_x0, spec.duration, spec.dt, spec.rossler, o);
        case SystemKind::Fhn:
            return simulate_fhn(FhnParams::defaults(spec.fhn_units), spec.duration, spec.dt, o, spec.fhn_v0, spec.fhn_w0);
        case SystemKind::Kolmogorov: {
            FlowParams f = spec.flow;
            f.dt_sample = spec.dt;
            f.discard = spec.discard;
            return simulate_flow_diagnostics(f, derive_seed(master_seed, "simulation"), spec.duration);
        }
    }
    throw ConfigError("unknown system");
}

namespace {

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Only the flow draws a random initial condition, so only its key carries the seed.
json cache_key(const SystemSpec& spec, std::uint64_t master_seed) {
    json key = {{"format", 1}, {"system", spec.to_json()}};
    if (spec.kind == SystemKind::Kolmogorov) key["simulation_seed"] = derive_seed(master_seed, "simulation");
    return key;
}

}  // namespace

fs::path cache_entry(const SystemSpec& spec, std::uint64_t master_seed, const fs::path& cache_dir) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a(cache_key(spec, master_seed).dump())));
    return cache_dir / (std::string(to_string(spec.kind)) + "-" + hex + ".traj");
}

TrajectoryRecord cached_trajectory(const SystemSpec& spec, std::uint64_t master_seed, const fs::path& cache_dir,
                                   bool* simulated) {
    const fs::path entry = cache_entry(spec, master_seed, cache_dir);
    if (simulated) *simulated = false;
    if (fs::exists(entry) && fs::exists(sidecar_path(entry))) {
        spdlog::info("trajectory cache hit: {}", entry.string());
        return read_trajectory(entry);
    }
    fs::create_directories(cache_dir);
    if (spec.kind == SystemKind::Kolmogorov) set_fft_wisdom_file(cache_dir / "fftw.wisdom");
    spdlog::info("simulating {} for {} time units", to_string(spec.kind), spec.duration);
    TrajectoryRecord rec = simulate_system(spec, master_seed);
    const fs::path partial = entry.string() + ".partial";
    write_trajectory(partial, rec);
    fs::rename(sidecar_path(partial), sidecar_path(entry));
    fs::rename(partial, entry);
    std::ofstream(entry.string() + ".key.json") << cache_key(spec, master_seed).dump(2) << '\n';
    if (simulated) *simulated = true;
    return rec;
}

namespace {

FfConfig ff_preset(std::vector<Index> layers) {
    FfConfig c;
    c.layer_sizes = std::move(layers);
    c.activation = Activation::Tanh;
    return c;
}

LstmConfig lstm_preset(std::vector<Index> hidden) {
    LstmConfig c;
    c.hidden = std::move(hidden);
    return c;
}

RcConfig rc_preset(Index nodes, double rho, double leak, double input_density, double reservoir_density,
                   double beta) {
    RcConfig c;
    c.num_nodes = nodes;
    c.spectral_radius = rho;
    c.leaking_rate = leak;
    c.input_density = input_density;
    c.reservoir_density = reservoir_density;
    c.ridge_beta = beta;
    return c;
}

std::vector<Preset> build_registry() {
    using K = SystemKind;
    const auto ros = ObservableSpec::rossler();
    const auto fhn = ObservableSpec::fhn();
    const auto kff = ObservableSpec::kolmogorov_fourier();
    const auto kvp = ObservableSpec::kolmogorov_probes();
    return {
        {"rossler-ff", K::Rossler, ros, ff_preset({6, 6, 6}), EmbeddingSpec{3, 1.0}, 5.0, 0.0},
        {"rossler-lstm", K::Rossler, ros, lstm_preset({55, 55}), std::nullopt, 5.0, 0.0},
        {"rossler-rc-opt", K::Rossler, ros, rc_preset(850, 0.3, 1.0, 1.0, 0.2, 1e-4), std::nullopt, 5.0, 0.0},
        {"rossler-rc-robust", K::Rossler, ros, rc_preset(50, 0.3, 1.0, 1.0, 0.2, 1e-4), std::nullopt, 5.0, 0.0},
        {"fhn-ff", K::Fhn, fhn, ff_preset({8, 8, 8}), EmbeddingSpec{2, 2.0}, 10.0, 0.2},
        {"fhn-lstm", K::Fhn, fhn, lstm_preset({64, 64}), std::nullopt, 10.0, 0.0},
        {"fhn-rc", K::Fhn, fhn, rc_preset(500, 0.9, 0.3, 1.0, 0.9, 1e-4), std::nullopt, 10.0, 0.0},
        {"kf-fourier-ff", K::Kolmogorov, kff, ff_preset({4, 4, 4}), EmbeddingSpec{8, 0.2}, 1.0, 0.0},
        {"kf-fourier-lstm", K::Kolmogorov, kff, lstm_preset({32, 32, 32}), std::nullopt, 1.0, 0.0},
        {"kf-fourier-rc", K::Kolmogorov, kff, rc_preset(600, 0.9, 1.0, 1.0, 0.2, 0.1), std::nullopt, 1.0, 0.0},
        {"kf-vorticity-ff", K::Kolmogorov, kvp, ff_preset({8, 8, 8, 8}), EmbeddingSpec{12, 0.2}, 1.0, 0.0},
        {"kf-vorticity-lstm", K::Kolmogorov, kvp, lstm_preset({16, 16}), std::nullopt, 1.0, 0.0},
        {"kf-vorticity-rc", K::Kolmogorov, kvp, rc_preset(1000, 0.2, 0.3, 0.3, 0.2, 1e-4), std::nullopt, 1.0, 0.0},
    };
}

}  // namespace

const std::vector<Preset>& preset_registry() {
    static const std::vector<Preset> registry = build_registry();
    return registry;
}

const Preset& find_preset(std::string_view name) {
    for (const auto& p : preset_registry())
        if (p.name == name) return p;
    throw ConfigError("unknown preset '" + std::string(name) + "'");
}

namespace {

void check_keys(const json& table, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!table.is_object()) throw ConfigError("'" + std::string(where) + "' must be a table");
    for (const auto& [key, value] : table.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    }
}

template <typename T>
void take(const json& table, const char* key, T& out) {
    if (!table.contains(key)) return;
    try {
        out = table.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

std::vector<double> number_list(const json& table, const char* key, std::vector<double> fallback) {
    if (!table.contains(key)) return fallback;
    const json& v = table.at(key);
    try {
        if (v.is_number()) return {v.get<double>()};
        return v.get<std::vector<double>>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("'") + key + "' must be a number or a list of numbers");
    }
}

ObservableSpec default_observable(SystemKind kind) {
    switch (kind) {
        case SystemKind::Rossler: return ObservableSpec::rossler();
        case SystemKind::Fhn: return ObservableSpec::fhn();
        case SystemKind::Kolmogorov: return ObservableSpec::kolmogorov_fourier();
    }
    return {};
}

PredictorConfig default_predictor(PredictorKind kind) {
    switch (kind) {
        case PredictorKind::Feedforward: return FfConfig{};
        case PredictorKind::Lstm: return LstmConfig{};
        case PredictorKind::Reservoir: return RcConfig{};
    }
    return FfConfig{};
}

void apply_system(const json& t, SystemSpec& s) {
    check_keys(t, "[system]",
               {"kind", "duration", "dt", "discard", "x0", "a", "b", "c", "units", "v0", "w0", "grid", "reynolds",
                "forcing_wavenumber", "dt_solver", "cfl_limit"});
    take(t, "duration", s.duration);
    take(t, "dt", s.dt);
    take(t, "discard", s.discard);
    if (t.contains("x0")) {
        std::vector<double> x0;
        take(t, "x0", x0);
        if (x0.size() != 3) throw ConfigError("system.x0 needs three entries");
        s.rossler_x0 = {x0[0], x0[1], x0[2]};
    }
    take(t, "a", s.rossler.a);
    take(t, "b", s.rossler.b);
    take(t, "c", s.rossler.c);
    take(t, "units", s.fhn_units);
    take(t, "v0", s.fhn_v0);
    take(t, "w0", s.fhn_w0);
    take(t, "grid", s.flow.grid);
    take(t, "reynolds", s.flow.reynolds);
    take(t, "forcing_wavenumber", s.flow.forcing_wavenumber);
    take(t, "dt_solver", s.flow.dt_solver);
    take(t, "cfl_limit", s.flow.cfl_limit);
}

void apply_observable(const json& t, ObservableSpec& o) {
    check_keys(t, "[observable]", {"kind", "indices", "qoi", "qoi_index", "kx", "ky", "points"});
    if (t.contains("kind")) {
        const auto kind = observable_kind_from_string(t.at("kind").get<std::string>());
        if (kind != o.kind) {
            o = kind == ObservableKind::FourierMode       ? ObservableSpec::kolmogorov_fourier()
                : kind == ObservableKind::VorticityProbes ? ObservableSpec::kolmogorov_probes()
                                                          : ObservableSpec::rossler();
        }
    }
    take(t, "indices", o.indices);
    if (t.contains("qoi")) o.qoi = qoi_kind_from_string(t.at("qoi").get<std::string>());
    take(t, "qoi_index", o.qoi_index);
    take(t, "kx", o.kx);
    take(t, "ky", o.ky);
    if (t.contains("points")) {
        std::vector<std::vector<double>> pts;
        take(t, "points", pts);
        o.points.clear();
        for (const auto& p : pts) {
            if (p.size() != 2) throw ConfigError("observable.points entries are [x, y] pairs");
            o.points.push_back({p[0], p[1]});
        }
    }
}

json observable_json(const ObservableSpec& o) {
    json j = {{"kind", std::string(to_string(o.kind))}, {"qoi", std::string(to_string(o.qoi))}};
    switch (o.kind) {
        case ObservableKind::StateCoordinates:
            j["indices"] = o.indices;
            if (o.qoi == QoiKind::Coordinate) j["qoi_index"] = o.qoi_index;
            break;
        case ObservableKind::FourierMode:
            j["kx"] = o.kx;
            j["ky"] = o.ky;
            break;
        case ObservableKind::VorticityProbes: {
            json pts = json::array();
            for (const auto& p : o.points) pts.push_back({p.x, p.y});
            j["points"] = pts;
            break;
        }
    }
    return j;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    check_keys(doc, "the experiment file",
               {"name", "preset", "seed", "repetitions", "tau", "noise_train", "noise_test", "q_e", "split",
                "grid_size", "event_durations", "output", "cache", "threads", "save_models", "system", "observable",
                "predictor", "embedding"});
    ExperimentConfig c;
    const json empty = json::object();
    const json& sys = doc.contains("system") ? doc.at("system") : empty;
    const json& pred = doc.contains("predictor") ? doc.at("predictor") : empty;

    std::optional<double> q_e_default;
    if (doc.contains("preset")) {
        c.preset = doc.at("preset").get<std::string>();
        const Preset& p = find_preset(c.preset);
        c.system = SystemSpec::defaults(p.system);
        c.observable = p.observable;
        c.predictor = p.predictor;
        c.embedding = p.embedding;
        c.taus = {p.tau};
        c.noise_train = {p.noise_train};
        c.name = p.name;
    } else {
        if (!sys.contains("kind") || !pred.contains("kind"))
            throw ConfigError("without a preset, [system] and [predictor] must name their kind");
    }
    if (sys.contains("kind")) {
        const auto kind = system_kind_from_string(sys.at("kind").get<std::string>());
        if (c.preset.empty() || kind != c.system.kind) {
            c.system = SystemSpec::defaults(kind);
            c.observable = default_observable(kind);
        }
    }
    apply_system(sys, c.system);
    if (doc.contains("observable")) apply_observable(doc.at("observable"), c.observable);

    if (pred.is_object()) {
        json settings = pred;
        PredictorKind kind = kind_of(c.predictor);
        if (settings.contains("kind")) {
            const auto requested = predictor_kind_from_string(settings.at("kind").get<std::string>());
            if (c.preset.empty() || requested != kind) {
                c.predictor = default_predictor(requested);
                if (requested != PredictorKind::Feedforward) c.embedding.reset();
            }
            kind = requested;
            settings.erase("kind");
        }
        json merged = eventcast::to_json(c.predictor);
        merged.update(settings);
        for (const auto& [key, value] : settings.items()) {
            if (!eventcast::to_json(default_predictor(kind)).contains(key))
                throw ConfigError("unknown key '" + key + "' in [predictor]");
        }
        c.predictor = predictor_config_from_json(kind, merged);
    } else if (!pred.is_null()) {
        throw ConfigError("'predictor' must be a table");
    }

    if (doc.contains("embedding")) {
        const json& e = doc.at("embedding");
        check_keys(e, "[embedding]", {"m", "spacing"});
        EmbeddingSpec spec = c.embedding.value_or(EmbeddingSpec{});
        take(e, "m", spec.m);
        take(e, "spacing", spec.spacing);
        c.embedding = spec;
    }

    take(doc, "name", c.name);
    take(doc, "seed", c.seed);
    take(doc, "repetitions", c.repetitions);
    c.taus = number_list(doc, "tau", c.taus);
    c.noise_train = number_list(doc, "noise_train", c.noise_train);
    c.noise_test = number_list(doc, "noise_test", c.noise_test);
    c.event_durations = number_list(doc, "event_durations", c.event_durations);
    if (doc.contains("q_e")) q_e_default = doc.at("q_e").get<double>();
    c.q_e = q_e_default.value_or(default_threshold(c.system.record_tag()));
    take(doc, "split", c.split);
    take(doc, "grid_size", c.grid_size);
    std::string out = c.output_dir.string();
    std::string cache = c.cache_dir.string();
    take(doc, "output", out);
    take(doc, "cache", cache);
    c.output_dir = out;
    c.cache_dir = cache;
    take(doc, "threads", c.threads);
    take(doc, "save_models", c.save_models);
    if (c.name.empty()) c.name = std::string(to_string(c.system.kind)) + "-" + std::string(to_string(kind_of(c.predictor)));
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_preset(std::string_view preset) {
    return from_json({{"preset", std::string(preset)}});
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".json") {
        std::ifstream is(path);
        if (!is) throw IoError("cannot read " + path.string());
        try {
            return from_json(json::parse(is));
        } catch (const json::exception& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    }
    return from_json(read_toml(path));
}

namespace {

void check_steps(double duration, double dt, const char* what) {
    try {
        to_steps(duration, dt);
    } catch (const Error&) {
        throw ConfigError(std::string(what) + " must be a whole number of samples (dt = " + format_double(dt) + ")");
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    system.validate();
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
    if (taus.empty()) throw ConfigError("at least one tau is required");
    for (double t : taus) {
        if (!(t >= 0.0)) throw ConfigError("tau must be non-negative");
        check_steps(t, system.dt, "tau");
    }
    if (noise_train.empty() || noise_test.empty()) throw ConfigError("noise lists must not be empty");
    for (const auto* list : {&noise_train, &noise_test})
        for (double a : *list)
            if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("noise intensities must lie in [0, 1]");
    if (!(split > 0.0 && split < 1.0)) throw ConfigError("split must lie in (0, 1)");
    if (grid_size < 2) throw ConfigError("grid_size must be at least 2");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (!std::isfinite(q_e)) throw ConfigError("q_e must be finite");
    for (std::size_t i = 0; i < event_durations.size(); ++i) {
        if (!(event_durations[i] > 0.0)) throw ConfigError("event durations must be positive");
        if (i > 0 && !(event_durations[i] > event_durations[i - 1]))
            throw ConfigError("event durations must be ascending");
        check_steps(event_durations[i], system.dt, "event durations");
    }
    if (embedding) {
        if (kind_of(predictor) != PredictorKind::Feedforward)
            throw ConfigError("delay embedding applies to feedforward predictors only");
        if (embedding->m < 1) throw ConfigError("embedding.m must be at least 1");
        if (embedding->m > 1) {
            if (!(embedding->spacing > 0.0)) throw ConfigError("embedding.spacing must be positive");
            check_steps(embedding->spacing, system.dt, "embedding.spacing");
        }
    }
    const bool flow = system.kind == SystemKind::Kolmogorov;
    const bool spectral_obs = observable.kind != ObservableKind::StateCoordinates;
    if (flow != spectral_obs) throw ConfigError("observable kind does not match the system");
    if (flow && observable.qoi != QoiKind::DissipationRate) throw ConfigError("the flow's quantity of interest is D");
}

json ExperimentConfig::to_json() const {
    json j = {{"name", name},
              {"preset", preset},
              {"seed", seed},
              {"repetitions", repetitions},
              {"tau", taus},
              {"noise_train", noise_train},
              {"noise_test", noise_test},
              {"q_e", q_e},
              {"split", split},
              {"grid_size", grid_size},
              {"event_durations", event_durations},
              {"output", output_dir.string()},
              {"cache", cache_dir.string()},
              {"threads", threads},
              {"save_models", save_models},
              {"system", system.to_json()},
              {"observable", observable_json(observable)}};
    json p = eventcast::to_json(predictor);
    p["kind"] = std::string(to_string(kind_of(predictor)));
    j["predictor"] = p;
    if (embedding) j["embedding"] = {{"m", embedding->m}, {"spacing", embedding->spacing}};
    return j;
}

DatasetOptions ExperimentConfig::dataset_options(double tau, double alpha_train, double alpha_test) const {
    DatasetOptions o;
    o.tau = tau;
    o.split = split;
    o.q_e = q_e;
    o.noise_alpha_train = alpha_train;
    o.noise_alpha_test = alpha_test;
    o.seed = seed;
    if (embedding && embedding->m > 1) o.embedding = DelayEmbedding{embedding->m, to_steps(embedding->spacing, system.dt)};
    return o;
}

bool ExperimentResult::all_ok() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.ok; });
}

const SummaryRow& ExperimentResult::row(double tau, double alpha_train, double alpha_test) const {
    for (const auto& s : summary)
        if (s.tau == tau && s.alpha_train == alpha_train && s.alpha_test == alpha_test) return s;
    throw RangeError("no summary row for that sweep point");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Runs job(i) for i in [0, n) on up to `threads` workers.
template <typename Job>
void parallel_for(std::size_t n, unsigned threads, Job job) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) job(i);
        });
    }
}

RepetitionStats stats_or_nan(const std::vector<double>& v) {
    if (v.empty()) return {kNaN, kNaN, kNaN};
    return repetition_stats(v);
}

std::string num(double v) { return std::isnan(v) ? "nan" : format_double(v); }

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

std::string point_tag(double tau, double a_train, double a_test) {
    return "tau" + format_double(tau) + "_train" + format_double(a_train) + "_test" + format_double(a_test);
}

std::ofstream open_csv(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

void write_config_copy(const ExperimentConfig& config) {
    fs::create_directories(config.output_dir);
    std::ofstream(config.output_dir / "config.json", std::ios::binary) << config.to_json().dump(2) << '\n';
}

void write_runs(const ExperimentConfig& config, const ExperimentResult& result) {
    const fs::path reports = config.output_dir / "reports";
    fs::create_directories(reports);
    auto os = open_csv(config.output_dir / "runs.csv");
    os << "tau,alpha_train,alpha_test,repetition,init_seed,status,nrmse,auc,sigma_q,train_events,test_events,"
          "stop_reason,error\n";
    for (const auto& r : result.runs) {
        os << num(r.tau) << ',' << num(r.alpha_train) << ',' << num(r.alpha_test) << ',' << r.repetition << ','
           << r.init_seed << ',' << (r.ok ? "ok" : "failed") << ',' << num(r.ok ? r.report.nrmse : kNaN) << ','
           << num(r.ok ? r.report.auc() : kNaN) << ',' << num(r.ok ? r.report.sigma_q : kNaN) << ','
           << r.train_events << ',' << r.test_events << ',' << r.stop_reason << ',' << quoted(r.error) << '\n';
        if (r.ok) {
            write_report(reports / (point_tag(r.tau, r.alpha_train, r.alpha_test) + "_rep" +
                                    std::to_string(r.repetition) + ".csv"),
                         r.report);
        }
    }
    auto ss = open_csv(config.output_dir / "summary.csv");
    ss << "tau,alpha_train,alpha_test,succeeded,failed,nrmse_min,nrmse_mean,nrmse_max,auc_min,auc_mean,auc_max\n";
    for (const auto& s : result.summary) {
        ss << num(s.tau) << ',' << num(s.alpha_train) << ',' << num(s.alpha_test) << ',' << s.succeeded << ','
           << s.failed << ',' << num(s.nrmse.min) << ',' << num(s.nrmse.mean) << ',' << num(s.nrmse.max) << ','
           << num(s.auc.min) << ',' << num(s.auc.mean) << ',' << num(s.auc.max) << '\n';
    }
}

void write_sweep_table(const fs::path& path, const ExperimentResult& result) {
    auto os = open_csv(path);
    os << "tau,alpha_train,alpha_test,succeeded,auc_mean,auc_min,auc_max,nrmse_mean\n";
    for (const auto& s : result.summary) {
        os << num(s.tau) << ',' << num(s.alpha_train) << ',' << num(s.alpha_test) << ',' << s.succeeded << ','
           << num(s.auc.mean) << ',' << num(s.auc.min) << ',' << num(s.auc.max) << ',' << num(s.nrmse.mean) << '\n';
    }
}

std::string failure_text(const std::exception& e) { return e.what(); }

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    bool simulated = false;
    const TrajectoryRecord traj = cached_trajectory(config.system, config.seed, config.cache_dir, &simulated);
    ExperimentResult result = run_experiment(config, traj);
    result.simulated = simulated;
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const TrajectoryRecord& trajectory) {
    config.validate();
    struct Task {
        std::size_t tau, train, rep;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < config.taus.size(); ++i)
        for (std::size_t j = 0; j < config.noise_train.size(); ++j)
            for (Index r = 0; r < config.repetitions; ++r) tasks.push_back({i, j, static_cast<std::size_t>(r)});

    const std::size_t n_test = config.noise_test.size();
    std::vector<RunResult> slots(tasks.size() * n_test);
    const fs::path models = config.output_dir / "models";
    if (config.save_models) fs::create_directories(models);

    parallel_for(tasks.size(), config.threads, [&](std::size_t t) {
        const Task& task = tasks[t];
        const double tau = config.taus[task.tau];
        const double a_train = config.noise_train[task.train];
        const std::uint64_t init_seed = derive_seed(config.seed, "init", task.rep);
        for (std::size_t k = 0; k < n_test; ++k) {
            RunResult& r = slots[t * n_test + k];
            r.tau = tau;
            r.alpha_train = a_train;
            r.alpha_test = config.noise_test[k];
            r.repetition = static_cast<Index>(task.rep);
            r.init_seed = init_seed;
        }
        try {
            const auto base = make_dataset(trajectory, config.observable,
                                           config.dataset_options(tau, a_train, config.noise_test[0]));
            const PredictorModel model = train_predictor(base, config.predictor, init_seed);
            if (config.save_models) {
                save_model(models / (point_tag(tau, a_train, config.noise_test[0]) + "_rep" +
                                     std::to_string(task.rep) + ".evcm"),
                           model);
            }
            const Index train_events = count_events(base.q.head(base.split_index), config.q_e);
            const Index test_events = count_events(base.q.tail(base.size() - base.split_index), config.q_e);
            for (std::size_t k = 0; k < n_test; ++k) {
                RunResult& r = slots[t * n_test + k];
                r.train_events = train_events;
                r.test_events = test_events;
                r.stop_reason = model.log.stop_reason;
                try {
                    const auto ds = k == 0 ? base
                                           : make_dataset(trajectory, config.observable,
                                                          config.dataset_options(tau, a_train, r.alpha_test));
                    r.report = evaluate(test_targets(ds), predict_test(model, ds), config.q_e, config.grid_size);
                    r.report.preset = config.name;
                    r.report.tau = tau;
                    r.report.noise_alpha_train = a_train;
                    r.report.noise_alpha_test = r.alpha_test;
                    r.report.seed = init_seed;
                    r.report.repetition = r.repetition;
                    r.ok = true;
                    spdlog::info("{} tau={} train={} test={} rep={}: auc={:.4f} nrmse={:.4f}", config.name, tau,
                                 a_train, r.alpha_test, task.rep, r.report.auc(), r.report.nrmse);
                } catch (const std::exception& e) {
                    r.error = failure_text(e);
                    spdlog::error("{} tau={} rep={} evaluation failed: {}", config.name, tau, task.rep, r.error);
                }
            }
        } catch (const std::exception& e) {
            for (std::size_t k = 0; k < n_test; ++k) slots[t * n_test + k].error = failure_text(e);
            spdlog::error("{} tau={} train={} rep={} failed: {}", config.name, tau, a_train, task.rep, e.what());
        }
    });

    ExperimentResult result;
    // Order rows by sweep point, then repetition.
    for (std::size_t i = 0; i < config.taus.size(); ++i) {
        for (std::size_t j = 0; j < config.noise_train.size(); ++j) {
            for (std::size_t k = 0; k < n_test; ++k) {
                SummaryRow row;
                row.tau = config.taus[i];
                row.alpha_train = config.noise_train[j];
                row.alpha_test = config.noise_test[k];
                std::vector<double> nrmse, auc;
                for (Index rep = 0; rep < config.repetitions; ++rep) {
                    const std::size_t t = (i * config.noise_train.size() + j) * static_cast<std::size_t>(config.repetitions) +
                                          static_cast<std::size_t>(rep);
                    const RunResult& r = slots[t * n_test + k];
                    result.runs.push_back(r);
                    if (r.ok) {
                        ++row.succeeded;
                        nrmse.push_back(r.report.nrmse);
                        auc.push_back(r.report.auc());
                    } else {
                        ++row.failed;
                    }
                }
                row.nrmse = stats_or_nan(nrmse);
                row.auc = stats_or_nan(auc);
                result.summary.push_back(row);
            }
        }
    }
    write_config_copy(config);
    write_runs(config, result);
    return result;
}

ExperimentResult sweep_tau(ExperimentConfig config, const std::vector<double>& taus) {
    config.taus = taus;
    ExperimentResult result = run_experiment(config);
    write_sweep_table(config.output_dir / "auc_vs_tau.csv", result);
    return result;
}

ExperimentResult sweep_noise(ExperimentConfig config, const std::vector<double>& alpha_train,
                             const std::vector<double>& alpha_test) {
    config.noise_train = alpha_train;
    config.noise_test = alpha_test;
    ExperimentResult result = run_experiment(config);
    write_sweep_table(config.output_dir / "auc_vs_noise.csv", result);
    return result;
}

std::vector<EventCountRow> event_count_study(const ExperimentConfig& config, const std::vector<double>& durations) {
    config.validate();
    const TrajectoryRecord traj = cached_trajectory(config.system, config.seed, config.cache_dir);
    return event_count_study(config, durations, traj);
}

std::vector<EventCountRow> event_count_study(const ExperimentConfig& config, const std::vector<double>& durations,
                                             const TrajectoryRecord& trajectory) {
    ExperimentConfig c = config;
    c.event_durations = durations;
    c.validate();
    if (durations.empty()) throw ConfigError("the event-count study needs at least one duration");
    const double tau = c.taus.front();
    const auto ds = make_dataset(trajectory, c.observable,
                                 c.dataset_options(tau, c.noise_train.front(), c.noise_test.front()));
    const Eigen::VectorXd targets = test_targets(ds);

    std::vector<EventCountRow> rows(durations.size());
    for (std::size_t i = 0; i < durations.size(); ++i) {
        EventCountRow& row = rows[i];
        row.duration = durations[i];
        row.train_rows = to_steps(durations[i], ds.dt);
        if (row.train_rows > ds.split_index) {
            throw ConfigError("prefix of " + format_double(durations[i]) + " time units exceeds the training portion");
        }
        row.train_events = count_events(ds.q.head(row.train_rows), c.q_e);
        if (row.train_events == 0) {
            row.skipped = true;
            row.note = "no events in prefix";
        } else if (row.train_rows - ds.tau_steps <= ds.train_begin()) {
            row.skipped = true;
            row.note = "prefix shorter than the prediction horizon";
        }
    }

    struct Task {
        std::size_t row;
        Index rep;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (!rows[i].skipped)
            for (Index r = 0; r < c.repetitions; ++r) tasks.push_back({i, r});
    std::vector<std::optional<EvalReport>> reports(tasks.size());
    std::vector<std::string> errors(tasks.size());

    parallel_for(tasks.size(), c.threads, [&](std::size_t t) {
        const Task& task = tasks[t];
        const std::uint64_t init_seed = derive_seed(c.seed, "init", static_cast<std::uint64_t>(task.rep));
        try {
            const auto model = train_predictor(ds, c.predictor, init_seed, rows[task.row].train_rows);
            reports[t] = evaluate(targets, predict_test(model, ds), c.q_e, c.grid_size);
            spdlog::info("{} prefix={} events={} rep={}: auc={:.4f}", c.name, rows[task.row].duration,
                         rows[task.row].train_events, task.rep, reports[t]->auc());
        } catch (const std::exception& e) {
            errors[t] = e.what();
            spdlog::error("{} prefix={} rep={} failed: {}", c.name, rows[task.row].duration, task.rep, e.what());
        }
    });

    std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> metrics;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        auto& m = metrics[tasks[t].row];
        if (reports[t]) {
            m.first.push_back(reports[t]->auc());
            m.second.push_back(reports[t]->nrmse);
        } else if (rows[tasks[t].row].note.empty()) {
            rows[tasks[t].row].note = errors[t];
        }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& m = metrics[i];
        rows[i].succeeded = static_cast<Index>(m.first.size());
        rows[i].auc = stats_or_nan(m.first);
        rows[i].nrmse = stats_or_nan(m.second);
    }

    write_config_copy(c);
    auto os = open_csv(c.output_dir / "event_count.csv");
    os << "duration,train_rows,train_events,skipped,succeeded,auc_min,auc_mean,auc_max,nrmse_mean,note\n";
    for (const auto& r : rows) {
        os << num(r.duration) << ',' << r.train_rows << ',' << r.train_events << ',' << (r.skipped ? 1 : 0) << ','
           << r.succeeded << ',' << num(r.auc.min) << ',' << num(r.auc.mean) << ',' << num(r.auc.max) << ','
           << num(r.nrmse.mean) << ',' << quoted(r.note) << '\n';
    }
    return rows;
}

}  // namespace eventcast
