#include "eventcast/predictor.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "eventcast/errors.hpp"
#include "eventcast/trajectory_io.hpp"

namespace eventcast {

using Eigen::Index;
using Eigen::VectorXd;
using nlohmann::json;

std::string_view to_string(PredictorKind kind) {
    switch (kind) {
        case PredictorKind::Feedforward: return "ff";
        case PredictorKind::Lstm: return "lstm";
        case PredictorKind::Reservoir: return "rc";
    }
    return "?";
}

PredictorKind predictor_kind_from_string(std::string_view name) {
    for (auto k : {PredictorKind::Feedforward, PredictorKind::Lstm, PredictorKind::Reservoir})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown predictor '" + std::string(name) + "'");
}

PredictorKind kind_of(const PredictorConfig& config) { return static_cast<PredictorKind>(config.index()); }

bool InputSchema::operator==(const InputSchema& o) const {
    if (r != o.r || embedding.has_value() != o.embedding.has_value()) return false;
    return !embedding || (embedding->m == o.embedding->m && embedding->s_steps == o.embedding->s_steps);
}

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json config_json(const FfConfig& c) {
    return {{"layer_sizes", c.layer_sizes}, {"activation", std::string(to_string(c.activation))},
            {"max_epochs", c.max_epochs},   {"val_fraction", c.val_fraction},
            {"patience", c.patience},       {"lm_lambda0", c.lm_lambda0},
            {"lm_up", c.lm_up},             {"lm_down", c.lm_down},
            {"lm_lambda_max", c.lm_lambda_max}, {"min_grad", c.min_grad}};
}

json config_json(const LstmConfig& c) {
    return {{"hidden", c.hidden},         {"max_epochs", c.max_epochs}, {"lr", c.lr},
            {"lr_final_fraction", c.lr_final_fraction}, {"beta1", c.beta1}, {"beta2", c.beta2},
            {"eps", c.eps},               {"bptt_chunk", c.bptt_chunk}, {"streams", c.streams},
            {"clip_norm", c.clip_norm}};
}

json config_json(const RcConfig& c) {
    return {{"num_nodes", c.num_nodes},
            {"spectral_radius", c.spectral_radius},
            {"leaking_rate", c.leaking_rate},
            {"input_density", c.input_density},
            {"reservoir_density", c.reservoir_density},
            {"input_scale", c.input_scale},
            {"input_bias", c.input_bias},
            {"ridge_beta", c.ridge_beta},
            {"washout", c.washout}};
}

}  // namespace

json to_json(const PredictorConfig& config) {
    return std::visit([](const auto& c) { return config_json(c); }, config);
}

PredictorConfig predictor_config_from_json(PredictorKind kind, const json& j) {
    try {
        switch (kind) {
            case PredictorKind::Feedforward: {
                FfConfig c;
                read_if(j, "layer_sizes", c.layer_sizes);
                if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());
                read_if(j, "max_epochs", c.max_epochs);
                read_if(j, "val_fraction", c.val_fraction);
                read_if(j, "patience", c.patience);
                read_if(j, "lm_lambda0", c.lm_lambda0);
                read_if(j, "lm_up", c.lm_up);
                read_if(j, "lm_down", c.lm_down);
                read_if(j, "lm_lambda_max", c.lm_lambda_max);
                read_if(j, "min_grad", c.min_grad);
                c.validate();
                return c;
            }
            case PredictorKind::Lstm: {
                LstmConfig c;
                read_if(j, "hidden", c.hidden);
                read_if(j, "max_epochs", c.max_epochs);
                read_if(j, "lr", c.lr);
                read_if(j, "lr_final_fraction", c.lr_final_fraction);
                read_if(j, "beta1", c.beta1);
                read_if(j, "beta2", c.beta2);
                read_if(j, "eps", c.eps);
                read_if(j, "bptt_chunk", c.bptt_chunk);
                read_if(j, "streams", c.streams);
                read_if(j, "clip_norm", c.clip_norm);
                c.validate();
                return c;
            }
            case PredictorKind::Reservoir: {
                RcConfig c;
                read_if(j, "num_nodes", c.num_nodes);
                read_if(j, "spectral_radius", c.spectral_radius);
                read_if(j, "leaking_rate", c.leaking_rate);
                read_if(j, "input_density", c.input_density);
                read_if(j, "reservoir_density", c.reservoir_density);
                read_if(j, "input_scale", c.input_scale);
                read_if(j, "input_bias", c.input_bias);
                read_if(j, "ridge_beta", c.ridge_beta);
                read_if(j, "washout", c.washout);
                c.validate();
                return c;
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad predictor settings: ") + e.what());
    }
    throw ConfigError("unknown predictor kind");
}

namespace {

void check_schema(const PredictorModel& model, const ObservationDataset& ds) {
    if (!(model.schema == InputSchema::of(ds)))
        throw ShapeError("dataset observables or embedding do not match the model's input schema");
}

struct SequenceSlice {
    RowMatrixXd p;
    VectorXd y;
};

Index training_end(const ObservationDataset& ds, Index train_rows) {
    Index end = ds.train_end();
    if (train_rows >= 0) end = std::min(end, train_rows - ds.tau_steps);
    if (end <= ds.train_begin()) throw InsufficientData("no training pairs in the first " + std::to_string(train_rows) + " rows");
    return end;
}

// Recurrent training data: every row before the training boundary with its target.
SequenceSlice recurrent_training(const ObservationDataset& ds, Index end) {
    return {ds.p.topRows(end), ds.q.segment(ds.tau_steps, end)};
}

VectorXd run_recurrent(const PredictorModel& model, const RowMatrixXd& p) {
    if (const auto* l = std::get_if<LstmModel>(&model.impl)) return l->predict_sequence(p);
    return std::get<RcModel>(model.impl).predict_sequence(p);
}

}  // namespace

PredictorModel train_predictor(const ObservationDataset& ds, const PredictorConfig& config, std::uint64_t seed,
                               Index train_rows) {
    ds.validate();
    const Index end = training_end(ds, train_rows);
    PredictorModel model;
    model.config = config;
    model.seed = seed;
    model.schema = InputSchema::of(ds);
    switch (kind_of(config)) {
        case PredictorKind::Feedforward: {
            const SupervisedSet all = training_pairs(ds);
            const Index n = end - ds.train_begin();
            const SupervisedSet tr{all.inputs.topRows(n), all.targets.head(n)};
            model.impl = ff_train(tr.inputs, tr.targets, std::get<FfConfig>(config), seed, &model.log);
            break;
        }
        case PredictorKind::Lstm: {
            if (ds.embedding) throw ConfigError("the LSTM takes the raw observable sequence, not an embedding");
            const auto s = recurrent_training(ds, end);
            model.impl = lstm_train(s.p, s.y, std::get<LstmConfig>(config), seed, &model.log);
            break;
        }
        case PredictorKind::Reservoir: {
            if (ds.embedding) throw ConfigError("the reservoir takes the raw observable sequence, not an embedding");
            const auto s = recurrent_training(ds, end);
            model.impl = rc_train(s.p, s.y, std::get<RcConfig>(config), seed, &model.log);
            break;
        }
    }
    return model;
}

VectorXd predict_test(const PredictorModel& model, const ObservationDataset& ds) {
    check_schema(model, ds);
    if (const auto* ff = std::get_if<FfModel>(&model.impl)) return ff->predict(test_pairs(ds).inputs);
    const VectorXd all = run_recurrent(model, ds.p.topRows(ds.test_end()));
    return all.segment(ds.test_begin(), ds.test_end() - ds.test_begin());
}

VectorXd predict_train(const PredictorModel& model, const ObservationDataset& ds) {
    check_schema(model, ds);
    if (const auto* ff = std::get_if<FfModel>(&model.impl)) return ff->predict(training_pairs(ds).inputs);
    const VectorXd all = run_recurrent(model, ds.p.topRows(ds.train_end()));
    return all.segment(ds.train_begin(), ds.train_end() - ds.train_begin());
}

namespace {

constexpr char kMagic[4] = {'E', 'V', 'C', 'M'};
constexpr std::uint32_t kVersion = 2;

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(std::istream& is) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = is.get();
        if (c == EOF) throw IoError("truncated model file");
        v |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

class BlockWriter {
public:
    explicit BlockWriter(std::ostream& os) : os_(os) {}
    template <typename Derived>
    void put(const Eigen::DenseBase<Derived>& m) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> dense = m;  // column-major
        write_le<std::uint64_t>(os_, static_cast<std::uint64_t>(dense.size()));
        write_f64_le(os_, std::span<const double>(dense.data(), static_cast<std::size_t>(dense.size())));
    }
    void put(double v) { put(Eigen::Matrix<double, 1, 1>::Constant(v)); }

private:
    std::ostream& os_;
};

class BlockReader {
public:
    explicit BlockReader(std::istream& is) : is_(is) {}
    VectorXd next(Index expected) {
        const auto n = static_cast<Index>(read_le<std::uint64_t>(is_));
        if (expected >= 0 && n != expected) throw IoError("model parameter block has the wrong length");
        VectorXd v(n);
        read_f64_le(is_, std::span<double>(v.data(), static_cast<std::size_t>(n)));
        return v;
    }
    Eigen::MatrixXd matrix(Index rows, Index cols) { return next(rows * cols).reshaped(rows, cols); }
    double scalar() { return next(1)(0); }

private:
    std::istream& is_;
};

void put_scaling(BlockWriter& w, const Scaling& in, const TargetScaling& out) {
    w.put(in.mean);
    w.put(in.scale);
    w.put(out.mean);
    w.put(out.scale);
}

void get_scaling(BlockReader& r, Index dim, Scaling& in, TargetScaling& out) {
    in.mean = r.next(dim).transpose();
    in.scale = r.next(dim).transpose();
    out.mean = r.scalar();
    out.scale = r.scalar();
}

json log_json(const TrainingLog& log) {
    return {{"train_loss", log.train_loss},
            {"val_loss", log.val_loss},
            {"best_val_loss", log.best_val_loss},
            {"stop_reason", log.stop_reason},
            {"clipped_updates", log.clipped_updates}};
}

TrainingLog log_from_json(const json& j) {
    TrainingLog log;
    log.train_loss = j.at("train_loss").get<std::vector<double>>();
    log.val_loss = j.at("val_loss").get<std::vector<double>>();
    log.best_val_loss = j.at("best_val_loss").get<std::vector<double>>();
    log.stop_reason = j.at("stop_reason").get<std::string>();
    log.clipped_updates = j.at("clipped_updates").get<long long>();
    return log;
}

}  // namespace

void save_model(const std::filesystem::path& path, const PredictorModel& model) {
    json header = {
        {"variant", std::string(to_string(model.kind()))},
        {"config", to_json(model.config)},
        {"schema", {{"r", model.schema.r}}},
        {"seed", model.seed},
        {"log", log_json(model.log)},
    };
    if (model.schema.embedding)
        header["schema"]["embedding"] = {{"m", model.schema.embedding->m}, {"s_steps", model.schema.embedding->s_steps}};
    Index input_dim = 0;
    if (const auto* ff = std::get_if<FfModel>(&model.impl)) {
        input_dim = ff->net.input_dim();
        header["input_dim"] = input_dim;
    } else if (const auto* l = std::get_if<LstmModel>(&model.impl)) {
        input_dim = l->net.input_dim();
        header["input_dim"] = input_dim;
    } else {
        const auto& rc = std::get<RcModel>(model.impl);
        input_dim = rc.reservoir.input_dim();
        header["input_dim"] = input_dim;
        header["reservoir_draw"] = rc.reservoir.draw();
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    const std::string text = header.dump();
    os.write(kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    BlockWriter w(os);
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FfModel> || std::is_same_v<T, LstmModel>) {
                w.put(m.net.params());
            } else {
                w.put(m.reservoir.adjacency());
                w.put(m.reservoir.input_weights());
                w.put(m.reservoir.initial_state());
                w.put(m.reservoir.bias());
                w.put(m.w_out);
            }
            put_scaling(w, m.input, m.target);
        },
        model.impl);
    if (!os) throw IoError("failed writing " + path.string());
}

PredictorModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + " is not a model file");
    const auto version = read_le<std::uint32_t>(is);
    if (version != kVersion) throw IoError("unsupported model version " + std::to_string(version));
    const auto len = read_le<std::uint64_t>(is);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError("truncated model header");

    PredictorModel model;
    BlockReader r(is);
    try {
        const json header = json::parse(text);
        const PredictorKind kind = predictor_kind_from_string(header.at("variant").get<std::string>());
        model.config = predictor_config_from_json(kind, header.at("config"));
        model.seed = header.at("seed").get<std::uint64_t>();
        model.schema.r = header.at("schema").at("r").get<Index>();
        if (header.at("schema").contains("embedding")) {
            const auto& e = header.at("schema").at("embedding");
            model.schema.embedding = DelayEmbedding{e.at("m").get<Index>(), e.at("s_steps").get<Index>()};
        }
        model.log = log_from_json(header.at("log"));
        const auto input_dim = header.at("input_dim").get<Index>();
        switch (kind) {
            case PredictorKind::Feedforward: {
                const auto& c = std::get<FfConfig>(model.config);
                FfModel m;
                m.net = FfNetwork(input_dim, c.layer_sizes, c.activation);
                m.net.params() = r.next(m.net.num_params());
                get_scaling(r, input_dim, m.input, m.target);
                model.impl = std::move(m);
                break;
            }
            case PredictorKind::Lstm: {
                const auto& c = std::get<LstmConfig>(model.config);
                LstmModel m;
                m.net = LstmNetwork(input_dim, c.hidden);
                m.net.params() = r.next(m.net.num_params());
                get_scaling(r, input_dim, m.input, m.target);
                model.impl = std::move(m);
                break;
            }
            case PredictorKind::Reservoir: {
                const Index n = std::get<RcConfig>(model.config).num_nodes;
                RcModel m;
                auto a = r.matrix(n, n);
                auto w_in = r.matrix(n, input_dim);
                VectorXd r0 = r.next(n);
                VectorXd bias = r.next(n);
                m.reservoir = Reservoir(std::move(a), std::move(w_in), std::move(r0),
                                        std::get<RcConfig>(model.config).leaking_rate, std::move(bias));
                m.w_out = r.next(n + 1);
                get_scaling(r, input_dim, m.input, m.target);
                model.impl = std::move(m);
                break;
            }
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("bad model header: ") + e.what());
    }
    return model;
}

}  // namespace eventcast
