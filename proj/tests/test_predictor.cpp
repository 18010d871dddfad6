#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "eventcast/errors.hpp"
#include "eventcast/predictor.hpp"
#include "eventcast/systems.hpp"

using namespace eventcast;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

const TrajectoryRecord& rossler_record() {
    static const TrajectoryRecord rec = simulate_rossler({1.0, 1.0, 0.0}, 200.0, 0.1);
    return rec;
}

ObservationDataset rossler_dataset(std::optional<DelayEmbedding> embedding = {}) {
    DatasetOptions o;
    o.tau = 0.5;
    o.q_e = 10.0;
    o.noise_alpha_train = 0.01;
    o.noise_alpha_test = 0.01;
    o.seed = 3;
    o.embedding = embedding;
    return make_dataset(rossler_record(), ObservableSpec::rossler(), o);
}

FfConfig small_ff() {
    FfConfig c;
    c.layer_sizes = {5};
    c.max_epochs = 30;
    return c;
}

LstmConfig small_lstm() {
    LstmConfig c;
    c.hidden = {6};
    c.max_epochs = 3;
    c.bptt_chunk = 50;
    c.streams = 4;
    return c;
}

RcConfig small_rc() {
    RcConfig c;
    c.num_nodes = 40;
    c.washout = 20;
    return c;
}

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / (std::string("eventcast_test_") + name);
}

void check_round_trip(const PredictorModel& model, const ObservationDataset& ds, const char* name) {
    const auto path = temp_path(name);
    save_model(path, model);
    const PredictorModel back = load_model(path);
    std::filesystem::remove(path);
    CHECK(back.kind() == model.kind());
    CHECK(back.seed == model.seed);
    CHECK(back.schema == model.schema);
    CHECK(to_json(back.config) == to_json(model.config));
    CHECK(back.log.train_loss == model.log.train_loss);
    CHECK(back.log.stop_reason == model.log.stop_reason);
    const VectorXd a = predict_test(model, ds);
    const VectorXd b = predict_test(back, ds);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

}  // namespace

TEST_CASE("predictor names") {
    for (auto k : {PredictorKind::Feedforward, PredictorKind::Lstm, PredictorKind::Reservoir})
        CHECK(predictor_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(predictor_kind_from_string("svm"), ConfigError);
    CHECK(kind_of(PredictorConfig{RcConfig{}}) == PredictorKind::Reservoir);
}

TEST_CASE("config json round trip and validation") {
    FfConfig ff = small_ff();
    ff.activation = Activation::LogSigmoid;
    const PredictorConfig c{ff};
    const auto back = predictor_config_from_json(PredictorKind::Feedforward, to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(std::get<FfConfig>(back).activation == Activation::LogSigmoid);

    nlohmann::json partial = {{"num_nodes", 77}};
    const auto rc = std::get<RcConfig>(predictor_config_from_json(PredictorKind::Reservoir, partial));
    CHECK(rc.num_nodes == 77);
    CHECK(rc.spectral_radius == RcConfig{}.spectral_radius);

    CHECK_THROWS_AS(predictor_config_from_json(PredictorKind::Reservoir, {{"num_nodes", -1}}), ConfigError);
    CHECK_THROWS_AS(predictor_config_from_json(PredictorKind::Lstm, {{"hidden", "wide"}}), ConfigError);
}

TEST_CASE("feedforward predictor on an embedded dataset") {
    const auto ds = rossler_dataset(DelayEmbedding{3, 2});
    const auto model = train_predictor(ds, small_ff(), 11);
    CHECK(model.kind() == PredictorKind::Feedforward);
    const VectorXd pred = predict_test(model, ds);
    CHECK(pred.size() == test_targets(ds).size());
    CHECK(pred.allFinite());
    CHECK(predict_train(model, ds).size() == training_pairs(ds).targets.size());
    check_round_trip(model, ds, "ff.evcm");

    const auto other = rossler_dataset(DelayEmbedding{2, 2});
    CHECK_THROWS_AS(predict_test(model, other), ShapeError);
}

TEST_CASE("recurrent predictors") {
    const auto ds = rossler_dataset();
    for (const PredictorConfig& cfg : {PredictorConfig{small_lstm()}, PredictorConfig{small_rc()}}) {
        CAPTURE(to_string(kind_of(cfg)));
        const auto model = train_predictor(ds, cfg, 5);
        const VectorXd pred = predict_test(model, ds);
        REQUIRE(pred.size() == test_targets(ds).size());
        CHECK(pred.allFinite());
        CHECK(predict_train(model, ds).size() == training_pairs(ds).targets.size());
        check_round_trip(model, ds, kind_of(cfg) == PredictorKind::Lstm ? "lstm.evcm" : "rc.evcm");

        const auto again = train_predictor(ds, cfg, 5);
        CHECK(predict_test(again, ds) == pred);

        // Perturbing inputs after a cut leaves earlier predictions unchanged.
        auto late = ds;
        const Index cut = ds.test_begin() + 40;
        late.p.bottomRows(ds.size() - cut).array() += 3.0;
        const VectorXd moved = predict_test(model, late);
        const Index keep = cut - ds.test_begin();
        CHECK(moved.head(keep) == pred.head(keep));
        CHECK(moved.tail(5) != pred.tail(5));

        CHECK_THROWS_AS(train_predictor(rossler_dataset(DelayEmbedding{2, 1}), cfg, 5), ConfigError);
    }
}

TEST_CASE("model files reject corruption") {
    const auto ds = rossler_dataset();
    const auto model = train_predictor(ds, small_rc(), 1);
    const auto path = temp_path("corrupt.evcm");
    save_model(path, model);
    std::string bytes;
    {
        std::ifstream is(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(is), {});
    }
    auto write = [&](const std::string& b) {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    write(bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_model(path), IoError);

    std::string bad = bytes;
    bad[0] = 'X';
    write(bad);
    CHECK_THROWS_AS(load_model(path), IoError);

    bad = bytes;
    bad[4] = 9;
    write(bad);
    CHECK_THROWS_AS(load_model(path), IoError);

    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_model(path), IoError);
}

TEST_CASE("training on a prefix ignores every later row") {
    for (const auto& [cfg, ds] : {std::pair{PredictorConfig{small_ff()}, rossler_dataset(DelayEmbedding{2, 3})},
                                  std::pair{PredictorConfig{small_rc()}, rossler_dataset()}}) {
        CAPTURE(to_string(kind_of(cfg)));
        const Index rows = ds.train_end() / 2;
        const auto model = train_predictor(ds, cfg, 9, rows);
        auto altered = ds;
        altered.p.bottomRows(ds.size() - rows).array() *= -2.0;
        altered.q.tail(ds.size() - rows).array() += 50.0;
        const auto same = train_predictor(altered, cfg, 9, rows);
        CHECK(predict_test(same, ds) == predict_test(model, ds));
        CHECK(predict_test(train_predictor(ds, cfg, 9), ds) != predict_test(model, ds));
        CHECK_THROWS_AS(train_predictor(ds, cfg, 9, ds.tau_steps), InsufficientData);
    }
}
