#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "eventcast/errors.hpp"
#include "eventcast/harness.hpp"
#include "eventcast/rng.hpp"
#include "eventcast/trajectory_io.hpp"

using namespace eventcast;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::string out;
    unsigned threads = 0;
    int repetitions = 0;
};

void add_common(CLI::App* cmd, Common& c) {
    auto* cfg = cmd->add_option("--config", c.config, "experiment file (TOML or JSON)");
    auto* pre = cmd->add_option("--preset", c.preset, "start from a built-in preset instead of a file");
    cfg->excludes(pre);
    cmd->add_option("--seed", c.seed, "master seed");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--threads", c.threads, "worker threads");
    cmd->add_option("--repetitions", c.repetitions, "repetitions per sweep point");
}

ExperimentConfig resolve(const Common& c) {
    if (c.config.empty() && c.preset.empty()) throw ConfigError("pass --config FILE or --preset NAME");
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig::from_preset(c.preset) : ExperimentConfig::load(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.output_dir = c.out;
    if (c.threads > 0) cfg.threads = c.threads;
    if (c.repetitions > 0) cfg.repetitions = c.repetitions;
    cfg.validate();
    return cfg;
}

int cmd_simulate(const ExperimentConfig& cfg) {
    const TrajectoryRecord traj = cached_trajectory(cfg.system, cfg.seed, cfg.cache_dir);
    fs::create_directories(cfg.output_dir);
    write_trajectory(cfg.output_dir / "trajectory.traj", traj);
    std::printf("%s: %lld samples x %lld coordinates -> %s\n", cfg.name.c_str(), static_cast<long long>(traj.size()),
                static_cast<long long>(traj.dim()), (cfg.output_dir / "trajectory.traj").c_str());
    return 0;
}

ObservationDataset first_dataset(const ExperimentConfig& cfg) {
    const TrajectoryRecord traj = cached_trajectory(cfg.system, cfg.seed, cfg.cache_dir);
    return make_dataset(traj, cfg.observable,
                        cfg.dataset_options(cfg.taus.front(), cfg.noise_train.front(), cfg.noise_test.front()));
}

int cmd_dataset(const ExperimentConfig& cfg) {
    const auto ds = first_dataset(cfg);
    fs::create_directories(cfg.output_dir);
    write_dataset(cfg.output_dir / "dataset.csv", ds);
    std::printf("%s: %lld rows, %lld training events, %lld test events\n", cfg.name.c_str(),
                static_cast<long long>(ds.size()),
                static_cast<long long>(count_events(ds.q.head(ds.split_index), ds.q_e)),
                static_cast<long long>(count_events(ds.q.tail(ds.size() - ds.split_index), ds.q_e)));
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    const auto ds = first_dataset(cfg);
    fs::create_directories(cfg.output_dir / "models");
    write_dataset(cfg.output_dir / "dataset.csv", ds);
    int failures = 0;
    for (Eigen::Index rep = 0; rep < cfg.repetitions; ++rep) {
        const auto seed = derive_seed(cfg.seed, "init", static_cast<std::uint64_t>(rep));
        const fs::path path = cfg.output_dir / "models" / ("rep" + std::to_string(rep) + ".evcm");
        try {
            const auto model = train_predictor(ds, cfg.predictor, seed);
            save_model(path, model);
            std::printf("rep %lld: %s (%s, %zu epochs)\n", static_cast<long long>(rep), path.c_str(),
                        model.log.stop_reason.c_str(), model.log.train_loss.size());
        } catch (const Error& e) {
            ++failures;
            spdlog::error("repetition {} failed: {}", rep, e.what());
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_evaluate(const std::string& model_path, const std::string& dataset_path, const std::string& out,
                 Eigen::Index grid_size) {
    const PredictorModel model = load_model(model_path);
    const ObservationDataset ds = read_dataset(dataset_path);
    EvalReport report = evaluate(test_targets(ds), predict_test(model, ds), ds.q_e, grid_size);
    report.preset = fs::path(model_path).stem().string();
    report.tau = ds.tau();
    report.noise_alpha_train = ds.noise_alpha_train;
    report.noise_alpha_test = ds.noise_alpha_test;
    report.seed = model.seed;
    const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
    fs::create_directories(dir);
    write_report(dir / "report.csv", report);
    std::printf("auc %s  nrmse %s\n", format_double(report.auc()).c_str(), format_double(report.nrmse).c_str());
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
    ExperimentResult result;
    if (cfg.taus.size() > 1) {
        result = sweep_tau(cfg, cfg.taus);
    } else if (cfg.noise_train.size() > 1 || cfg.noise_test.size() > 1) {
        result = sweep_noise(cfg, cfg.noise_train, cfg.noise_test);
    } else {
        result = run_experiment(cfg);
    }
    for (const auto& s : result.summary) {
        std::printf("tau %-6s train %-5s test %-5s  ok %lld/%lld  auc %s [%s, %s]  nrmse %s\n",
                    format_double(s.tau).c_str(), format_double(s.alpha_train).c_str(),
                    format_double(s.alpha_test).c_str(), static_cast<long long>(s.succeeded),
                    static_cast<long long>(s.succeeded + s.failed), format_double(s.auc.mean).c_str(),
                    format_double(s.auc.min).c_str(), format_double(s.auc.max).c_str(),
                    format_double(s.nrmse.mean).c_str());
    }
    bool ok = result.all_ok();
    if (!cfg.event_durations.empty()) {
        for (const auto& r : event_count_study(cfg, cfg.event_durations)) {
            std::printf("prefix %-8s events %-5lld auc %s%s\n", format_double(r.duration).c_str(),
                        static_cast<long long>(r.train_events), format_double(r.auc.mean).c_str(),
                        r.skipped ? "  (skipped)" : "");
            if (!r.skipped && r.succeeded < cfg.repetitions) ok = false;
        }
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Extreme-event forecasting from partial observations"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "only log warnings and errors");

    Common common;
    auto* simulate = app.add_subcommand("simulate", "integrate the system (or load it from the cache)");
    auto* dataset = app.add_subcommand("dataset", "write the observable/target dataset as CSV");
    auto* train = app.add_subcommand("train", "train one model per repetition and save the model files");
    auto* sweep = app.add_subcommand("sweep", "run the configured tau/noise grid and event-count study");
    for (auto* cmd : {simulate, dataset, train, sweep}) add_common(cmd, common);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "score a saved model on a saved dataset");
    std::string model_path, dataset_path, eval_out;
    Eigen::Index grid_size = 201;
    evaluate_cmd->add_option("--model", model_path, "model file")->required();
    evaluate_cmd->add_option("--dataset", dataset_path, "dataset CSV")->required();
    evaluate_cmd->add_option("--out", eval_out, "output directory");
    evaluate_cmd->add_option("--grid", grid_size, "threshold grid size");

    auto* presets = app.add_subcommand("presets", "list the built-in presets");

    CLI11_PARSE(app, argc, argv);
    if (quiet) spdlog::set_level(spdlog::level::warn);

    try {
        if (presets->parsed()) {
            for (const auto& p : preset_registry()) {
                std::printf("%-20s %-11s %s\n", p.name.c_str(), std::string(to_string(p.system)).c_str(),
                            std::string(to_string(kind_of(p.predictor))).c_str());
            }
            return 0;
        }
        if (evaluate_cmd->parsed()) return cmd_evaluate(model_path, dataset_path, eval_out, grid_size);
        const ExperimentConfig cfg = resolve(common);
        if (simulate->parsed()) return cmd_simulate(cfg);
        if (dataset->parsed()) return cmd_dataset(cfg);
        if (train->parsed()) return cmd_train(cfg);
        return cmd_sweep(cfg);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}
