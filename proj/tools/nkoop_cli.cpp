// nkoop command line: collect, train, eval, serve.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nkoop.hpp"
#include "nkoop/service.hpp"

namespace {

using namespace nkoop;

PlantConfig read_plant_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read plant config " + path);
    return plant_config_from_json(nlohmann::json::parse(is));
}

std::vector<int> parse_lengths(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoi(item));
    return out;
}

ControlService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural Koopman toolkit for a simulated two-chamber pneumatic catheter"};
    app.require_subcommand(1);

    // collect
    auto* collect = app.add_subcommand("collect", "Run the random-walk excitation and write a JSONL dataset");
    std::string collect_out = "dataset.jsonl", plant_path, lengths = "500,500,500,500,586";
    std::uint64_t collect_seed = 1;
    int collect_dim = 3;
    collect->add_option("-o,--out", collect_out, "output dataset path");
    collect->add_option("--seed", collect_seed, "noise and walk seed");
    collect->add_option("--trials", lengths, "comma-separated samples per trial");
    collect->add_option("--state-dim", collect_dim, "2 (position) or 3 (pose)")->check(CLI::IsMember({2, 3}));
    collect->add_option("--plant-config", plant_path, "plant config JSON (defaults otherwise)");

    // train
    auto* train = app.add_subcommand("train", "Fit one model on a dataset and write a checkpoint");
    std::string train_data, train_out = "model.json", kind = "nink";
    int train_n = 3, epochs = 200, degree = 2;
    std::uint64_t train_seed = 1;
    train->add_option("-d,--data", train_data, "dataset JSONL")->required();
    train->add_option("-o,--out", train_out, "checkpoint path");
    train->add_option("-k,--kind", kind, "nink | link | mbkm | ssm")
        ->check(CLI::IsMember({"nink", "link", "mbkm", "ssm"}));
    train->add_option("-n,--state-dim", train_n, "model state dimension")->check(CLI::IsMember({2, 3}));
    train->add_option("--epochs", epochs, "epochs per training stage");
    train->add_option("--degree", degree, "monomial degree for mbkm");
    train->add_option("--seed", train_seed, "training seed");

    // eval
    auto* eval = app.add_subcommand("eval", "Collect, train and run both experiments; exits 1 on a failed check");
    std::string eval_out = "report", eval_models, eval_plant;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int eval_epochs = 200;
    eval->add_option("-o,--out-dir", eval_out, "directory for report.json and CSV tables");
    eval->add_option("--seeds", seeds, "seeds to average over")->delimiter(',');
    eval->add_option("--epochs", eval_epochs, "epochs per training stage");
    eval->add_option("--models-dir", eval_models, "also save the first seed's checkpoints here");
    eval->add_option("--plant-config", eval_plant, "plant config JSON");

    // serve
    auto* serve = app.add_subcommand("serve", "Serve control sessions over HTTP");
    std::string host = "127.0.0.1", models_dir = "models";
    int port = 8080;
    double rtf = 10.0;
    serve->add_option("--port", port, "listen port");
    serve->add_option("--host", host, "listen address");
    serve->add_option("--models-dir", models_dir, "directory of model checkpoints (*.json)");
    serve->add_option("--real-time-factor", rtf, "simulation speed-up for pacing; 0 disables");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*collect) {
            const Dataset data =
                collect_random_walk(read_plant_config(plant_path), parse_lengths(lengths), collect_seed, collect_dim);
            save_dataset(collect_out, data);
            std::cout << "wrote " << data.samples.size() << " samples in " << data.meta.n_trials << " trials to "
                      << collect_out << '\n';
            return 0;
        }
        if (*train) {
            const Dataset data = load_dataset(train_data);
            AnyModel model;
            if (kind == "nink" || kind == "link") {
                TrainConfig tc;
                tc.epochs = tc.decoder_epochs = epochs;
                tc.seed = train_seed;
                const auto split = split_by_trials(data, tc.train_fraction);
                model = train_neural_koopman(split.first, tc, kind == "nink" ? Variant::nink : Variant::link, train_n);
                const auto& meta = model.neural()->meta;
                std::cout << "final prediction loss " << meta.loss_curve.back() << ", decoder RMSE "
                          << meta.recon_rmse.transpose() << '\n';
            } else {
                const Dictionary dict =
                    kind == "mbkm" ? Dictionary::monomial(train_n, degree) : Dictionary::identity(train_n);
                EdmdFitReport fit;
                model = fit_edmd(snapshots(data, train_n), dict, Normalizer::fit(data, train_n), {}, &fit);
                std::cout << "lifted dimension " << dict.size() << ", condition number " << fit.condition_number
                          << '\n';
                if (!fit.warning.empty()) std::cerr << "warning: " << fit.warning << '\n';
            }
            save_model(train_out, model);
            std::cout << "wrote " << train_out << '\n';
            return 0;
        }
        if (*eval) {
            PipelineConfig cfg;
            cfg.plant = read_plant_config(eval_plant);
            cfg.seeds = seeds;
            cfg.train.epochs = cfg.train.decoder_epochs = eval_epochs;
            EvaluationReport rep;
            rep.seeds = seeds;
            const auto t0 = std::chrono::steady_clock::now();
            for (std::uint64_t seed : seeds) {
                const auto s0 = std::chrono::steady_clock::now();
                std::cerr << "seed " << seed << ": collecting and training\n";
                const SeedArtifacts a = build_seed(cfg, seed);
                if (!eval_models.empty() && seed == seeds.front()) {
                    std::filesystem::create_directories(eval_models);
                    for (const auto& [m, model] : a.position.models) save_model(eval_models + "/" + m + "_pos.json", model);
                    for (const auto& [m, model] : a.pose.models) save_model(eval_models + "/" + m + "_pose.json", model);
                }
                std::cerr << "seed " << seed << ": running experiments\n";
                evaluate_seed(a, cfg, rep);
                rep.max_seed_pipeline_seconds =
                    std::max(rep.max_seed_pipeline_seconds,
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count());
            }
            finalize_report(rep, cfg);
            rep.pipeline_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const auto checks = check_report(rep, cfg);
            write_report(eval_out, rep, cfg, checks);
            bool ok = true;
            for (const CriterionResult& c : checks) {
                std::cout << (c.passed ? "PASS  " : "FAIL  ") << c.name << "  (" << c.detail << ")\n";
                ok = ok && c.passed;
            }
            std::cout << "report written to " << eval_out << '\n';
            return ok ? 0 : 1;
        }
        if (*serve) {
            ServiceConfig sc;
            sc.real_time_factor = rtf;
            ControlService service(sc);
            service.load_models(models_dir);
            const auto names = service.model_names();
            std::cout << "loaded " << names.size() << " model(s) from " << models_dir << '\n';
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on " << host << ':' << port << '\n';
            if (!service.listen(host, port)) {
                std::cerr << "cannot listen on " << host << ':' << port << '\n';
                return 1;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
