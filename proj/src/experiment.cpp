// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <thread>

#include "takfl/checkpoint.hpp"
#include "takfl/distill.hpp"
#include "takfl/errors.hpp"
#include "takfl/rng.hpp"
#include "takfl/taskarith.hpp"

namespace takfl::harness {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

std::filesystem::path default_output_dir() {
    const char* env = std::getenv("TAKFL_OUT_DIR");
    if (env && *env)
        return env;
    return "takfl_out";
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData out;
    data::LabeledDataset pool;
    if (const auto* spec = std::get_if<data::SyntheticSpec>(&cfg.data.source)) {
        spec->validate();
        auto center_rng = Rng::stream(cfg.seed, "centers");
        auto centers = data::draw_class_centers(*spec, center_rng);
        auto sample_rng = Rng::stream(cfg.seed, "private");
        pool = data::sample_blobs(*spec, centers, sample_rng);
        auto public_rng = Rng::stream(cfg.seed, "public");
        out.public_set =
            data::make_public_dataset(*spec, centers, cfg.data.public_set.center_shift,
                                      cfg.data.public_set.samples_per_class, public_rng);
    } else {
        const auto& csv = std::get<CsvSource>(cfg.data.source);
        pool = data::load_csv(csv.path, csv.has_header);
        out.public_set =
            data::load_csv_features(csv.public_path, csv.public_has_header, csv.public_has_label);
        if (out.public_set.features.cols() != pool.input_dim())
            throw ConfigError("data.csv.public_path: public set has " +
                              std::to_string(out.public_set.features.cols()) +
                              " feature columns, training data has " +
                              std::to_string(pool.input_dim()));
    }
    if (out.public_set.size() == 0)
        throw ConfigError("data.public: the public set is empty");
    out.input_dim = pool.input_dim();
    out.num_classes = pool.class_count;
    if (cfg.data.test_count >= pool.size())
        throw ConfigError("data.test_count: " + std::to_string(cfg.data.test_count) +
                          " leaves no training data out of " + std::to_string(pool.size()));

    auto holdout_rng = Rng::stream(cfg.seed, "holdout");
    auto split = data::holdout_split(pool, cfg.data.val_fraction, cfg.data.test_count, holdout_rng);
    out.train = std::move(split.train);
    out.validation = std::move(split.validation);
    out.test = std::move(split.test);

    std::vector<double> ratios;
    for (const auto& p : cfg.prototypes)
        ratios.push_back(p.data_ratio);
    auto ratio_rng = Rng::stream(cfg.seed, "ratio");
    out.prototype_data = data::ratio_split(out.train, ratios, ratio_rng);

    for (std::size_t p = 0; p < cfg.prototypes.size(); ++p) {
        const auto& proto = cfg.prototypes[p];
        auto part_rng = Rng::stream(cfg.seed, "partition", {p});
        auto plan = data::dirichlet_partition(out.prototype_data[p], cfg.data.alpha,
                                              proto.n_clients, part_rng);
        std::vector<fedcore::ClientShard> shards;
        for (std::size_t k = 0; k < plan.shards.size(); ++k)
            shards.push_back({k, out.prototype_data[p].subset(plan.shards[k])});
        out.plans.push_back(std::move(plan));
        out.shards.push_back(std::move(shards));
    }
    return out;
}

namespace {

std::string context(std::size_t round, const std::string& prototype) {
    return "round " + std::to_string(round) + ", prototype \"" + prototype + "\"";
}

void require_finite(const nn::ParameterVector& p, std::size_t round, const std::string& name,
                    const char* stage) {
    if (!p.all_finite())
        throw NumericError(context(round, name) + ": non-finite parameters after " + stage);
}

struct Job {
    std::size_t prototype;
    std::size_t client;
};

} // namespace

ExperimentResult run_experiment(ExperimentConfig cfg, const RunOptions& opts) {
    if (cfg.rounds == 0)
        throw ConfigError("rounds: must be at least 1");
    if (cfg.prototypes.empty())
        throw ConfigError("prototypes: at least one prototype is required");
    cfg.distill.validate();

    const PreparedData data = prepare_data(cfg);
    cfg.resolve_architectures(data.input_dim, data.num_classes);
    const std::size_t M = cfg.prototypes.size();
    const std::uint64_t seed = cfg.seed;

    std::vector<nn::ParameterVector> theta(M);
    for (std::size_t p = 0; p < M; ++p) {
        auto init_rng = Rng::stream(seed, "init", {p});
        theta[p] = nn::init_params(cfg.prototypes[p].arch, init_rng);
    }

    std::vector<std::optional<std::vector<double>>> frozen(M);
    ExperimentResult result;

    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        const auto started = std::chrono::steady_clock::now();

        // Local training, fanned out over every (prototype, client) pair.
        std::vector<std::vector<std::size_t>> sampled(M);
        std::vector<Job> jobs;
        for (std::size_t p = 0; p < M; ++p) {
            const auto& proto = cfg.prototypes[p];
            auto sample_rng = Rng::stream(seed, "sample", {r, p});
            sampled[p] = fedcore::sample_clients(data.shards[p].size(), proto.sample_rate,
                                                 sample_rng);
            for (std::size_t k : sampled[p])
                jobs.push_back({p, k});
        }
        std::vector<nn::ParameterVector> updated(jobs.size());
        parallel_for(jobs.size(), opts.threads, [&](std::size_t j) {
            const auto [p, k] = jobs[j];
            auto client_rng = Rng::stream(seed, "client", {r, p, k});
            try {
                updated[j] = fedcore::client_update(theta[p], data.shards[p][k],
                                                    cfg.prototypes[p].local, client_rng);
            } catch (const NumericError& e) {
                throw NumericError(context(r, cfg.prototypes[p].name) + ", client " +
                                   std::to_string(k) + ": " + e.what());
            }
        });

        std::vector<nn::ParameterVector> theta_avg(M);
        std::vector<distill::TeacherEnsemble> ensembles(M);
        for (std::size_t p = 0, j = 0; p < M; ++p) {
            ensembles[p].prototype_id = p;
            ensembles[p].arch = cfg.prototypes[p].arch;
            std::vector<std::size_t> sizes;
            for (std::size_t k : sampled[p]) {
                ensembles[p].members.push_back(std::move(updated[j++]));
                sizes.push_back(data.shards[p][k].data.size());
            }
            theta_avg[p] = fedcore::fedavg_aggregate(ensembles[p].members, sizes);
            require_finite(theta_avg[p], r, cfg.prototypes[p].name, "aggregation");
        }

        std::vector<std::optional<std::vector<double>>> applied(M);
        std::vector<std::optional<taskarith::SelectionReport>> selections(M);

        switch (cfg.method) {
        case Method::fedavg:
            theta = theta_avg;
            break;
        case Method::feddf:
        case Method::fedet_lite:
            parallel_for(M, opts.threads, [&](std::size_t p) {
                auto rng = Rng::stream(seed, "distill", {r, p, p});
                try {
                    theta[p] = cfg.method == Method::feddf
                                   ? distill::feddf_distill(theta_avg[p], ensembles,
                                                            data.public_set, cfg.distill, rng)
                                   : distill::fedet_lite_distill(theta_avg[p], ensembles,
                                                                 data.public_set, cfg.distill, rng);
                } catch (const NumericError& e) {
                    throw NumericError(context(r, cfg.prototypes[p].name) + ": " + e.what());
                }
            });
            break;
        case Method::takfl: {
            // Task (i, j): student i distilled from teacher ensemble j.
            std::vector<nn::ParameterVector> distilled(M * M);
            parallel_for(M * M, opts.threads, [&](std::size_t t) {
                const std::size_t i = t / M;
                const std::size_t j = t % M;
                auto dcfg = cfg.distill;
                dcfg.gamma = cfg.effective_gamma(i);
                auto rng = Rng::stream(seed, "distill", {r, i, j});
                try {
                    distilled[t] = distill::distill_task(theta_avg[i], ensembles[j],
                                                         data.public_set, dcfg, rng);
                } catch (const NumericError& e) {
                    throw NumericError(context(r, cfg.prototypes[i].name) + ", teacher \"" +
                                       cfg.prototypes[j].name + "\": " + e.what());
                }
            });
            parallel_for(M, opts.threads, [&](std::size_t i) {
                std::vector<taskarith::TaskVector> taus;
                for (std::size_t j = 0; j < M; ++j)
                    taus.push_back(taskarith::task_vector(distilled[i * M + j], theta_avg[i], j));
                const auto& mode = cfg.prototypes[i].lambda_mode;
                taskarith::MergeCandidate chosen;
                if (const auto* fixed = std::get_if<fedcore::FixedLambdas>(&mode)) {
                    chosen.lambdas = fixed->values;
                } else if (frozen[i]) {
                    chosen.lambdas = *frozen[i];
                } else {
                    auto rng = Rng::stream(seed, "lambda", {r, i});
                    const auto candidates = taskarith::heuristic_candidates(
                        M, std::get<fedcore::HeuristicLambdas>(mode).n_candidates, rng);
                    auto [best, report] = taskarith::select_coefficients(
                        theta_avg[i], taus, candidates, data.validation);
                    chosen = std::move(best);
                    selections[i] = std::move(report);
                }
                theta[i] = taskarith::merge(theta_avg[i], taus, chosen);
                applied[i] = chosen.lambdas;
            });
            if (cfg.freeze_lambda && r == 0)
                for (std::size_t i = 0; i < M; ++i)
                    if (std::holds_alternative<fedcore::HeuristicLambdas>(
                            cfg.prototypes[i].lambda_mode))
                        frozen[i] = applied[i];
            break;
        }
        }

        for (std::size_t p = 0; p < M; ++p)
            require_finite(theta[p], r, cfg.prototypes[p].name, "the server step");
        if (opts.on_round)
            opts.on_round(r, theta);

        std::vector<fedcore::EvalResult> evals(M);
        parallel_for(M, opts.threads,
                     [&](std::size_t p) { evals[p] = fedcore::evaluate(theta[p], data.test); });

        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                .count();
        for (std::size_t p = 0; p < M; ++p) {
            RoundReport rep;
            rep.round = r;
            rep.prototype = cfg.prototypes[p].name;
            rep.prototype_index = p;
            rep.test_top1 = evals[p].top1;
            rep.test_loss = evals[p].mean_loss;
            rep.lambdas = applied[p];
            rep.selection = std::move(selections[p]);
            rep.final_round = r + 1 == cfg.rounds;
            rep.wall_ms = wall_ms;
            result.reports.push_back(std::move(rep));
        }
    }
    result.final_params = theta;

    if (opts.out_dir) {
        const auto& dir = *opts.out_dir;
        std::filesystem::create_directories(dir / "checkpoints");
        write_metrics(result.reports, dir / "metrics.jsonl");
        {
            std::ofstream out(dir / "config.json", std::ios::trunc);
            if (!out)
                throw std::runtime_error("cannot open " + (dir / "config.json").string());
            out << config_to_json(cfg).dump(2) << '\n';
        }
        for (std::size_t p = 0; p < M; ++p) {
            CheckpointHeader h;
            h.arch = cfg.prototypes[p].arch;
            h.seed = seed;
            h.round = cfg.rounds;
            h.prototype = cfg.prototypes[p].name;
            save_checkpoint(h, theta[p], dir / "checkpoints" / (cfg.prototypes[p].name + ".takf"));
        }
    }
    return result;
}

} // namespace takfl::harness
