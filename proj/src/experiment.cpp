#include "noiseadapt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "noiseadapt/errors.hpp"
#include "noiseadapt/trainer.hpp"

namespace noiseadapt {

namespace {

using nlohmann::json;

struct OutlierCounts {
    std::size_t random_labelled = 0;
    std::size_t known = 0;
};

OutlierCounts outlier_counts(const ExperimentConfig& c, std::size_t inliers) {
    if (c.outliers) {
        return {*c.outliers, *c.known_outliers};
    }
    const double total = std::round(static_cast<double>(inliers) * c.noise_level / (1.0 - c.noise_level));
    const auto all = static_cast<std::size_t>(total);
    const auto known = static_cast<std::size_t>(std::round(c.known_fraction * total));
    return {all - std::min(all, known), std::min(all, known)};
}

TrainSetup base_setup(const ExperimentConfig& c) {
    TrainSetup setup;
    setup.hidden = c.hidden;
    setup.hyper = c.hyper;
    setup.schedule = c.schedule;
    setup.schedule.learning_rate = c.effective_q_learning_rate();
    return setup;
}


std::string fmt_number(double v) { return json(v).dump(); }

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
    config.validate(false);
    const Rng root(seed);
    Rng mix_rng = root.fork(kMixture);
    const GaussianMixture mixture(config.classes, config.dim, config.separation, mix_rng);
    Rng train_rng = root.fork(kTrainSample);
    Rng test_rng = root.fork(kTestSample);

    PreparedData data;
    Dataset clean = mixture.sample(config.train_size, train_rng);
    data.test = mixture.sample(config.test_size, test_rng);
    data.noise.n_in = clean.size();

    switch (config.mode) {
        case NoiseKind::none:
            data.noise.q_star = Matrix::identity(config.classes);
            data.train = std::move(clean);
            break;
        case NoiseKind::flip_random: {
            Rng q_rng = root.fork(kNoiseMatrix);
            data.noise = build_random_flip_matrix(config.classes, config.noise_level,
                                                  config.fan_out, q_rng);
            data.noise.n_in = clean.size();
            Rng flip_rng = root.fork(kLabelFlips);
            data.train = apply_label_flips(clean, data.noise, flip_rng);
            break;
        }
        case NoiseKind::flip_adversarial: {
            // A model trained on the clean labels decides which classes get confused.
            TrainSetup setup = base_setup(config);
            setup.layer = NoiseLayerUse::none;
            Rng init_rng = root.fork(kCleanModelInit);
            Rng shuffle_rng = root.fork(kCleanModelShuffle);
            const TrainResult clean_model = train_model(clean.features, clean.noisy_labels,
                                                        config.classes, setup, init_rng, shuffle_rng);
            const ConfusionMatrix cm = confusion_matrix(forward(clean_model.params, clean.features),
                                                        clean.true_labels);
            data.noise = build_adversarial_flip_matrix(cm.c, config.noise_level);
            data.noise.n_in = clean.size();
            Rng flip_rng = root.fork(kLabelFlips);
            data.train = apply_label_flips(clean, data.noise, flip_rng);
            break;
        }
        case NoiseKind::outlier: {
            const OutlierCounts counts = outlier_counts(config, clean.size());
            Rng out_rng = root.fork(kTrainOutliers);
            OutlierInjection inj = inject_outliers(clean, mixture, counts.random_labelled, counts.known,
                                                   config.effective_outlier_separation(),
                                                   config.outlier_spread, out_rng);
            data.noise.n_out = counts.random_labelled;
            data.noise.n_known = counts.known;
            data.noise.alpha_true = inj.alpha_true;
            data.noise.noise_level = config.noise_level;
            data.noise.q_star =
                build_outlier_q({inj.alpha_true.value_or(0.0), config.classes}).matrix();
            data.train = std::move(inj.data);
            break;
        }
    }

    if (config.mode == NoiseKind::outlier) {
        const OutlierCounts counts = outlier_counts(config, config.train_size);
        const double ratio = static_cast<double>(counts.random_labelled + counts.known) /
                             static_cast<double>(config.train_size);
        const auto heldout_out = static_cast<std::size_t>(std::round(ratio * config.test_size));
        if (heldout_out > 0) {
            Rng held_rng = root.fork(kHeldout);
            const Dataset inliers = mixture.sample(config.test_size, held_rng);
            data.heldout = inject_outliers(inliers, mixture, heldout_out, 0,
                                           config.effective_outlier_separation(),
                                           config.outlier_spread, held_rng)
                               .data;
        }
    }
    return data;
}

namespace {

// |Q C - Q*|_max with C measured on the rows actually used for training.
double qc_gap(const ModelParams& params, const std::optional<NoiseMatrix>& q, const Dataset& train,
              const Matrix& q_star) {
    const ConfusionMatrix c = confusion_matrix(forward(params, train.features), train.true_labels);
    const Matrix qc = q ? matmul(q->matrix(), c.c) : c.c;
    return max_abs_diff(qc, q_star);
}

}  // namespace

VariantReport run_variant(const ExperimentConfig& config, const PreparedData& data,
                          const VariantOptions& options, std::uint64_t seed) {
    const auto started = std::chrono::steady_clock::now();
    VariantReport report;
    report.variant = options.variant;
    report.label = options.label.empty() ? std::string(to_string(options.variant)) : options.label;

    const std::size_t k = config.classes;
    const bool flip_mode =
        config.mode == NoiseKind::flip_random || config.mode == NoiseKind::flip_adversarial;

    TrainSetup setup = base_setup(config);
    if (options.q_weight_decay) {
        setup.schedule.weight_decay = *options.q_weight_decay;
    }
    std::size_t output_dim = k;
    switch (options.variant) {
        case Variant::none:
            setup.layer = NoiseLayerUse::none;
            break;
        case Variant::learned:
            setup.layer = NoiseLayerUse::learned;
            break;
        case Variant::true_q:
            setup.layer = NoiseLayerUse::fixed;
            setup.fixed_q = NoiseMatrix(data.noise.q_star, NoiseMode::fixed);
            break;
        case Variant::outlier: {
            const std::optional<double> base_alpha = config.alpha ? config.alpha : data.noise.alpha_true;
            if (!base_alpha) {
                throw std::invalid_argument("outlier variant needs noise.alpha or injected outliers");
            }
            const double alpha = std::clamp(*base_alpha * options.alpha_scale, 0.0, 1.0);
            report.alpha_used = alpha;
            setup.layer = NoiseLayerUse::fixed;
            setup.fixed_q = build_outlier_q({alpha, k});
            output_dim = k + 1;
            break;
        }
    }

    // The plain model has no class for known outliers, so it never sees them.
    const Dataset* train = &data.train;
    Dataset filtered;
    if (output_dim == k && data.train.has_outlier_class) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < data.train.size(); ++r) {
            if (data.train.noisy_labels[r] < k) {
                rows.push_back(r);
            }
        }
        filtered = data.train.subset(rows);
        filtered.has_outlier_class = false;
        train = &filtered;
    }

    // Rows the confusion matrix is measured on: true labels must index the model outputs.
    const Dataset* measured = train;
    Dataset measured_subset;
    if (output_dim == k && train->has_outlier_class == false && config.mode == NoiseKind::outlier) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < train->size(); ++r) {
            if (train->true_labels[r] < k) {
                rows.push_back(r);
            }
        }
        measured_subset = train->subset(rows);
        measured = &measured_subset;
    }

    EpochObserver observer;
    if (flip_mode && options.variant == Variant::learned) {
        const std::size_t unfreeze = setup.schedule.freeze_epochs;
        observer = [&](std::size_t completed, const ModelParams& params,
                       const std::optional<NoiseMatrix>& q) {
            if (completed == unfreeze) {
                report.qc_gap_at_unfreeze = qc_gap(params, q, *measured, data.noise.q_star);
            }
        };
    }

    const Rng root(seed);
    Rng init_rng = root.fork(kInit);
    Rng shuffle_rng = root.fork(kShuffle);
    TrainResult trained;
    try {
        trained = train_model(train->features, train->noisy_labels, output_dim, setup, init_rng,
                              shuffle_rng, observer);
    } catch (const TrainingDiverged& e) {
        report.status = "diverged";
        report.message = e.what();
        report.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return report;
    }

    report.params = std::move(trained.params);
    report.epoch_losses = std::move(trained.epoch_losses);
    report.test_error = test_error(report.params, data.test.features, data.test.true_labels);

    if (trained.q) {
        report.q = trained.q->matrix();
    }
    if (flip_mode) {
        report.identity_recovery = q_recovery_error(Matrix::identity(k), data.noise.q_star);
        if (trained.q) {
            report.q_recovery = q_recovery_error(trained.q->matrix(), data.noise.q_star);
        }
        report.qc_gap_final = qc_gap(report.params, trained.q, *measured, data.noise.q_star);
    }

    try {
        const ConfusionMatrix c =
            confusion_matrix(forward(report.params, measured->features), measured->true_labels);
        report.confusion = c.c;
        if (trained.q) {
            report.combined = combined_confusion(*trained.q, c).c;
        }
    } catch (const MissingClassError&) {
        // Outlier class absent from training data: no confusion snapshot.
    }

    if (data.heldout) {
        const Matrix probs = forward(report.params, data.heldout->features);
        std::vector<double> scores(probs.rows());
        for (std::size_t r = 0; r < probs.rows(); ++r) {
            scores[r] = output_dim > k ? 1.0 - probs(r, k) : -entropy_score(probs.row(r));
        }
        report.pr = inlier_pr_curve(scores, data.heldout->inlier);
    }

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

bool RunReport::diverged() const {
    return std::any_of(variants.begin(), variants.end(),
                       [](const VariantReport& v) { return v.diverged(); });
}

RunReport run_single(const ExperimentConfig& config) {
    config.validate(false);
    const PreparedData data = prepare_data(config, config.seed);
    RunReport report;
    report.seed = config.seed;
    report.config = config_to_json(config);
    report.noise = data.noise;
    report.variants.push_back(
        run_variant(config, data, VariantOptions{.variant = config.effective_variant()}, config.seed));
    return report;
}

std::vector<VariantOptions> sweep_variants(const ExperimentConfig& config) {
    std::vector<VariantOptions> out;
    out.push_back({.variant = Variant::none});
    auto suffix = [](double v) {
        std::ostringstream ss;
        ss << v;
        return ss.str();
    };
    switch (config.mode) {
        case NoiseKind::none:
            break;
        case NoiseKind::flip_random:
        case NoiseKind::flip_adversarial:
            if (config.q_weight_decays.size() <= 1) {
                VariantOptions v{.variant = Variant::learned};
                if (!config.q_weight_decays.empty()) {
                    v.q_weight_decay = config.q_weight_decays.front();
                }
                out.push_back(v);
            } else {
                for (double wd : config.q_weight_decays) {
                    out.push_back({.variant = Variant::learned,
                                   .q_weight_decay = wd,
                                   .label = "learned_wd" + suffix(wd)});
                }
            }
            out.push_back({.variant = Variant::true_q});
            break;
        case NoiseKind::outlier:
            for (double scale : config.alpha_scales) {
                out.push_back({.variant = Variant::outlier,
                               .alpha_scale = scale,
                               .label = scale == 1.0 ? "outlier" : "outlier_a" + suffix(scale)});
            }
            break;
    }
    return out;
}

SweepResult run_sweep(const ExperimentConfig& config) {
    config.validate(true);
    SweepResult result;
    const auto variants = sweep_variants(config);
    for (double level : config.noise_levels) {
        for (std::size_t size : config.train_sizes) {
            for (std::size_t s = 0; s < config.seeds; ++s) {
                ExperimentConfig cell_config = config;
                cell_config.noise_level = level;
                cell_config.train_size = size;
                cell_config.seed = config.seed + s;
                SweepCell cell{level, size, cell_config.seed, {}};
                cell.report.seed = cell_config.seed;
                cell.report.config = config_to_json(cell_config);
                const PreparedData data = prepare_data(cell_config, cell_config.seed);
                cell.report.noise = data.noise;
                for (const auto& v : variants) {
                    cell.report.variants.push_back(run_variant(cell_config, data, v, cell_config.seed));
                }
                result.cells.push_back(std::move(cell));
            }
        }
    }
    return result;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const std::size_t rows = j.size();
    const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
    std::vector<double> values;
    values.reserve(rows * cols);
    for (const auto& row : j) {
        if (row.size() != cols) {
            throw std::invalid_argument("matrix json: ragged rows");
        }
        for (const auto& v : row) {
            values.push_back(v.get<double>());
        }
    }
    return Matrix::from_values(rows, cols, std::move(values));
}

json params_to_json(const ModelParams& p) {
    json layers = json::array();
    for (const auto& l : p.layers) {
        layers.push_back({{"weights", matrix_to_json(l.weights)}, {"bias", l.bias}});
    }
    return {{"layers", layers}};
}

ModelParams params_from_json(const json& j) {
    ModelParams p;
    for (const auto& l : j.at("layers")) {
        DenseLayer layer{matrix_from_json(l.at("weights")), l.at("bias").get<std::vector<double>>()};
        if (layer.bias.size() != layer.weights.cols()) {
            throw std::invalid_argument("model json: bias length does not match weights");
        }
        if (!p.layers.empty() && p.layers.back().weights.cols() != layer.weights.rows()) {
            throw std::invalid_argument("model json: layer shapes do not chain");
        }
        p.layers.push_back(std::move(layer));
    }
    if (p.layers.empty()) {
        throw std::invalid_argument("model json: no layers");
    }
    return p;
}

json variant_to_json(const VariantReport& v) {
    auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
    auto opt_matrix = [](const std::optional<Matrix>& m) -> json {
        return m ? matrix_to_json(*m) : json(nullptr);
    };
    json j;
    j["variant"] = v.label;
    j["kind"] = to_string(v.variant);
    j["status"] = v.status;
    if (!v.message.empty()) {
        j["message"] = v.message;
    }
    j["epoch_losses"] = v.epoch_losses;
    j["test_error"] = v.diverged() ? json(nullptr) : json(v.test_error);
    j["q"] = opt_matrix(v.q);
    j["q_recovery_error"] = opt(v.q_recovery);
    j["identity_recovery_error"] = opt(v.identity_recovery);
    j["confusion"] = opt_matrix(v.confusion);
    j["combined_confusion"] = opt_matrix(v.combined);
    j["qc_gap_at_unfreeze"] = opt(v.qc_gap_at_unfreeze);
    j["qc_gap_final"] = opt(v.qc_gap_final);
    j["alpha_used"] = opt(v.alpha_used);
    j["average_precision"] = v.pr ? json(v.pr->average_precision) : json(nullptr);
    return j;
}

json report_to_json(const RunReport& r) {
    auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
    json noise = {{"q_star", matrix_to_json(r.noise.q_star)},
                  {"noise_level", r.noise.noise_level},
                  {"fan_out", r.noise.fan_out},
                  {"alpha_true", opt(r.noise.alpha_true)},
                  {"n_in", r.noise.n_in},
                  {"n_out", r.noise.n_out},
                  {"n_known", r.noise.n_known},
                  {"uniform_fallback_columns", r.noise.uniform_fallback_columns}};
    json variants = json::array();
    for (const auto& v : r.variants) {
        variants.push_back(variant_to_json(v));
    }
    return {{"seed", r.seed},
            {"status", r.diverged() ? "diverged" : "ok"},
            {"config", r.config},
            {"noise", noise},
            {"variants", variants}};
}

json sweep_cell_to_json(const SweepCell& cell) {
    json j = report_to_json(cell.report);
    j["noise_level"] = cell.noise_level;
    j["train_size"] = cell.train_size;
    return j;
}

json timing_to_json(const RunReport& r) {
    json j = json::object();
    for (const auto& v : r.variants) {
        j[v.label] = v.seconds;
    }
    return {{"seed", r.seed}, {"wall_clock_seconds", j}};
}

std::string sweep_summary_csv(const SweepResult& sweep) {
    std::ostringstream os;
    os << "noise_level,train_size,variant,test_error,q_recovery,ap,seed\n";
    for (const auto& cell : sweep.cells) {
        for (const auto& v : cell.report.variants) {
            os << fmt_number(cell.noise_level) << ',' << cell.train_size << ',' << v.label << ','
               << (v.diverged() ? "" : fmt_number(v.test_error)) << ','
               << (v.q_recovery ? fmt_number(*v.q_recovery) : "") << ','
               << (v.pr ? fmt_number(v.pr->average_precision) : "") << ',' << cell.seed << '\n';
        }
    }
    return os.str();
}

std::string sweep_aggregate_csv(const SweepResult& sweep) {
    struct Key {
        double level;
        std::size_t size;
        std::string label;
        auto operator<=>(const Key&) const = default;
    };
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
    std::vector<Key> order;
    for (const auto& cell : sweep.cells) {
        for (const auto& v : cell.report.variants) {
            const Key key{cell.noise_level, cell.train_size, v.label};
            if (!groups.contains(key)) {
                order.push_back(key);
            }
            auto& g = groups[key];
            if (!v.diverged()) {
                g.first.push_back(v.test_error);
                if (v.pr) {
                    g.second.push_back(v.pr->average_precision);
                }
            }
        }
    }
    auto stats = [](std::vector<double> xs) -> std::string {
        if (xs.empty()) {
            return ",,";
        }
        std::sort(xs.begin(), xs.end());
        const std::size_t n = xs.size();
        const double median = n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
        return fmt_number(xs.front()) + ',' + fmt_number(median) + ',' + fmt_number(xs.back());
    };
    std::ostringstream os;
    os << "noise_level,train_size,variant,runs,test_error_min,test_error_median,test_error_max,"
          "ap_min,ap_median,ap_max\n";
    for (const auto& key : order) {
        const auto& g = groups.at(key);
        os << fmt_number(key.level) << ',' << key.size << ',' << key.label << ',' << g.first.size()
           << ',' << stats(g.first) << ',' << stats(g.second) << '\n';
    }
    return os.str();
}

std::string pr_curve_csv(const PRCurve& curve) {
    std::ostringstream os;
    os << "threshold,recall,precision\n";
    for (const auto& p : curve.points) {
        os << fmt_number(p.threshold) << ',' << fmt_number(p.recall) << ','
           << fmt_number(p.precision) << '\n';
    }
    return os.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    os << text;
}

}  // namespace

void write_run_outputs(const std::string& dir, const RunReport& report) {
    const std::filesystem::path root(dir);
    std::filesystem::create_directories(root);
    write_text(root / "report.json", report_to_json(report).dump(2) + "\n");
    write_text(root / "timing.json", timing_to_json(report).dump(2) + "\n");
    if (!report.noise.q_star.empty()) {
        const bool fixed = report.config.at("noise").at("mode") == "outlier";
        std::ostringstream os;
        write_q_csv(os, NoiseMatrix(report.noise.q_star, fixed ? NoiseMode::fixed : NoiseMode::learned));
        write_text(root / "q_star.csv", os.str());
    }
    for (const auto& v : report.variants) {
        if (v.diverged()) {
            continue;
        }
        write_text(root / ("model_" + v.label + ".json"), params_to_json(v.params).dump() + "\n");
        if (v.q) {
            std::ostringstream os;
            const NoiseMode mode = v.variant == Variant::learned ? NoiseMode::learned : NoiseMode::fixed;
            write_q_csv(os, NoiseMatrix(*v.q, mode));
            write_text(root / ("q_" + v.label + ".csv"), os.str());
        }
        if (v.pr) {
            write_text(root / ("pr_" + v.label + ".csv"), pr_curve_csv(*v.pr));
        }
    }
}

void write_sweep_outputs(const std::string& dir, const SweepResult& sweep) {
    const std::filesystem::path root(dir);
    std::filesystem::create_directories(root);
    std::map<double, std::size_t> level_index;
    std::map<std::size_t, std::size_t> size_index;
    std::size_t max_seed_count = 0;
    std::map<std::pair<double, std::size_t>, std::size_t> per_cell;
    for (const auto& cell : sweep.cells) {
        level_index.emplace(cell.noise_level, level_index.size());
        size_index.emplace(cell.train_size, size_index.size());
        max_seed_count = std::max(max_seed_count, ++per_cell[{cell.noise_level, cell.train_size}]);
    }
    for (const auto& cell : sweep.cells) {
        const std::string name = "report_l" + std::to_string(level_index.at(cell.noise_level)) + "_n" +
                                 std::to_string(size_index.at(cell.train_size)) + "_seed" +
                                 std::to_string(cell.seed) + ".json";
        write_text(root / name, sweep_cell_to_json(cell).dump(2) + "\n");
    }
    write_text(root / "summary.csv", sweep_summary_csv(sweep));
    if (max_seed_count > 1) {
        write_text(root / "summary_aggregate.csv", sweep_aggregate_csv(sweep));
    }
}

}  // namespace noiseadapt
