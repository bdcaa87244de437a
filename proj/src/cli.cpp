#include "noiseadapt/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "noiseadapt/config.hpp"
#include "noiseadapt/errors.hpp"
#include "noiseadapt/experiment.hpp"
#include "noiseadapt/metrics.hpp"
#include "noiseadapt/noise_layer.hpp"
#include "noiseadapt/synth.hpp"

namespace noiseadapt {

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config_path, "JSON experiment config");
    if (config_required) {
        opt->required();
    }
    cmd->add_option("--seed", flags.seed, "Override the config seed");
    cmd->add_option("--out", flags.out_dir, "Output directory (overrides config output_dir)");
}

ExperimentConfig resolve(const CommonFlags& flags) {
    ExperimentConfig c = load_config(flags.config_path);
    if (flags.seed) {
        c.seed = *flags.seed;
    }
    if (!flags.out_dir.empty()) {
        c.output_dir = flags.out_dir;
    }
    return c;
}

void print_matrix(std::ostream& out, const Matrix& m) {
    out << std::fixed << std::setprecision(4);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out << (c ? " " : "") << std::setw(7) << m(r, c);
        }
        out << '\n';
    }
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6);
}

int cmd_generate(const CommonFlags& flags, std::ostream& out) {
    const ExperimentConfig c = resolve(flags);
    const PreparedData data = prepare_data(c, c.seed);
    const std::filesystem::path dir(c.output_dir);
    std::filesystem::create_directories(dir);
    write_dataset_csv((dir / "train.csv").string(), data.train);
    write_dataset_csv((dir / "test.csv").string(), data.test);
    if (data.heldout) {
        write_dataset_csv((dir / "heldout.csv").string(), *data.heldout);
    }
    const NoiseMode mode = c.mode == NoiseKind::outlier ? NoiseMode::fixed : NoiseMode::learned;
    write_q_csv((dir / "q_star.csv").string(), NoiseMatrix(data.noise.q_star, mode));
    out << "wrote " << data.train.size() << " training and " << data.test.size()
        << " test rows to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_train(const CommonFlags& flags, std::ostream& out) {
    const ExperimentConfig c = resolve(flags);
    const RunReport report = run_single(c);
    write_run_outputs(c.output_dir, report);
    for (const auto& v : report.variants) {
        out << v.label << ": status=" << v.status;
        if (!v.diverged()) {
            out << " test_error=" << v.test_error;
            if (v.q_recovery) {
                out << " q_recovery=" << *v.q_recovery;
            }
            if (v.pr) {
                out << " ap=" << v.pr->average_precision;
            }
        }
        out << '\n';
    }
    return report.diverged() ? kExitDiverged : kExitOk;
}

int cmd_sweep(const CommonFlags& flags, std::ostream& out) {
    const ExperimentConfig c = resolve(flags);
    const SweepResult sweep = run_sweep(c);
    write_sweep_outputs(c.output_dir, sweep);
    out << sweep_summary_csv(sweep);
    // Divergent cells are recorded in the summary; the sweep itself succeeded.
    return kExitOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& model_path, std::ostream& out) {
    const ExperimentConfig c = resolve(flags);
    std::ifstream is(model_path);
    if (!is) {
        throw std::invalid_argument("cannot open model " + model_path);
    }
    nlohmann::json j;
    is >> j;
    const ModelParams params = params_from_json(j);
    const PreparedData data = prepare_data(c, c.seed);
    nlohmann::json result = {{"seed", c.seed},
                             {"model", model_path},
                             {"test_error", test_error(params, data.test.features,
                                                       data.test.true_labels)}};
    if (data.heldout && params.output_dim() >= c.classes) {
        const Matrix probs = forward(params, data.heldout->features);
        std::vector<double> scores(probs.rows());
        for (std::size_t r = 0; r < probs.rows(); ++r) {
            scores[r] = params.output_dim() > c.classes ? 1.0 - probs(r, c.classes)
                                                        : -entropy_score(probs.row(r));
        }
        result["average_precision"] = inlier_pr_curve(scores, data.heldout->inlier).average_precision;
    }
    if (!flags.out_dir.empty()) {
        std::filesystem::create_directories(flags.out_dir);
        std::ofstream os(std::filesystem::path(flags.out_dir) / "eval.json");
        os << result.dump(2) << '\n';
    }
    out << result.dump(2) << '\n';
    return kExitOk;
}

int cmd_inspect_q(const std::string& q_path, const std::string& q_star_path, std::ostream& out) {
    const NoiseMatrix q = read_q_csv(q_path);
    out << "Q (" << q.dim() << "x" << q.dim() << ", " << to_string(q.mode()) << "):\n";
    print_matrix(out, q.matrix());
    if (!q_star_path.empty()) {
        const NoiseMatrix q_star = read_q_csv(q_star_path);
        out << "Q*:\n";
        print_matrix(out, q_star.matrix());
        out << "q_recovery_error " << q_recovery_error(q.matrix(), q_star.matrix()) << '\n';
    }
    return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Train softmax classifiers under label noise with a noise-adaptation layer"};
    app.require_subcommand(1);

    CommonFlags generate_flags, train_flags, sweep_flags, eval_flags;
    std::string model_path, q_path, q_star_path;

    auto* generate = app.add_subcommand("generate", "Write the synthetic train/test datasets as CSV");
    add_common(generate, generate_flags, true);
    auto* train = app.add_subcommand("train", "Run one training configuration");
    add_common(train, train_flags, true);
    auto* sweep = app.add_subcommand("sweep", "Run the noise level x training size grid");
    add_common(sweep, sweep_flags, true);
    auto* eval = app.add_subcommand("eval", "Re-score a saved model on the config's clean test set");
    add_common(eval, eval_flags, true);
    eval->add_option("--model", model_path, "model_<variant>.json written by train")->required();
    auto* inspect = app.add_subcommand("inspect-q", "Print a Q checkpoint and its distance to Q*");
    inspect->add_option("--q", q_path, "Q csv")->required();
    inspect->add_option("--q-star", q_star_path, "Reference Q* csv");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*generate) return cmd_generate(generate_flags, out);
        if (*train) return cmd_train(train_flags, out);
        if (*sweep) return cmd_sweep(sweep_flags, out);
        if (*eval) return cmd_eval(eval_flags, model_path, out);
        if (*inspect) return cmd_inspect_q(q_path, q_star_path, out);
    } catch (const TrainingDiverged& e) {
        err << "error: training diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace noiseadapt
