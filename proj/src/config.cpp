#include "noiseadapt/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace noiseadapt {

std::string_view to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::none: return "none";
        case NoiseKind::flip_random: return "flip-random";
        case NoiseKind::flip_adversarial: return "flip-adversarial";
        case NoiseKind::outlier: return "outlier";
    }
    return "none";
}

NoiseKind parse_noise_kind(std::string_view s) {
    if (s == "none") return NoiseKind::none;
    if (s == "flip-random") return NoiseKind::flip_random;
    if (s == "flip-adversarial") return NoiseKind::flip_adversarial;
    if (s == "outlier") return NoiseKind::outlier;
    throw std::invalid_argument("unknown noise mode '" + std::string(s) + "'");
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::none: return "none";
        case Variant::learned: return "learned";
        case Variant::true_q: return "true";
        case Variant::outlier: return "outlier";
    }
    return "none";
}

Variant parse_variant(std::string_view s) {
    if (s == "none") return Variant::none;
    if (s == "learned") return Variant::learned;
    if (s == "true") return Variant::true_q;
    if (s == "outlier") return Variant::outlier;
    throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

Variant ExperimentConfig::effective_variant() const {
    if (variant) {
        return *variant;
    }
    switch (mode) {
        case NoiseKind::none: return Variant::none;
        case NoiseKind::outlier: return Variant::outlier;
        default: return Variant::learned;
    }
}

void ExperimentConfig::validate(bool sweep_mode) const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (classes < 2) fail("dataset.classes must be >= 2");
    if (dim < 1) fail("dataset.dim must be >= 1");
    if (train_size < classes) fail("dataset.train_size must be >= classes");
    if (test_size < classes) fail("dataset.test_size must be >= classes");
    if (!(separation >= 0.0)) fail("dataset.separation must be >= 0");
    if (outlier_separation && !(*outlier_separation >= 0.0)) fail("dataset.outlier_separation must be >= 0");
    if (!(outlier_spread > 0.0)) fail("dataset.outlier_spread must be > 0");
    if (!(noise_level >= 0.0 && noise_level < 1.0)) fail("noise.level must be in [0, 1)");
    if (mode == NoiseKind::flip_random && (fan_out < 1 || fan_out >= classes)) {
        fail("noise.fan_out must be in [1, classes - 1]");
    }
    if (!(known_fraction >= 0.0 && known_fraction <= 1.0)) fail("noise.known_fraction must be in [0, 1]");
    if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) fail("noise.alpha must be in [0, 1]");
    if (outliers.has_value() != known_outliers.has_value()) {
        fail("noise.outliers and noise.known_outliers must be given together");
    }
    hyper.validate();
    if (hyper.epochs == 0) fail("model.epochs must be >= 1");
    for (std::size_t h : hidden) {
        if (h == 0) fail("model.hidden widths must be positive");
    }
    QSchedule s = schedule;
    s.learning_rate = effective_q_learning_rate();
    s.validate(hyper.epochs);

    const Variant v = effective_variant();
    const bool flip = mode == NoiseKind::flip_random || mode == NoiseKind::flip_adversarial;
    if ((v == Variant::learned || v == Variant::true_q) && !flip) {
        fail("variant '" + std::string(to_string(v)) + "' needs a flip noise mode");
    }
    if (v == Variant::outlier && mode != NoiseKind::outlier) {
        fail("variant 'outlier' needs noise.mode = outlier");
    }

    if (sweep_mode) {
        if (noise_levels.empty()) fail("sweep.noise_levels must be non-empty");
        if (train_sizes.empty()) fail("sweep.train_sizes must be non-empty");
        if (seeds == 0) fail("sweep.seeds must be >= 1");
        for (double l : noise_levels) {
            if (!(l >= 0.0 && l < 1.0)) fail("sweep.noise_levels entries must be in [0, 1)");
        }
        for (std::size_t n : train_sizes) {
            if (n < classes) fail("sweep.train_sizes entries must be >= classes");
        }
        if (alpha_scales.empty()) fail("sweep.alpha_scales must be non-empty");
        for (double a : alpha_scales) {
            if (!(a > 0.0)) fail("sweep.alpha_scales entries must be positive");
        }
        for (double wd : q_weight_decays) {
            if (!(wd >= 0.0)) fail("sweep.q_weight_decays entries must be >= 0");
        }
    }
}

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
    if (!obj.is_object()) {
        throw std::invalid_argument("config: '" + section + "' must be an object");
    }
    for (const auto& item : obj.items()) {
        if (!allowed.contains(item.key())) {
            throw std::invalid_argument("config: unknown key '" +
                                        (section.empty() ? "" : section + ".") + item.key() + "'");
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        out = obj.at(key).get<T>();
    }
}

template <typename T>
void read_opt(const json& obj, const char* key, std::optional<T>& out) {
    if (obj.contains(key) && !obj.at(key).is_null()) {
        out = obj.at(key).get<T>();
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    try {
        check_keys(j, "", {"seed", "output_dir", "dataset", "noise", "model", "q", "variant", "sweep"});
        read(j, "seed", c.seed);
        read(j, "output_dir", c.output_dir);
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            check_keys(d, "dataset", {"classes", "dim", "train_size", "test_size", "separation",
                                      "outlier_separation", "outlier_spread"});
            read(d, "classes", c.classes);
            read(d, "dim", c.dim);
            read(d, "train_size", c.train_size);
            read(d, "test_size", c.test_size);
            read(d, "separation", c.separation);
            read_opt(d, "outlier_separation", c.outlier_separation);
            read(d, "outlier_spread", c.outlier_spread);
        }
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            check_keys(n, "noise", {"mode", "level", "fan_out", "outliers", "known_outliers",
                                    "known_fraction", "alpha"});
            if (n.contains("mode")) {
                c.mode = parse_noise_kind(n.at("mode").get<std::string>());
            }
            read(n, "level", c.noise_level);
            read(n, "fan_out", c.fan_out);
            read_opt(n, "outliers", c.outliers);
            read_opt(n, "known_outliers", c.known_outliers);
            read(n, "known_fraction", c.known_fraction);
            read_opt(n, "alpha", c.alpha);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, "model", {"hidden", "learning_rate", "momentum", "weight_decay",
                                    "batch_size", "epochs"});
            read(m, "hidden", c.hidden);
            read(m, "learning_rate", c.hyper.learning_rate);
            read(m, "momentum", c.hyper.momentum);
            read(m, "weight_decay", c.hyper.weight_decay);
            read(m, "batch_size", c.hyper.batch_size);
            read(m, "epochs", c.hyper.epochs);
        }
        if (j.contains("q")) {
            const auto& q = j.at("q");
            check_keys(q, "q", {"freeze_epochs", "weight_decay", "regularizer", "learning_rate",
                                "momentum"});
            read(q, "freeze_epochs", c.schedule.freeze_epochs);
            read(q, "weight_decay", c.schedule.weight_decay);
            if (q.contains("regularizer")) {
                c.schedule.regularizer = parse_regularizer(q.at("regularizer").get<std::string>());
            }
            read_opt(q, "learning_rate", c.q_learning_rate);
            read(q, "momentum", c.schedule.momentum);
        }
        if (j.contains("variant") && !j.at("variant").is_null()) {
            c.variant = parse_variant(j.at("variant").get<std::string>());
        }
        if (j.contains("sweep")) {
            const auto& s = j.at("sweep");
            check_keys(s, "sweep", {"noise_levels", "train_sizes", "seeds", "alpha_scales",
                                    "q_weight_decays"});
            read(s, "noise_levels", c.noise_levels);
            read(s, "train_sizes", c.train_sizes);
            read(s, "seeds", c.seeds);
            read(s, "alpha_scales", c.alpha_scales);
            read(s, "q_weight_decays", c.q_weight_decays);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    c.schedule.learning_rate = c.effective_q_learning_rate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
    json j;
    j["seed"] = c.seed;
    j["dataset"] = {{"classes", c.classes},
                    {"dim", c.dim},
                    {"train_size", c.train_size},
                    {"test_size", c.test_size},
                    {"separation", c.separation},
                    {"outlier_separation", c.effective_outlier_separation()},
                    {"outlier_spread", c.outlier_spread}};
    j["noise"] = {{"mode", to_string(c.mode)},
                  {"level", c.noise_level},
                  {"fan_out", c.fan_out},
                  {"outliers", opt(c.outliers)},
                  {"known_outliers", opt(c.known_outliers)},
                  {"known_fraction", c.known_fraction},
                  {"alpha", opt(c.alpha)}};
    j["model"] = {{"hidden", c.hidden},
                  {"learning_rate", c.hyper.learning_rate},
                  {"momentum", c.hyper.momentum},
                  {"weight_decay", c.hyper.weight_decay},
                  {"batch_size", c.hyper.batch_size},
                  {"epochs", c.hyper.epochs}};
    j["q"] = {{"freeze_epochs", c.schedule.freeze_epochs},
              {"weight_decay", c.schedule.weight_decay},
              {"regularizer", to_string(c.schedule.regularizer)},
              {"learning_rate", c.effective_q_learning_rate()},
              {"momentum", c.schedule.momentum}};
    j["variant"] = to_string(c.effective_variant());
    j["sweep"] = {{"noise_levels", c.noise_levels},
                  {"train_sizes", c.train_sizes},
                  {"seeds", c.seeds},
                  {"alpha_scales", c.alpha_scales},
                  {"q_weight_decays", c.q_weight_decays}};
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::invalid_argument("config: cannot open " + path);
    }
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace noiseadapt
