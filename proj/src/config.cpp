// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "takfl/errors.hpp"
#include "takfl/taskarith.hpp"

namespace takfl::harness {

using json = nlohmann::json;

std::string_view method_name(Method m) {
    switch (m) {
    case Method::fedavg:
        return "fedavg";
    case Method::feddf:
        return "feddf";
    case Method::fedet_lite:
        return "fedet_lite";
    case Method::takfl:
        return "takfl";
    }
    return "unknown";
}

double ExperimentConfig::effective_gamma(std::size_t i) const {
    if (!takfl_self_reg)
        return 0.0;
    return prototypes.at(i).gamma.value_or(distill.gamma);
}

void ExperimentConfig::resolve_architectures(std::size_t input_dim, std::size_t num_classes) {
    for (auto& p : prototypes) {
        p.arch.input_dim = input_dim;
        p.arch.num_classes = num_classes;
        p.arch.validate();
    }
}

namespace {

// Reads keys of one JSON object, remembering which were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object())
            throw ConfigError(where() + ": expected an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::string key_path(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    double real(const std::string& key, double fallback) {
        const json* v = raw(key);
        if (!v)
            return fallback;
        if (!v->is_number())
            throw ConfigError(key_path(key) + ": expected a number");
        double d = v->get<double>();
        if (!std::isfinite(d))
            throw ConfigError(key_path(key) + ": must be finite");
        return d;
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) {
        const json* v = raw(key);
        if (!v)
            return fallback;
        return as_count(*v, key_path(key));
    }

    bool flag(const std::string& key, bool fallback) {
        const json* v = raw(key);
        if (!v)
            return fallback;
        if (!v->is_boolean())
            throw ConfigError(key_path(key) + ": expected true or false");
        return v->get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const json* v = raw(key);
        if (!v)
            return fallback;
        if (!v->is_string())
            throw ConfigError(key_path(key) + ": expected a string");
        return v->get<std::string>();
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(key_path(it.key()) + ": unknown key");
    }

    static std::uint64_t as_count(const json& v, const std::string& path) {
        if (v.is_number_integer()) {
            if (v.is_number_unsigned())
                return v.get<std::uint64_t>();
            auto i = v.get<std::int64_t>();
            if (i < 0)
                throw ConfigError(path + ": must be a nonnegative count, got " +
                                  std::to_string(i));
            return static_cast<std::uint64_t>(i);
        }
        throw ConfigError(path + ": expected a nonnegative integer");
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok)
        throw ConfigError(path + ": " + what);
}

std::vector<double> real_list(const json& v, const std::string& path) {
    require(v.is_array(), path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        require(v[i].is_number(), path + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

data::SyntheticSpec parse_synthetic(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    data::SyntheticSpec s;
    s.class_count = r.count("class_count", s.class_count);
    s.input_dim = r.count("input_dim", s.input_dim);
    s.samples_per_class = r.count("samples_per_class", s.samples_per_class);
    s.cluster_spread = r.real("cluster_spread", s.cluster_spread);
    s.class_center_scale = r.real("class_center_scale", s.class_center_scale);
    r.finish();
    require(s.class_count >= 2, path + ".class_count", "must be at least 2");
    require(s.input_dim >= 1, path + ".input_dim", "must be positive");
    require(s.samples_per_class >= 1, path + ".samples_per_class", "must be positive");
    require(s.cluster_spread > 0.0, path + ".cluster_spread", "must be positive");
    require(s.class_center_scale > 0.0, path + ".class_center_scale", "must be positive");
    return s;
}

CsvSource parse_csv(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    CsvSource c;
    c.path = r.text("path", "");
    c.has_header = r.flag("has_header", c.has_header);
    c.public_path = r.text("public_path", "");
    c.public_has_header = r.flag("public_has_header", c.public_has_header);
    c.public_has_label = r.flag("public_has_label", c.public_has_label);
    r.finish();
    require(!c.path.empty(), path + ".path", "is required");
    require(!c.public_path.empty(), path + ".public_path", "is required");
    return c;
}

DataConfig parse_data(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    DataConfig d;
    const std::string source = r.text("source", "synthetic");
    const json* synth = r.raw("synthetic");
    const json* csv = r.raw("csv");
    if (source == "synthetic") {
        require(csv == nullptr, path + ".csv", "given but source is synthetic");
        d.source = synth ? parse_synthetic(*synth, path + ".synthetic") : data::SyntheticSpec{};
    } else if (source == "csv") {
        require(csv != nullptr, path + ".csv", "is required when source is csv");
        require(synth == nullptr, path + ".synthetic", "given but source is csv");
        d.source = parse_csv(*csv, path + ".csv");
    } else {
        throw ConfigError(path + ".source: expected \"synthetic\" or \"csv\", got \"" + source +
                          "\"");
    }
    d.alpha = r.real("alpha", d.alpha);
    require(d.alpha > 0.0, path + ".alpha", "must be positive");
    d.val_fraction = r.real("val_fraction", d.val_fraction);
    require(d.val_fraction >= 0.0 && d.val_fraction < 1.0, path + ".val_fraction",
            "must lie in [0, 1)");
    d.test_count = r.count("test_count", d.test_count);
    if (const json* pub = r.raw("public")) {
        ObjectReader pr(*pub, path + ".public");
        d.public_set.samples_per_class =
            pr.count("samples_per_class", d.public_set.samples_per_class);
        d.public_set.center_shift = pr.real("center_shift", d.public_set.center_shift);
        pr.finish();
        require(d.public_set.samples_per_class >= 1, path + ".public.samples_per_class",
                "must be positive");
        require(d.public_set.center_shift >= 0.0, path + ".public.center_shift",
                "must be nonnegative");
    }
    r.finish();
    return d;
}

distill::DistillConfig parse_distill(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    distill::DistillConfig c;
    c.epochs = r.count("epochs", c.epochs);
    c.batch = r.count("batch", c.batch);
    c.lr = r.real("lr", c.lr);
    c.weight_decay = r.real("wd", c.weight_decay);
    c.kd_temperature = r.real("kd_temperature", c.kd_temperature);
    c.self_reg_temperature = r.real("self_reg_temperature", c.self_reg_temperature);
    c.gamma = r.real("gamma", c.gamma);
    c.fedet_diversity = r.real("fedet_diversity", c.fedet_diversity);
    r.finish();
    require(c.batch >= 1, path + ".batch", "must be positive");
    require(c.lr >= 0.0, path + ".lr", "must be nonnegative");
    require(c.weight_decay >= 0.0, path + ".wd", "must be nonnegative");
    require(c.kd_temperature > 0.0, path + ".kd_temperature", "must be positive");
    require(c.self_reg_temperature > 0.0, path + ".self_reg_temperature", "must be positive");
    require(c.gamma >= 0.0, path + ".gamma", "must be nonnegative");
    return c;
}

fedcore::PrototypeConfig parse_prototype(const json& v, const std::string& path) {
    ObjectReader r(v, path);
    fedcore::PrototypeConfig p;
    p.name = r.text("name", "");
    require(!p.name.empty(), path + ".name", "is required");
    // Names become checkpoint file names.
    require(std::all_of(p.name.begin(), p.name.end(),
                        [](unsigned char c) {
                            return std::isalnum(c) || c == '_' || c == '-' || c == '.';
                        }) &&
                p.name != "." && p.name != "..",
            path + ".name", "may only contain letters, digits, '_', '-' and '.'");
    if (const json* hw = r.raw("hidden_widths")) {
        require(hw->is_array(), path + ".hidden_widths", "expected an array of counts");
        for (std::size_t i = 0; i < hw->size(); ++i) {
            const auto key = path + ".hidden_widths[" + std::to_string(i) + "]";
            auto w = ObjectReader::as_count((*hw)[i], key);
            require(w >= 1, key, "must be positive");
            p.arch.hidden_widths.push_back(w);
        }
    }
    p.n_clients = r.count("n_clients", p.n_clients);
    require(p.n_clients >= 1, path + ".n_clients", "must be at least 1");
    p.sample_rate = r.real("sample_rate", p.sample_rate);
    require(p.sample_rate > 0.0 && p.sample_rate <= 1.0, path + ".sample_rate",
            "must lie in (0, 1]");
    p.data_ratio = r.real("data_ratio", p.data_ratio);
    require(p.data_ratio > 0.0, path + ".data_ratio", "must be positive");
    p.local.epochs = r.count("local_epochs", p.local.epochs);
    p.local.lr = r.real("local_lr", p.local.lr);
    require(p.local.lr >= 0.0, path + ".local_lr", "must be nonnegative");
    p.local.weight_decay = r.real("local_wd", p.local.weight_decay);
    require(p.local.weight_decay >= 0.0, path + ".local_wd", "must be nonnegative");
    p.local.batch = r.count("local_batch", p.local.batch);
    require(p.local.batch >= 1, path + ".local_batch", "must be positive");
    if (r.has("local_optimizer")) {
        const auto opt = r.text("local_optimizer", "adam");
        if (opt == "adam")
            p.local.optimizer = fedcore::LocalOptimizer::adam;
        else if (opt == "sgd")
            p.local.optimizer = fedcore::LocalOptimizer::sgd;
        else
            throw ConfigError(path + ".local_optimizer: expected \"adam\" or \"sgd\", got \"" +
                              opt + "\"");
    }
    if (r.has("gamma")) {
        p.gamma = r.real("gamma", 0.0);
        require(*p.gamma >= 0.0, path + ".gamma", "must be nonnegative");
    }
    if (const json* lam = r.raw("lambda")) {
        const auto lpath = path + ".lambda";
        ObjectReader lr(*lam, lpath);
        const auto mode = lr.text("mode", "heuristic");
        if (mode == "heuristic") {
            p.lambda_mode = fedcore::HeuristicLambdas{lr.count("n_candidates", 10)};
        } else if (mode == "fixed") {
            const json* vals = lr.raw("values");
            require(vals != nullptr, lpath + ".values", "is required for fixed mode");
            p.lambda_mode = fedcore::FixedLambdas{real_list(*vals, lpath + ".values")};
        } else {
            throw ConfigError(lpath + ".mode: expected \"heuristic\" or \"fixed\", got \"" +
                              mode + "\"");
        }
        lr.finish();
    }
    r.finish();
    return p;
}

Method parse_method(const std::string& s) {
    if (s == "fedavg")
        return Method::fedavg;
    if (s == "feddf")
        return Method::feddf;
    if (s == "fedet_lite")
        return Method::fedet_lite;
    if (s == "takfl")
        return Method::takfl;
    throw ConfigError("method: expected one of fedavg, feddf, fedet_lite, takfl; got \"" + s +
                      "\"");
}

} // namespace

ExperimentConfig parse_config(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ObjectReader r(doc, "");
    ExperimentConfig cfg;
    cfg.seed = r.count("seed", cfg.seed);
    cfg.rounds = r.count("rounds", cfg.rounds);
    require(cfg.rounds >= 1, "rounds", "must be at least 1");
    cfg.method = parse_method(r.text("method", std::string(method_name(cfg.method))));
    cfg.takfl_self_reg = r.flag("takfl_self_reg", cfg.takfl_self_reg);
    cfg.freeze_lambda = r.flag("freeze_lambda", cfg.freeze_lambda);
    if (const json* d = r.raw("data"))
        cfg.data = parse_data(*d, "data");
    if (const json* d = r.raw("distill"))
        cfg.distill = parse_distill(*d, "distill");

    const json* protos = r.raw("prototypes");
    require(protos != nullptr, "prototypes", "is required");
    require(protos->is_array() && !protos->empty(), "prototypes",
            "expected a nonempty array of prototype tables");
    std::set<std::string> names;
    for (std::size_t i = 0; i < protos->size(); ++i) {
        const auto path = "prototypes[" + std::to_string(i) + "]";
        cfg.prototypes.push_back(parse_prototype((*protos)[i], path));
        require(names.insert(cfg.prototypes.back().name).second, path + ".name",
                "duplicate prototype name");
    }
    r.finish();

    const std::size_t M = cfg.prototypes.size();
    for (std::size_t i = 0; i < M; ++i) {
        if (const auto* fixed = std::get_if<fedcore::FixedLambdas>(&cfg.prototypes[i].lambda_mode)) {
            const auto path = "prototypes[" + std::to_string(i) + "].lambda.values";
            require(fixed->values.size() == M, path,
                    "expected " + std::to_string(M) + " coefficients (one per prototype), got " +
                        std::to_string(fixed->values.size()));
            try {
                taskarith::MergeCandidate{fixed->values}.validate();
            } catch (const ConfigError& e) {
                throw ConfigError(path + ": " + e.what());
            }
        }
    }

    if (const auto* s = std::get_if<data::SyntheticSpec>(&cfg.data.source))
        cfg.resolve_architectures(s->input_dim, s->class_count);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_config(ss.str());
    // CSV paths are relative to the config file.
    if (auto* csv = std::get_if<CsvSource>(&cfg.data.source)) {
        const auto base = path.parent_path();
        if (csv->path.is_relative())
            csv->path = base / csv->path;
        if (csv->public_path.is_relative())
            csv->public_path = base / csv->public_path;
    }
    return cfg;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
    using oj = nlohmann::ordered_json;
    oj out;
    out["seed"] = cfg.seed;
    out["rounds"] = cfg.rounds;
    out["method"] = method_name(cfg.method);
    out["takfl_self_reg"] = cfg.takfl_self_reg;
    out["freeze_lambda"] = cfg.freeze_lambda;

    oj d;
    if (const auto* s = std::get_if<data::SyntheticSpec>(&cfg.data.source)) {
        d["source"] = "synthetic";
        d["synthetic"] = {{"class_count", s->class_count},
                          {"input_dim", s->input_dim},
                          {"samples_per_class", s->samples_per_class},
                          {"cluster_spread", s->cluster_spread},
                          {"class_center_scale", s->class_center_scale}};
    } else {
        const auto& c = std::get<CsvSource>(cfg.data.source);
        d["source"] = "csv";
        d["csv"] = {{"path", c.path.string()},
                    {"has_header", c.has_header},
                    {"public_path", c.public_path.string()},
                    {"public_has_header", c.public_has_header},
                    {"public_has_label", c.public_has_label}};
    }
    d["alpha"] = cfg.data.alpha;
    d["val_fraction"] = cfg.data.val_fraction;
    d["test_count"] = cfg.data.test_count;
    d["public"] = {{"samples_per_class", cfg.data.public_set.samples_per_class},
                   {"center_shift", cfg.data.public_set.center_shift}};
    out["data"] = d;

    const auto& ds = cfg.distill;
    out["distill"] = {{"epochs", ds.epochs},
                      {"batch", ds.batch},
                      {"lr", ds.lr},
                      {"wd", ds.weight_decay},
                      {"kd_temperature", ds.kd_temperature},
                      {"self_reg_temperature", ds.self_reg_temperature},
                      {"gamma", ds.gamma},
                      {"fedet_diversity", ds.fedet_diversity}};

    oj protos = oj::array();
    for (const auto& p : cfg.prototypes) {
        oj j;
        j["name"] = p.name;
        j["hidden_widths"] = p.arch.hidden_widths;
        j["n_clients"] = p.n_clients;
        j["sample_rate"] = p.sample_rate;
        j["data_ratio"] = p.data_ratio;
        j["local_epochs"] = p.local.epochs;
        j["local_lr"] = p.local.lr;
        j["local_wd"] = p.local.weight_decay;
        j["local_batch"] = p.local.batch;
        j["local_optimizer"] = p.local.optimizer == fedcore::LocalOptimizer::adam ? "adam" : "sgd";
        if (p.gamma)
            j["gamma"] = *p.gamma;
        if (const auto* f = std::get_if<fedcore::FixedLambdas>(&p.lambda_mode))
            j["lambda"] = {{"mode", "fixed"}, {"values", f->values}};
        else
            j["lambda"] = {{"mode", "heuristic"},
                           {"n_candidates", std::get<fedcore::HeuristicLambdas>(p.lambda_mode)
                                                .n_candidates}};
        protos.push_back(j);
    }
    out["prototypes"] = protos;
    return out;
}

} // namespace takfl::harness
