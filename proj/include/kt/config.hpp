#pragma once

// Flat key = value run configuration with [sections].

#include "kt/evaluate.hpp"
#include "kt/synth.hpp"
#include "kt/training.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace kt {

struct ConfigEntry {
    std::string value;
    std::size_t line = 0;
};

/// section -> key -> entry. Keys before the first section header are an error.
struct ConfigFile {
    std::string source;
    std::map<std::string, std::map<std::string, ConfigEntry>> sections;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline ConfigFile parse_config(std::istream& in, std::string source = "<config>") {
    ConfigFile cfg;
    cfg.source = std::move(source);
    std::string line;
    std::string section;
    std::size_t number = 0;
    auto fail = [&](const std::string& why) {
        throw ConfigError(cfg.source + ":" + std::to_string(number) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        const std::string text = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') fail("malformed section header");
            section = detail::trim(text.substr(1, text.size() - 2));
            if (section.empty()) fail("empty section name");
            cfg.sections[section];
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        if (section.empty()) fail("key outside of any [section]");
        const std::string key = detail::trim(text.substr(0, eq));
        if (key.empty()) fail("empty key");
        auto& entries = cfg.sections[section];
        if (entries.count(key)) fail("duplicate key '" + key + "' in [" + section + "]");
        entries[key] = {detail::trim(text.substr(eq + 1)), number};
    }
    return cfg;
}

/// Reads typed values out of one section and rejects whatever was not read.
class SectionReader {
public:
    SectionReader(const ConfigFile& file, std::string name) : file_(file), name_(std::move(name)) {
        const auto it = file.sections.find(name_);
        if (it != file.sections.end()) entries_ = &it->second;
    }

    const std::string& name() const { return name_; }

    template <typename T>
    void read(const std::string& key, T& out) {
        const ConfigEntry* e = take(key);
        if (e) out = convert<T>(key, *e);
    }

    void read_optional_double(const std::string& key, std::optional<double>& out) {
        const ConfigEntry* e = take(key);
        if (!e) return;
        if (e->value == "none" || e->value == "off") {
            out.reset();
        } else {
            out = convert<double>(key, *e);
        }
    }

    /// Raw string of a key, if present.
    std::optional<std::string> read_raw(const std::string& key) {
        const ConfigEntry* e = take(key);
        return e ? std::optional<std::string>(e->value) : std::nullopt;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& why) const {
        const ConfigEntry* e = entries_ ? &entries_->at(key) : nullptr;
        throw ConfigError(file_.source + ":" + std::to_string(e ? e->line : 0) + ": [" + name_ + "] " + key + ": " +
                          why);
    }

    void finish() const {
        if (!entries_) return;
        for (const auto& [key, e] : *entries_) {
            if (!used_.count(key)) {
                throw ConfigError(file_.source + ":" + std::to_string(e.line) + ": unknown key '" + key + "' in [" +
                                  name_ + "]");
            }
        }
    }

private:
    const ConfigEntry* take(const std::string& key) {
        if (!entries_) return nullptr;
        const auto it = entries_->find(key);
        if (it == entries_->end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    template <typename T>
    T convert(const std::string& key, const ConfigEntry& e) const {
        const std::string& s = e.value;
        if constexpr (std::is_same_v<T, std::string>) {
            return s;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (s == "true" || s == "1" || s == "yes") return true;
            if (s == "false" || s == "0" || s == "no") return false;
            fail(key, "expected true or false, got '" + s + "'");
        } else if constexpr (std::is_same_v<T, double>) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != s.size() || !std::isfinite(v)) fail(key, "expected a number, got '" + s + "'");
            return v;
        } else {
            T v{};
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size()) fail(key, "expected an integer, got '" + s + "'");
            return v;
        }
    }

    const ConfigFile& file_;
    std::string name_;
    const std::map<std::string, ConfigEntry>* entries_ = nullptr;
    std::set<std::string> used_;
};

/// Everything a command needs besides file paths.
struct RunConfig {
    SynthConfig synth;
    ModelConfig model;
    TrainConfig train;
    int boundary_year = 2023;
    std::vector<Subset> subsets;
};

/// Seed every random stream of a run.
inline void apply_seed(RunConfig& rc, std::uint64_t seed) {
    rc.synth.seed = seed;
    rc.model.seed = seed;
    rc.train.seed = seed;
}

inline std::vector<Subset> parse_subsets(const std::string& text) {
    std::vector<Subset> out;
    for (const auto& item : detail::split_list(text, ',')) {
        if (item.empty()) throw ConfigError("empty subset entry in '" + text + "'");
        Subset s;
        const auto colon = item.find(':');
        const std::string members = colon == std::string::npos ? item : item.substr(colon + 1);
        s.label = colon == std::string::npos ? item : detail::trim(item.substr(0, colon));
        for (const auto& d : detail::split_list(members, '+')) {
            if (d.empty()) throw ConfigError("empty department in subset '" + item + "'");
            s.departments.insert(d);
        }
        if (s.label.empty() || s.departments.empty()) throw ConfigError("malformed subset '" + item + "'");
        out.push_back(std::move(s));
    }
    return out;
}

inline std::string format_subsets(const std::vector<Subset>& subsets) {
    std::string out;
    for (const auto& s : subsets) {
        if (!out.empty()) out += ',';
        out += s.label + ':';
        bool first = true;
        for (const auto& d : s.departments) {
            if (!first) out += '+';
            out += d;
            first = false;
        }
    }
    return out;
}

inline RunConfig load_run_config(const ConfigFile& file) {
    static const std::set<std::string> known{"run", "synth", "model", "train", "data", "eval"};
    for (const auto& [name, entries] : file.sections) {
        if (!known.count(name)) throw ConfigError(file.source + ": unknown section [" + name + "]");
    }
    RunConfig rc;
    {
        SectionReader r(file, "run");
        std::optional<std::uint64_t> seed;
        if (auto raw = r.read_raw("seed")) {
            std::uint64_t v = 0;
            const auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), v);
            if (ec != std::errc{} || ptr != raw->data() + raw->size()) r.fail("seed", "expected an integer");
            seed = v;
        }
        r.finish();
        if (seed) apply_seed(rc, *seed);
    }
    {
        SectionReader r(file, "synth");
        auto& s = rc.synth;
        r.read("n_students", s.n_students);
        r.read("n_skills", s.n_skills);
        r.read("records_min", s.records_min);
        r.read("records_max", s.records_max);
        if (auto years = r.read_raw("years")) {
            s.years.clear();
            for (const auto& y : detail::split_list(*years, ',')) {
                try {
                    s.years.push_back(std::stoi(y));
                } catch (const std::exception&) {
                    r.fail("years", "expected a comma-separated list of years");
                }
            }
        }
        r.read("target_pass_rate", s.target_pass_rate);
        r.read("difficulty_spread", s.difficulty_spread);
        r.read("ability_spread", s.ability_spread);
        r.read("learning_rate_gain", s.learning_rate_gain);
        r.read("cluster_correlation", s.cluster_correlation);
        if (auto mix = r.read_raw("department_mix")) {
            s.department_mix.clear();
            for (const auto& item : detail::split_list(*mix, ',')) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) r.fail("department_mix", "expected CODE:weight entries");
                try {
                    s.department_mix.push_back({detail::trim(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
                } catch (const std::exception&) {
                    r.fail("department_mix", "bad weight in '" + item + "'");
                }
            }
        }
        r.read("clean_noise", s.clean_noise);
        r.read("seed", s.seed);
        r.finish();
    }
    {
        SectionReader r(file, "model");
        auto& m = rc.model;
        if (auto arch = r.read_raw("arch")) m.arch = parse_architecture(*arch);
        r.read("seed", m.seed);
        r.read("hidden", m.hidden);
        r.read("lambda_r", m.regularization.lambda_r);
        r.read("lambda_w1", m.regularization.lambda_w1);
        r.read("lambda_w2", m.regularization.lambda_w2);
        r.read("memory_slots", m.memory_slots);
        r.read("key_dim", m.key_dim);
        r.read("value_dim", m.value_dim);
        r.read("summary_dim", m.summary_dim);
        r.read("attention_dim", m.attention_dim);
        r.read("heads", m.heads);
        r.read("max_seq_len", m.max_seq_len);
        r.read("query_dim", m.query_dim);
        r.read("encoder_dim", m.encoder_dim);
        r.read("skill_hidden", m.skill_hidden);
        r.finish();
    }
    {
        SectionReader r(file, "train");
        auto& t = rc.train;
        r.read("batch_size", t.batch_size);
        r.read("epochs", t.epochs);
        r.read("learning_rate", t.learning_rate);
        if (auto opt = r.read_raw("optimizer")) t.optimizer = parse_optimizer(*opt);
        r.read("max_seq_len", t.max_seq_len);
        r.read("seed", t.seed);
        r.read("beta1", t.beta1);
        r.read("beta2", t.beta2);
        r.read("epsilon", t.epsilon);
        r.read_optional_double("gradient_clip_norm", t.gradient_clip_norm);
        r.read("log_validation_auc", t.log_validation_auc);
        r.finish();
    }
    {
        SectionReader r(file, "data");
        r.read("boundary_year", rc.boundary_year);
        r.finish();
    }
    {
        SectionReader r(file, "eval");
        if (auto s = r.read_raw("subsets")) rc.subsets = parse_subsets(*s);
        r.finish();
    }
    validate(rc.synth);
    validate(rc.train);
    return rc;
}

inline RunConfig load_run_config(std::istream& in, std::string source = "<config>") {
    return load_run_config(parse_config(in, std::move(source)));
}

/// Every field, so the snapshot alone reproduces the run.
inline void write_run_config(std::ostream& os, const RunConfig& rc) {
    using detail::format_double;
    const auto& s = rc.synth;
    os << "[synth]\n"
       << "n_students = " << s.n_students << '\n'
       << "n_skills = " << s.n_skills << '\n'
       << "records_min = " << s.records_min << '\n'
       << "records_max = " << s.records_max << '\n'
       << "years = ";
    for (std::size_t i = 0; i < s.years.size(); ++i) os << (i ? "," : "") << s.years[i];
    os << '\n'
       << "target_pass_rate = " << format_double(s.target_pass_rate) << '\n'
       << "difficulty_spread = " << format_double(s.difficulty_spread) << '\n'
       << "ability_spread = " << format_double(s.ability_spread) << '\n'
       << "learning_rate_gain = " << format_double(s.learning_rate_gain) << '\n'
       << "cluster_correlation = " << format_double(s.cluster_correlation) << '\n'
       << "department_mix = ";
    for (std::size_t i = 0; i < s.department_mix.size(); ++i) {
        os << (i ? "," : "") << s.department_mix[i].code << ':' << format_double(s.department_mix[i].weight);
    }
    os << '\n'
       << "clean_noise = " << format_double(s.clean_noise) << '\n'
       << "seed = " << s.seed << "\n\n";

    const auto& m = rc.model;
    os << "[model]\n"
       << "arch = " << tag(m.arch) << '\n'
       << "seed = " << m.seed << '\n'
       << "hidden = " << m.hidden << '\n'
       << "lambda_r = " << format_double(m.regularization.lambda_r) << '\n'
       << "lambda_w1 = " << format_double(m.regularization.lambda_w1) << '\n'
       << "lambda_w2 = " << format_double(m.regularization.lambda_w2) << '\n'
       << "memory_slots = " << m.memory_slots << '\n'
       << "key_dim = " << m.key_dim << '\n'
       << "value_dim = " << m.value_dim << '\n'
       << "summary_dim = " << m.summary_dim << '\n'
       << "attention_dim = " << m.attention_dim << '\n'
       << "heads = " << m.heads << '\n'
       << "max_seq_len = " << m.max_seq_len << '\n'
       << "query_dim = " << m.query_dim << '\n'
       << "encoder_dim = " << m.encoder_dim << '\n'
       << "skill_hidden = " << m.skill_hidden << "\n\n";

    const auto& t = rc.train;
    os << "[train]\n"
       << "batch_size = " << t.batch_size << '\n'
       << "epochs = " << t.epochs << '\n'
       << "learning_rate = " << format_double(t.learning_rate) << '\n'
       << "optimizer = " << to_string(t.optimizer) << '\n'
       << "max_seq_len = " << t.max_seq_len << '\n'
       << "seed = " << t.seed << '\n'
       << "beta1 = " << format_double(t.beta1) << '\n'
       << "beta2 = " << format_double(t.beta2) << '\n'
       << "epsilon = " << format_double(t.epsilon) << '\n'
       << "gradient_clip_norm = " << (t.gradient_clip_norm ? format_double(*t.gradient_clip_norm) : "none") << '\n'
       << "log_validation_auc = " << (t.log_validation_auc ? "true" : "false") << "\n\n";

    os << "[data]\n"
       << "boundary_year = " << rc.boundary_year << "\n\n"
       << "[eval]\n"
       << "subsets = " << format_subsets(rc.subsets) << '\n';
}

} // namespace kt
