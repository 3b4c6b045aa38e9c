#pragma once

// The five commands behind the CLI and the files they exchange.
//
// A data directory holds train.csv, test.csv, vocabulary.csv, statistics.csv,
// rejects.csv, provenance.txt and, when affiliations are known, metadata.csv.

#include "kt/checkpoint.hpp"
#include "kt/report.hpp"

#include <filesystem>
#include <fstream>

namespace kt {

namespace fs = std::filesystem;

/// Process exit codes.
enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_data = 3, exit_numeric = 4, exit_io = 5, exit_internal = 70 };

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return exit_config;
    if (dynamic_cast<const NumericError*>(&e)) return exit_numeric;
    if (dynamic_cast<const IoError*>(&e)) return exit_io;
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ClassificationError*>(&e) ||
        dynamic_cast<const EncodingError*>(&e) || dynamic_cast<const ContractError*>(&e) ||
        dynamic_cast<const DimensionError*>(&e)) {
        return exit_data;
    }
    return exit_internal;
}

inline std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    return in;
}

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
}

inline void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

/// Run f(stream) on a fresh output file and fail if the stream broke.
template <typename F>
void write_file(const fs::path& p, F&& f) {
    auto out = open_out(p);
    f(out);
    out.flush();
    if (!out) throw IoError("failed writing " + p.string());
}

/// Prefix a data error with the file it came from.
template <typename F>
auto with_file(const fs::path& p, F&& f) {
    try {
        return f();
    } catch (const FormatError& e) {
        throw FormatError(p.string() + ": " + e.what());
    } catch (const EncodingError& e) {
        throw EncodingError(p.string() + ": " + e.what());
    } catch (const ClassificationError& e) {
        throw ClassificationError(p.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- sequences

inline void write_sequences(std::ostream& os, const std::vector<StudentSequence>& seqs) {
    os << "universal_id,step,skill_id,correct,academic_year\n";
    for (const auto& s : seqs) {
        for (std::size_t t = 0; t < s.interactions.size(); ++t) {
            const auto& i = s.interactions[t];
            os << s.universal_id << ',' << t << ',' << i.skill_id << ',' << i.correct << ',' << i.academic_year << '\n';
        }
    }
}

/// Rows of one student must be contiguous with steps 0, 1, 2, ...
inline std::vector<StudentSequence> read_sequences(std::istream& is, std::size_t num_skills) {
    std::string line;
    if (!std::getline(is, line) || csv::split(line) != csv::split("universal_id,step,skill_id,correct,academic_year")) {
        throw FormatError("expected header universal_id,step,skill_id,correct,academic_year");
    }
    std::vector<StudentSequence> out;
    std::set<std::string> seen;
    std::size_t number = 1;
    while (std::getline(is, line)) {
        ++number;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        auto bad = [&](const std::string& what) { return FormatError("line " + std::to_string(number) + ": " + what); };
        if (f.size() != 5) throw bad("expected 5 fields");
        const auto step = csv::parse_int<std::size_t>(f[1]);
        const auto skill = csv::parse_int<int>(f[2]);
        const auto correct = csv::parse_int<int>(f[3]);
        const auto year = csv::parse_int<int>(f[4]);
        if (!step || !skill || !correct || !year || f[0].empty()) throw bad("malformed row");
        if (*skill < 1 || static_cast<std::size_t>(*skill) > num_skills) {
            throw EncodingError("line " + std::to_string(number) + ": skill id " + std::to_string(*skill) +
                                " outside 1.." + std::to_string(num_skills));
        }
        if (*correct != 0 && *correct != 1) throw bad("correct must be 0 or 1");
        if (out.empty() || out.back().universal_id != f[0]) {
            if (!seen.insert(f[0]).second) throw bad("rows of student " + f[0] + " are not contiguous");
            out.push_back({f[0], {}});
        }
        if (*step != out.back().interactions.size()) throw bad("step " + std::to_string(*step) + " out of order");
        out.back().interactions.push_back({*skill, *correct, *year});
    }
    return out;
}

inline void write_vocabulary(std::ostream& os, const SkillVocabulary& v) {
    os << "skill_id,course_subject,course_level\n";
    for (std::size_t i = 0; i < v.size(); ++i) os << i + 1 << ',' << v.keys()[i].subject << ',' << v.keys()[i].level << '\n';
}

inline SkillVocabulary read_vocabulary(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || csv::split(line) != csv::split("skill_id,course_subject,course_level")) {
        throw FormatError("expected header skill_id,course_subject,course_level");
    }
    std::vector<SkillKey> keys;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = csv::split(line);
        const auto id = f.size() == 3 ? csv::parse_int<std::size_t>(f[0]) : std::nullopt;
        const auto level = f.size() == 3 ? csv::parse_int<int>(f[2]) : std::nullopt;
        if (!id || !level || *id != keys.size() + 1) throw FormatError("bad vocabulary row '" + line + "'");
        keys.push_back({f[1], *level});
    }
    SkillVocabulary v(keys);
    if (v.keys() != keys) throw FormatError("vocabulary rows are not in canonical order");
    return v;
}

inline void write_provenance(std::ostream& os, const DatasetSplit& split) {
    for (const auto& [k, v] : split.provenance) os << k << " = " << v << '\n';
    for (const auto& w : split.warnings) os << "warning = " << w << '\n';
}

inline void read_provenance(std::istream& is, DatasetSplit& split) {
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 3);
        if (key == "warning") {
            split.warnings.push_back(value);
        } else {
            split.provenance[key] = value;
        }
    }
}

struct DataDir {
    DatasetSplit split;
    std::optional<StudentMetadata> metadata;
};

inline DataDir read_data_dir(const fs::path& dir) {
    DataDir d;
    const auto vocab_path = dir / "vocabulary.csv";
    auto vin = open_in(vocab_path);
    d.split.vocabulary = with_file(vocab_path, [&] { return read_vocabulary(vin); });
    const std::size_t q = d.split.vocabulary.size();
    for (const char* name : {"train.csv", "test.csv"}) {
        const auto p = dir / name;
        auto in = open_in(p);
        auto seqs = with_file(p, [&] { return read_sequences(in, q); });
        (std::string(name) == "train.csv" ? d.split.train : d.split.test) = std::move(seqs);
    }
    if (fs::exists(dir / "provenance.txt")) {
        auto in = open_in(dir / "provenance.txt");
        read_provenance(in, d.split);
    }
    if (fs::exists(dir / "metadata.csv")) {
        auto in = open_in(dir / "metadata.csv");
        d.metadata = with_file(dir / "metadata.csv", [&] { return parse_metadata(in); });
    }
    return d;
}

inline void write_config_snapshot(const fs::path& dir, const RunConfig& rc) {
    write_file(dir / "config.txt", [&](std::ostream& os) { write_run_config(os, rc); });
}

// ---------------------------------------------------------------- commands

struct PreprocessSummary {
    DatasetStatistics statistics;
    std::size_t rejects = 0;
    std::vector<std::string> warnings;
};

inline PreprocessSummary cmd_preprocess(const fs::path& input_csv, const std::optional<fs::path>& metadata_csv,
                                        const RunConfig& rc, const fs::path& out_dir) {
    auto in = open_in(input_csv);
    const ParseResult parsed = with_file(input_csv, [&] { return parse_records(in); });
    std::optional<StudentMetadata> metadata;
    if (metadata_csv) {
        auto min = open_in(*metadata_csv);
        metadata = with_file(*metadata_csv, [&] { return parse_metadata(min); });
    }
    PreprocessSummary summary;
    summary.statistics = summarize(parsed.records);
    summary.rejects = parsed.rejects.size();
    const DatasetSplit split = prepare(parsed.records, rc.boundary_year);
    summary.warnings = split.warnings;

    ensure_dir(out_dir);
    write_file(out_dir / "rejects.csv", [&](std::ostream& os) { write_rejects(os, parsed.rejects); });
    write_file(out_dir / "statistics.csv", [&](std::ostream& os) { write_statistics(os, summary.statistics); });
    write_file(out_dir / "vocabulary.csv", [&](std::ostream& os) { write_vocabulary(os, split.vocabulary); });
    write_file(out_dir / "train.csv", [&](std::ostream& os) { write_sequences(os, split.train); });
    write_file(out_dir / "test.csv", [&](std::ostream& os) { write_sequences(os, split.test); });
    write_file(out_dir / "provenance.txt", [&](std::ostream& os) { write_provenance(os, split); });
    if (metadata) write_file(out_dir / "metadata.csv", [&](std::ostream& os) { write_metadata(os, *metadata); });
    write_config_snapshot(out_dir, rc);
    return summary;
}

inline SynthCorpus cmd_synth(const RunConfig& rc, const fs::path& out_dir) {
    SynthCorpus corpus = generate(rc.synth);
    ensure_dir(out_dir);
    write_file(out_dir / "records.csv", [&](std::ostream& os) { write_records(os, corpus.records); });
    write_file(out_dir / "metadata.csv", [&](std::ostream& os) { write_metadata(os, corpus.metadata); });
    write_file(out_dir / "ground_truth.csv", [&](std::ostream& os) { write_ground_truth(os, corpus.truth); });
    write_file(out_dir / "statistics.csv", [&](std::ostream& os) { write_statistics(os, summarize(corpus.records)); });
    write_config_snapshot(out_dir, rc);
    return corpus;
}

inline TrainResult cmd_train(const RunConfig& rc, const fs::path& data_dir, const fs::path& out_dir) {
    const DataDir data = read_data_dir(data_dir);
    ModelConfig mc = rc.model;
    mc.num_skills = data.split.vocabulary.size();
    TrainResult result = train(init_model(mc), data.split, rc.train);
    ensure_dir(out_dir);
    save_checkpoint((out_dir / "checkpoint.bin").string(),
                    {result.state, data.split.vocabulary, rc.train, result.history.epochs.size()});
    write_file(out_dir / "history.csv", [&](std::ostream& os) { write_history(os, result.history); });
    write_config_snapshot(out_dir, rc);
    return result;
}

inline std::vector<MetricsReport> cmd_eval(const fs::path& checkpoint, const fs::path& data_dir,
                                           const std::vector<Subset>& subsets, const fs::path& out_dir) {
    const DataDir data = read_data_dir(data_dir);
    const Checkpoint ck = load_checkpoint(checkpoint.string(), data.split.vocabulary.size());
    if (!subsets.empty() && !data.metadata) {
        throw FormatError("department subsets need " + (data_dir / "metadata.csv").string());
    }
    const StudentMetadata none;
    const auto reports = evaluate(ck.state, data.split, data.metadata ? *data.metadata : none, subsets,
                                  std::string(display_name(ck.state.config.arch)), ck.train.max_seq_len,
                                  ck.train.batch_size);
    ensure_dir(out_dir);
    write_file(out_dir / "metrics.csv", [&](std::ostream& os) { write_reports_csv(os, reports); });
    write_file(out_dir / "metrics.txt", [&](std::ostream& os) { write_reports_table(os, reports); });
    RunConfig rc;
    rc.model = ck.state.config;
    rc.train = ck.train;
    rc.subsets = subsets;
    write_config_snapshot(out_dir, rc);
    return reports;
}

/// Each run directory must hold a metrics.csv from cmd_eval.
inline ReportGrid cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
    if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    std::vector<std::vector<MetricsReport>> runs;
    for (const auto& dir : run_dirs) {
        const auto p = dir / "metrics.csv";
        auto in = open_in(p);
        runs.push_back(read_reports_csv(in, p.string()));
    }
    ReportGrid grid = build_grid(runs);
    ensure_dir(out_dir);
    write_file(out_dir / "report.csv", [&](std::ostream& os) { write_grid_csv(os, grid); });
    write_file(out_dir / "report.txt", [&](std::ostream& os) { write_grid_tables(os, grid); });
    return grid;
}

} // namespace kt
