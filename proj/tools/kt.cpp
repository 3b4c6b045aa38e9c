// kt: preprocess, synth, train, eval and report from the command line.

#include "kt/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

kt::RunConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
    kt::RunConfig rc;
    if (!path.empty()) {
        auto in = kt::open_in(path);
        rc = kt::load_run_config(in, path);
    }
    if (seed) kt::apply_seed(rc, *seed);
    return rc;
}

void print_statistics(const kt::DatasetStatistics& s) {
    std::cout << "records " << s.total_records << " -> " << s.records_after_cleaning << " after cleaning, "
              << s.students << " students, " << s.course_types << " course types, " << s.kc_types << " KCs\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge tracing: preprocessing, synthetic data, training and evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;

    auto common = [&](CLI::App* cmd, bool needs_seed) {
        cmd->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
        if (needs_seed) cmd->add_option("--seed", seed, "seed for every random stream of the run");
        cmd->add_option("--out", out, "output directory")->required();
    };

    auto* pre = app.add_subcommand("preprocess", "clean, encode and split an institutional records CSV");
    std::string input;
    std::string metadata;
    std::optional<int> boundary;
    pre->add_option("--input", input, "records CSV")->required()->check(CLI::ExistingFile);
    pre->add_option("--metadata", metadata, "student affiliation CSV")->check(CLI::ExistingFile);
    pre->add_option("--boundary-year", boundary, "first test year");
    common(pre, false);

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    common(synth, true);

    auto* trn = app.add_subcommand("train", "train one architecture on a data directory");
    std::string arch;
    std::string data;
    std::optional<std::size_t> epochs;
    trn->add_option("--arch", arch, "dkt, dkt+, dkvmn, sakt or kqn");
    trn->add_option("--data", data, "directory written by preprocess")->required()->check(CLI::ExistingDirectory);
    trn->add_option("--epochs", epochs, "override the configured epoch count");
    common(trn, true);

    auto* ev = app.add_subcommand("eval", "score a checkpoint on the test split");
    std::string checkpoint;
    std::string subsets;
    ev->add_option("--checkpoint", checkpoint, "checkpoint.bin from train")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "directory written by preprocess")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--subsets", subsets, "e.g. CEE,CHE or COE:CEE+CHE+CSC");
    common(ev, false);

    auto* rep = app.add_subcommand("report", "merge eval directories into the comparison tables");
    std::vector<std::string> runs;
    rep->add_option("runs", runs, "eval output directories")->required()->check(CLI::ExistingDirectory);
    rep->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kt::exit_config;
    }

    try {
        if (pre->parsed()) {
            auto rc = load(config_path, std::nullopt);
            if (boundary) rc.boundary_year = *boundary;
            std::optional<kt::fs::path> meta;
            if (!metadata.empty()) meta = metadata;
            const auto s = kt::cmd_preprocess(input, meta, rc, out);
            print_statistics(s.statistics);
            std::cout << s.rejects << " rejected rows\n";
            for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
        } else if (synth->parsed()) {
            const auto corpus = kt::cmd_synth(load(config_path, seed), out);
            print_statistics(kt::summarize(corpus.records));
        } else if (trn->parsed()) {
            auto rc = load(config_path, seed);
            if (!arch.empty()) rc.model.arch = kt::parse_architecture(arch);
            if (epochs) rc.train.epochs = *epochs;
            const auto r = kt::cmd_train(rc, data, out);
            std::cout << kt::display_name(rc.model.arch) << ": initial loss " << r.history.initial_loss;
            if (!r.history.epochs.empty()) std::cout << ", final loss " << r.history.epochs.back().loss;
            std::cout << " over " << r.history.epochs.size() << " epochs\n";
            if (r.history.skipped_windows) std::cout << r.history.skipped_windows << " windows skipped\n";
        } else if (ev->parsed()) {
            auto rc = load(config_path, std::nullopt);
            if (!subsets.empty()) rc.subsets = kt::parse_subsets(subsets);
            kt::write_reports_table(std::cout, kt::cmd_eval(checkpoint, data, rc.subsets, out));
        } else if (rep->parsed()) {
            std::vector<kt::fs::path> dirs(runs.begin(), runs.end());
            kt::write_grid_tables(std::cout, kt::cmd_report(dirs, out));
        }
    } catch (const kt::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kt::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kt::exit_internal;
    }
    return kt::exit_ok;
}
