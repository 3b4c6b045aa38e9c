#pragma once

// Seeded generator of institution-shaped synthetic corpora.
//
// Each student has a latent ability per skill cluster (subject); each skill a
// difficulty and discrimination. The pass probability of an attempt is
//   sigmoid(a_k * (theta_sc - b_k) + gain * prior_attempts_on_cluster + intercept)
// with the global intercept bisected so the mean probability hits the target pass rate.

#include "kt/data.hpp"
#include "kt/matrix.hpp"
#include "kt/random.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kt {

struct DepartmentWeight {
    std::string code;
    double weight = 0.0;
};

struct SynthConfig {
    std::size_t n_students = 2000;
    std::size_t n_skills = 50;
    std::size_t records_min = 20;
    std::size_t records_max = 60;
    std::vector<int> years{2020, 2021, 2022, 2023};
    double target_pass_rate = 0.8;
    double difficulty_spread = 1.0;
    double ability_spread = 1.5;
    double learning_rate_gain = 0.1;
    /// Share of a student's ability common to all clusters.
    double cluster_correlation = 0.6;
    std::vector<DepartmentWeight> department_mix{
        {"CEE", 0.11}, {"CHE", 0.12}, {"CSC", 0.24}, {"ECE", 0.21}, {"MCE", 0.32}};
    /// Fraction of emitted records that are incomplete or non-gradable.
    double clean_noise = 0.07;
    std::uint64_t seed = 42;
};

inline void validate(const SynthConfig& c) {
    if (c.n_skills < 2) throw ConfigError("synth: n_skills must be at least 2");
    if (c.records_min < 1 || c.records_min > c.records_max) throw ConfigError("synth: need 1 <= records_min <= records_max");
    if (c.years.empty()) throw ConfigError("synth: years must be non-empty");
    for (std::size_t i = 1; i < c.years.size(); ++i) {
        if (c.years[i] != c.years[i - 1] + 1) throw ConfigError("synth: years must be consecutive");
    }
    if (!(c.target_pass_rate > 0.0 && c.target_pass_rate < 1.0)) throw ConfigError("synth: target_pass_rate must lie in (0,1)");
    if (c.difficulty_spread < 0.0 || c.ability_spread < 0.0 || c.learning_rate_gain < 0.0) {
        throw ConfigError("synth: spreads and learning_rate_gain must be non-negative");
    }
    if (c.cluster_correlation < 0.0 || c.cluster_correlation > 1.0) throw ConfigError("synth: cluster_correlation must lie in [0,1]");
    if (!(c.clean_noise >= 0.0 && c.clean_noise < 1.0)) throw ConfigError("synth: clean_noise must lie in [0,1)");
    if (c.department_mix.empty()) throw ConfigError("synth: department_mix must be non-empty");
    double total = 0.0;
    for (const auto& d : c.department_mix) {
        if (d.weight < 0.0) throw ConfigError("synth: negative department weight for " + d.code);
        total += d.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("synth: department weights sum to " + std::to_string(total) + ", not 1");
}

inline constexpr int kSkillLevels[] = {1000, 2000, 3000, 4000};

/// Skill k's subject and level. Subjects are generated in ascending order, so
/// skill k receives vocabulary id k+1 whenever every skill is observed.
inline SkillKey synthetic_skill(std::size_t k) {
    const std::size_t subject = k / std::size(kSkillLevels);
    std::string code = "SK";
    code += static_cast<char>('A' + (subject / 26) % 26);
    code += static_cast<char>('A' + subject % 26);
    return {code, kSkillLevels[k % std::size(kSkillLevels)]};
}

inline std::size_t synthetic_cluster(std::size_t k) { return k / std::size(kSkillLevels); }

struct TruthEntry {
    std::string universal_id;
    /// Index among the student's graded records, i.e. its position after clean() and encode().
    std::size_t step = 0;
    std::size_t skill = 0;
    double probability = 0.0;
    int correct = 0;
};

struct GroundTruth {
    std::vector<std::vector<double>> ability; ///< per student, per cluster
    std::vector<double> difficulty;           ///< per skill
    std::vector<double> discrimination;       ///< per skill, > 0
    double intercept = 0.0;
    std::vector<TruthEntry> interactions;

    /// True pass probability keyed by (universal_id, step).
    std::map<std::pair<std::string, std::size_t>, double> probability_index() const {
        std::map<std::pair<std::string, std::size_t>, double> out;
        for (const auto& e : interactions) out[{e.universal_id, e.step}] = e.probability;
        return out;
    }
};

/// Bookkeeping kept while generating, for recount oracles.
struct SynthCounters {
    std::size_t total_records = 0;
    std::size_t graded_records = 0;
    std::size_t noise_records = 0;
    std::size_t passes = 0;
    std::map<std::string, std::size_t> graded_per_student;
    std::vector<std::size_t> graded_per_skill;
    std::map<std::string, std::size_t> students_per_department;
    std::set<std::pair<std::string, int>> course_types;
    std::set<std::size_t> skills_seen;
};

struct SynthCorpus {
    std::vector<RawRecord> records;
    StudentMetadata metadata;
    GroundTruth truth;
    SynthCounters counters;
};

inline std::string synthetic_student_id(std::size_t s) { return std::to_string(4000000 + s); }

inline std::string college_of(const std::string& department) {
    static const std::set<std::string> coe{"CEE", "CHE", "CSC", "ECE", "MCE"};
    return coe.count(department) ? "COE" : "COAS";
}

inline SynthCorpus generate(const SynthConfig& config) {
    validate(config);
    Rng rng(config.seed);
    const std::size_t n_skills = config.n_skills;
    const std::size_t n_clusters = synthetic_cluster(n_skills - 1) + 1;
    const std::size_t n_years = config.years.size();
    const std::size_t n_levels = std::size(kSkillLevels);

    SynthCorpus out;
    GroundTruth& truth = out.truth;
    SynthCounters& counters = out.counters;
    counters.graded_per_skill.assign(n_skills, 0);

    truth.difficulty.resize(n_skills);
    truth.discrimination.resize(n_skills);
    for (std::size_t k = 0; k < n_skills; ++k) {
        truth.difficulty[k] = config.difficulty_spread * rng.normal();
        truth.discrimination[k] = std::exp(0.25 * rng.normal());
    }

    struct Attempt {
        std::size_t skill;
        std::size_t year_index;
        double logit; // without intercept
    };
    std::vector<std::vector<Attempt>> attempts(config.n_students);
    std::vector<std::string> departments(config.n_students);
    truth.ability.resize(config.n_students);

    const double rho = config.cluster_correlation;
    for (std::size_t s = 0; s < config.n_students; ++s) {
        const double u = rng.uniform();
        double cum = 0.0;
        departments[s] = config.department_mix.back().code;
        for (const auto& d : config.department_mix) {
            cum += d.weight;
            if (u < cum) {
                departments[s] = d.code;
                break;
            }
        }
        const double general = rng.normal();
        auto& theta = truth.ability[s];
        theta.resize(n_clusters);
        for (auto& t : theta) {
            t = config.ability_spread * (std::sqrt(rho) * general + std::sqrt(1.0 - rho) * rng.normal());
        }

        const std::size_t count = config.records_min + rng.below(config.records_max - config.records_min + 1);
        std::vector<std::size_t> prior(n_clusters, 0);
        for (std::size_t j = 0; j < count; ++j) {
            // Course level tracks progress through the student's career, give or take one.
            const std::size_t stage = j * n_levels / count;
            const std::size_t jitter = rng.below(3);
            std::size_t level = stage + jitter;
            level = level == 0 ? 0 : level - 1;
            level = std::min(level, n_levels - 1);
            std::vector<std::size_t> candidates;
            for (std::size_t k = level; k < n_skills; k += n_levels) candidates.push_back(k);
            if (candidates.empty()) candidates.push_back(rng.below(n_skills));
            const std::size_t k = candidates[rng.below(candidates.size())];
            const std::size_t c = synthetic_cluster(k);
            const double logit = truth.discrimination[k] * (theta[c] - truth.difficulty[k]) +
                                 config.learning_rate_gain * static_cast<double>(prior[c]);
            ++prior[c];
            attempts[s].push_back({k, j * n_years / count, logit});
        }
    }

    // Bisect the global intercept on the mean pass probability.
    std::size_t total_attempts = 0;
    for (const auto& a : attempts) total_attempts += a.size();
    if (total_attempts > 0) {
        auto mean_prob = [&](double c) {
            double acc = 0.0;
            for (const auto& seq : attempts) {
                for (const auto& a : seq) acc += sigmoid(a.logit + c);
            }
            return acc / static_cast<double>(total_attempts);
        };
        double lo = -40.0;
        double hi = 40.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (mean_prob(mid) < config.target_pass_rate ? lo : hi) = mid;
        }
        truth.intercept = 0.5 * (lo + hi);
        const double achieved = mean_prob(truth.intercept);
        const double t = config.target_pass_rate;
        if (!(std::abs(std::log(achieved / (1.0 - achieved)) - std::log(t / (1.0 - t))) <= 1e-6)) {
            std::ostringstream msg;
            msg << "synth: cannot calibrate pass rate; achieved " << achieved << " vs target " << config.target_pass_rate;
            throw ConfigError(msg.str());
        }
    }

    static const Grade pass_grades[] = {Grade::A, Grade::B, Grade::C, Grade::CR};
    static const double pass_weights[] = {0.35, 0.35, 0.25, 0.05};
    static const Grade fail_grades[] = {Grade::D, Grade::F, Grade::W, Grade::NC};
    static const double fail_weights[] = {0.30, 0.35, 0.30, 0.05};
    auto pick_grade = [&](const Grade* grades, const double* weights) {
        const double u = rng.uniform();
        double cum = 0.0;
        for (int i = 0; i < 3; ++i) {
            cum += weights[i];
            if (u < cum) return grades[i];
        }
        return grades[3];
    };
    const double noise_odds = config.clean_noise / (1.0 - config.clean_noise);

    // Per student, per year: the records in emission order.
    std::vector<std::vector<std::vector<RawRecord>>> by_year(config.n_students,
                                                             std::vector<std::vector<RawRecord>>(n_years));
    for (std::size_t s = 0; s < config.n_students; ++s) {
        const std::string uid = synthetic_student_id(s);
        out.metadata[uid] = {college_of(departments[s]), departments[s]};
        ++counters.students_per_department[departments[s]];
        for (std::size_t j = 0; j < attempts[s].size(); ++j) {
            const Attempt& a = attempts[s][j];
            const double p = sigmoid(a.logit + truth.intercept);
            const int correct = rng.uniform() < p ? 1 : 0;
            const SkillKey key = synthetic_skill(a.skill);
            const int variants = 1 + static_cast<int>(a.skill % 3);
            const int number = key.level + 101 + 100 * static_cast<int>(rng.below(static_cast<std::uint64_t>(variants)));
            RawRecord r{config.years[a.year_index], uid, key.subject, key.level,
                        correct ? pick_grade(pass_grades, pass_weights) : pick_grade(fail_grades, fail_weights), number};
            by_year[s][a.year_index].push_back(r);
            truth.interactions.push_back({uid, j, a.skill, p, correct});
            ++counters.graded_records;
            counters.passes += static_cast<std::size_t>(correct);
            ++counters.graded_per_student[uid];
            ++counters.graded_per_skill[a.skill];
            counters.course_types.insert({key.subject, number});
            counters.skills_seen.insert(a.skill);
        }
    }
    // Noise records come from a separate stream so they never perturb the graded draws.
    // Each graded record is followed by noise_odds noise records in expectation,
    // making clean_noise the expected noise share of all records.
    Rng noise_rng(config.seed ^ 0x9E3779B97F4A7C15ull);
    for (std::size_t s = 0; s < config.n_students; ++s) {
        for (std::size_t y = 0; y < n_years; ++y) {
            std::vector<RawRecord> merged;
            for (const auto& r : by_year[s][y]) {
                merged.push_back(r);
                double budget = noise_odds;
                while (budget > 0.0) {
                    const double chance = std::min(budget, 1.0);
                    budget -= 1.0;
                    if (noise_rng.uniform() >= chance) continue;
                    const std::size_t k = noise_rng.below(n_skills);
                    const SkillKey key = synthetic_skill(k);
                    RawRecord n{r.academic_year, r.universal_id, key.subject, key.level,
                                noise_rng.uniform() < 0.5 ? Grade::I : Grade::NG, key.level + 101};
                    merged.push_back(n);
                    ++counters.noise_records;
                }
            }
            by_year[s][y] = std::move(merged);
        }
    }
    for (std::size_t y = 0; y < n_years; ++y) {
        for (std::size_t s = 0; s < config.n_students; ++s) {
            for (auto& r : by_year[s][y]) out.records.push_back(std::move(r));
        }
    }
    counters.total_records = out.records.size();
    return out;
}

/// The five rows of the dataset statistics table.
struct DatasetStatistics {
    std::size_t total_records = 0;
    std::size_t records_after_cleaning = 0;
    std::size_t students = 0;
    std::size_t course_types = 0;
    std::size_t kc_types = 0;

    bool operator==(const DatasetStatistics&) const = default;
};

/// Students, course types and knowledge components are counted on the cleaned records.
/// A course type is (subject, course number) when numbers are present, else (subject, level).
inline DatasetStatistics summarize(const std::vector<RawRecord>& records) {
    DatasetStatistics st;
    st.total_records = records.size();
    std::set<std::string> students;
    std::set<std::pair<std::string, int>> courses;
    std::set<std::pair<std::string, int>> kcs;
    for (const auto& r : records) {
        if (is_ungraded(r.grade)) continue;
        ++st.records_after_cleaning;
        students.insert(r.universal_id);
        courses.insert({r.course_subject, r.course_number.value_or(r.course_level)});
        kcs.insert({r.course_subject, r.course_level});
    }
    st.students = students.size();
    st.course_types = courses.size();
    st.kc_types = kcs.size();
    return st;
}

inline void write_statistics(std::ostream& out, const DatasetStatistics& st) {
    out << "item,value\n"
        << "Total Records," << st.total_records << '\n'
        << "Records after data cleaning," << st.records_after_cleaning << '\n'
        << "Students," << st.students << '\n'
        << "Types of Courses," << st.course_types << '\n'
        << "Types of Knowledge Components," << st.kc_types << '\n';
}

inline void write_records(std::ostream& out, const std::vector<RawRecord>& records) {
    out << "academic_year,universal_id,course_subject,course_level,grade,course_number\n";
    for (const auto& r : records) {
        out << r.academic_year << ',' << r.universal_id << ',' << r.course_subject << ',' << r.course_level << ','
            << to_string(r.grade) << ',';
        if (r.course_number) out << *r.course_number;
        out << '\n';
    }
}

inline void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
    out << "universal_id,step,probability\n";
    std::ostringstream line;
    line << std::setprecision(17);
    for (const auto& e : truth.interactions) {
        line.str("");
        line << e.universal_id << ',' << e.step << ',' << e.probability << '\n';
        out << line.str();
    }
}

} // namespace kt
