#pragma once

// Student-record preprocessing: parse, clean, binarize, encode, split, window.

#include "kt/csv.hpp"
#include "kt/errors.hpp"

#include <algorithm>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace kt {

enum class Grade { A, B, C, D, F, W, CR, NC, I, NG };

inline constexpr std::string_view kGradeSymbols[] = {"A", "B", "C", "D", "F", "W", "CR", "NC", "I", "NG"};

inline std::string_view to_string(Grade g) { return kGradeSymbols[static_cast<int>(g)]; }

inline Grade parse_grade(std::string_view symbol) {
    for (std::size_t i = 0; i < std::size(kGradeSymbols); ++i) {
        if (kGradeSymbols[i] == symbol) return static_cast<Grade>(i);
    }
    throw ClassificationError("unknown grade symbol '" + std::string(symbol) + "'");
}

/// Incomplete or non-gradable: removed by clean().
inline bool is_ungraded(Grade g) { return g == Grade::I || g == Grade::NG; }

/// A, B, C and credit pass; D, F, withdraw and no-credit fail.
inline int binarize_grade(Grade g) {
    switch (g) {
    case Grade::A:
    case Grade::B:
    case Grade::C:
    case Grade::CR:
        return 1;
    case Grade::D:
    case Grade::F:
    case Grade::W:
    case Grade::NC:
        return 0;
    default:
        throw ClassificationError("grade " + std::string(to_string(g)) + " has no pass/fail outcome");
    }
}

struct RawRecord {
    int academic_year = 0;
    std::string universal_id;
    std::string course_subject;
    int course_level = 0;
    Grade grade = Grade::A;
    /// Full course number when the input carries one (e.g. 3201); only used for course-type counts.
    std::optional<int> course_number;

    bool operator==(const RawRecord&) const = default;
};

struct Reject {
    std::size_t line = 0;
    std::string reason;
};

struct ParseResult {
    std::vector<RawRecord> records;
    std::vector<Reject> rejects;
};

inline constexpr std::string_view kRecordColumns[] = {"academic_year", "universal_id", "course_subject",
                                                      "course_level", "grade"};

/// Read the institutional CSV. Malformed rows land in rejects with their line number.
inline ParseResult parse_records(std::istream& in) {
    ParseResult out;
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("records file is empty; expected header " + std::string("academic_year,universal_id,"
                                                                                  "course_subject,course_level,grade"));
    }
    const auto header = csv::split(line);
    std::map<std::string, std::size_t, std::less<>> column;
    for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
    std::size_t idx[5];
    for (std::size_t k = 0; k < 5; ++k) {
        auto it = column.find(kRecordColumns[k]);
        if (it == column.end()) throw FormatError("records header is missing column '" + std::string(kRecordColumns[k]) + "'");
        idx[k] = it->second;
    }
    std::optional<std::size_t> number_col;
    if (auto it = column.find("course_number"); it != column.end()) number_col = it->second;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = csv::split(line);
        auto reject = [&](std::string reason) { out.rejects.push_back({line_no, std::move(reason)}); };
        if (f.size() != header.size()) {
            reject("field count");
            continue;
        }
        RawRecord r;
        const auto year = csv::parse_int<int>(f[idx[0]]);
        if (!year) {
            reject("academic_year");
            continue;
        }
        r.academic_year = *year;
        r.universal_id = f[idx[1]];
        if (r.universal_id.empty()) {
            reject("universal_id");
            continue;
        }
        r.course_subject = f[idx[2]];
        if (r.course_subject.size() != 4) {
            reject("subject length");
            continue;
        }
        const auto level = csv::parse_int<int>(f[idx[3]]);
        if (!level || *level < 0 || *level % 1000 != 0) {
            reject("course_level");
            continue;
        }
        r.course_level = *level;
        try {
            r.grade = parse_grade(f[idx[4]]);
        } catch (const ClassificationError&) {
            reject("grade");
            continue;
        }
        if (number_col && !f[*number_col].empty()) {
            const auto number = csv::parse_int<int>(f[*number_col]);
            if (!number || *number < 0) {
                reject("course_number");
                continue;
            }
            r.course_number = *number;
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

inline void write_rejects(std::ostream& out, const std::vector<Reject>& rejects) {
    out << "line,reason\n";
    for (const auto& r : rejects) out << r.line << ',' << r.reason << '\n';
}

struct CleanResult {
    std::vector<RawRecord> records;
    std::size_t removed = 0;
};

/// Drop incomplete (I) and non-gradable (NG) records, keeping order.
inline CleanResult clean(std::vector<RawRecord> records) {
    CleanResult out;
    out.records.reserve(records.size());
    for (auto& r : records) {
        if (is_ungraded(r.grade)) {
            ++out.removed;
        } else {
            out.records.push_back(std::move(r));
        }
    }
    return out;
}

struct SkillKey {
    std::string subject;
    int level = 0;

    auto operator<=>(const SkillKey&) const = default;
    bool operator==(const SkillKey&) const = default;
};

inline std::string to_string(const SkillKey& k) { return k.subject + " " + std::to_string(k.level); }

/// Bijection between (subject, level) pairs and skill ids 1..K, in ascending pair order.
class SkillVocabulary {
public:
    SkillVocabulary() = default;

    explicit SkillVocabulary(std::vector<SkillKey> keys) : keys_(std::move(keys)) {
        std::sort(keys_.begin(), keys_.end());
        keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
        for (std::size_t i = 0; i < keys_.size(); ++i) ids_.emplace(keys_[i], static_cast<int>(i + 1));
    }

    std::size_t size() const noexcept { return keys_.size(); }
    const std::vector<SkillKey>& keys() const noexcept { return keys_; }

    std::optional<int> find(const SkillKey& k) const {
        auto it = ids_.find(k);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    int id_of(const SkillKey& k) const {
        if (auto id = find(k)) return *id;
        throw EncodingError("skill (" + k.subject + ", " + std::to_string(k.level) + ") is not in the vocabulary");
    }

    const SkillKey& key_of(int id) const {
        if (id < 1 || static_cast<std::size_t>(id) > keys_.size()) {
            throw EncodingError("skill id " + std::to_string(id) + " outside 1.." + std::to_string(keys_.size()));
        }
        return keys_[static_cast<std::size_t>(id - 1)];
    }

    bool operator==(const SkillVocabulary& o) const { return keys_ == o.keys_; }

private:
    std::vector<SkillKey> keys_;
    std::map<SkillKey, int> ids_;
};

inline SkillVocabulary build_vocabulary(const std::vector<RawRecord>& records) {
    std::vector<SkillKey> keys;
    keys.reserve(records.size());
    for (const auto& r : records) keys.push_back({r.course_subject, r.course_level});
    return SkillVocabulary(std::move(keys));
}

struct Interaction {
    int skill_id = 0;
    int correct = 0;
    int academic_year = 0;

    bool operator==(const Interaction&) const = default;
};

struct StudentSequence {
    std::string universal_id;
    std::vector<Interaction> interactions;

    /// Next-step losses need at least one (current, next) pair.
    bool has_next_step_target() const noexcept { return interactions.size() >= 2; }
    bool operator==(const StudentSequence&) const = default;
};

/// Group records per student (first-appearance order) and order each student's
/// interactions by academic year, keeping file order within a year.
inline std::vector<StudentSequence> encode(const std::vector<RawRecord>& records, const SkillVocabulary& vocab) {
    std::vector<StudentSequence> out;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& r : records) {
        const int id = vocab.id_of({r.course_subject, r.course_level});
        auto [it, fresh] = slot.try_emplace(r.universal_id, out.size());
        if (fresh) out.push_back({r.universal_id, {}});
        out[it->second].interactions.push_back({id, binarize_grade(r.grade), r.academic_year});
    }
    for (auto& s : out) {
        std::stable_sort(s.interactions.begin(), s.interactions.end(),
                         [](const Interaction& a, const Interaction& b) { return a.academic_year < b.academic_year; });
    }
    return out;
}

struct DatasetSplit {
    std::vector<StudentSequence> train;
    std::vector<StudentSequence> test;
    SkillVocabulary vocabulary;
    std::map<std::string, std::string> provenance;
    std::vector<std::string> warnings;
};

/// Years before the boundary train, the rest test.
///
/// The boundary must leave a non-empty training side and sit at most one year
/// past the data; a boundary past the last year yields an empty test side and a warning.
/// Test sequences carry no training history as warm-up context.
inline DatasetSplit split_by_year(const std::vector<StudentSequence>& sequences, const SkillVocabulary& vocab,
                                  int boundary_year) {
    DatasetSplit out;
    out.vocabulary = vocab;
    int lo = std::numeric_limits<int>::max();
    int hi = std::numeric_limits<int>::min();
    for (const auto& s : sequences) {
        for (const auto& i : s.interactions) {
            lo = std::min(lo, i.academic_year);
            hi = std::max(hi, i.academic_year);
        }
    }
    if (lo > hi) throw ConfigError("split_by_year: no interactions to split");
    if (boundary_year <= lo || boundary_year > hi + 1) {
        throw ConfigError("split boundary " + std::to_string(boundary_year) + " outside data range " +
                          std::to_string(lo) + ".." + std::to_string(hi));
    }
    std::set<int> train_skills;
    std::set<int> test_skills;
    for (const auto& s : sequences) {
        StudentSequence tr{s.universal_id, {}};
        StudentSequence te{s.universal_id, {}};
        for (const auto& i : s.interactions) {
            if (i.academic_year < boundary_year) {
                tr.interactions.push_back(i);
                train_skills.insert(i.skill_id);
            } else {
                te.interactions.push_back(i);
                test_skills.insert(i.skill_id);
            }
        }
        if (!tr.interactions.empty()) out.train.push_back(std::move(tr));
        if (!te.interactions.empty()) out.test.push_back(std::move(te));
    }
    if (out.test.empty()) {
        out.warnings.push_back("test split is empty: no interactions in or after " + std::to_string(boundary_year));
    }
    for (int skill : test_skills) {
        if (!train_skills.count(skill)) {
            out.warnings.push_back("skill " + std::to_string(skill) + " (" + to_string(vocab.key_of(skill)) +
                                   ") appears only in test");
        }
    }
    out.provenance["boundary_year"] = std::to_string(boundary_year);
    out.provenance["test_warmup"] = "none";
    out.provenance["vocabulary"] = "train+test";
    return out;
}

/// Consecutive non-overlapping chunks of at most max_len interactions.
inline std::vector<StudentSequence> window(const StudentSequence& seq, std::size_t max_len = 100) {
    if (max_len < 2) throw ContractError("window: max_len must be at least 2");
    std::vector<StudentSequence> out;
    for (std::size_t start = 0; start < seq.interactions.size(); start += max_len) {
        const std::size_t end = std::min(seq.interactions.size(), start + max_len);
        out.push_back({seq.universal_id, {seq.interactions.begin() + static_cast<std::ptrdiff_t>(start),
                                          seq.interactions.begin() + static_cast<std::ptrdiff_t>(end)}});
    }
    return out;
}

struct Affiliation {
    std::string college;
    std::string department;
};

using StudentMetadata = std::map<std::string, Affiliation>;

inline StudentMetadata parse_metadata(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("metadata file is empty");
    const auto header = csv::split(line);
    const std::string_view expected[] = {"universal_id", "college", "department"};
    std::size_t idx[3];
    for (std::size_t k = 0; k < 3; ++k) {
        auto it = std::find(header.begin(), header.end(), expected[k]);
        if (it == header.end()) throw FormatError("metadata header is missing column '" + std::string(expected[k]) + "'");
        idx[k] = static_cast<std::size_t>(it - header.begin());
    }
    StudentMetadata out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = csv::split(line);
        if (f.size() != header.size()) throw FormatError("metadata line " + std::to_string(line_no) + ": field count");
        if (!out.emplace(f[idx[0]], Affiliation{f[idx[1]], f[idx[2]]}).second) {
            throw FormatError("metadata line " + std::to_string(line_no) + ": duplicate universal_id " + f[idx[0]]);
        }
    }
    return out;
}

inline void write_metadata(std::ostream& out, const StudentMetadata& meta) {
    out << "universal_id,college,department\n";
    for (const auto& [id, a] : meta) out << id << ',' << a.college << ',' << a.department << '\n';
}

enum class MissingMetadata { exclude, fail };

struct FilterResult {
    DatasetSplit split;
    std::size_t missing = 0;
};

/// Keep students whose department is in codes. Vocabulary and ids are untouched.
inline FilterResult filter_by_department(const DatasetSplit& split, const StudentMetadata& meta,
                                         const std::set<std::string>& codes,
                                         MissingMetadata policy = MissingMetadata::exclude) {
    FilterResult out;
    out.split.vocabulary = split.vocabulary;
    out.split.provenance = split.provenance;
    out.split.warnings = split.warnings;
    auto keep = [&](const StudentSequence& s) {
        auto it = meta.find(s.universal_id);
        if (it == meta.end()) {
            if (policy == MissingMetadata::fail) {
                throw FormatError("student " + s.universal_id + " has no metadata entry");
            }
            ++out.missing;
            return false;
        }
        return codes.count(it->second.department) > 0;
    };
    for (const auto& s : split.train) {
        if (keep(s)) out.split.train.push_back(s);
    }
    for (const auto& s : split.test) {
        if (keep(s)) out.split.test.push_back(s);
    }
    std::string joined;
    for (const auto& c : codes) joined += (joined.empty() ? "" : "+") + c;
    out.split.provenance["departments"] = joined;
    out.split.provenance["filter_granularity"] = "student";
    return out;
}

/// clean, build_vocabulary, encode and split_by_year in one pass.
inline DatasetSplit prepare(std::vector<RawRecord> records, int boundary_year) {
    const auto cleaned = clean(std::move(records));
    const auto vocab = build_vocabulary(cleaned.records);
    auto split = split_by_year(encode(cleaned.records, vocab), vocab, boundary_year);
    split.provenance["records_removed"] = std::to_string(cleaned.removed);
    return split;
}

} // namespace kt
