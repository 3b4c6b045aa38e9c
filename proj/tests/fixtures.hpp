#pragma once

// Constructed corpora with reference dataset shapes.

#include "kt/data.hpp"

#include <string>
#include <vector>

namespace fixtures {

/// 233 (subject, level) pairs whose sorted order reproduces the reference vocabulary anchors:
/// ACCT 2000..5000, ADMN 5000, AFAM 1000 first and SPED 4000, SPED 5000, SPMT 1000 last.
inline std::vector<kt::SkillKey> univ_skills() {
    std::vector<kt::SkillKey> keys{{"ACCT", 2000}, {"ACCT", 3000}, {"ACCT", 4000}, {"ACCT", 5000},
                                   {"ADMN", 5000}, {"AFAM", 1000}};
    for (int s = 0; s < 56; ++s) {
        std::string subject = "C";
        subject += static_cast<char>('A' + s / 26);
        subject += static_cast<char>('A' + s % 26);
        subject += 'X';
        for (int level = 1000; level <= 4000; level += 1000) keys.push_back({subject, level});
    }
    keys.push_back({"SPED", 4000});
    keys.push_back({"SPED", 5000});
    keys.push_back({"SPMT", 1000});
    return keys;
}

struct Shape {
    std::size_t total;
    std::size_t clean;
    std::size_t students;
    std::size_t course_types;
};

inline constexpr Shape kUniv{352148, 326269, 17181, 2124};

/// Deterministic corpus with the given shape over univ_skills().
/// Course numbers per skill are spread so the distinct (subject, number) count equals course_types.
inline std::vector<kt::RawRecord> shaped_corpus(const Shape& shape) {
    const auto keys = univ_skills();
    const std::size_t k = keys.size();
    const std::size_t base = shape.course_types / k;
    const std::size_t extra = shape.course_types % k;
    auto variants = [&](std::size_t kc) { return base + (kc < extra ? 1 : 0); };
    const kt::Grade graded[] = {kt::Grade::A, kt::Grade::B, kt::Grade::C, kt::Grade::CR,
                                kt::Grade::D, kt::Grade::F, kt::Grade::W, kt::Grade::NC};
    std::vector<kt::RawRecord> out;
    out.reserve(shape.total);
    for (std::size_t i = 0; i < shape.total; ++i) {
        const bool noise = i >= shape.clean;
        const std::size_t kc = i % k;
        const std::size_t variant = (i / k) % variants(kc);
        kt::RawRecord r;
        r.academic_year = 2020 + static_cast<int>(i % 4);
        r.universal_id = std::to_string(300000 + i % shape.students);
        r.course_subject = keys[kc].subject;
        r.course_level = keys[kc].level;
        r.course_number = keys[kc].level + static_cast<int>(variant);
        r.grade = noise ? (i % 2 ? kt::Grade::I : kt::Grade::NG) : graded[(i * 5) % 8];
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace fixtures
