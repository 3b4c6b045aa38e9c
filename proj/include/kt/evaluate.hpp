#pragma once

// Scoring of next-step predictions over sequences, and per-subset reports.

#include "kt/data.hpp"
#include "kt/metrics.hpp"
#include "kt/models/model.hpp"
#include "kt/synth.hpp"

#include <map>
#include <set>

namespace kt {

/// One window cut from a student sequence, with its offset into that sequence.
struct WindowRef {
    const StudentSequence* student = nullptr;
    std::size_t offset = 0;
    EncodedWindow window;
};

/// Windows of at most max_len steps. Windows with fewer than two interactions are
/// dropped and counted in *skipped.
inline std::vector<WindowRef> cut_windows(const std::vector<StudentSequence>& seqs, std::size_t max_len,
                                          std::size_t* skipped = nullptr) {
    std::vector<WindowRef> out;
    std::size_t dropped = 0;
    for (const auto& s : seqs) {
        std::size_t offset = 0;
        for (const auto& w : window(s, max_len)) {
            if (w.has_next_step_target()) {
                out.push_back({&s, offset, to_window(w)});
            } else {
                ++dropped;
            }
            offset += w.interactions.size();
        }
    }
    if (skipped) *skipped = dropped;
    return out;
}

inline Batch batch_of(const std::vector<WindowRef>& refs, std::size_t begin, std::size_t end, std::size_t q) {
    std::vector<EncodedWindow> ws;
    ws.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) ws.push_back(refs[i].window);
    return make_batch(ws, q);
}

/// Predictions at every valid next step. step is the index within the scored sequence.
inline std::vector<ScoredPrediction> score(const ModelState& state, const std::vector<StudentSequence>& seqs,
                                           std::size_t max_len, std::size_t batch_size = 256) {
    if (batch_size == 0) throw ConfigError("score: batch_size must be at least 1");
    const auto refs = cut_windows(seqs, max_len);
    std::vector<ScoredPrediction> out;
    for (std::size_t begin = 0; begin < refs.size(); begin += batch_size) {
        const std::size_t end = std::min(refs.size(), begin + batch_size);
        const Batch batch = batch_of(refs, begin, end, state.config.num_skills);
        const auto trace = predict(state, batch);
        for (std::size_t b = 0; b < batch.size; ++b) {
            const auto& ref = refs[begin + b];
            for (std::size_t t = 0; t + 1 < batch.steps; ++t) {
                if (!batch.target_valid(b, t)) continue;
                out.push_back({trace.next_prob(b, t), batch.label(b, t + 1), ref.student->universal_id,
                               ref.offset + t + 1, batch.skill(b, t + 1)});
            }
        }
    }
    return out;
}

/// Replace each test prediction by the generator's true pass probability.
///
/// Test sequences hold the suffix of each student's record, so the generator's
/// step is the scored step plus the student's training-side length.
inline std::vector<ScoredPrediction> bayes_scores(std::vector<ScoredPrediction> preds, const DatasetSplit& split,
                                                  const GroundTruth& truth) {
    std::map<std::string, std::size_t> offset;
    for (const auto& s : split.train) offset[s.universal_id] = s.interactions.size();
    const auto index = truth.probability_index();
    for (auto& p : preds) {
        const auto it = offset.find(p.universal_id);
        const std::size_t full = p.step + (it == offset.end() ? 0 : it->second);
        const auto hit = index.find({p.universal_id, full});
        if (hit == index.end()) {
            throw ContractError("no generator probability for " + p.universal_id + " step " + std::to_string(full));
        }
        p.probability = hit->second;
    }
    return preds;
}

/// A named set of departments. No departments means every student.
struct Subset {
    std::string label;
    std::set<std::string> departments;
};

inline constexpr const char* kAggregateLabel = "All";

/// Reports for each subset, then the aggregate over the whole test split.
inline std::vector<MetricsReport> evaluate(const ModelState& state, const DatasetSplit& split,
                                           const StudentMetadata& metadata, const std::vector<Subset>& subsets,
                                           std::string model_name, std::size_t max_len = 100,
                                           std::size_t batch_size = 256) {
    const auto all = score(state, split.test, max_len, batch_size);
    std::vector<MetricsReport> out;
    for (const auto& subset : subsets) {
        if (subset.departments.empty()) {
            out.push_back(make_report(all, model_name, subset.label));
            continue;
        }
        std::vector<ScoredPrediction> picked;
        for (const auto& p : all) {
            const auto it = metadata.find(p.universal_id);
            if (it != metadata.end() && subset.departments.count(it->second.department)) picked.push_back(p);
        }
        out.push_back(make_report(picked, model_name, subset.label));
    }
    out.push_back(make_report(all, std::move(model_name), kAggregateLabel));
    return out;
}

} // namespace kt
