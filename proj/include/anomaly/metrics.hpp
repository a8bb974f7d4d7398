#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "anomaly/tensor.hpp"

// Detection metrics: TNR at a fixed TPR and AUROC, plus the class-weighted
// report. Scores are oriented "higher = more in-distribution".

namespace anomaly {

struct ScoredSample {
    double score = 0.0;
    bool is_id = false;
    std::size_t predicted_class = 0;
};

// Threshold pinned at the floor((1-target_tpr)*n)-th smallest ID score
// (1-indexed; the smallest score when that lands at zero). Returns the
// fraction of anomaly scores strictly below it.
inline double tnr_at_tpr(const std::vector<double>& id_scores,
                         const std::vector<double>& anomaly_scores, double target_tpr) {
    if (id_scores.empty() || anomaly_scores.empty())
        throw ValidationError("tnr_at_tpr: empty score list");
    std::vector<double> sorted = id_scores;
    std::sort(sorted.begin(), sorted.end());
    std::size_t k = static_cast<std::size_t>(
        std::floor((1.0 - target_tpr) * static_cast<double>(sorted.size())));
    if (k == 0) k = 1;
    const double threshold = sorted[k - 1];
    std::size_t below = 0;
    for (double s : anomaly_scores)
        if (s < threshold) ++below;
    return static_cast<double>(below) / static_cast<double>(anomaly_scores.size());
}

inline double tpr_threshold(const std::vector<double>& id_scores, double target_tpr) {
    if (id_scores.empty()) throw ValidationError("tpr_threshold: empty score list");
    std::vector<double> sorted = id_scores;
    std::sort(sorted.begin(), sorted.end());
    std::size_t k = static_cast<std::size_t>(
        std::floor((1.0 - target_tpr) * static_cast<double>(sorted.size())));
    if (k == 0) k = 1;
    return sorted[k - 1];
}

// Mann-Whitney estimator with midrank tie handling:
// P(id > anomaly) + 0.5 * P(id == anomaly).
inline double auroc(const std::vector<double>& id_scores,
                    const std::vector<double>& anomaly_scores) {
    if (id_scores.empty() || anomaly_scores.empty())
        throw ValidationError("auroc: empty score list");
    struct Entry { double score; bool is_id; };
    std::vector<Entry> all;
    all.reserve(id_scores.size() + anomaly_scores.size());
    for (double s : id_scores) all.push_back({s, true});
    for (double s : anomaly_scores) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    double rank_sum_id = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j)); // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (all[k].is_id) rank_sum_id += midrank;
        i = j;
    }
    const double n1 = static_cast<double>(id_scores.size());
    const double n0 = static_cast<double>(anomaly_scores.size());
    return (rank_sum_id - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

struct PerClassMetrics {
    std::size_t class_index = 0;
    double gamma = 0.0; // fraction of all samples routed to this class
    double tpr = 0.0;
    double tnr = 0.0;
    double auroc = 0.0;
    std::size_t id_count = 0;
    std::size_t anomaly_count = 0;
    bool included = true; // false when the class lacks ID or anomaly samples
};

struct EvalReport {
    double tnr_at_target_tpr = 0.0;
    double auroc = 0.0;
    double tpr = 0.0;
    // pooled over all samples, ignoring class routing
    double pooled_tnr = 0.0;
    double pooled_auroc = 0.0;
    std::vector<PerClassMetrics> per_class;
    std::size_t id_count = 0;
    std::size_t anomaly_count = 0;
    double target_tpr = 0.95;
    bool has_excluded_classes = false;
};

// Partitions samples by predicted class, computes per-class metrics with
// per-class thresholds and aggregates them weighted by gamma_i = share of
// all samples routed to class i. Classes missing either ID or anomaly
// samples are excluded and their gamma mass redistributed.
inline EvalReport weighted_report(const std::vector<ScoredSample>& samples, double target_tpr) {
    EvalReport rep;
    rep.target_tpr = target_tpr;

    std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_class;
    std::vector<double> all_id, all_anom;
    for (const ScoredSample& s : samples) {
        if (!std::isfinite(s.score)) throw ValidationError("weighted_report: non-finite score");
        auto& bucket = by_class[s.predicted_class];
        (s.is_id ? bucket.first : bucket.second).push_back(s.score);
        (s.is_id ? all_id : all_anom).push_back(s.score);
    }
    if (all_id.empty()) throw ValidationError("weighted_report: no ID samples");
    rep.id_count = all_id.size();
    rep.anomaly_count = all_anom.size();

    const double total = static_cast<double>(samples.size());
    double gamma_included = 0.0;
    for (auto& [cls, bucket] : by_class) {
        PerClassMetrics pc;
        pc.class_index = cls;
        pc.id_count = bucket.first.size();
        pc.anomaly_count = bucket.second.size();
        pc.gamma = static_cast<double>(pc.id_count + pc.anomaly_count) / total;
        pc.included = pc.id_count > 0 && pc.anomaly_count > 0;
        if (pc.included) {
            const double t = tpr_threshold(bucket.first, target_tpr);
            std::size_t accepted = 0;
            for (double s : bucket.first)
                if (s >= t) ++accepted;
            pc.tpr = static_cast<double>(accepted) / static_cast<double>(pc.id_count);
            pc.tnr = tnr_at_tpr(bucket.first, bucket.second, target_tpr);
            pc.auroc = auroc(bucket.first, bucket.second);
            gamma_included += pc.gamma;
        } else {
            rep.has_excluded_classes = true;
        }
        rep.per_class.push_back(pc);
    }

    if (gamma_included > 0.0) {
        for (const PerClassMetrics& pc : rep.per_class) {
            if (!pc.included) continue;
            const double w = pc.gamma / gamma_included;
            rep.tnr_at_target_tpr += w * pc.tnr;
            rep.auroc += w * pc.auroc;
            rep.tpr += w * pc.tpr;
        }
    }
    if (!all_anom.empty()) {
        rep.pooled_tnr = tnr_at_tpr(all_id, all_anom, target_tpr);
        rep.pooled_auroc = auroc(all_id, all_anom);
    }
    return rep;
}

} // namespace anomaly
