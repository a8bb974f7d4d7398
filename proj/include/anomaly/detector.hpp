#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomaly/dataset.hpp"
#include "anomaly/network.hpp"
#include "anomaly/svdd.hpp"
#include "anomaly/tensor.hpp"

// Anomaly detector over a fixed classifier: one SVDD pair per class, fitted
// on features from the most discriminative layer (MDL) and the logit layer.
// An input routed to class i by the classifier is scored
//   g_i(x) = beta1 * norm(mdl score) + beta2 * norm(logit score)
// and flagged anomalous when g_i(x) < tau_i.

namespace anomaly {

struct DetectorConfig {
    double beta1 = 0.5;
    double beta2 = 0.5;
    double target_tpr = 0.95;
    std::vector<std::string> candidate_layers;
    SvddConfig svdd;

    void validate() const {
        if (beta1 < 0.0 || beta2 < 0.0 || std::abs(beta1 + beta2 - 1.0) > 1e-9)
            throw ValidationError("detector: beta1/beta2 must be non-negative and sum to 1");
        if (!(target_tpr > 0.0 && target_tpr < 1.0))
            throw ValidationError("detector: target_tpr must be in (0,1)");
        svdd.validate();
    }
};

struct NormRange {
    double score_min = 0.0;
    double score_max = 0.0;
    bool degenerate() const { return !(score_max > score_min); }
};

// (raw - min) / (max - min), deliberately unclamped: scores below the
// training minimum carry information and go negative. A collapsed range maps
// every training-time value (all equal to score_min) to 0.5; other raw values
// keep a unit slope around that anchor so off-cluster probes still sink.
inline double normalize_score(double raw, const NormRange& range) {
    if (range.degenerate()) return 0.5 + (raw - range.score_min);
    return (raw - range.score_min) / (range.score_max - range.score_min);
}

struct ClassDetector {
    std::size_t class_index = 0;
    SvddModel mdl_svdd;
    SvddModel logit_svdd;
    NormRange mdl_norm;
    NormRange logit_norm;
    double tau = 0.0;
    bool degenerate = false;           // too few routed samples: always anomalous
    bool calibration_fallback = false; // tau came from training scores
};

struct DetectorBundle {
    static constexpr int kVersion = 1;
    std::string mdl_layer_name;
    std::string model_fingerprint;
    DetectorConfig config;
    std::vector<ClassDetector> class_detectors;
};

// Channel-mean reduction: rank-1 features pass through, rank-3 feature maps
// (c x h x w) collapse to the per-channel means.
inline FeatureVector reduce_features(const Tensor& tap) {
    if (tap.rank() == 1) return tap.data;
    if (tap.rank() == 3) {
        const std::size_t c = tap.shape[0], hw = tap.shape[1] * tap.shape[2];
        FeatureVector out(c);
        for (std::size_t k = 0; k < c; ++k) {
            double acc = 0.0;
            const double* p = &tap.data[k * hw];
            for (std::size_t i = 0; i < hw; ++i) acc += p[i];
            out[k] = acc / static_cast<double>(hw);
        }
        return out;
    }
    throw ValidationError("reduce_features: expected rank-1 or rank-3 tap, got rank " +
                          std::to_string(tap.rank()));
}

// Quantile from above with linear interpolation between order statistics:
// returns t such that a target_tpr fraction of the scores lies at or above t.
inline double quantile_from_above(std::vector<double> scores, double target_tpr) {
    if (scores.empty()) throw ValidationError("quantile_from_above: empty scores");
    std::sort(scores.begin(), scores.end());
    const double h = (1.0 - target_tpr) * static_cast<double>(scores.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, scores.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return scores[lo] + frac * (scores[hi] - scores[lo]);
}

namespace detail {

struct TappedFeatures {
    std::size_t predicted = 0;
    FeatureVector mdl;   // reduced
    FeatureVector logit; // raw logit vector
};

inline TappedFeatures extract_features(const NetworkModel& model, const Tensor& x,
                                       int mdl_index, int logit_index) {
    const ForwardTrace tr = run_forward(model, x);
    TappedFeatures out;
    out.predicted = argmax_index(tr.outputs.back().data);
    out.mdl = reduce_features(tr.outputs[static_cast<std::size_t>(mdl_index)]);
    out.logit = tr.outputs[static_cast<std::size_t>(logit_index)].data;
    return out;
}

} // namespace detail

// Step 1: pick the candidate layer whose pooled one-class description of the
// ID features best rejects the mix set at the target TPR. Ties go to the
// earliest layer in network order.
inline std::string select_mdl(const NetworkModel& model, const Dataset& id_samples,
                              const Dataset& mix_samples, const DetectorConfig& config) {
    config.validate();
    if (config.candidate_layers.empty()) throw ValidationError("select_mdl: no candidate layers");
    if (id_samples.images.empty() || mix_samples.images.empty())
        throw ValidationError("select_mdl: empty ID or mix dataset");

    std::vector<int> layer_indices;
    for (const std::string& cand : config.candidate_layers) {
        const int li = model.index_of(cand);
        if (li < 0) throw ValidationError("select_mdl: candidate layer '" + cand + "' not in model");
        layer_indices.push_back(li);
    }

    const std::size_t ncand = config.candidate_layers.size();
    std::vector<std::vector<FeatureVector>> id_feats(ncand), mix_feats(ncand);
    for (const Tensor& x : id_samples.images) {
        const ForwardTrace tr = run_forward(model, x);
        for (std::size_t c = 0; c < ncand; ++c)
            id_feats[c].push_back(reduce_features(tr.outputs[static_cast<std::size_t>(layer_indices[c])]));
    }
    for (const Tensor& x : mix_samples.images) {
        const ForwardTrace tr = run_forward(model, x);
        for (std::size_t c = 0; c < ncand; ++c)
            mix_feats[c].push_back(reduce_features(tr.outputs[static_cast<std::size_t>(layer_indices[c])]));
    }

    int best_index = -1;
    double best_error = std::numeric_limits<double>::infinity();
    std::string best_name;
    for (std::size_t c = 0; c < ncand; ++c) {
        const SvddModel pooled = svdd_train(id_feats[c], config.svdd);
        std::vector<double> id_scores;
        id_scores.reserve(id_feats[c].size());
        for (const auto& fv : id_feats[c]) id_scores.push_back(svdd_raw_score(pooled, fv));
        const double threshold = quantile_from_above(id_scores, config.target_tpr);

        std::size_t accepted_mix = 0;
        for (const auto& fv : mix_feats[c])
            if (svdd_raw_score(pooled, fv) >= threshold) ++accepted_mix;
        const double error = static_cast<double>(accepted_mix) /
                             static_cast<double>(mix_samples.size());
        if (error < best_error || (error == best_error && layer_indices[c] < best_index)) {
            best_error = error;
            best_index = layer_indices[c];
            best_name = config.candidate_layers[c];
        }
    }
    return best_name;
}

// Step 2 + threshold calibration. Training features for class i come from
// the samples the classifier routes to i; classes with fewer than two routed
// samples become always-anomalous detectors.
inline DetectorBundle fit_detector(const NetworkModel& model, const Dataset& id_train,
                                   const Dataset& id_calibration, const std::string& mdl_layer,
                                   const DetectorConfig& config) {
    config.validate();
    const int mdl_index = model.index_of(mdl_layer);
    if (mdl_index < 0) throw ValidationError("fit_detector: MDL layer '" + mdl_layer + "' not in model");
    const int logit_index = model.logit_layer_index();
    const std::size_t d = model.class_count;

    std::vector<std::vector<detail::TappedFeatures>> train_by_class(d), calib_by_class(d);
    for (const Tensor& x : id_train.images) {
        auto f = detail::extract_features(model, x, mdl_index, logit_index);
        train_by_class[f.predicted].push_back(std::move(f));
    }
    for (const Tensor& x : id_calibration.images) {
        auto f = detail::extract_features(model, x, mdl_index, logit_index);
        calib_by_class[f.predicted].push_back(std::move(f));
    }

    DetectorBundle bundle;
    bundle.mdl_layer_name = mdl_layer;
    bundle.model_fingerprint = model.fingerprint;
    bundle.config = config;
    bundle.class_detectors.resize(d);

    for (std::size_t i = 0; i < d; ++i) {
        ClassDetector& cd = bundle.class_detectors[i];
        cd.class_index = i;
        const auto& train = train_by_class[i];
        if (train.size() < 2) {
            cd.degenerate = true;
            cd.tau = 1e9; // any value above the constant 0.5 degenerate score
            continue;
        }

        std::vector<FeatureVector> mdl_feats, logit_feats;
        mdl_feats.reserve(train.size());
        logit_feats.reserve(train.size());
        for (const auto& f : train) {
            mdl_feats.push_back(f.mdl);
            logit_feats.push_back(f.logit);
        }
        cd.mdl_svdd = svdd_train(mdl_feats, config.svdd);
        cd.logit_svdd = svdd_train(logit_feats, config.svdd);

        std::vector<double> mdl_raw, logit_raw;
        for (const auto& f : train) {
            mdl_raw.push_back(svdd_raw_score(cd.mdl_svdd, f.mdl));
            logit_raw.push_back(svdd_raw_score(cd.logit_svdd, f.logit));
        }
        cd.mdl_norm = {*std::min_element(mdl_raw.begin(), mdl_raw.end()),
                       *std::max_element(mdl_raw.begin(), mdl_raw.end())};
        cd.logit_norm = {*std::min_element(logit_raw.begin(), logit_raw.end()),
                         *std::max_element(logit_raw.begin(), logit_raw.end())};

        auto fused_of = [&](const detail::TappedFeatures& f) {
            return config.beta1 * normalize_score(svdd_raw_score(cd.mdl_svdd, f.mdl), cd.mdl_norm) +
                   config.beta2 * normalize_score(svdd_raw_score(cd.logit_svdd, f.logit), cd.logit_norm);
        };

        std::vector<double> calib_scores;
        for (const auto& f : calib_by_class[i]) calib_scores.push_back(fused_of(f));
        if (calib_scores.empty()) {
            cd.calibration_fallback = true;
            for (const auto& f : train) calib_scores.push_back(fused_of(f));
        }
        cd.tau = quantile_from_above(std::move(calib_scores), config.target_tpr);
    }
    return bundle;
}

struct FusedScore {
    std::size_t predicted_class = 0;
    double score = 0.0;
    double mdl_normalized = 0.0;
    double logit_normalized = 0.0;
    bool degenerate_class = false;
};

inline FusedScore fused_score(const DetectorBundle& bundle, const NetworkModel& model,
                              const Tensor& x) {
    if (bundle.model_fingerprint != model.fingerprint)
        throw ValidationError("bundle fingerprint " + bundle.model_fingerprint.substr(0, 12) +
                              "... does not match model " + model.fingerprint.substr(0, 12) + "...");
    const int mdl_index = model.index_of(bundle.mdl_layer_name);
    if (mdl_index < 0)
        throw ValidationError("fused_score: MDL layer '" + bundle.mdl_layer_name + "' not in model");
    const auto f = detail::extract_features(model, x, mdl_index, model.logit_layer_index());

    const ClassDetector& cd = bundle.class_detectors.at(f.predicted);
    FusedScore out;
    out.predicted_class = f.predicted;
    if (cd.degenerate) {
        out.degenerate_class = true;
        out.mdl_normalized = 0.5;
        out.logit_normalized = 0.5;
        out.score = 0.5;
        return out;
    }
    out.mdl_normalized = normalize_score(svdd_raw_score(cd.mdl_svdd, f.mdl), cd.mdl_norm);
    out.logit_normalized = normalize_score(svdd_raw_score(cd.logit_svdd, f.logit), cd.logit_norm);
    out.score = bundle.config.beta1 * out.mdl_normalized + bundle.config.beta2 * out.logit_normalized;
    return out;
}

// g_i(x) < tau_i, strict: a score exactly at the threshold is accepted.
inline bool is_anomaly(const DetectorBundle& bundle, const NetworkModel& model, const Tensor& x) {
    const FusedScore fs = fused_score(bundle, model, x);
    const ClassDetector& cd = bundle.class_detectors.at(fs.predicted_class);
    if (cd.degenerate) return true;
    return fs.score < cd.tau;
}

// Comparison scorer: maximum softmax probability.
inline double max_softmax_baseline_score(const NetworkModel& model, const Tensor& x) {
    if (!model.ends_in_softmax())
        throw ValidationError("max_softmax_baseline_score: model does not end in softmax");
    const Tensor out = forward(model, x);
    return *std::max_element(out.data.begin(), out.data.end());
}

// ------------------------------------------------------------ persistence

namespace detail {

inline nlohmann::json svdd_to_json(const SvddModel& m) {
    nlohmann::json j;
    nlohmann::json svs = nlohmann::json::array();
    for (const auto& v : m.support_vectors) svs.push_back(v);
    j["support_vectors"] = std::move(svs);
    j["alphas"] = m.alphas;
    j["kernel_width_s"] = m.kernel_width_s;
    j["r_squared"] = m.r_squared;
    j["self_term"] = m.self_term;
    j["converged"] = m.converged;
    return j;
}

inline SvddModel svdd_from_json(const nlohmann::json& j) {
    SvddModel m;
    for (const auto& v : j.at("support_vectors"))
        m.support_vectors.push_back(v.get<FeatureVector>());
    m.alphas = j.at("alphas").get<std::vector<double>>();
    m.kernel_width_s = j.at("kernel_width_s").get<double>();
    m.r_squared = j.at("r_squared").get<double>();
    m.self_term = j.at("self_term").get<double>();
    m.converged = j.value("converged", true);
    if (m.alphas.size() != m.support_vectors.size())
        throw ValidationError("svdd model: alpha/support vector count mismatch");
    return m;
}

} // namespace detail

// `provenance` lets callers stamp extra self-description (config hash, seed)
// into the document; readers ignore unknown keys.
inline void save_bundle(const DetectorBundle& bundle, const std::string& path,
                        const nlohmann::json& provenance = nlohmann::json::object()) {
    nlohmann::json j = provenance;
    j["version"] = DetectorBundle::kVersion;
    j["model_fingerprint"] = bundle.model_fingerprint;
    j["mdl_layer_name"] = bundle.mdl_layer_name;
    j["config"] = {{"beta1", bundle.config.beta1},
                   {"beta2", bundle.config.beta2},
                   {"target_tpr", bundle.config.target_tpr},
                   {"candidate_layers", bundle.config.candidate_layers},
                   {"svdd",
                    {{"nu", bundle.config.svdd.nu},
                     {"kernel_width_s", bundle.config.svdd.kernel_width_s},
                     {"solver_tolerance", bundle.config.svdd.solver_tolerance},
                     {"max_iterations", bundle.config.svdd.max_iterations}}}};
    nlohmann::json classes = nlohmann::json::array();
    for (const ClassDetector& cd : bundle.class_detectors) {
        nlohmann::json c;
        c["class_index"] = cd.class_index;
        c["degenerate_flag"] = cd.degenerate;
        c["calibration_fallback"] = cd.calibration_fallback;
        c["tau"] = cd.tau;
        if (!cd.degenerate) {
            c["mdl_svdd"] = detail::svdd_to_json(cd.mdl_svdd);
            c["logit_svdd"] = detail::svdd_to_json(cd.logit_svdd);
            c["mdl_norm"] = {{"score_min", cd.mdl_norm.score_min}, {"score_max", cd.mdl_norm.score_max}};
            c["logit_norm"] = {{"score_min", cd.logit_norm.score_min}, {"score_max", cd.logit_norm.score_max}};
        }
        classes.push_back(std::move(c));
    }
    j["class_detectors"] = std::move(classes);

    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write bundle: " + path);
    f << j.dump(1);
    if (!f) throw ValidationError("bundle write failed: " + path);
}

inline DetectorBundle load_bundle(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open bundle: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed bundle " + path + ": " + e.what());
    }
    try {
        const int version = j.at("version").get<int>();
        if (version != DetectorBundle::kVersion)
            throw ValidationError("bundle " + path + ": unsupported version " + std::to_string(version));
        DetectorBundle b;
        if (!j.contains("model_fingerprint"))
            throw ValidationError("bundle " + path + ": missing model fingerprint");
        b.model_fingerprint = j.at("model_fingerprint").get<std::string>();
        b.mdl_layer_name = j.at("mdl_layer_name").get<std::string>();
        const auto& cj = j.at("config");
        b.config.beta1 = cj.at("beta1").get<double>();
        b.config.beta2 = cj.at("beta2").get<double>();
        b.config.target_tpr = cj.at("target_tpr").get<double>();
        b.config.candidate_layers = cj.at("candidate_layers").get<std::vector<std::string>>();
        const auto& sj = cj.at("svdd");
        b.config.svdd.nu = sj.at("nu").get<double>();
        b.config.svdd.kernel_width_s = sj.at("kernel_width_s").get<double>();
        b.config.svdd.solver_tolerance = sj.at("solver_tolerance").get<double>();
        b.config.svdd.max_iterations = sj.at("max_iterations").get<std::size_t>();
        for (const auto& c : j.at("class_detectors")) {
            ClassDetector cd;
            cd.class_index = c.at("class_index").get<std::size_t>();
            cd.degenerate = c.at("degenerate_flag").get<bool>();
            cd.calibration_fallback = c.value("calibration_fallback", false);
            cd.tau = c.at("tau").get<double>();
            if (!cd.degenerate) {
                cd.mdl_svdd = detail::svdd_from_json(c.at("mdl_svdd"));
                cd.logit_svdd = detail::svdd_from_json(c.at("logit_svdd"));
                cd.mdl_norm = {c.at("mdl_norm").at("score_min").get<double>(),
                               c.at("mdl_norm").at("score_max").get<double>()};
                cd.logit_norm = {c.at("logit_norm").at("score_min").get<double>(),
                                 c.at("logit_norm").at("score_max").get<double>()};
            }
            b.class_detectors.push_back(std::move(cd));
        }
        for (std::size_t i = 0; i < b.class_detectors.size(); ++i)
            if (b.class_detectors[i].class_index != i)
                throw ValidationError("bundle " + path + ": class detectors not 0..d-1");
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed bundle " + path + ": " + e.what());
    }
}

} // namespace anomaly
