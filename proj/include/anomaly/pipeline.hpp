#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomaly/attacks.hpp"
#include "anomaly/dataset.hpp"
#include "anomaly/detector.hpp"
#include "anomaly/metrics.hpp"
#include "anomaly/network.hpp"
#include "anomaly/noise.hpp"
#include "anomaly/sha256.hpp"

// End-to-end orchestration: select the MDL, fit the detector, score the test
// and anomaly sets against the fused detector and the max-softmax baseline,
// and emit bundle + per-sample CSV + JSON/text reports. Reruns with an
// identical config produce byte-identical artifacts.

namespace anomaly {

struct AnomalySetRef {
    std::string name;
    std::string family; // ood | adversarial | noise | fooling (informational)
    std::string path;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string model_manifest;
    std::string output_dir;
    std::string id_train_path;
    std::string id_calibration_path;
    std::string id_test_path;
    std::string mix_path; // optional when the MDL is pinned
    std::string mdl_layer; // optional: skip selection
    std::vector<AnomalySetRef> anomaly_sets;
    DetectorConfig detector;
    AttackConfig attack;
    FoolingConfig fooling;
    std::size_t mdl_id_subsample = 2000;
    std::size_t mdl_mix_subsample = 1000;
    std::string config_hash; // sha256 of the config file bytes
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::string& raw_text) {
    ExperimentConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.model_manifest = j.at("model_manifest").get<std::string>();
        c.output_dir = j.at("output_dir").get<std::string>();
        const auto& ds = j.at("datasets");
        c.id_train_path = ds.at("id_train").get<std::string>();
        c.id_calibration_path = ds.at("id_calibration").get<std::string>();
        c.id_test_path = ds.at("id_test").get<std::string>();
        c.mix_path = ds.value("mix", std::string());
        for (const auto& a : ds.value("anomaly_sets", nlohmann::json::array())) {
            AnomalySetRef ref;
            ref.name = a.at("name").get<std::string>();
            ref.family = a.value("family", "unknown");
            ref.path = a.at("path").get<std::string>();
            c.anomaly_sets.push_back(std::move(ref));
        }
        const auto& dj = j.at("detector");
        c.detector.beta1 = dj.value("beta1", 0.5);
        c.detector.beta2 = dj.value("beta2", 0.5);
        c.detector.target_tpr = dj.value("target_tpr", 0.95);
        c.detector.candidate_layers = dj.value("candidate_layers", std::vector<std::string>());
        if (dj.contains("svdd")) {
            const auto& sj = dj.at("svdd");
            c.detector.svdd.nu = sj.value("nu", 0.1);
            c.detector.svdd.kernel_width_s = sj.value("kernel_width_s", 0.0);
            c.detector.svdd.solver_tolerance = sj.value("solver_tolerance", 1e-9);
            c.detector.svdd.max_iterations = sj.value("max_iterations", std::size_t{200000});
        }
        c.mdl_layer = j.value("mdl_layer", std::string());
        c.mdl_id_subsample = j.value("mdl_id_subsample", std::size_t{2000});
        c.mdl_mix_subsample = j.value("mdl_mix_subsample", std::size_t{1000});
        if (j.contains("attack")) {
            const auto& aj = j.at("attack");
            c.attack.epsilon = aj.value("epsilon", c.attack.epsilon);
            c.attack.step_size = aj.value("step_size", c.attack.step_size);
            c.attack.max_iterations = aj.value("max_iterations", c.attack.max_iterations);
            c.attack.jsma_theta = aj.value("jsma_theta", c.attack.jsma_theta);
            c.attack.jsma_gamma = aj.value("jsma_gamma", c.attack.jsma_gamma);
            c.attack.cw_c = aj.value("cw_c", c.attack.cw_c);
            c.attack.cw_kappa = aj.value("cw_kappa", c.attack.cw_kappa);
            c.attack.cw_learning_rate = aj.value("cw_learning_rate", c.attack.cw_learning_rate);
            c.attack.cw_iterations = aj.value("cw_iterations", c.attack.cw_iterations);
            c.attack.clip_min = aj.value("clip_min", c.attack.clip_min);
            c.attack.clip_max = aj.value("clip_max", c.attack.clip_max);
        }
        if (j.contains("fooling")) {
            const auto& fj = j.at("fooling");
            c.fooling.target_confidence = fj.value("target_confidence", c.fooling.target_confidence);
            c.fooling.population_size = fj.value("population_size", c.fooling.population_size);
            c.fooling.mutation_rate = fj.value("mutation_rate", c.fooling.mutation_rate);
            c.fooling.mutation_scale = fj.value("mutation_scale", c.fooling.mutation_scale);
            c.fooling.max_generations = fj.value("max_generations", c.fooling.max_generations);
            c.fooling.seed = fj.value("seed", c.fooling.seed);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("experiment config: ") + e.what());
    }
    c.config_hash = sha256_hex(raw_text);
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed config " + path + ": " + e.what());
    }
    return parse_experiment_config(j, text);
}

struct SetScores {
    std::string name;
    std::string family;
    std::vector<FusedScore> fused;
    std::vector<double> baseline;
};

struct PipelineResult {
    std::string mdl_layer;
    DetectorBundle bundle;
    SetScores id_test;
    std::vector<SetScores> anomalies;
    std::map<std::size_t, double> per_class_acceptance; // on id_test, vs tau_i
    std::map<std::string, EvalReport> reports_ours;
    std::map<std::string, EvalReport> reports_baseline;
};

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline Dataset subsample(const Dataset& ds, std::size_t limit, std::uint64_t seed) {
    if (ds.size() <= limit) return ds;
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, 0x5b));
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    Dataset out;
    out.source = ds.source + "[subsample " + std::to_string(limit) + "]";
    if (ds.labels) out.labels = std::vector<std::size_t>();
    for (std::size_t k = 0; k < limit; ++k) {
        out.images.push_back(ds.images[idx[k]]);
        if (ds.labels) out.labels->push_back((*ds.labels)[idx[k]]);
    }
    return out;
}

inline SetScores score_set(const DetectorBundle& bundle, const NetworkModel& model,
                           const Dataset& ds, const std::string& name, const std::string& family) {
    SetScores s;
    s.name = name;
    s.family = family;
    s.fused.reserve(ds.size());
    s.baseline.reserve(ds.size());
    for (const Tensor& x : ds.images) {
        s.fused.push_back(fused_score(bundle, model, x));
        s.baseline.push_back(max_softmax_baseline_score(model, x));
    }
    return s;
}

inline std::vector<ScoredSample> to_samples(const SetScores& id, const SetScores& anom,
                                            bool use_baseline) {
    std::vector<ScoredSample> out;
    out.reserve(id.fused.size() + anom.fused.size());
    for (std::size_t i = 0; i < id.fused.size(); ++i)
        out.push_back({use_baseline ? id.baseline[i] : id.fused[i].score, true,
                       id.fused[i].predicted_class});
    for (std::size_t i = 0; i < anom.fused.size(); ++i)
        out.push_back({use_baseline ? anom.baseline[i] : anom.fused[i].score, false,
                       anom.fused[i].predicted_class});
    return out;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["tnr_at_target_tpr"] = r.tnr_at_target_tpr;
    j["auroc"] = r.auroc;
    j["tpr"] = r.tpr;
    j["pooled_tnr"] = r.pooled_tnr;
    j["pooled_auroc"] = r.pooled_auroc;
    j["id_count"] = r.id_count;
    j["anomaly_count"] = r.anomaly_count;
    j["target_tpr"] = r.target_tpr;
    j["has_excluded_classes"] = r.has_excluded_classes;
    nlohmann::json pc = nlohmann::json::array();
    for (const PerClassMetrics& m : r.per_class) {
        pc.push_back({{"class", m.class_index},
                      {"gamma", m.gamma},
                      {"tpr", m.tpr},
                      {"tnr", m.tnr},
                      {"auroc", m.auroc},
                      {"id_count", m.id_count},
                      {"anomaly_count", m.anomaly_count},
                      {"included", m.included}});
    }
    j["per_class"] = std::move(pc);
    return j;
}

} // namespace detail

// Runs the three framework steps plus evaluation. Dataset paths for test and
// mix data must be distinct files; the mix set must differ from every
// evaluation set by content hash.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.detector.validate();

    // calibration/test separation is a hard requirement
    const auto canon = [](const std::string& p) {
        return fs::weakly_canonical(fs::path(p)).string();
    };
    const std::string test_canon = canon(cfg.id_test_path);
    for (const std::string& p : {cfg.id_train_path, cfg.id_calibration_path, cfg.mix_path}) {
        if (!p.empty() && canon(p) == test_canon)
            throw ValidationError("id_test must be a distinct file, got the same path as " + p);
    }
    if (!cfg.mix_path.empty()) {
        const std::string mix_hash = dataset_file_hash(cfg.mix_path);
        if (mix_hash == dataset_file_hash(cfg.id_test_path))
            throw ValidationError("mix set has identical content to id_test");
        for (const AnomalySetRef& a : cfg.anomaly_sets)
            if (mix_hash == dataset_file_hash(a.path))
                throw ValidationError("mix set has identical content to anomaly set " + a.name);
    }

    const NetworkModel model = load_model(cfg.model_manifest);
    const Dataset id_train = ingest_raw(cfg.id_train_path);
    const Dataset id_calib = ingest_raw(cfg.id_calibration_path);

    PipelineResult res;
    if (!cfg.mdl_layer.empty()) {
        if (model.index_of(cfg.mdl_layer) < 0)
            throw ValidationError("pinned MDL layer '" + cfg.mdl_layer + "' not in model");
        res.mdl_layer = cfg.mdl_layer;
    } else {
        if (cfg.mix_path.empty())
            throw ValidationError("config needs either a pinned mdl_layer or a mix dataset");
        const Dataset mix = ingest_raw(cfg.mix_path);
        res.mdl_layer = select_mdl(model, detail::subsample(id_train, cfg.mdl_id_subsample, cfg.seed),
                                   detail::subsample(mix, cfg.mdl_mix_subsample, cfg.seed),
                                   cfg.detector);
    }

    res.bundle = fit_detector(model, id_train, id_calib, res.mdl_layer, cfg.detector);

    const Dataset id_test = ingest_raw(cfg.id_test_path);
    res.id_test = detail::score_set(res.bundle, model, id_test, "id_test", "id");

    std::map<std::size_t, std::pair<std::size_t, std::size_t>> acc; // class -> (accepted, total)
    for (const FusedScore& f : res.id_test.fused) {
        auto& [accepted, total] = acc[f.predicted_class];
        ++total;
        const ClassDetector& cd = res.bundle.class_detectors[f.predicted_class];
        if (!cd.degenerate && f.score >= cd.tau) ++accepted;
    }
    for (const auto& [cls, counts] : acc)
        res.per_class_acceptance[cls] =
            static_cast<double>(counts.first) / static_cast<double>(counts.second);

    for (const AnomalySetRef& a : cfg.anomaly_sets) {
        const Dataset ds = ingest_raw(a.path);
        res.anomalies.push_back(detail::score_set(res.bundle, model, ds, a.name, a.family));
        const SetScores& s = res.anomalies.back();
        res.reports_ours[a.name] = weighted_report(detail::to_samples(res.id_test, s, false),
                                                   cfg.detector.target_tpr);
        res.reports_baseline[a.name] = weighted_report(detail::to_samples(res.id_test, s, true),
                                                       cfg.detector.target_tpr);
    }
    return res;
}

// Writes bundle.json, scores.csv, report.json and report.txt under
// cfg.output_dir. Every artifact embeds the config hash and seed.
inline void write_pipeline_artifacts(const ExperimentConfig& cfg, const PipelineResult& res) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const fs::path out(cfg.output_dir);

    save_bundle(res.bundle, (out / "bundle.json").string(),
                {{"config_hash", cfg.config_hash}, {"seed", cfg.seed}});

    {
        std::ofstream csv(out / "scores.csv", std::ios::binary);
        if (!csv) throw ValidationError("cannot write scores.csv");
        csv << "# config_hash=" << cfg.config_hash << " seed=" << cfg.seed << "\n";
        csv << "set,index,is_id,predicted_class,fused_score,mdl_norm,logit_norm,baseline_score,is_anomaly\n";
        auto emit = [&](const SetScores& s, bool is_id) {
            for (std::size_t i = 0; i < s.fused.size(); ++i) {
                const FusedScore& f = s.fused[i];
                const ClassDetector& cd = res.bundle.class_detectors[f.predicted_class];
                const bool anomaly = cd.degenerate || f.score < cd.tau;
                csv << s.name << ',' << i << ',' << (is_id ? 1 : 0) << ',' << f.predicted_class
                    << ',' << detail::fmt17(f.score) << ',' << detail::fmt17(f.mdl_normalized)
                    << ',' << detail::fmt17(f.logit_normalized) << ',' << detail::fmt17(s.baseline[i])
                    << ',' << (anomaly ? 1 : 0) << '\n';
            }
        };
        emit(res.id_test, true);
        for (const SetScores& s : res.anomalies) emit(s, false);
    }

    {
        nlohmann::json j;
        j["version"] = 1;
        j["config_hash"] = cfg.config_hash;
        j["seed"] = cfg.seed;
        j["mdl_layer"] = res.mdl_layer;
        j["model_fingerprint"] = res.bundle.model_fingerprint;
        nlohmann::json accj;
        for (const auto& [cls, rate] : res.per_class_acceptance)
            accj[std::to_string(cls)] = rate;
        j["id_test_acceptance_per_class"] = std::move(accj);
        nlohmann::json sets = nlohmann::json::array();
        for (const SetScores& s : res.anomalies) {
            nlohmann::json e;
            e["name"] = s.name;
            e["family"] = s.family;
            e["ours"] = detail::report_to_json(res.reports_ours.at(s.name));
            e["baseline"] = detail::report_to_json(res.reports_baseline.at(s.name));
            sets.push_back(std::move(e));
        }
        j["anomaly_sets"] = std::move(sets);
        std::ofstream f(out / "report.json", std::ios::binary);
        if (!f) throw ValidationError("cannot write report.json");
        f << j.dump(1);
    }

    {
        std::ofstream txt(out / "report.txt", std::ios::binary);
        if (!txt) throw ValidationError("cannot write report.txt");
        char line[160];
        txt << "config_hash " << cfg.config_hash << "  seed " << cfg.seed << "\n";
        txt << "MDL layer: " << res.mdl_layer << "\n\n";
        std::snprintf(line, sizeof line, "%-16s %-26s %-26s\n", "Anomaly set",
                      "TNR at 95% TPR", "AUROC");
        txt << line;
        std::snprintf(line, sizeof line, "%-16s %-26s %-26s\n", "", "baseline / ours",
                      "baseline / ours");
        txt << line;
        for (const SetScores& s : res.anomalies) {
            const EvalReport& ours = res.reports_ours.at(s.name);
            const EvalReport& base = res.reports_baseline.at(s.name);
            std::snprintf(line, sizeof line, "%-16s %8.2f / %-8.2f        %8.2f / %-8.2f\n",
                          s.name.c_str(), 100.0 * base.tnr_at_target_tpr,
                          100.0 * ours.tnr_at_target_tpr, 100.0 * base.auroc, 100.0 * ours.auroc);
            txt << line;
        }
        if (res.anomalies.empty()) txt << "(no anomaly sets: calibration statistics only)\n";
        txt << "\nid_test per-class acceptance (target " << cfg.detector.target_tpr << "):\n";
        for (const auto& [cls, rate] : res.per_class_acceptance) {
            std::snprintf(line, sizeof line, "  class %-3zu %.4f\n", cls, rate);
            txt << line;
        }
    }
}

} // namespace anomaly
