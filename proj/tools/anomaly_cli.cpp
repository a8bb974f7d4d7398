// Command-line front end: dataset generation and ingestion, desk-scale
// classifier training, MDL selection, detector fitting, anomaly generation,
// scoring and evaluation. Exit codes: 0 success, 2 validation error,
// 3 runtime failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "anomaly/attacks.hpp"
#include "anomaly/dataset.hpp"
#include "anomaly/detector.hpp"
#include "anomaly/metrics.hpp"
#include "anomaly/network.hpp"
#include "anomaly/noise.hpp"
#include "anomaly/pipeline.hpp"
#include "anomaly/synth.hpp"
#include "anomaly/train.hpp"

namespace {

using namespace anomaly;

Shape parse_shape(const std::string& s) {
    Shape shape;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        if (part.empty()) throw ValidationError("bad shape string '" + s + "'");
        shape.push_back(std::stoul(part));
    }
    if (shape.empty()) throw ValidationError("bad shape string '" + s + "'");
    return shape;
}

Dataset load_dataset_arg(const std::string& rtds, const std::string& idx_images,
                         const std::string& idx_labels) {
    if (!rtds.empty()) return ingest_raw(rtds);
    if (!idx_images.empty()) {
        std::optional<std::string> labels;
        if (!idx_labels.empty()) labels = idx_labels;
        return ingest_idx(idx_images, labels);
    }
    throw ValidationError("no input dataset given (use --data or --idx-images)");
}

void write_sidecar(const std::string& data_path, const nlohmann::json& meta) {
    std::ofstream f(data_path + ".json", std::ios::binary);
    if (!f) throw ValidationError("cannot write sidecar for " + data_path);
    f << meta.dump(1);
}

struct ScoreRow {
    std::size_t index = 0;
    bool is_id = false;
    std::size_t predicted_class = 0;
    double fused = 0.0;
    double baseline = 0.0;
};

std::vector<ScoreRow> read_score_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open score file: " + path);
    std::vector<ScoreRow> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("set,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 9) throw ValidationError(path + ": malformed score row '" + line + "'");
        ScoreRow r;
        r.index = std::stoul(fields[1]);
        r.is_id = fields[2] == "1";
        r.predicted_class = std::stoul(fields[3]);
        r.fused = std::stod(fields[4]);
        r.baseline = std::stod(fields[7]);
        rows.push_back(r);
    }
    return rows;
}

void write_score_csv(const std::string& path, const std::string& set_name, bool is_id,
                     const DetectorBundle& bundle, const NetworkModel& model, const Dataset& ds,
                     const std::string& provenance) {
    std::ofstream csv(path, std::ios::binary);
    if (!csv) throw ValidationError("cannot write " + path);
    char buf[64];
    csv << "# " << provenance << "\n";
    csv << "set,index,is_id,predicted_class,fused_score,mdl_norm,logit_norm,baseline_score,is_anomaly\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const FusedScore f = fused_score(bundle, model, ds.images[i]);
        const double base = max_softmax_baseline_score(model, ds.images[i]);
        const ClassDetector& cd = bundle.class_detectors[f.predicted_class];
        const bool anomaly = cd.degenerate || f.score < cd.tau;
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            csv << buf;
        };
        csv << set_name << ',' << i << ',' << (is_id ? 1 : 0) << ',' << f.predicted_class << ',';
        put(f.score);
        csv << ',';
        put(f.mdl_normalized);
        csv << ',';
        put(f.logit_normalized);
        csv << ',';
        put(base);
        csv << ',' << (anomaly ? 1 : 0) << '\n';
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Per-class SVDD anomaly detection toolkit for small classifiers"};
    app.require_subcommand(1);

    // ---------------- synth
    auto* synth = app.add_subcommand("synth", "generate a procedural dataset (digits/letters/fashion)");
    std::string synth_family = "digits", synth_out;
    std::size_t synth_count = 1000;
    std::uint64_t synth_seed = 42;
    synth->add_option("--family", synth_family, "digits | letters | fashion");
    synth->add_option("--count", synth_count)->required();
    synth->add_option("--seed", synth_seed);
    synth->add_option("--out", synth_out, "output RTDS path")->required();
    synth->callback([&] {
        const Dataset ds = synth_dataset(synth_family_from_name(synth_family), synth_count, synth_seed);
        write_raw(ds, synth_out);
        write_sidecar(synth_out, {{"generator", "synth"},
                                  {"family", synth_family},
                                  {"count", synth_count},
                                  {"seed", synth_seed}});
        std::cout << "wrote " << ds.size() << " tensors to " << synth_out << "\n";
    });

    // ---------------- train-fixture
    auto* trainc = app.add_subcommand("train-fixture", "train the desk-scale classifier");
    std::string tr_data, tr_idx_images, tr_idx_labels, tr_arch = "cnn8", tr_out;
    std::string tr_blob = "model.bin";
    std::size_t tr_classes = 10, tr_epochs = 12, tr_batch = 64;
    double tr_lr = 0.1, tr_target = 0.95;
    std::uint64_t tr_seed = 42;
    trainc->add_option("--data", tr_data, "labeled RTDS dataset");
    trainc->add_option("--idx-images", tr_idx_images);
    trainc->add_option("--idx-labels", tr_idx_labels);
    trainc->add_option("--arch", tr_arch, "cnn<k> or dense:<h1>,<h2>,...");
    trainc->add_option("--classes", tr_classes);
    trainc->add_option("--epochs", tr_epochs);
    trainc->add_option("--batch", tr_batch);
    trainc->add_option("--lr", tr_lr);
    trainc->add_option("--target-accuracy", tr_target);
    trainc->add_option("--seed", tr_seed);
    trainc->add_option("--out-manifest", tr_out)->required();
    trainc->add_option("--blob-name", tr_blob);
    trainc->callback([&] {
        const Dataset ds = load_dataset_arg(tr_data, tr_idx_images, tr_idx_labels);
        TrainConfig tc;
        tc.epochs = tr_epochs;
        tc.batch_size = tr_batch;
        tc.learning_rate = tr_lr;
        tc.target_accuracy = tr_target;
        tc.seed = tr_seed;
        TrainResult res = train_fixture_classifier(ds, tr_arch, tr_classes, tc);
        save_model(res.model, tr_out, tr_blob);
        std::cout << "holdout accuracy " << res.holdout_accuracy << " after " << res.epochs_run
                  << " epochs -> " << tr_out << "\n";
        if (!res.reached_target)
            std::cerr << "warning: target accuracy " << tr_target << " not reached; best model kept\n";
    });

    // ---------------- select-mdl
    auto* selc = app.add_subcommand("select-mdl", "pick the most discriminative layer");
    std::string sel_model, sel_id, sel_mix;
    std::vector<std::string> sel_candidates;
    double sel_nu = 0.1, sel_tpr = 0.95;
    selc->add_option("--model", sel_model)->required();
    selc->add_option("--id", sel_id, "ID RTDS dataset")->required();
    selc->add_option("--mix", sel_mix, "mix (anomaly) RTDS dataset")->required();
    selc->add_option("--candidates", sel_candidates, "candidate layer names")->required()->delimiter(',');
    selc->add_option("--nu", sel_nu);
    selc->add_option("--target-tpr", sel_tpr);
    selc->callback([&] {
        const NetworkModel model = load_model(sel_model);
        DetectorConfig dc;
        dc.candidate_layers = sel_candidates;
        dc.svdd.nu = sel_nu;
        dc.target_tpr = sel_tpr;
        std::cout << select_mdl(model, ingest_raw(sel_id), ingest_raw(sel_mix), dc) << "\n";
    });

    // ---------------- fit
    auto* fitc = app.add_subcommand("fit", "fit the per-class detector bundle");
    std::string fit_model, fit_train, fit_calib, fit_mix, fit_mdl, fit_out;
    std::vector<std::string> fit_candidates;
    double fit_nu = 0.1, fit_tpr = 0.95, fit_beta1 = 0.5, fit_beta2 = 0.5, fit_width = 0.0;
    fitc->add_option("--model", fit_model)->required();
    fitc->add_option("--id-train", fit_train)->required();
    fitc->add_option("--id-calibration", fit_calib)->required();
    fitc->add_option("--mdl-layer", fit_mdl, "pin the MDL (skips selection)");
    fitc->add_option("--mix", fit_mix, "mix set for MDL selection");
    fitc->add_option("--candidates", fit_candidates)->delimiter(',');
    fitc->add_option("--nu", fit_nu);
    fitc->add_option("--kernel-width", fit_width, "RBF width, 0 = median heuristic");
    fitc->add_option("--target-tpr", fit_tpr);
    fitc->add_option("--beta1", fit_beta1);
    fitc->add_option("--beta2", fit_beta2);
    fitc->add_option("--out", fit_out)->required();
    fitc->callback([&] {
        const NetworkModel model = load_model(fit_model);
        DetectorConfig dc;
        dc.beta1 = fit_beta1;
        dc.beta2 = fit_beta2;
        dc.target_tpr = fit_tpr;
        dc.candidate_layers = fit_candidates.empty() ? std::vector<std::string>{fit_mdl} : fit_candidates;
        dc.svdd.nu = fit_nu;
        dc.svdd.kernel_width_s = fit_width;
        const Dataset train = ingest_raw(fit_train);
        const Dataset calib = ingest_raw(fit_calib);
        std::string mdl = fit_mdl;
        if (mdl.empty()) {
            if (fit_mix.empty()) throw ValidationError("fit needs --mdl-layer or --mix");
            if (fit_candidates.empty()) throw ValidationError("--mix requires --candidates");
            mdl = select_mdl(model, train, ingest_raw(fit_mix), dc);
            std::cout << "selected MDL: " << mdl << "\n";
        }
        const DetectorBundle bundle = fit_detector(model, train, calib, mdl, dc);
        save_bundle(bundle, fit_out);
        std::cout << "bundle -> " << fit_out << "\n";
    });

    // ---------------- attack
    auto* attc = app.add_subcommand("attack", "generate adversarial samples from a labeled set");
    std::string at_model, at_data, at_method = "fgsm", at_out;
    std::size_t at_limit = 0;
    bool at_successful_only = false;
    AttackConfig at_cfg;
    attc->add_option("--model", at_model)->required();
    attc->add_option("--data", at_data, "labeled RTDS dataset")->required();
    attc->add_option("--method", at_method, "fgsm | bim-a | bim-b | jsma | cw")->required();
    attc->add_option("--epsilon", at_cfg.epsilon);
    attc->add_option("--step-size", at_cfg.step_size);
    attc->add_option("--iterations", at_cfg.max_iterations);
    attc->add_option("--jsma-theta", at_cfg.jsma_theta);
    attc->add_option("--jsma-gamma", at_cfg.jsma_gamma);
    attc->add_option("--cw-c", at_cfg.cw_c);
    attc->add_option("--cw-kappa", at_cfg.cw_kappa);
    attc->add_option("--cw-lr", at_cfg.cw_learning_rate);
    attc->add_option("--cw-iterations", at_cfg.cw_iterations);
    attc->add_option("--limit", at_limit, "attack at most N correctly-classified samples");
    attc->add_flag("--successful-only", at_successful_only, "keep only successful attacks");
    attc->add_option("--out", at_out)->required();
    attc->callback([&] {
        const NetworkModel model = load_model(at_model);
        const Dataset ds = ingest_raw(at_data);
        if (!ds.labels) throw ValidationError("attack needs a labeled dataset");
        ds.validate_labels(model.class_count);
        Dataset out;
        std::vector<bool> success_flags;
        std::size_t attacked = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (at_limit && attacked >= at_limit) break;
            const std::size_t label = (*ds.labels)[i];
            if (predict_class(model, ds.images[i]) != label) continue; // skip already-wrong
            ++attacked;
            AttackResult r;
            if (at_method == "fgsm") r = fgsm(model, ds.images[i], label, at_cfg);
            else if (at_method == "bim-a") r = bim(model, ds.images[i], label, at_cfg, BimVariant::a);
            else if (at_method == "bim-b") r = bim(model, ds.images[i], label, at_cfg, BimVariant::b);
            else if (at_method == "jsma") r = jsma(model, ds.images[i], (label + 1) % model.class_count, at_cfg);
            else if (at_method == "cw") r = cw_l2(model, ds.images[i], label, at_cfg);
            else throw ValidationError("unknown attack method '" + at_method + "'");
            if (at_successful_only && !r.success) continue;
            out.images.push_back(r.image);
            success_flags.push_back(r.success);
        }
        write_raw(out, at_out);
        nlohmann::json flags = nlohmann::json::array();
        for (bool b : success_flags) flags.push_back(b);
        write_sidecar(at_out, {{"generator", at_method},
                               {"config",
                                {{"epsilon", at_cfg.epsilon},
                                 {"step_size", at_cfg.step_size},
                                 {"max_iterations", at_cfg.max_iterations},
                                 {"jsma_theta", at_cfg.jsma_theta},
                                 {"jsma_gamma", at_cfg.jsma_gamma},
                                 {"cw_c", at_cfg.cw_c},
                                 {"cw_kappa", at_cfg.cw_kappa},
                                 {"cw_learning_rate", at_cfg.cw_learning_rate},
                                 {"cw_iterations", at_cfg.cw_iterations},
                                 {"clip_min", at_cfg.clip_min},
                                 {"clip_max", at_cfg.clip_max}}},
                               {"source", at_data},
                               {"attacked", attacked},
                               {"success_flags", flags}});
        std::cout << "wrote " << out.size() << " samples (" << attacked << " attacked) -> " << at_out << "\n";
    });

    // ---------------- noise
    auto* noisec = app.add_subcommand("noise", "generate Gaussian or uniform pixel noise");
    std::string no_kind = "gaussian", no_shape = "1x28x28", no_out;
    std::size_t no_count = 1000;
    std::uint64_t no_seed = 42;
    noisec->add_option("--kind", no_kind, "gaussian | uniform");
    noisec->add_option("--count", no_count)->required();
    noisec->add_option("--shape", no_shape);
    noisec->add_option("--seed", no_seed);
    noisec->add_option("--out", no_out)->required();
    noisec->callback([&] {
        const Shape shape = parse_shape(no_shape);
        Dataset ds;
        if (no_kind == "gaussian") ds = gaussian_noise(no_count, shape, no_seed);
        else if (no_kind == "uniform") ds = uniform_noise(no_count, shape, no_seed);
        else throw ValidationError("unknown noise kind '" + no_kind + "'");
        write_raw(ds, no_out);
        write_sidecar(no_out, {{"generator", no_kind + "_noise"},
                               {"count", no_count},
                               {"shape", no_shape},
                               {"seed", no_seed}});
        std::cout << "wrote " << ds.size() << " tensors -> " << no_out << "\n";
    });

    // ---------------- fool
    auto* foolc = app.add_subcommand("fool", "evolve fooling images against the classifier");
    std::string fo_model, fo_out;
    std::size_t fo_count = 10;
    int fo_target = -1;
    FoolingConfig fo_cfg;
    std::uint64_t fo_seed = 42;
    foolc->add_option("--model", fo_model)->required();
    foolc->add_option("--count", fo_count);
    foolc->add_option("--target-class", fo_target, "fixed target; default cycles over classes");
    foolc->add_option("--confidence", fo_cfg.target_confidence);
    foolc->add_option("--population", fo_cfg.population_size);
    foolc->add_option("--mutation-rate", fo_cfg.mutation_rate);
    foolc->add_option("--mutation-scale", fo_cfg.mutation_scale);
    foolc->add_option("--generations", fo_cfg.max_generations);
    foolc->add_option("--seed", fo_seed);
    foolc->add_option("--out", fo_out)->required();
    foolc->callback([&] {
        const NetworkModel model = load_model(fo_model);
        Dataset ds;
        nlohmann::json runs = nlohmann::json::array();
        for (std::size_t i = 0; i < fo_count; ++i) {
            FoolingConfig cfg = fo_cfg;
            cfg.seed = mix_seed(fo_seed, i);
            const std::size_t target = fo_target >= 0 ? static_cast<std::size_t>(fo_target)
                                                      : i % model.class_count;
            const FoolingResult r = evolve_fooling_image(model, target, cfg);
            ds.images.push_back(r.image);
            runs.push_back({{"target", target},
                            {"confidence", r.confidence},
                            {"generations", r.generations},
                            {"reached", r.confidence >= fo_cfg.target_confidence}});
        }
        write_raw(ds, fo_out);
        write_sidecar(fo_out, {{"generator", "fooling_evolution"},
                               {"config",
                                {{"target_confidence", fo_cfg.target_confidence},
                                 {"population_size", fo_cfg.population_size},
                                 {"mutation_rate", fo_cfg.mutation_rate},
                                 {"mutation_scale", fo_cfg.mutation_scale},
                                 {"max_generations", fo_cfg.max_generations}}},
                               {"seed", fo_seed},
                               {"runs", runs}});
        std::cout << "wrote " << ds.size() << " fooling images -> " << fo_out << "\n";
    });

    // ---------------- score
    auto* scorec = app.add_subcommand("score", "score a dataset against a fitted bundle");
    std::string sc_model, sc_bundle, sc_data, sc_out, sc_name = "set";
    bool sc_is_id = false;
    scorec->add_option("--model", sc_model)->required();
    scorec->add_option("--bundle", sc_bundle)->required();
    scorec->add_option("--data", sc_data)->required();
    scorec->add_option("--name", sc_name, "set name recorded in the CSV");
    scorec->add_flag("--id", sc_is_id, "mark rows as in-distribution ground truth");
    scorec->add_option("--out", sc_out)->required();
    scorec->callback([&] {
        const NetworkModel model = load_model(sc_model);
        const DetectorBundle bundle = load_bundle(sc_bundle);
        const Dataset ds = ingest_raw(sc_data);
        write_score_csv(sc_out, sc_name, sc_is_id, bundle, model, ds,
                        "model_fingerprint=" + model.fingerprint);
        std::cout << "wrote " << ds.size() << " scores -> " << sc_out << "\n";
    });

    // ---------------- evaluate
    auto* evalc = app.add_subcommand("evaluate", "compute TNR@TPR and AUROC from score CSVs");
    std::string ev_id, ev_anom, ev_out, ev_text, ev_column = "fused";
    double ev_tpr = 0.95;
    evalc->add_option("--id", ev_id, "score CSV of ID samples")->required();
    evalc->add_option("--anomaly", ev_anom, "score CSV of anomaly samples")->required();
    evalc->add_option("--column", ev_column, "fused | baseline");
    evalc->add_option("--target-tpr", ev_tpr);
    evalc->add_option("--out", ev_out, "JSON report path")->required();
    evalc->add_option("--text", ev_text, "optional text table path");
    evalc->callback([&] {
        if (ev_column != "fused" && ev_column != "baseline")
            throw ValidationError("--column must be fused or baseline");
        std::vector<ScoredSample> samples;
        for (const ScoreRow& r : read_score_csv(ev_id))
            samples.push_back({ev_column == "fused" ? r.fused : r.baseline, true, r.predicted_class});
        for (const ScoreRow& r : read_score_csv(ev_anom))
            samples.push_back({ev_column == "fused" ? r.fused : r.baseline, false, r.predicted_class});
        const EvalReport rep = weighted_report(samples, ev_tpr);

        nlohmann::json j;
        j["column"] = ev_column;
        j["tnr_at_target_tpr"] = rep.tnr_at_target_tpr;
        j["auroc"] = rep.auroc;
        j["tpr"] = rep.tpr;
        j["pooled_tnr"] = rep.pooled_tnr;
        j["pooled_auroc"] = rep.pooled_auroc;
        j["id_count"] = rep.id_count;
        j["anomaly_count"] = rep.anomaly_count;
        nlohmann::json pc = nlohmann::json::array();
        for (const PerClassMetrics& m : rep.per_class)
            pc.push_back({{"class", m.class_index},
                          {"gamma", m.gamma},
                          {"tpr", m.tpr},
                          {"tnr", m.tnr},
                          {"auroc", m.auroc},
                          {"included", m.included}});
        j["per_class"] = pc;
        std::ofstream f(ev_out, std::ios::binary);
        if (!f) throw ValidationError("cannot write " + ev_out);
        f << j.dump(1);
        if (!ev_text.empty()) {
            std::ofstream t(ev_text, std::ios::binary);
            char line[128];
            std::snprintf(line, sizeof line, "%-10s %8s %8s\n", "column", "TNR", "AUROC");
            t << line;
            std::snprintf(line, sizeof line, "%-10s %8.2f %8.2f\n", ev_column.c_str(),
                          100.0 * rep.tnr_at_target_tpr, 100.0 * rep.auroc);
            t << line;
        }
        std::cout << "TNR@" << ev_tpr << "TPR " << rep.tnr_at_target_tpr << "  AUROC " << rep.auroc
                  << "\n";
    });

    // ---------------- pipeline
    auto* pipec = app.add_subcommand("pipeline", "run the full experiment from a JSON config");
    std::string pi_config;
    pipec->add_option("--config", pi_config)->required();
    pipec->callback([&] {
        const ExperimentConfig cfg = load_experiment_config(pi_config);
        const PipelineResult res = run_pipeline(cfg);
        write_pipeline_artifacts(cfg, res);
        std::cout << "MDL " << res.mdl_layer << "; artifacts -> " << cfg.output_dir << "\n";
        for (const auto& [name, rep] : res.reports_ours)
            std::cout << "  " << name << ": AUROC " << rep.auroc << " TNR@" << cfg.detector.target_tpr
                      << " " << rep.tnr_at_target_tpr << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const anomaly::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
}
