// Command-line driver: train/evaluate an open-world K+1 softmax classifier,
// run the OOD / corruption / lambda-ablation protocols, and verify the
// energy objective's gradient identities on an enumerable domain.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "eow/calibration.hpp"
#include "eow/config.hpp"
#include "eow/kernels.hpp"
#include "eow/objective.hpp"
#include "eow/theory.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct SplitSet {
    Dataset train, val, test;
};

SplitSet build_splits(const RunConfig& cfg) {
    const Dataset full = cfg.build_dataset();
    auto parts = split(full,
                       {cfg.get_double("split.train"), cfg.get_double("split.val"),
                        cfg.get_double("split.test")},
                       std::uint64_t(cfg.get_int("split.seed")));
    return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
}

json metrics_json(const EowClassifier& model, const Dataset& ds, ConfidenceMode mode, int bins) {
    const auto records = evaluate_records(model, ds, mode);
    const EceReport rep = ece(records, bins);
    json j;
    j["n"] = rep.n;
    j["acc"] = accuracy(records);
    j["ece"] = rep.ece;
    j["nll_true_label"] = nll(records, NllMode::TrueLabel).value;
    j["nll_predicted_label"] = nll(records, NllMode::PredictedLabel).value;
    return j;
}

std::string bins_csv(const EceReport& rep) {
    std::string out = "bin_low,bin_high,count,avg_conf,avg_acc\n";
    char buf[160];
    for (const auto& b : rep.bins) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%d,%.10g,%.10g\n", b.lo, b.hi, b.count,
                      b.avg_conf(), b.avg_acc());
        out += buf;
    }
    return out;
}

struct TrainOutcome {
    fs::path run_dir;
    json summary;
};

TrainOutcome run_training(const RunConfig& cfg, std::uint64_t seed, const fs::path& out_root) {
    const SplitSet sets = build_splits(cfg);
    if (sets.train.size() == 0) throw std::runtime_error("train split is empty");

    const fs::path run_dir = out_root / cfg.run_dir_name(seed);
    fs::create_directories(run_dir);
    write_text(run_dir / "config_resolved.txt", cfg.resolved_text());

    std::ofstream log(run_dir / "run.log", std::ios::trunc);
    log << "kernel backend: " << kernels::active().name << "\n";

    MlpConfig mcfg = cfg.model_config(sets.train.dim(), sets.train.num_classes);
    Rng rng(seed);
    EowClassifier model = EowClassifier::init(mcfg, rng);
    const TrainConfig tcfg = cfg.train_config();

    std::ofstream metrics(run_dir / "metrics.csv", std::ios::trunc);
    std::ofstream sgld_log;
    if (tcfg.loss == LossKind::Eow) sgld_log.open(run_dir / "sgld_log.csv", std::ios::trunc);

    const Dataset* eval_set = sets.test.size() > 0 ? &sets.test : nullptr;
    const FitResult fit_res =
        fit(model, sets.train, eval_set, tcfg, rng, &metrics,
            tcfg.loss == LossKind::Eow ? &sgld_log : nullptr);

    bool finite = true;
    for (const Array* p : model.params())
        finite = finite && kernels::active().all_finite(p->data(), p->numel());
    if (!finite) throw NumericalError("trained parameters are non-finite");

    const std::string kind = loss_kind_name(tcfg.loss);
    save_checkpoint((run_dir / "checkpoint.bin").string(), model, kind);

    json summary;
    summary["seed"] = seed;
    summary["loss"] = kind;
    summary["epochs"] = tcfg.epochs;
    summary["skipped_iterations"] = fit_res.skipped_iterations;
    const int bins = cfg.get_int("eval.bins");
    if (eval_set)
        summary["test"] = metrics_json(model, *eval_set, confidence_mode_for_loss(kind), bins);
    if (sets.val.size() > 0) {
        const auto logits = collect_logits(model, sets.val);
        summary["temperature"] = temperature_fit(logits, sets.val.labels);
    }
    write_text(run_dir / "summary.json", summary.dump(2) + "\n");
    log << "done: " << run_dir.string() << "\n";
    return {run_dir, summary};
}

double json_mean(const std::vector<json>& summaries, const char* field) {
    double s = 0;
    for (const auto& j : summaries) s += j["test"][field].get<double>();
    return s / double(summaries.size());
}

double json_std(const std::vector<json>& summaries, const char* field, double mean) {
    double v = 0;
    for (const auto& j : summaries) {
        const double d = j["test"][field].get<double>() - mean;
        v += d * d;
    }
    return summaries.size() > 1 ? std::sqrt(v / double(summaries.size())) : 0.0;
}

int cmd_train(const std::string& config_path, const std::vector<std::uint64_t>& seeds,
              const std::string& out) {
    const RunConfig cfg = RunConfig::from_file(config_path);
    const fs::path out_root(out);
    fs::create_directories(out_root);
    std::vector<json> summaries;
    for (std::uint64_t seed : seeds) {
        RunConfig run_cfg = cfg;
        run_cfg.set("seed", std::to_string(seed));
        const TrainOutcome outcome = run_training(run_cfg, seed, out_root);
        std::cout << outcome.summary.dump(2) << std::endl;
        summaries.push_back(outcome.summary);
    }
    if (seeds.size() > 1) {
        json agg;
        agg["seeds"] = seeds;
        for (const char* field : {"acc", "ece", "nll_true_label"}) {
            const double m = json_mean(summaries, field);
            agg[std::string("mean_") + field] = m;
            agg[std::string("std_") + field] = json_std(summaries, field, m);
        }
        write_text(out_root / "multi_seed_summary.json", agg.dump(2) + "\n");
        std::cout << agg.dump(2) << std::endl;
    }
    return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& config_path,
                 const std::string& which, const std::string& out) {
    std::string kind;
    const EowClassifier model = load_checkpoint(checkpoint, &kind);
    const RunConfig cfg = RunConfig::from_file(config_path);
    const SplitSet sets = build_splits(cfg);
    const Dataset* ds = which == "train" ? &sets.train
                        : which == "val" ? &sets.val
                                         : &sets.test;
    if (ds->size() == 0) throw std::runtime_error("evaluate: selected split is empty");

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    const ConfidenceMode mode = confidence_mode_for_loss(kind);
    const int bins = cfg.get_int("eval.bins");
    json j = metrics_json(model, *ds, mode, bins);
    j["loss"] = kind;
    j["split"] = which;

    const auto records = evaluate_records(model, *ds, mode);
    const EceReport rep = ece(records, bins);
    const fs::path bins_path = out_dir / "reliability_bins.csv";
    write_text(bins_path, bins_csv(rep));
    j["bins_csv"] = bins_path.string();
    write_text(out_dir / "evaluation.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << std::endl;
    return kExitOk;
}

int cmd_ood_eval(const std::string& checkpoint, const std::string& config_path,
                 const std::string& ood_csv, const std::string& shift_spec,
                 const std::string& out) {
    std::string kind;
    const EowClassifier model = load_checkpoint(checkpoint, &kind);
    const RunConfig cfg = RunConfig::from_file(config_path);
    const SplitSet sets = build_splits(cfg);
    if (sets.test.size() == 0) throw std::runtime_error("ood-eval: empty test split");

    Dataset ood;
    if (!ood_csv.empty()) {
        ood = load_csv(ood_csv);
    } else {
        std::vector<double> offset;
        std::stringstream ss(shift_spec);
        std::string cell;
        while (std::getline(ss, cell, ',')) offset.push_back(std::stod(cell));
        if (int(offset.size()) != sets.test.dim())
            throw std::runtime_error("ood-eval: --shift dimension mismatch");
        ood = translate(sets.test, offset);
    }

    const ConfidenceMode mode = confidence_mode_for_loss(kind);
    const auto in_records = evaluate_records(model, sets.test, mode);
    const auto ood_records = evaluate_records(model, ood, mode, /*mark_ood=*/true);
    const auto rows = ood_threshold_accuracy(in_records, ood_records);

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    std::string csv = "threshold,kept_in,kept_ood,correct,accuracy\n";
    json jrows = json::array();
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.10g,%d,%d,%d,", r.threshold, r.kept_in, r.kept_ood,
                      r.correct);
        csv += buf;
        csv += r.accuracy ? std::to_string(*r.accuracy) : "undefined";
        csv += "\n";
        json jr;
        jr["threshold"] = r.threshold;
        jr["kept_in"] = r.kept_in;
        jr["kept_ood"] = r.kept_ood;
        jr["correct"] = r.correct;
        if (r.accuracy)
            jr["accuracy"] = *r.accuracy;
        else
            jr["accuracy"] = nullptr;
        jrows.push_back(jr);
    }
    write_text(out_dir / "ood_thresholds.csv", csv);
    json j;
    j["loss"] = kind;
    j["rows"] = jrows;
    write_text(out_dir / "ood_thresholds.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << std::endl;
    return kExitOk;
}

int cmd_corruption_eval(const std::string& checkpoint, const std::string& config_path,
                        const std::string& types_spec, const std::string& out) {
    std::string kind;
    const EowClassifier model = load_checkpoint(checkpoint, &kind);
    const RunConfig cfg = RunConfig::from_file(config_path);
    const SplitSet sets = build_splits(cfg);
    if (sets.test.size() == 0) throw std::runtime_error("corruption-eval: empty test split");

    std::vector<CorruptionType> types;
    std::stringstream ss(types_spec);
    std::string cell;
    while (std::getline(ss, cell, ',')) types.push_back(corruption_from_name(cell));

    const CorruptionReport rep =
        corruption_sweep(model, sets.test, types, {1, 2, 3, 4, 5},
                         std::uint64_t(cfg.get_int("seed")), confidence_mode_for_loss(kind),
                         cfg.get_int("eval.bins"));

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    std::string cells = "type,severity,ece\n";
    char buf[160];
    for (const auto& c : rep.cells) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.10g\n", c.type.c_str(), c.severity, c.ece);
        cells += buf;
    }
    write_text(out_dir / "corruption_cells.csv", cells);
    std::string summary = "severity,mean_ece,std_ece\n";
    for (const auto& s : rep.summaries) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g\n", s.severity, s.mean_ece, s.std_ece);
        summary += buf;
    }
    write_text(out_dir / "corruption_summary.csv", summary);
    std::cout << "clean_ece," << rep.clean_ece << "\n" << summary;
    return kExitOk;
}

int cmd_theory_check(int grid, std::uint64_t seed, int k, int draws, bool with_training,
                     const std::string& out) {
    json report;
    report["grid"] = grid;
    report["k"] = k;
    report["draws"] = draws;
    bool all_pass = true;

    const DiscreteDomain dom = make_grid_domain(grid, -3.0, 3.0, k);
    const MlpConfig mcfg{2, {16, 16}, k};

    json prop1 = json::array();
    double worst_dev = 0, worst_cos = 1;
    for (int d = 0; d < draws; ++d) {
        Rng rng(seed + std::uint64_t(d));
        const EowClassifier model = EowClassifier::init(mcfg, rng);
        const Prop1Report rep = check_prop1(model, dom);
        all_pass = all_pass && rep.pass;
        worst_dev = std::max(worst_dev, rep.max_rel_dev);
        worst_cos = std::min(worst_cos, rep.cosine);
        json jr;
        jr["mu"] = rep.mu;
        jr["z"] = rep.z;
        jr["z_prime"] = rep.z_prime;
        jr["max_rel_dev"] = rep.max_rel_dev;
        jr["cosine"] = rep.cosine;
        jr["pass"] = rep.pass;
        prop1.push_back(jr);
    }
    report["prop1"] = {{"draws", prop1}, {"worst_dev", worst_dev}, {"worst_cosine", worst_cos}};

    // KL-descent check on a small random domain (finite differences over
    // every parameter are exact enough only away from relu kinks, so the
    // domain stays tiny and the tolerance matches the FD step).
    json lemma1 = json::array();
    for (int d = 0; d < std::min(draws, 5); ++d) {
        Rng rng(seed + 1000 + std::uint64_t(d));
        const EowClassifier model = EowClassifier::init(mcfg, rng);
        DiscreteDomain small;
        small.points = Array::randn({5, 2}, rng, 1.5);
        small.p.resize(5);
        double total = 0;
        for (auto& v : small.p) total += v = 0.1 + rng.uniform();
        for (auto& v : small.p) v /= total;
        const Lemma1Report rep = check_lemma1(model, small);
        all_pass = all_pass && rep.pass;
        json jr;
        jr["kl"] = rep.kl;
        jr["max_rel_err"] = rep.max_rel_err;
        jr["pass"] = rep.pass;
        lemma1.push_back(jr);
    }
    report["lemma1"] = lemma1;

    json thm = json::array();
    for (int d = 0; d < draws; ++d) {
        Rng rng(seed + 2000 + std::uint64_t(d));
        const EowClassifier model = EowClassifier::init(mcfg, rng);
        const Theorem1Report rep = check_theorem1(model, dom);
        all_pass = all_pass && rep.pass;
        json jr;
        jr["min_margin"] = rep.min_margin;
        jr["surrogate"] = rep.surrogate;
        jr["energy_difference"] = rep.energy_difference;
        jr["pass"] = rep.pass;
        thm.push_back(jr);
    }
    report["theorem1"] = thm;

    if (with_training) {
        // Train on the 2-component mixture and correlate known-class mass
        // with the true density on a held-out grid.
        const int kd = 2;
        const Dataset train = gen_gaussian_mixture(seed + 31, 2000, kd);
        DiscreteDomain grid_dom = make_grid_domain(grid, -3.0, 3.0, kd);
        set_mixture_density(grid_dom, kd);
        Rng rng(seed);
        EowClassifier model = EowClassifier::init(MlpConfig{2, {16, 16, 16}, kd}, rng);
        TrainConfig tcfg;
        tcfg.loss = LossKind::Eow;
        tcfg.lambda = 0.1;
        tcfg.lr = 0.02;
        tcfg.epochs = 40;
        tcfg.sgld.steps = 20;
        tcfg.sgld.stage = 2;
        fit(model, train, nullptr, tcfg, rng);
        const DensityCorrelation corr = check_density_proportionality(model, grid_dom);
        json jr;
        jr["rho_known_mass"] = corr.rho_known ? json(*corr.rho_known) : json(nullptr);
        jr["rho_uncertainty"] = corr.rho_uncertainty ? json(*corr.rho_uncertainty) : json(nullptr);
        const bool pass = corr.rho_known && *corr.rho_known >= 0.6 && corr.rho_uncertainty &&
                          *corr.rho_uncertainty < 0.0;
        jr["pass"] = pass;
        all_pass = all_pass && pass;
        report["density_proportionality"] = jr;
    }

    report["all_pass"] = all_pass;
    std::cout << report.dump(2) << std::endl;
    if (!out.empty()) {
        fs::create_directories(fs::path(out));
        write_text(fs::path(out) / "theory_report.json", report.dump(2) + "\n");
    }
    return all_pass ? kExitOk : kExitNumerical;
}

int cmd_ablate_lambda(const std::string& config_path, const std::vector<double>& lambdas,
                      std::uint64_t seed, const std::string& out) {
    const fs::path out_root(out);
    fs::create_directories(out_root);
    std::string table = "lambda,acc,ece,nll\n";
    json jrows = json::array();
    for (double lambda : lambdas) {
        RunConfig cfg = RunConfig::from_file(config_path);
        cfg.set("train.loss", "eow");
        cfg.set("train.lambda", std::to_string(lambda));
        cfg.set("seed", std::to_string(seed));
        const TrainOutcome outcome = run_training(cfg, seed, out_root);
        const json& test = outcome.summary["test"];
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g\n", lambda,
                      test["acc"].get<double>(), test["ece"].get<double>(),
                      test["nll_true_label"].get<double>());
        table += buf;
        json jr;
        jr["lambda"] = lambda;
        jr["acc"] = test["acc"];
        jr["ece"] = test["ece"];
        jr["nll"] = test["nll_true_label"];
        jrows.push_back(jr);
    }
    write_text(out_root / "lambda_ablation.csv", table);
    json j;
    j["rows"] = jrows;
    write_text(out_root / "lambda_ablation.json", j.dump(2) + "\n");
    std::cout << table;
    return kExitOk;
}

int cmd_make_data(const std::string& kind, int n, int k, double noise, std::uint64_t seed,
                  const std::string& shift_spec, const std::string& out_csv) {
    Dataset ds;
    if (kind == "gaussian_mixture")
        ds = gen_gaussian_mixture(seed, n, k);
    else if (kind == "two_moons")
        ds = gen_two_moons(seed, n, noise);
    else
        throw std::runtime_error("make-data: unknown kind '" + kind + "'");
    if (!shift_spec.empty()) {
        std::vector<double> offset;
        std::stringstream ss(shift_spec);
        std::string cell;
        while (std::getline(ss, cell, ',')) offset.push_back(std::stod(cell));
        ds = translate(ds, offset);
    }
    save_csv(out_csv, ds);
    std::cout << "wrote " << ds.size() << " samples to " << out_csv << std::endl;
    return kExitOk;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec, std::uint64_t fallback) {
    if (spec.empty()) return {fallback};
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(spec);
    std::string cell;
    while (std::getline(ss, cell, ',')) seeds.push_back(std::stoull(cell));
    if (seeds.empty()) throw std::runtime_error("--seeds: empty list");
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy-based open-world (K+1) softmax: training, calibration "
                 "evaluation, and exact-expectation verification"};
    app.require_subcommand(1);

    std::string config_path, out = "out", checkpoint, which_split = "test";
    std::string ood_csv, shift_spec = "6,6", types_spec = "gaussian_noise,pixel_dropout,contrast";
    std::string seeds_spec, lambdas_spec = "1,0.1,0.01";
    std::uint64_t seed = 1;
    int grid = 21, k = 3, draws = 5, n = 2000;
    double noise = 0.1;
    bool no_training_check = false;
    std::string kind = "gaussian_mixture", out_csv;

    auto* train = app.add_subcommand("train", "train a model per config");
    train->add_option("--config", config_path)->required();
    train->add_option("--seed", seed);
    train->add_option("--seeds", seeds_spec, "comma-separated seed list (multi-seed summary)");
    train->add_option("--out", out);

    auto* evaluate = app.add_subcommand("evaluate", "metrics for a checkpoint on a dataset split");
    evaluate->add_option("--checkpoint", checkpoint)->required();
    evaluate->add_option("--config", config_path)->required();
    evaluate->add_option("--split", which_split)->check(CLI::IsMember({"train", "val", "test"}));
    evaluate->add_option("--out", out);

    auto* ood = app.add_subcommand("ood-eval", "thresholded accuracy on in-dist + OOD");
    ood->add_option("--checkpoint", checkpoint)->required();
    ood->add_option("--config", config_path)->required();
    ood->add_option("--ood-csv", ood_csv, "explicit OOD dataset (CSV)");
    ood->add_option("--shift", shift_spec, "translate the test split to make the OOD set");
    ood->add_option("--out", out);

    auto* corr = app.add_subcommand("corruption-eval", "mean/std ECE per corruption severity");
    corr->add_option("--checkpoint", checkpoint)->required();
    corr->add_option("--config", config_path)->required();
    corr->add_option("--types", types_spec);
    corr->add_option("--out", out);

    auto* theory = app.add_subcommand("theory-check", "verify the gradient identities by enumeration");
    theory->add_option("--grid", grid, "grid points per side");
    theory->add_option("--seed", seed);
    theory->add_option("--k", k, "class count for the verification model");
    theory->add_option("--draws", draws, "random parameter draws per check");
    theory->add_flag("--no-training-check", no_training_check,
                     "skip the trained density-correlation check");
    theory->add_option("--out", out);

    auto* ablate = app.add_subcommand("ablate-lambda", "train/evaluate across lambda values");
    ablate->add_option("--config", config_path)->required();
    ablate->add_option("--lambdas", lambdas_spec);
    ablate->add_option("--seed", seed);
    ablate->add_option("--out", out);

    auto* mkdata = app.add_subcommand("make-data", "generate a synthetic dataset CSV");
    mkdata->add_option("--kind", kind)->check(CLI::IsMember({"gaussian_mixture", "two_moons"}));
    mkdata->add_option("--n", n);
    mkdata->add_option("--k", k);
    mkdata->add_option("--noise", noise);
    mkdata->add_option("--seed", seed);
    mkdata->add_option("--shift", shift_spec)->default_val("");
    mkdata->add_option("--out-csv", out_csv)->required();

    auto* schema = app.add_subcommand("config-schema", "print all config keys and defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train->parsed()) {
            const auto seeds = parse_seeds(seeds_spec, seed);
            return cmd_train(config_path, seeds, out);
        }
        if (evaluate->parsed()) return cmd_evaluate(checkpoint, config_path, which_split, out);
        if (ood->parsed()) return cmd_ood_eval(checkpoint, config_path, ood_csv, shift_spec, out);
        if (corr->parsed()) return cmd_corruption_eval(checkpoint, config_path, types_spec, out);
        if (theory->parsed())
            return cmd_theory_check(grid, seed, k, draws, !no_training_check, out);
        if (ablate->parsed()) {
            std::vector<double> lambdas;
            std::stringstream ss(lambdas_spec);
            std::string cell;
            while (std::getline(ss, cell, ',')) lambdas.push_back(std::stod(cell));
            return cmd_ablate_lambda(config_path, lambdas, seed, out);
        }
        if (mkdata->parsed()) return cmd_make_data(kind, n, k, noise, seed, shift_spec, out_csv);
        if (schema->parsed()) {
            std::cout << RunConfig::describe_schema();
            return kExitOk;
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << std::endl;
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfig;
    }
    return kExitConfig;
}
