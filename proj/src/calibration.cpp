#include "eow/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eow {

EceReport ece(const std::vector<PredictionRecord>& records, int num_bins) {
    if (records.empty()) throw std::runtime_error("ece: empty record set");
    if (num_bins < 1) throw std::runtime_error("ece: need at least one bin");
    EceReport rep;
    rep.num_bins = num_bins;
    rep.n = int(records.size());
    rep.bins.resize(std::size_t(num_bins));
    for (int l = 0; l < num_bins; ++l) {
        rep.bins[std::size_t(l)].lo = double(l) / num_bins;
        rep.bins[std::size_t(l)].hi = double(l + 1) / num_bins;
    }
    for (const auto& r : records) {
        if (r.confidence < 0.0 || r.confidence > 1.0)
            throw std::runtime_error("ece: confidence outside [0,1]");
        int idx = std::min(int(r.confidence * num_bins), num_bins - 1);  // last bin closed at 1
        auto& bin = rep.bins[std::size_t(idx)];
        bin.count += 1;
        bin.sum_conf += r.confidence;
        bin.sum_correct += r.correct() ? 1.0 : 0.0;
    }
    double acc = 0.0;
    for (const auto& bin : rep.bins) acc += std::abs(bin.sum_conf - bin.sum_correct);
    rep.ece = acc / double(rep.n);
    return rep;
}

NllResult nll(const std::vector<PredictionRecord>& records, NllMode mode) {
    if (records.empty()) throw std::runtime_error("nll: empty record set");
    NllResult out;
    double total = 0.0;
    for (const auto& r : records) {
        if (r.probs.empty()) throw std::runtime_error("nll: record missing probabilities");
        const int scored = mode == NllMode::TrueLabel ? r.label : r.predicted;
        if (scored < 0 || scored >= int(r.probs.size()))
            throw std::runtime_error("nll: scored label out of range");
        double p = r.probs[std::size_t(scored)];
        if (p < 1e-12) {
            p = 1e-12;
            ++out.clamped;
        }
        total += -std::log(p);
    }
    out.value = total / double(records.size());
    return out;
}

double accuracy(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw std::runtime_error("accuracy: empty record set");
    int correct = 0;
    for (const auto& r : records) correct += r.correct() ? 1 : 0;
    return double(correct) / double(records.size());
}

namespace {

double nll_at_temperature(const std::vector<std::vector<double>>& logits,
                          const std::vector<int>& labels, double temp) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto& row = logits[i];
        double m = row[0] / temp;
        for (double v : row) m = std::max(m, v / temp);
        double s = 0.0;
        for (double v : row) s += std::exp(v / temp - m);
        total += (m + std::log(s)) - logits[i][std::size_t(labels[i])] / temp;
    }
    return total / double(logits.size());
}

}  // namespace

double temperature_fit(const std::vector<std::vector<double>>& logits,
                       const std::vector<int>& labels) {
    if (logits.empty() || logits.size() != labels.size())
        throw std::runtime_error("temperature_fit: empty or mismatched validation set");
    const int first = labels.front();
    bool degenerate = true;
    for (int l : labels)
        if (l != first) {
            degenerate = false;
            break;
        }
    if (degenerate) throw std::runtime_error("temperature_fit: single-class validation set");

    // Golden-section on t = log T.
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = -3.0, hi = 3.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = nll_at_temperature(logits, labels, std::exp(x1));
    double f2 = nll_at_temperature(logits, labels, std::exp(x2));
    while (hi - lo > 1e-4) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = nll_at_temperature(logits, labels, std::exp(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = nll_at_temperature(logits, labels, std::exp(x2));
        }
    }
    return std::exp(0.5 * (lo + hi));
}

std::vector<OodRow> ood_threshold_accuracy(const std::vector<PredictionRecord>& in_records,
                                           const std::vector<PredictionRecord>& ood_records,
                                           const std::vector<double>& thresholds) {
    if (in_records.empty() || ood_records.empty())
        throw std::runtime_error("ood_threshold_accuracy: both record sets must be nonempty");
    std::vector<OodRow> rows;
    for (double tau : thresholds) {
        OodRow row;
        row.threshold = tau;
        for (const auto& r : in_records) {
            if (tau > 0.0 && !(r.confidence > tau)) continue;
            row.kept_in += 1;
            row.correct += r.correct() ? 1 : 0;
        }
        for (const auto& r : ood_records) {
            if (tau > 0.0 && !(r.confidence > tau)) continue;
            row.kept_ood += 1;  // kept OOD records always count as errors
        }
        const int kept = row.kept_in + row.kept_ood;
        if (kept > 0) row.accuracy = double(row.correct) / double(kept);
        rows.push_back(row);
    }
    return rows;
}

ConfidenceMode confidence_mode_for_loss(const std::string& loss_kind) {
    return loss_kind == "eow" ? ConfidenceMode::KPlusOne : ConfidenceMode::KWay;
}

std::vector<PredictionRecord> evaluate_records(const EowClassifier& m, const Dataset& ds,
                                               ConfidenceMode mode, bool mark_ood) {
    const Array logits = m.forward_logits(ds.inputs);
    const int k = m.num_classes();
    const int cols = logits.cols();
    std::vector<PredictionRecord> records(std::size_t(ds.size()));
    for (int i = 0; i < ds.size(); ++i) {
        const double* lr = logits.data() + std::size_t(i) * cols;
        PredictionRecord& r = records[std::size_t(i)];
        r.ood = mark_ood;
        r.label = mark_ood ? -1 : ds.labels[std::size_t(i)];
        int arg = 0;
        for (int j = 1; j < k; ++j)
            if (lr[j] > lr[arg]) arg = j;
        r.predicted = arg;
        if (mode == ConfidenceMode::KPlusOne) {
            const auto p = m.probs(lr);  // K+1-way; confidence NOT renormalized over K
            r.probs = p;
            r.confidence = p[std::size_t(arg)];
        } else {
            double mx = lr[0];
            for (int j = 1; j < k; ++j) mx = std::max(mx, lr[j]);
            double s = 0.0;
            std::vector<double> p(static_cast<std::size_t>(k));
            for (int j = 0; j < k; ++j) s += p[std::size_t(j)] = std::exp(lr[j] - mx);
            for (auto& v : p) v /= s;
            r.probs = std::move(p);
            r.confidence = r.probs[std::size_t(arg)];
        }
    }
    return records;
}

std::vector<std::vector<double>> collect_logits(const EowClassifier& m, const Dataset& ds) {
    const Array logits = m.forward_logits(ds.inputs);
    std::vector<std::vector<double>> rows(std::size_t(ds.size()));
    for (int i = 0; i < ds.size(); ++i) {
        const double* lr = logits.data() + std::size_t(i) * logits.cols();
        rows[std::size_t(i)].assign(lr, lr + logits.cols());
    }
    return rows;
}

CorruptionReport corruption_sweep(const EowClassifier& m, const Dataset& clean,
                                  const std::vector<CorruptionType>& types,
                                  const std::vector<int>& severities, std::uint64_t seed,
                                  ConfidenceMode mode, int num_bins) {
    CorruptionReport rep;
    rep.clean_ece = ece(evaluate_records(m, clean, mode), num_bins).ece;
    for (int sev : severities) {
        std::vector<double> eces;
        for (std::size_t ti = 0; ti < types.size(); ++ti) {
            Dataset corrupted = clean;
            if (sev != 0) {
                const std::uint64_t cell_seed =
                    seed ^ (std::uint64_t(ti) << 32) ^ std::uint64_t(sev);
                corrupted.inputs =
                    corrupt(clean.inputs, types[ti], sev, cell_seed, clean.image01);
            }
            const double e = ece(evaluate_records(m, corrupted, mode), num_bins).ece;
            rep.cells.push_back({corruption_name(types[ti]), sev, e});
            eces.push_back(e);
        }
        CorruptionSummary s;
        s.severity = sev;
        if (!eces.empty()) {
            double mean = 0.0;
            for (double e : eces) mean += e;
            mean /= double(eces.size());
            double var = 0.0;
            for (double e : eces) var += (e - mean) * (e - mean);
            s.mean_ece = mean;
            s.std_ece = eces.size() > 1 ? std::sqrt(var / double(eces.size())) : 0.0;
        }
        rep.summaries.push_back(s);
    }
    return rep;
}

}  // namespace eow
