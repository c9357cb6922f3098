#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eow/data.hpp"
#include "eow/model.hpp"

namespace eow {

struct PredictionRecord {
    double confidence = 0;      // score of the predicted label
    int predicted = 0;
    int label = -1;             // true label; ignored when ood
    bool ood = false;
    std::vector<double> probs;  // full distribution over scored labels (optional)

    bool correct() const { return !ood && predicted == label; }
};

struct EceBin {
    double lo = 0, hi = 0;
    int count = 0;
    double sum_conf = 0;
    double sum_correct = 0;

    double avg_conf() const { return count ? sum_conf / count : 0.0; }
    double avg_acc() const { return count ? sum_correct / count : 0.0; }
};

struct EceReport {
    int num_bins = 0;
    int n = 0;
    double ece = 0;
    std::vector<EceBin> bins;
};

// Equal-width bins [(l-1)/L, l/L), last bin closed at 1;
// ECE = sum_l |sum_conf_l - sum_correct_l| / N.
EceReport ece(const std::vector<PredictionRecord>& records, int num_bins = 15);

enum class NllMode { TrueLabel, PredictedLabel };

struct NllResult {
    double value = 0;
    int clamped = 0;  // records whose scored probability hit the 1e-12 floor
};

NllResult nll(const std::vector<PredictionRecord>& records, NllMode mode = NllMode::TrueLabel);

double accuracy(const std::vector<PredictionRecord>& records);

// Minimizes true-label NLL of softmax(logits / T) by golden-section search
// on log T in [-3, 3] (tolerance 1e-4). Scaling never changes the argmax.
double temperature_fit(const std::vector<std::vector<double>>& logits,
                       const std::vector<int>& labels);

struct OodRow {
    double threshold = 0;
    int kept_in = 0;
    int kept_ood = 0;
    int correct = 0;
    std::optional<double> accuracy;  // empty when everything was rejected
};

// At each threshold keep records with confidence > tau; every kept OOD
// record counts as an error in the denominator.
std::vector<OodRow> ood_threshold_accuracy(const std::vector<PredictionRecord>& in_records,
                                           const std::vector<PredictionRecord>& ood_records,
                                           const std::vector<double>& thresholds = {0, .25, .5,
                                                                                    .75});

// How prediction confidence is scored: the K+1-way softmax score of the
// predicted class (uncertainty-aware head), or the plain K-way softmax max
// (baseline models whose K+1-th logit was never trained).
enum class ConfidenceMode { KPlusOne, KWay };

ConfidenceMode confidence_mode_for_loss(const std::string& loss_kind);

std::vector<PredictionRecord> evaluate_records(const EowClassifier& m, const Dataset& ds,
                                               ConfidenceMode mode, bool mark_ood = false);

// Per-sample logits rows (for temperature fitting).
std::vector<std::vector<double>> collect_logits(const EowClassifier& m, const Dataset& ds);

struct CorruptionCell {
    std::string type;
    int severity = 0;
    double ece = 0;
};

struct CorruptionSummary {
    int severity = 0;
    double mean_ece = 0;
    double std_ece = 0;
};

struct CorruptionReport {
    std::vector<CorruptionCell> cells;
    std::vector<CorruptionSummary> summaries;
    double clean_ece = 0;
};

// ECE per (corruption type, severity); severity 0 rows use the clean inputs.
CorruptionReport corruption_sweep(const EowClassifier& m, const Dataset& clean,
                                  const std::vector<CorruptionType>& types,
                                  const std::vector<int>& severities, std::uint64_t seed,
                                  ConfidenceMode mode, int num_bins = 15);

}  // namespace eow
