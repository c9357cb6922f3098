#pragma once

#include <cmath>
#include <iosfwd>
#include <string>

#include "eow/calibration.hpp"
#include "eow/data.hpp"
#include "eow/energy_sgld.hpp"
#include "eow/model.hpp"

namespace eow {

enum class LossKind { Eow, Vanilla, LabelSmoothing };

LossKind loss_kind_from_name(const std::string& name);
const char* loss_kind_name(LossKind k);

struct TrainConfig {
    LossKind loss = LossKind::Eow;
    double lambda = 0.1;
    double lr = 1e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int batch_size = 64;
    int epochs = 200;
    double lr_decay = 0.1;                         // applied at the epoch fractions below
    std::vector<double> lr_decay_at = {0.5, 0.75};
    double label_smooth_eps = 0.1;
    SgldConfig sgld;
};

struct LabeledBatch {
    Array inputs;             // [B x D]
    std::vector<int> labels;  // 0-based, in [0, K)
};

struct LossResult {
    double loss = 0;
    double ce_term = 0;      // classification term
    double energy_term = 0;  // unweighted energy term (eow only)
    std::vector<Array> grads;  // aligned with model.params()
};

// Full objective: mean[-log h(x)[y]] + lambda * mean[-log h(z..)[K+1]], with
// h the K+1-way softmax and z the sampled latents entering at `stage`.
// No gradient flows into sampled_z.
LossResult eow_loss(const EowClassifier& m, const LabeledBatch& batch, const Array& sampled_z,
                    int stage, double lambda);

// K-way cross-entropy over the first K logits (dimension K+1 masked out).
LossResult vanilla_loss(const EowClassifier& m, const LabeledBatch& batch);

// Cross-entropy against (1-eps)*onehot + eps/K over the K classes.
LossResult label_smoothing_loss(const EowClassifier& m, const LabeledBatch& batch, double eps);

struct SgdState {
    std::vector<Array> velocity;  // aligned with model.params()
};

// velocity <- momentum*velocity + grad + weight_decay*theta
// theta    <- theta - lr*velocity
// Skips (and counts) steps with non-finite gradients.
bool sgd_step(EowClassifier& m, const std::vector<Array>& grads, SgdState& state, double lr,
              double momentum, double weight_decay);

struct EpochMetrics {
    int epoch = 0;
    double ce_term = 0;
    double energy_term = 0;
    double train_acc = 0;
    double eval_acc = std::nan("");
    double eval_ece = std::nan("");
    double eval_nll = std::nan("");
};

struct FitResult {
    std::vector<EpochMetrics> history;
    int skipped_iterations = 0;  // diverged SGLD rounds / non-finite grads
};

// Per iteration: freeze theta -> sample latents (eow only) -> loss -> sgd.
// Deterministic for a fixed seed. Optional CSV sinks receive one row per
// epoch (metrics) and per SGLD round (diagnostics).
FitResult fit(EowClassifier& m, const Dataset& train, const Dataset* eval_set,
              const TrainConfig& cfg, Rng& rng, std::ostream* metrics_csv = nullptr,
              std::ostream* sgld_csv = nullptr);

}  // namespace eow
