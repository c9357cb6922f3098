#include "eow/objective.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "eow/kernels.hpp"

namespace eow {

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "eow") return LossKind::Eow;
    if (name == "vanilla") return LossKind::Vanilla;
    if (name == "label_smoothing") return LossKind::LabelSmoothing;
    throw std::runtime_error("unknown loss kind: " + name);
}

const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::Eow: return "eow";
        case LossKind::Vanilla: return "vanilla";
        case LossKind::LabelSmoothing: return "label_smoothing";
    }
    return "?";
}

namespace {

void check_labels(const LabeledBatch& batch, int k) {
    if (int(batch.labels.size()) != batch.inputs.rows())
        throw ShapeError("batch: one label per input row");
    for (int l : batch.labels)
        if (l < 0 || l >= k) throw std::runtime_error("batch: label out of range");
}

std::vector<Array> extract_param_grads(const Gradients& g, const BoundModel& bm) {
    std::vector<Array> out;
    for (std::size_t i = 0; i < bm.stage_w.size(); ++i) {
        out.push_back(g.wrt(bm.stage_w[i]));
        out.push_back(g.wrt(bm.stage_b[i]));
    }
    out.push_back(g.wrt(bm.head_w));
    out.push_back(g.wrt(bm.head_b));
    return out;
}

}  // namespace

LossResult eow_loss(const EowClassifier& m, const LabeledBatch& batch, const Array& sampled_z,
                    int stage, double lambda) {
    check_labels(batch, m.num_classes());
    const int k = m.num_classes();
    Tape t;
    const BoundModel bm = bind_model(t, m);

    // Classification term: K+1-way softmax score of the true label.
    const Var x = t.leaf(batch.inputs);
    const Var logits = bm.logits_from_input(t, x);
    const Var lse_all = logsumexp_cols(t, logits, k + 1);
    const Var picked = gather_cols(t, logits, batch.labels);
    const Var ce = mean(t, add(t, lse_all, negate(t, picked)));

    // Energy term: the sampled latents enter as constants, so theta gets the
    // whole gradient and z none.
    const Var z = t.leaf(sampled_z);
    const Var logits_z = bm.logits_from_stage(t, z, stage);
    const Var lse_all_z = logsumexp_cols(t, logits_z, k + 1);
    const Var unc = gather_cols(t, logits_z, std::vector<int>(std::size_t(sampled_z.rows()), k));
    const Var energy = mean(t, add(t, lse_all_z, negate(t, unc)));

    const Var total = add(t, ce, scale(t, energy, lambda));
    const Gradients g = backward(t, total);

    LossResult res;
    res.loss = t.value(total).scalar_value();
    res.ce_term = t.value(ce).scalar_value();
    res.energy_term = t.value(energy).scalar_value();
    res.grads = extract_param_grads(g, bm);
    return res;
}

LossResult vanilla_loss(const EowClassifier& m, const LabeledBatch& batch) {
    check_labels(batch, m.num_classes());
    Tape t;
    const BoundModel bm = bind_model(t, m);
    const Var x = t.leaf(batch.inputs);
    const Var logits = bm.logits_from_input(t, x);
    const Var lse_k = logsumexp_cols(t, logits, m.num_classes());
    const Var picked = gather_cols(t, logits, batch.labels);
    const Var ce = mean(t, add(t, lse_k, negate(t, picked)));
    const Gradients g = backward(t, ce);

    LossResult res;
    res.loss = res.ce_term = t.value(ce).scalar_value();
    res.grads = extract_param_grads(g, bm);
    return res;
}

LossResult label_smoothing_loss(const EowClassifier& m, const LabeledBatch& batch, double eps) {
    check_labels(batch, m.num_classes());
    const int k = m.num_classes();
    Tape t;
    const BoundModel bm = bind_model(t, m);
    const Var x = t.leaf(batch.inputs);
    const Var logits = bm.logits_from_input(t, x);
    const Var lse_k = logsumexp_cols(t, logits, k);
    const Var picked = gather_cols(t, logits, batch.labels);
    const Var colsum = sum_cols(t, logits, k);
    // loss = lse_K - (1-eps) f_y - (eps/K) sum_{c<=K} f_c
    const Var term = add(t, lse_k,
                         add(t, scale(t, picked, -(1.0 - eps)), scale(t, colsum, -eps / double(k))));
    const Var ce = mean(t, term);
    const Gradients g = backward(t, ce);

    LossResult res;
    res.loss = res.ce_term = t.value(ce).scalar_value();
    res.grads = extract_param_grads(g, bm);
    return res;
}

bool sgd_step(EowClassifier& m, const std::vector<Array>& grads, SgdState& state, double lr,
              double momentum, double weight_decay) {
    auto params = m.params();
    if (grads.size() != params.size()) throw ShapeError("sgd_step: gradient count mismatch");
    for (const Array& g : grads)
        if (!kernels::active().all_finite(g.data(), g.numel())) return false;

    if (state.velocity.empty())
        for (const Array* p : params) state.velocity.push_back(Array::zeros(p->shape()));

    const auto& k = kernels::active();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& v = state.velocity[i];
        Array& p = *params[i];
        k.scale(momentum, v.data(), v.data(), v.numel());
        k.axpy(1.0, grads[i].data(), v.data(), v.numel());
        if (weight_decay != 0.0) k.axpy(weight_decay, p.data(), v.data(), v.numel());
        k.axpy(-lr, v.data(), p.data(), p.numel());
    }
    return true;
}

namespace {

double train_accuracy(const EowClassifier& m, const Dataset& ds) {
    const Array logits = m.forward_logits(ds.inputs);
    int correct = 0;
    for (int i = 0; i < ds.size(); ++i) {
        const double* lr = logits.data() + std::size_t(i) * logits.cols();
        int arg = 0;
        for (int j = 1; j < m.num_classes(); ++j)
            if (lr[j] > lr[arg]) arg = j;
        correct += arg == ds.labels[std::size_t(i)] ? 1 : 0;
    }
    return double(correct) / double(ds.size());
}

}  // namespace

FitResult fit(EowClassifier& m, const Dataset& train, const Dataset* eval_set,
              const TrainConfig& cfg, Rng& rng, std::ostream* metrics_csv,
              std::ostream* sgld_csv) {
    if (train.size() == 0) throw std::runtime_error("fit: empty dataset");
    FitResult result;
    if (metrics_csv)
        *metrics_csv << "epoch,ce_term,energy_term,train_acc,eval_acc,eval_ece,eval_nll\n";
    if (sgld_csv) *sgld_csv << "round,energy_before,energy_after,grad_norm_mean,grad_norm_max,clipped\n";

    Rng shuffle_rng = rng.child(1);
    Rng sgld_rng = rng.child(2);

    SgdState opt;
    PersistentBuffer buffer;
    std::vector<int> order(std::size_t(train.size()));
    for (int i = 0; i < train.size(); ++i) order[std::size_t(i)] = i;

    const int batches = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    double lr = cfg.lr;
    std::vector<int> decay_epochs;
    for (double frac : cfg.lr_decay_at)
        decay_epochs.push_back(int(std::floor(frac * double(cfg.epochs))));
    std::sort(decay_epochs.begin(), decay_epochs.end());
    decay_epochs.erase(std::unique(decay_epochs.begin(), decay_epochs.end()), decay_epochs.end());

    long round_id = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int de : decay_epochs)
            if (epoch == de && epoch > 0) lr *= cfg.lr_decay;

        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double ce_sum = 0.0, energy_sum = 0.0;
        int counted = 0;
        for (int b = 0; b < batches; ++b) {
            const int lo = b * cfg.batch_size;
            const int hi = std::min(train.size(), lo + cfg.batch_size);
            LabeledBatch batch;
            batch.inputs = Array({hi - lo, train.dim()});
            batch.labels.resize(std::size_t(hi - lo));
            for (int r = lo; r < hi; ++r) {
                const int src = order[std::size_t(r)];
                std::copy(train.inputs.data() + std::size_t(src) * train.dim(),
                          train.inputs.data() + std::size_t(src + 1) * train.dim(),
                          batch.inputs.data() + std::size_t(r - lo) * train.dim());
                batch.labels[std::size_t(r - lo)] = train.labels[std::size_t(src)];
            }

            try {
                LossResult loss;
                if (cfg.loss == LossKind::Eow) {
                    SgldDiagnostics diag;
                    const Array z = sample_latents(m, batch.inputs, cfg.sgld, sgld_rng, &diag,
                                                   cfg.sgld.init == ChainInit::Persistent
                                                       ? &buffer
                                                       : nullptr);
                    if (sgld_csv)
                        *sgld_csv << round_id << ',' << diag.energy_before << ','
                                  << diag.energy_after << ',' << diag.grad_norm_mean << ','
                                  << diag.grad_norm_max << ',' << diag.clipped << '\n';
                    ++round_id;
                    loss = eow_loss(m, batch, z, cfg.sgld.stage, cfg.lambda);
                } else if (cfg.loss == LossKind::Vanilla) {
                    loss = vanilla_loss(m, batch);
                } else {
                    loss = label_smoothing_loss(m, batch, cfg.label_smooth_eps);
                }
                if (!sgd_step(m, loss.grads, opt, lr, cfg.momentum, cfg.weight_decay)) {
                    ++result.skipped_iterations;
                    continue;
                }
                ce_sum += loss.ce_term;
                energy_sum += loss.energy_term;
                ++counted;
            } catch (const NumericalError&) {
                // Diverged sampling round or loss eval: skip this iteration.
                ++result.skipped_iterations;
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.ce_term = counted ? ce_sum / counted : std::nan("");
        em.energy_term = counted ? energy_sum / counted : std::nan("");
        em.train_acc = train_accuracy(m, train);
        if (eval_set && eval_set->size() > 0) {
            const auto records = evaluate_records(
                m, *eval_set, confidence_mode_for_loss(loss_kind_name(cfg.loss)));
            em.eval_acc = accuracy(records);
            em.eval_ece = ece(records).ece;
            em.eval_nll = nll(records, NllMode::TrueLabel).value;
        }
        result.history.push_back(em);
        if (metrics_csv)
            *metrics_csv << em.epoch << ',' << em.ce_term << ',' << em.energy_term << ','
                         << em.train_acc << ',' << em.eval_acc << ',' << em.eval_ece << ','
                         << em.eval_nll << '\n';
    }
    return result;
}

}  // namespace eow
