#include "eow/energy_sgld.hpp"

#include <cmath>

#include "eow/kernels.hpp"

namespace eow {

namespace {

// E~ per sample from a logits matrix: lse_all - logit[K]  (= -log h[K+1]),
// or the auxiliary lse_all - lse_K (= -log sum_{i<=K} h[i]).
Array energy_rows_from_logits(const Array& logits, int num_classes, bool auxiliary) {
    const int rows = logits.rows(), cols = logits.cols();
    Array e({rows});
    for (int r = 0; r < rows; ++r) {
        const double* lr = logits.data() + std::size_t(r) * cols;
        double m = lr[0];
        for (int j = 1; j < cols; ++j) m = std::max(m, lr[j]);
        double s_all = 0.0;
        for (int j = 0; j < cols; ++j) s_all += std::exp(lr[j] - m);
        const double lse_all = m + std::log(s_all);
        if (auxiliary) {
            double mk = lr[0];
            for (int j = 1; j < num_classes; ++j) mk = std::max(mk, lr[j]);
            double s_k = 0.0;
            for (int j = 0; j < num_classes; ++j) s_k += std::exp(lr[j] - mk);
            e.data()[r] = lse_all - (mk + std::log(s_k));
        } else {
            e.data()[r] = lse_all - lr[num_classes];
        }
    }
    return e;
}

// Tape version of the sampling energy, one value per chain row.
Var sampling_energy_rows(Tape& t, const BoundModel& bm, Var z, int stage, bool literal_sign) {
    const int K = bm.model->num_classes();
    const Var logits = bm.logits_from_stage(t, z, stage);
    const Var lse_all = logsumexp_cols(t, logits, K + 1);
    const Var unc = gather_cols(t, logits, std::vector<int>(std::size_t(t.value(z).rows()), K));
    const Var e = add(t, lse_all, negate(t, unc));
    return literal_sign ? negate(t, e) : e;
}

void clip_and_update(Array& grad, Array& z, const SgldConfig& cfg, Rng& rng,
                     std::vector<double>* norms, int* clipped) {
    if (!kernels::active().all_finite(grad.data(), grad.numel()))
        throw NumericalError("sgld: non-finite latent gradient");
    const int rows = grad.rows(), width = grad.cols();
    for (int r = 0; r < rows; ++r) {
        double* gr = grad.data() + std::size_t(r) * width;
        const double norm = std::sqrt(kernels::active().sumsq(gr, std::size_t(width)));
        if (norms) norms->push_back(norm);
        if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
            kernels::active().scale(cfg.grad_clip / norm, gr, gr, std::size_t(width));
            if (clipped) ++*clipped;
        }
    }
    kernels::active().axpy(-0.5 * cfg.alpha, grad.data(), z.data(), z.numel());
    if (cfg.sigma > 0.0)
        for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] += cfg.sigma * rng.normal();
    if (!kernels::active().all_finite(z.data(), z.numel()))
        throw NumericalError("sgld: latent diverged to non-finite values");
}

}  // namespace

Array sampling_energy_per_sample(const EowClassifier& m, const Array& z, int stage) {
    return energy_rows_from_logits(m.head_from_stage(z, stage), m.num_classes(), false);
}

Array auxiliary_energy_per_sample(const EowClassifier& m, const Array& z, int stage) {
    return energy_rows_from_logits(m.head_from_stage(z, stage), m.num_classes(), true);
}

double sampling_energy(const EowClassifier& m, const Array& z, int stage) {
    const Array e = sampling_energy_per_sample(m, z, stage);
    return kernels::active().sum(e.data(), e.numel()) / double(e.numel());
}

double auxiliary_energy(const EowClassifier& m, const Array& z, int stage) {
    const Array e = auxiliary_energy_per_sample(m, z, stage);
    return kernels::active().sum(e.data(), e.numel()) / double(e.numel());
}

void sgld_step_energy(const EnergyBuilder& energy, Array& z, const SgldConfig& cfg, Rng& rng,
                      std::vector<double>* norms, int* clipped) {
    Tape t;
    const Var vz = t.leaf(z);
    const Var e_rows = energy(t, vz);
    const Gradients g = backward(t, sum(t, e_rows));  // rows independent: per-sample grads
    Array grad = g.wrt(vz);
    clip_and_update(grad, z, cfg, rng, norms, clipped);
}

Array PersistentBuffer::draw(int count, int width, double reinit_frac, Rng& rng) const {
    Array z({count, width});
    for (int r = 0; r < count; ++r) {
        const bool reinit = slots_.empty() || rng.uniform() < reinit_frac;
        double* zr = z.data() + std::size_t(r) * width;
        if (reinit) {
            for (int j = 0; j < width; ++j) zr[j] = rng.normal();
        } else {
            const auto& slot = slots_[rng.below(slots_.size())];
            for (int j = 0; j < width; ++j) zr[j] = slot[std::size_t(j)];
        }
    }
    return z;
}

void PersistentBuffer::store(const Array& z) {
    width_ = z.cols();
    for (int r = 0; r < z.rows(); ++r) {
        const double* zr = z.data() + std::size_t(r) * width_;
        slots_.emplace_back(zr, zr + width_);
    }
    // Bounded reservoir: keep the most recent latents.
    constexpr std::size_t kCap = 4096;
    if (slots_.size() > kCap) slots_.erase(slots_.begin(), slots_.end() - kCap);
}

ChainState init_chain(const EowClassifier& m, const Array& batch, const SgldConfig& cfg, Rng& rng,
                      const PersistentBuffer* buffer) {
    if (batch.numel() == 0 || batch.rows() == 0) throw ShapeError("init_chain: empty batch");
    const int width = m.stage_width(cfg.stage);
    ChainState chain;
    chain.stage = cfg.stage;
    switch (cfg.init) {
        case ChainInit::Data:
            chain.z = m.encode_to_stage(batch, cfg.stage);
            break;
        case ChainInit::Noise:
            chain.z = Array::randn({batch.rows(), width}, rng);
            break;
        case ChainInit::Persistent:
            if (buffer && !buffer->empty())
                chain.z = buffer->draw(batch.rows(), width, cfg.persistent_reinit, rng);
            else  // empty buffer falls back to noise init
                chain.z = Array::randn({batch.rows(), width}, rng);
            break;
    }
    return chain;
}

void sgld_step(const EowClassifier& m, ChainState& chain, const SgldConfig& cfg, Rng& rng) {
    const int stage = chain.stage;
    sgld_step_energy(
        [&](Tape& t, Var z) {
            return sampling_energy_rows(t, bind_model(t, m), z, stage, cfg.literal_sign);
        },
        chain.z, cfg, rng);
}

Array sample_latents(const EowClassifier& m, const Array& batch, const SgldConfig& cfg, Rng& rng,
                     SgldDiagnostics* diag, PersistentBuffer* buffer) {
    ChainState chain = init_chain(m, batch, cfg, rng, buffer);
    if (diag) {
        *diag = SgldDiagnostics{};
        diag->energy_before = sampling_energy(m, chain.z, chain.stage);
    }

    // Bind the frozen parameter snapshot once; each step replays only the
    // forward suffix and truncates it away afterwards.
    Tape t;
    const BoundModel bm = bind_model(t, m);
    const std::size_t mark = t.size();
    std::vector<double> norms;
    int clipped = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        const Var vz = t.leaf(chain.z);
        const Var e = sampling_energy_rows(t, bm, vz, chain.stage, cfg.literal_sign);
        const Gradients g = backward(t, sum(t, e));
        Array grad = g.wrt(vz);
        t.truncate(mark);
        clip_and_update(grad, chain.z, cfg, rng, &norms, &clipped);
    }

    if (diag) {
        diag->energy_after = sampling_energy(m, chain.z, chain.stage);
        diag->steps = cfg.steps;
        diag->clipped = clipped;
        if (!norms.empty()) {
            double s = 0.0, mx = 0.0;
            for (double v : norms) {
                s += v;
                mx = std::max(mx, v);
            }
            diag->grad_norm_mean = s / double(norms.size());
            diag->grad_norm_max = mx;
        }
    }
    if (buffer) buffer->store(chain.z);
    return chain.z;
}

}  // namespace eow
