#include "eow/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eow/data.hpp"
#include "eow/kernels.hpp"

namespace eow {

namespace {

// Softmax mass over the first K entries and the K+1-th entry, per point.
struct MassTable {
    std::vector<double> known;    // sum_{i<=K} h[i]
    std::vector<double> unknown;  // h[K+1]
};

MassTable softmax_masses(const EowClassifier& m, const Array& points) {
    const Array logits = m.forward_logits(points);
    const int k = m.num_classes();
    MassTable t;
    t.known.resize(std::size_t(logits.rows()));
    t.unknown.resize(std::size_t(logits.rows()));
    for (int r = 0; r < logits.rows(); ++r) {
        const auto p = m.probs(logits.data() + std::size_t(r) * logits.cols());
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += p[std::size_t(j)];
        t.known[std::size_t(r)] = s;
        t.unknown[std::size_t(r)] = p[std::size_t(k)];
    }
    return t;
}

std::vector<double> flatten(const std::vector<Array>& grads) {
    std::vector<double> out;
    for (const Array& g : grads) out.insert(out.end(), g.data(), g.data() + g.numel());
    return out;
}

std::vector<Array> param_grads(const Gradients& g, const BoundModel& bm) {
    std::vector<Array> out;
    for (std::size_t i = 0; i < bm.stage_w.size(); ++i) {
        out.push_back(g.wrt(bm.stage_w[i]));
        out.push_back(g.wrt(bm.stage_b[i]));
    }
    out.push_back(g.wrt(bm.head_w));
    out.push_back(g.wrt(bm.head_b));
    return out;
}

// d/dtheta sum_x w_x * log sum_{i<=K} h(x)[i]   (weights constant)
std::vector<double> weighted_known_mass_grad(const EowClassifier& m, const Array& points,
                                             const std::vector<double>& w) {
    Tape t;
    const BoundModel bm = bind_model(t, m);
    const Var x = t.leaf(points);
    const Var logits = bm.logits_from_input(t, x);
    const int k = m.num_classes();
    // log sum_{i<=K} h = lse_K - lse_all
    const Var v = add(t, logsumexp_cols(t, logits, k),
                      negate(t, logsumexp_cols(t, logits, k + 1)));
    const Gradients g = backward(t, weighted_sum(t, v, w));
    return flatten(param_grads(g, bm));
}

// d/dtheta sum_x w_x * (-log h(x)[K+1])   (weights constant)
std::vector<double> weighted_uncertainty_nll_grad(const EowClassifier& m, const Array& points,
                                                  const std::vector<double>& w) {
    Tape t;
    const BoundModel bm = bind_model(t, m);
    const Var x = t.leaf(points);
    const Var logits = bm.logits_from_input(t, x);
    const int k = m.num_classes();
    const Var unc = gather_cols(t, logits, std::vector<int>(std::size_t(points.rows()), k));
    // -log h[K+1] = lse_all - f[K]
    const Var v = add(t, logsumexp_cols(t, logits, k + 1), negate(t, unc));
    const Gradients g = backward(t, weighted_sum(t, v, w));
    return flatten(param_grads(g, bm));
}

}  // namespace

DiscreteDomain make_grid_domain(int n_per_side, double lo, double hi, int k) {
    if (n_per_side < 2) throw std::runtime_error("make_grid_domain: need at least 2 per side");
    DiscreteDomain dom;
    const int n = n_per_side * n_per_side;
    dom.points = Array({n, 2});
    dom.p.assign(std::size_t(n), 1.0 / double(n));
    dom.labels.resize(std::size_t(n));
    const double step = (hi - lo) / double(n_per_side - 1);
    int idx = 0;
    for (int iy = 0; iy < n_per_side; ++iy) {
        for (int ix = 0; ix < n_per_side; ++ix, ++idx) {
            const double x = lo + step * ix, y = lo + step * iy;
            dom.points.at(idx, 0) = x;
            dom.points.at(idx, 1) = y;
            double ang = std::atan2(y, x);
            if (ang < 0) ang += 2.0 * 3.14159265358979323846;
            int label = int(ang / (2.0 * 3.14159265358979323846) * k);
            dom.labels[std::size_t(idx)] = std::min(label, k - 1);
        }
    }
    return dom;
}

void set_mixture_density(DiscreteDomain& dom, int k) {
    double total = 0.0;
    for (int i = 0; i < dom.size(); ++i)
        total += dom.p[std::size_t(i)] =
            gaussian_mixture_density(dom.points.at(i, 0), dom.points.at(i, 1), k);
    for (auto& v : dom.p) v /= total;
}

DensityTable exact_densities(const EowClassifier& m, const DiscreteDomain& dom) {
    const MassTable masses = softmax_masses(m, dom.points);
    DensityTable t;
    t.z = std::accumulate(masses.unknown.begin(), masses.unknown.end(), 0.0);
    t.z_prime = std::accumulate(masses.known.begin(), masses.known.end(), 0.0);
    t.p_model.resize(masses.unknown.size());
    t.q_model.resize(masses.known.size());
    for (std::size_t i = 0; i < masses.unknown.size(); ++i) {
        t.p_model[i] = masses.unknown[i] / t.z;
        t.q_model[i] = masses.known[i] / t.z_prime;
    }
    return t;
}

Prop1Report check_prop1(const EowClassifier& m, const DiscreteDomain& dom, double rel_tol,
                        double cos_tol) {
    const DensityTable dens = exact_densities(m, dom);
    Prop1Report rep;
    rep.z = dens.z;
    rep.z_prime = dens.z_prime;
    rep.mu = dens.z / dens.z_prime;

    // g1: ascent direction of E_{q..}[log sum_{i<=K} h]; g2: gradient of
    // E_{p..}[-log h[K+1]]. The identity is g1 = mu * g2.
    const auto g1 = weighted_known_mass_grad(m, dom.points, dens.q_model);
    const auto g2 = weighted_uncertainty_nll_grad(m, dom.points, dens.p_model);

    double ninf1 = 0, ninf2 = 0;
    for (double v : g1) ninf1 = std::max(ninf1, std::abs(v));
    for (double v : g2) ninf2 = std::max(ninf2, std::abs(v * rep.mu));
    const double floor = 1e-9 * std::max(ninf1, ninf2);

    double max_rel = 0.0, dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i) {
        const double a = g1[i], b = rep.mu * g2[i];
        max_rel = std::max(max_rel, std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}));
        dot += g1[i] * g2[i];
        n1 += g1[i] * g1[i];
        n2 += g2[i] * g2[i];
    }
    rep.max_rel_dev = max_rel;
    rep.cosine = dot / (std::sqrt(n1) * std::sqrt(n2));
    rep.pass = max_rel < rel_tol && rep.cosine >= 1.0 - cos_tol && rep.mu > 0.0;
    return rep;
}

double exact_kl(const EowClassifier& m, const DiscreteDomain& dom) {
    const DensityTable dens = exact_densities(m, dom);
    double kl = 0.0;
    for (int i = 0; i < dom.size(); ++i) {
        const double p = dom.p[std::size_t(i)];
        if (p <= 0.0) continue;  // 0 log 0 = 0
        kl += p * std::log(p / dens.q_model[std::size_t(i)]);
    }
    return kl;
}

Lemma1Report check_lemma1(const EowClassifier& m, const DiscreteDomain& dom, double fd_step,
                          double rel_tol) {
    bool p_has_mass = false;
    for (double v : dom.p) p_has_mass |= v > 0.0;
    if (!p_has_mass) throw std::runtime_error("check_lemma1: data density has no mass");

    Lemma1Report rep;
    rep.kl = exact_kl(m, dom);

    // Contrastive form: sum_x (p_x - q_x) dE'/dtheta with weights frozen.
    const DensityTable dens = exact_densities(m, dom);
    std::vector<double> w(dom.p.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = dens.q_model[i] - dom.p[i];
    // E' = -log sum h, so sum (p-q) dE' = sum (q-p) d log sum h.
    const auto contrastive = weighted_known_mass_grad(m, dom.points, w);

    // Finite differences of the exact KL through every parameter.
    EowClassifier probe = m;
    auto params = probe.params();
    std::size_t flat_i = 0;
    double max_rel = 0.0;
    for (Array* p : params) {
        for (std::size_t j = 0; j < p->numel(); ++j, ++flat_i) {
            const double orig = p->data()[j];
            p->data()[j] = orig + fd_step;
            const double up = exact_kl(probe, dom);
            p->data()[j] = orig - fd_step;
            const double down = exact_kl(probe, dom);
            p->data()[j] = orig;
            const double central = (up - down) / (2.0 * fd_step);
            const double rel =
                std::abs(contrastive[flat_i] - central) / (std::abs(central) + 1e-12);
            max_rel = std::max(max_rel, rel);
        }
    }
    rep.max_rel_err = max_rel;
    rep.pass = max_rel < rel_tol;
    return rep;
}

Theorem1Report check_theorem1(const EowClassifier& m, const DiscreteDomain& dom) {
    if (dom.labels.empty()) throw std::runtime_error("check_theorem1: labels required");
    const Array logits = m.forward_logits(dom.points);
    const int k = m.num_classes();
    const int cols = logits.cols();
    const DensityTable dens = exact_densities(m, dom);

    Theorem1Report rep;
    rep.min_margin = std::numeric_limits<double>::infinity();
    double e_p_nll = 0.0, e_p_eprime = 0.0, e_q_log_known = 0.0;
    for (int i = 0; i < dom.size(); ++i) {
        const double* lr = logits.data() + std::size_t(i) * cols;
        double mall = lr[0];
        for (int j = 1; j < cols; ++j) mall = std::max(mall, lr[j]);
        double s_all = 0.0;
        for (int j = 0; j < cols; ++j) s_all += std::exp(lr[j] - mall);
        const double lse_all = mall + std::log(s_all);
        double mk = lr[0];
        for (int j = 1; j < k; ++j) mk = std::max(mk, lr[j]);
        double s_k = 0.0;
        for (int j = 0; j < k; ++j) s_k += std::exp(lr[j] - mk);
        const double lse_k = mk + std::log(s_k);

        const double nll_y = lse_all - lr[dom.labels[std::size_t(i)]];  // -log h[y]
        const double eprime = lse_all - lse_k;                          // -log sum h
        rep.min_margin = std::min(rep.min_margin, nll_y - eprime);

        const double p = dom.p[std::size_t(i)];
        const double q = dens.q_model[std::size_t(i)];
        e_p_nll += p * nll_y;
        e_p_eprime += p * eprime;
        e_q_log_known += q * -eprime;  // log sum h
    }
    // energy difference = E_p[E'] - E_q[E'] = E_p[E'] + E_q[log sum h]
    rep.surrogate = e_p_nll + e_q_log_known;
    rep.energy_difference = e_p_eprime + e_q_log_known;
    // The E_q term is shared, so the gap is the p-weighted sum of pointwise
    // margins, each >= 0; the 1e-12 slack only absorbs accumulation order.
    rep.pass = rep.min_margin >= 0.0 && rep.surrogate >= rep.energy_difference - 1e-12;
    return rep;
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) return std::nullopt;
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = (double(i) + double(j)) / 2.0 + 1.0;  // average rank for ties
            for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= double(ra.size());
    mb /= double(rb.size());
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return std::nullopt;  // constant input: undefined
    return cov / std::sqrt(va * vb);
}

DensityCorrelation check_density_proportionality(const EowClassifier& m,
                                                 const DiscreteDomain& dom) {
    const MassTable masses = softmax_masses(m, dom.points);
    DensityCorrelation out;
    out.rho_known = spearman(masses.known, dom.p);
    out.rho_uncertainty = spearman(masses.unknown, dom.p);
    return out;
}

}  // namespace eow
