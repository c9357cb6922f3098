#pragma once

#include <optional>

#include "eow/model.hpp"

namespace eow {

// Exact-expectation verification on small finite domains. With a finite
// point set, both partition functions and every expectation are computable
// by enumeration, so the objective's gradient identities can be checked to
// near machine precision:
//
//  - gradient identity: d/dtheta E_{q..}[log sum_{i<=K} h[i]] equals
//    mu * d/dtheta E_{p..}[-log h[K+1]] with mu = Z/Z', expectation weights
//    frozen at the current parameters;
//  - KL descent: the finite-difference gradient of KL(p || q_theta) matches
//    the contrastive form E_p[dE'/dtheta] - E_q[dE'/dtheta];
//  - bound: -log h[y] >= -log sum_{i<=K} h[i] pointwise, and the surrogate
//    objective dominates the energy-difference objective.

struct DiscreteDomain {
    Array points;             // [N x D]
    std::vector<double> p;    // data density over the points; sums to 1
    std::vector<int> labels;  // optional, per point

    int size() const { return points.rows(); }
};

// Uniform grid on [lo, hi]^2 with n_per_side points per axis. Labels are
// assigned by angular sector (k classes) so bound checks have targets;
// density defaults to uniform.
DiscreteDomain make_grid_domain(int n_per_side, double lo, double hi, int k);

// Restrict p to the exact Gaussian-mixture density evaluated on the grid
// points (renormalized over the domain).
void set_mixture_density(DiscreteDomain& dom, int k);

struct DensityTable {
    std::vector<double> p_model;  // h[K+1]/Z per point
    std::vector<double> q_model;  // sum_{i<=K} h[i] / Z' per point
    double z = 0;
    double z_prime = 0;
};

// Z = sum_x h[K+1], Z' = sum_x sum_{i<=K} h[i]; Z + Z' = |X| exactly.
DensityTable exact_densities(const EowClassifier& m, const DiscreteDomain& dom);

struct Prop1Report {
    double mu = 0;  // Z / Z'
    double z = 0, z_prime = 0;
    double max_rel_dev = 0;  // elementwise |g1 - mu*g2| against scale
    double cosine = 0;
    bool pass = false;
};

Prop1Report check_prop1(const EowClassifier& m, const DiscreteDomain& dom,
                        double rel_tol = 1e-6, double cos_tol = 1e-10);

struct Lemma1Report {
    double kl = 0;
    double max_rel_err = 0;  // FD gradient of KL vs contrastive gradient
    bool pass = false;
};

Lemma1Report check_lemma1(const EowClassifier& m, const DiscreteDomain& dom, double fd_step = 1e-5,
                          double rel_tol = 1e-4);

// Exact KL(p || q_theta) by enumeration (used by the lemma check and tests).
double exact_kl(const EowClassifier& m, const DiscreteDomain& dom);

struct Theorem1Report {
    double min_margin = 0;        // min over points of (-log h[y]) - (-log sum h)
    double surrogate = 0;         // E_p[-log h[y]] + E_q[log sum h]
    double energy_difference = 0; // E_p[E'] - E_q[E']
    bool pass = false;
};

Theorem1Report check_theorem1(const EowClassifier& m, const DiscreteDomain& dom);

struct DensityCorrelation {
    std::optional<double> rho_known;        // Spearman(sum_{i<=K} h, p)
    std::optional<double> rho_uncertainty;  // Spearman(h[K+1], p)
};

// Rank correlation between the model's known-class mass and the true
// density over held-out points. Constant scores yield an empty optional.
DensityCorrelation check_density_proportionality(const EowClassifier& m,
                                                 const DiscreteDomain& dom);

// Spearman rank correlation with average ranks for ties; empty if either
// side is constant.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace eow
