#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unroll/dataset.hpp"
#include "unroll/layers.hpp"
#include "unroll/training.hpp"

namespace unroll {

// ---- closed-form bounds ----

// Worst-case convergence factor after k steps at step size phi:
//   gd:  (1 - phi mu)^k
//   nag: 2 sqrt(2) (1 + k) (1 - sqrt(mu phi))^k
// Both certify ||y_k - y*|| <= bound * ||y_0 - y*||. phi must lie in the
// stable region (domain error otherwise).
double cvg_bound(Alg alg, int k, double phi, double mu, double L, double c0);

struct StabCoefs {
  double coef_q = 0.0;  // multiplies ||Q_1 - Q_2||_2
  double coef_b = 0.0;  // multiplies ||b_1 - b_2||_2
};

// Coefficients of the two-term stability bound on ||y_k,1 - y_k,2|| for two
// problems solved with the same layer. m_scale is the ||y*|| scale entering
// the Q term (the certifier uses the per-pair minimum of the two minimizer
// norms; display tables use an empirical maximum over the class).
StabCoefs stab_bound(Alg alg, int k, double phi, double mu, double m_scale);

// Bound on ||y_k(phi) - y_k(phi')|| / |phi - phi'| over the stable region,
// scaled by r0 = ||y_0 - y*||. Zero at k = 0.
double sens_bound(Alg alg, int k, double c0, double mu, double L, double r0);

// Stability coefficients for a contractive recurrent cell: geometric sums in
// the contraction coefficient c_phi (error when c_phi >= 1). b_norm is the
// ||b|| scale of the pair (use the smaller of the two for a certified bound).
StabCoefs rnn_stab_bound(const RnnCellWeights& w, int k, double b_norm, double c_phi);

// ---- Monte-Carlo certification ----

struct PropertyConfig {
  Alg alg = Alg::kGd;
  std::vector<int> k_grid = {1, 5, 20, 100};
  int n_samples = 500;
  int n_phi = 5;  // step sizes spanning the stable region
  int d = 5;
  double mu = 0.1;
  double L = 1.0;
  double c0 = 1e-3;
  double b_range = 5.0;
  double perturb_scale = 0.05;
  uint64_t seed = 0;
  int jobs = 1;
};

// sup over sampled problems of ||y_k - y*|| / ||y*||, one value per k.
Vector empirical_cvg(const PropertyConfig& cfg, double phi);

// sup over sampled problem pairs of ||y_k,1 - y_k,2|| / (||dQ|| + ||db||).
Vector empirical_stab(const PropertyConfig& cfg, double phi);

// sup over sampled (problem, phi, phi') of ||y_k(phi) - y_k(phi')|| / |dphi|.
Vector empirical_sens(const PropertyConfig& cfg);

struct PropertyRow {
  std::string alg;
  int k = 0;
  double phi = 0.0;
  double cvg_emp = 0.0;
  double cvg_bnd = 0.0;
  double stab_emp = 0.0;
  double stab_q_bnd = 0.0;
  double stab_b_bnd = 0.0;
  double sens_emp = 0.0;
  double sens_bnd = 0.0;
  long violations = 0;
};

// Full certification sweep for one algorithm: every (k, phi) cell checks the
// convergence bound per sample and the stability bound per pair (with the
// per-pair minimizer scale); sensitivity is certified per k against the
// worst-step bound and its columns are repeated across the phi rows (the
// violation count includes it once, on the first phi row).
std::vector<PropertyRow> certify_properties(const PropertyConfig& cfg);

std::string property_report_csv(const std::vector<PropertyRow>& rows);

struct RnnStabCheck {
  double sup_ratio = 0.0;
  long violations = 0;
  double c_phi = 0.0;
};

// Stability certification for a fixed contractive cell over sampled pairs.
RnnStabCheck certify_rnn_stability(const RnnCellWeights& w, const PropertyConfig& cfg);

// ---- generalization inequality ----

struct GeneralizationCheck {
  double lhs = 0.0;        // mean ||Q_theta - Q*||_F^2
  double rhs = 0.0;
  double p_loss_sq = 0.0;  // mean squared prediction loss
  double m_star = 0.0;     // max ||y*|| over the split
  double cvg = 0.0;        // convergence factor at the model's (k, phi)
  bool holds = false;
};

// Checks mean ||Q_theta - Q*||_F^2 <= sigma_b^-2 L^4 (sqrt(mean loss^2)
// + m_star * cvg)^2 over the given index set. Holds for any bound-valid
// convergence factor, trained or not.
GeneralizationCheck generalization_check(const ModelState& model, const SyntheticDataset& data, const std::vector<int>& idx);

// ---- bound trade-off curves ----

struct BoundCurveConfig {
  std::vector<int> k_grid = {0, 1, 2, 5, 10, 20, 50, 100};
  int d = 5;
  double mu = 0.1;
  double L = 1.0;
  double c0 = 1e-3;
  double m_scale = 1.0;  // empirical max ||Opt|| over the class
  double r_term = 0.0;   // sqrt of this is added to Cvg * m_scale in the product column
  int phi_grid = 512;    // deterministic grid resolving the sup over the region
};

struct BoundCurveRow {
  int k = 0;
  double cvg = 0.0;      // sup over the region (attained at c0)
  double stab = 0.0;     // sup over the region of max(coef_q, coef_b)
  double product = 0.0;  // stab * (cvg * m_scale + sqrt(r_term))
  double sens = 0.0;     // sens bound * region width
};

struct BoundCurves {
  std::vector<BoundCurveRow> rows;
  double b_q = 0.0;            // 2 L sqrt(d), the ||Q||_F diameter of the class
  bool nag_k0_clamped = false;  // k = 0 convergence factor clamped to 1
};

BoundCurves bound_curves(const BoundCurveConfig& cfg, Alg alg);
std::string bound_curves_csv(const BoundCurves& gd, const BoundCurves& nag);

// ---- complexity lower bound ----

struct RademacherConfig {
  int n_sigma = 8;        // antithetic sign-vector pairs
  int ascent_steps = 100;
  double ascent_lr = 1e-2;
  Alg alg = Alg::kGd;
  int k = 5;
  int hidden_dim = 0;
  double c0 = 1e-3;
  bool project = true;
  uint64_t seed = 0;
};

// Monte-Carlo lower bound on the Rademacher complexity of the loss class:
// for each sign vector, gradient ascent of (1/n) sum_i sigma_i loss_i over
// the trainables; sign vectors come in antithetic pairs and the mean is
// clamped at zero (the target quantity is nonnegative).
double rademacher_lower_bound(const RademacherConfig& cfg, const SyntheticDataset& data,
                              const std::vector<int>& idx);

}  // namespace unroll
