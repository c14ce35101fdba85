#include "unroll/properties.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "unroll/format.hpp"
#include "unroll/linalg.hpp"
#include "unroll/parallel.hpp"
#include "unroll/rng.hpp"

namespace unroll {

namespace {

// Convergence factor without the region check; shared by the public bound
// (which validates phi) and the generalization inequality (whose phi comes
// from a trained, already-projected model).
double raw_cvg(Alg alg, int k, double phi, double mu) {
  if (k < 0) throw std::invalid_argument("cvg_bound: negative k");
  switch (alg) {
    case Alg::kGd:
      return std::pow(1.0 - phi * mu, k);
    case Alg::kNag: {
      const double r = std::sqrt(mu * phi);
      return 2.0 * std::sqrt(2.0) * (1.0 + k) * std::pow(1.0 - r, k);
    }
    case Alg::kRnn:
      break;
  }
  throw std::invalid_argument("cvg_bound: no closed-form factor for recurrent cells");
}

constexpr double kPhiSlack = 1e-12;

}  // namespace

double cvg_bound(Alg alg, int k, double phi, double mu, double L, double c0) {
  const Interval region = stable_region(alg, mu, L, c0);
  if (phi < region.lo - kPhiSlack || phi > region.hi + kPhiSlack)
    throw std::domain_error("cvg_bound: phi outside the stable region");
  return raw_cvg(alg, k, phi, mu);
}

StabCoefs stab_bound(Alg alg, int k, double phi, double mu, double m_scale) {
  if (k < 0) throw std::invalid_argument("stab_bound: negative k");
  if (!(mu > 0.0) || !(phi > 0.0)) throw std::invalid_argument("stab_bound: need mu > 0 and phi > 0");
  if (k == 0) return {0.0, 0.0};
  switch (alg) {
    case Alg::kGd: {
      const double rho = 1.0 - phi * mu;
      const double coef_b = (1.0 - std::pow(rho, k)) / mu;
      const double coef_q = (coef_b + phi * k * std::pow(rho, k - 1)) * m_scale;
      return {coef_q, coef_b};
    }
    case Alg::kNag: {
      const double r = std::sqrt(mu * phi);
      if (r > 1.0 + kPhiSlack) throw std::domain_error("stab_bound: mu*phi must not exceed 1");
      const double rho = 1.0 - r;
      const double coef_b = 2.0 / mu * (1.0 - std::pow(rho, k));
      const double transient = 8.0 * static_cast<double>(k - 1) * k * (k + 4) / 3.0;
      const double coef_q = (2.0 / mu * (1.0 - std::pow(rho, k - 1)) + phi * transient * std::pow(rho, k - 1)) * m_scale;
      return {coef_q, coef_b};
    }
    case Alg::kRnn:
      break;
  }
  throw std::invalid_argument("stab_bound: use rnn_stab_bound for recurrent cells");
}

double sens_bound(Alg alg, int k, double c0, double mu, double L, double r0) {
  if (k < 0) throw std::invalid_argument("sens_bound: negative k");
  stable_region(alg, mu, L, c0);  // validates the region is nonempty
  if (k == 0) return 0.0;
  switch (alg) {
    case Alg::kGd:
      return L * k * std::pow(1.0 - c0 * mu, k - 1) * r0;
    case Alg::kNag: {
      const double poly = 2.0 * L * (1.0 + k) +
                          (4.0 / 3.0) * k * (k + 1.0) * (k + 5.0) * (std::sqrt(mu / c0) + 2.0 * L);
      return poly * std::pow(1.0 - std::sqrt(mu * c0), k) * r0;
    }
    case Alg::kRnn:
      break;
  }
  throw std::invalid_argument("sens_bound: no closed-form bound for recurrent cells");
}

StabCoefs rnn_stab_bound(const RnnCellWeights& w, int k, double b_norm, double c_phi) {
  if (k < 0) throw std::invalid_argument("rnn_stab_bound: negative k");
  if (!(c_phi < 1.0)) throw std::domain_error("rnn_stab_bound: cell is not a contraction (c_phi >= 1)");
  if (k == 0) return {0.0, 0.0};
  double c_hat = spectral_norm(w.v) * spectral_norm(w.w_g);
  for (const Matrix& h : w.hidden) c_hat *= spectral_norm(h);
  const double geo = (1.0 - std::pow(c_phi, k)) / (1.0 - c_phi);
  return {c_hat * c_hat * b_norm / (1.0 - c_phi) * geo, c_hat * geo};
}

// ---- Monte-Carlo machinery ----

namespace {

constexpr uint64_t kCvgStreamBase = 1'000'000;
constexpr uint64_t kStabStreamBase = 2'000'000;
constexpr uint64_t kSensStreamBase = 3'000'000;

Layer make_plain_layer(Alg alg, double phi, double mu, int k) {
  if (alg == Alg::kGd) return GdLayer{phi, k};
  if (alg == Alg::kNag) return NagLayer{phi, mu, k};
  throw std::invalid_argument("property estimator: algorithm must be gd or nag");
}

int max_of(const std::vector<int>& ks) {
  int m = 0;
  for (int k : ks) m = std::max(m, k);
  return m;
}

struct StabPair {
  QuadraticProblem p1, p2;
  double dq_norm = 0.0;
  double db_norm = 0.0;
  double m1 = 0.0, m2 = 0.0;  // minimizer norms
};

StabPair sample_stab_pair(SeededRng& rng, const PropertyConfig& cfg) {
  StabPair out;
  const Matrix u = haar_orthogonal(rng, cfg.d);
  Vector lam(cfg.d);
  for (double& l : lam) l = rng.uniform(cfg.mu, cfg.L);
  int imin = 0, imax = 0;
  for (int i = 1; i < cfg.d; ++i) {
    if (lam[i] < lam[imin]) imin = i;
    if (lam[i] > lam[imax]) imax = i;
  }
  if (cfg.d > 1 && imin == imax) imax = (imin + 1) % cfg.d;
  lam[imin] = cfg.mu;
  lam[imax] = cfg.L;
  Vector b(cfg.d);
  for (double& x : b) x = rng.uniform(-cfg.b_range, cfg.b_range);

  // Perturb eigenvalues in the shared frame and b within its box, clamped so
  // both problems stay members of the certified class.
  Vector lam2(cfg.d);
  for (int i = 0; i < cfg.d; ++i)
    lam2[i] = std::clamp(lam[i] + cfg.perturb_scale * (cfg.L - cfg.mu) * rng.uniform(-1.0, 1.0), cfg.mu, cfg.L);
  Vector b2(cfg.d);
  for (int i = 0; i < cfg.d; ++i)
    b2[i] = std::clamp(b[i] + cfg.perturb_scale * cfg.b_range * rng.uniform(-1.0, 1.0), -cfg.b_range, cfg.b_range);

  out.p1 = {make_spd(u, lam, cfg.mu, cfg.L), b, cfg.mu, cfg.L};
  out.p2 = {make_spd(u, lam2, cfg.mu, cfg.L), b2, cfg.mu, cfg.L};
  out.dq_norm = spectral_norm(out.p1.q - out.p2.q);
  out.db_norm = norm2(b - b2);
  out.m1 = norm2(opt_solve(out.p1));
  out.m2 = norm2(opt_solve(out.p2));
  return out;
}

// phi pair with a minimum separation so the difference quotient stays
// numerically meaningful; phi == phi' is excluded by construction.
std::pair<double, double> sample_phi_pair(SeededRng& rng, const Interval& region) {
  const double phi1 = rng.uniform(region.lo, region.hi);
  double phi2 = phi1;
  for (int tries = 0; tries < 100 && std::fabs(phi2 - phi1) < 1e-6 * region.width(); ++tries)
    phi2 = rng.uniform(region.lo, region.hi);
  if (std::fabs(phi2 - phi1) < 1e-6 * region.width())
    phi2 = (phi1 - region.lo > region.hi - phi1) ? region.lo : region.hi;
  return {phi1, phi2};
}

}  // namespace

Vector empirical_cvg(const PropertyConfig& cfg, double phi) {
  const int max_k = max_of(cfg.k_grid);
  std::vector<Vector> ratios(cfg.n_samples);
  parallel_for(cfg.n_samples, cfg.jobs, [&](int i) {
    SeededRng rng(cfg.seed, SeededRng::derive_stream(cfg.seed, kCvgStreamBase + static_cast<uint64_t>(i)));
    const QuadraticProblem p = sample_spd_problem(rng, cfg.d, cfg.mu, cfg.L, cfg.b_range);
    const Vector y_star = opt_solve(p);
    const double denom = norm2(y_star);
    UnrollTrace trace;
    layer_forward(make_plain_layer(cfg.alg, phi, cfg.mu, max_k), p.q, p.b, &trace);
    Vector r(cfg.k_grid.size(), 0.0);
    for (size_t ki = 0; ki < cfg.k_grid.size(); ++ki)
      r[ki] = denom > 1e-12 ? norm2(trace.iterates[cfg.k_grid[ki]] - y_star) / denom : 0.0;
    ratios[i] = std::move(r);
  });
  Vector sup(cfg.k_grid.size(), 0.0);
  for (const Vector& r : ratios)
    for (size_t ki = 0; ki < r.size(); ++ki) sup[ki] = std::max(sup[ki], r[ki]);
  return sup;
}

Vector empirical_stab(const PropertyConfig& cfg, double phi) {
  const int max_k = max_of(cfg.k_grid);
  std::vector<Vector> ratios(cfg.n_samples);
  parallel_for(cfg.n_samples, cfg.jobs, [&](int i) {
    SeededRng rng(cfg.seed, SeededRng::derive_stream(cfg.seed, kStabStreamBase + static_cast<uint64_t>(i)));
    const StabPair pair = sample_stab_pair(rng, cfg);
    const double denom = pair.dq_norm + pair.db_norm;
    UnrollTrace t1, t2;
    layer_forward(make_plain_layer(cfg.alg, phi, cfg.mu, max_k), pair.p1.q, pair.p1.b, &t1);
    layer_forward(make_plain_layer(cfg.alg, phi, cfg.mu, max_k), pair.p2.q, pair.p2.b, &t2);
    Vector r(cfg.k_grid.size(), 0.0);
    for (size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
      const int k = cfg.k_grid[ki];
      r[ki] = denom > 1e-14 ? norm2(t1.iterates[k] - t2.iterates[k]) / denom : 0.0;
    }
    ratios[i] = std::move(r);
  });
  Vector sup(cfg.k_grid.size(), 0.0);
  for (const Vector& r : ratios)
    for (size_t ki = 0; ki < r.size(); ++ki) sup[ki] = std::max(sup[ki], r[ki]);
  return sup;
}

Vector empirical_sens(const PropertyConfig& cfg) {
  const int max_k = max_of(cfg.k_grid);
  const Interval region = stable_region(cfg.alg, cfg.mu, cfg.L, cfg.c0);
  std::vector<Vector> ratios(cfg.n_samples);
  parallel_for(cfg.n_samples, cfg.jobs, [&](int i) {
    SeededRng rng(cfg.seed, SeededRng::derive_stream(cfg.seed, kSensStreamBase + static_cast<uint64_t>(i)));
    const QuadraticProblem p = sample_spd_problem(rng, cfg.d, cfg.mu, cfg.L, cfg.b_range);
    const auto [phi1, phi2] = sample_phi_pair(rng, region);
    UnrollTrace t1, t2;
    layer_forward(make_plain_layer(cfg.alg, phi1, cfg.mu, max_k), p.q, p.b, &t1);
    layer_forward(make_plain_layer(cfg.alg, phi2, cfg.mu, max_k), p.q, p.b, &t2);
    const double dphi = std::fabs(phi1 - phi2);
    Vector r(cfg.k_grid.size(), 0.0);
    for (size_t ki = 0; ki < cfg.k_grid.size(); ++ki)
      r[ki] = norm2(t1.iterates[cfg.k_grid[ki]] - t2.iterates[cfg.k_grid[ki]]) / dphi;
    ratios[i] = std::move(r);
  });
  Vector sup(cfg.k_grid.size(), 0.0);
  for (const Vector& r : ratios)
    for (size_t ki = 0; ki < r.size(); ++ki) sup[ki] = std::max(sup[ki], r[ki]);
  return sup;
}

std::vector<PropertyRow> certify_properties(const PropertyConfig& cfg) {
  if (cfg.alg == Alg::kRnn) throw std::invalid_argument("certify_properties: use certify_rnn_stability for cells");
  if (cfg.n_phi < 1 || cfg.n_samples < 1) throw std::invalid_argument("certify_properties: empty sweep");
  const Interval region = stable_region(cfg.alg, cfg.mu, cfg.L, cfg.c0);
  const int max_k = max_of(cfg.k_grid);
  const int nk = static_cast<int>(cfg.k_grid.size());

  Vector phis(cfg.n_phi);
  for (int p = 0; p < cfg.n_phi; ++p)
    phis[p] = cfg.n_phi == 1 ? region.midpoint()
                             : region.lo + region.width() * static_cast<double>(p) / (cfg.n_phi - 1);

  // --- convergence: per (phi, sample) ratios + violation flags ---
  // The accelerated variant is certified through the two-iterate bound
  // ||y_{k+1}-y*||^2 + ||y_k-y*||^2 <= 8 (1+k)^2 rho^{2k} ||y*||^2.
  struct CvgCell {
    Vector ratio;
    std::vector<long> viol;
  };
  std::vector<std::vector<CvgCell>> cvg(cfg.n_phi, std::vector<CvgCell>(cfg.n_samples));
  double m_cvg = 0.0;  // max ||y*|| across samples (display scale for sens)
  std::vector<double> y_star_norms(cfg.n_samples, 0.0);
  for (int p = 0; p < cfg.n_phi; ++p) {
    const double phi = phis[p];
    parallel_for(cfg.n_samples, cfg.jobs, [&, p, phi](int i) {
      SeededRng rng(cfg.seed, SeededRng::derive_stream(cfg.seed, kCvgStreamBase + static_cast<uint64_t>(i)));
      const QuadraticProblem prob = sample_spd_problem(rng, cfg.d, cfg.mu, cfg.L, cfg.b_range);
      const Vector y_star = opt_solve(prob);
      const double r0 = norm2(y_star);
      y_star_norms[i] = r0;
      UnrollTrace trace;
      layer_forward(make_plain_layer(cfg.alg, phi, cfg.mu, max_k + (cfg.alg == Alg::kNag ? 1 : 0)), prob.q, prob.b,
                    &trace);
      CvgCell cell;
      cell.ratio.assign(nk, 0.0);
      cell.viol.assign(nk, 0);
      for (int ki = 0; ki < nk; ++ki) {
        const int k = cfg.k_grid[ki];
        const double dist = norm2(trace.iterates[k] - y_star);
        cell.ratio[ki] = r0 > 1e-12 ? dist / r0 : 0.0;
        if (cfg.alg == Alg::kGd) {
          if (r0 > 1e-12 && cell.ratio[ki] > raw_cvg(Alg::kGd, k, phi, cfg.mu) + 1e-12) cell.viol[ki] = 1;
        } else {
          const double lhs = dist * dist + [&] {
            const Vector& next = trace.iterates[k + 1];
            Vector diff(next.size());
            for (size_t j = 0; j < next.size(); ++j) diff[j] = next[j] - y_star[j];
            const double dn = norm2(diff);
            return dn * dn;
          }();
          const double rho = 1.0 - std::sqrt(cfg.mu * phi);
          const double rhs = 8.0 * (1.0 + k) * (1.0 + k) * std::pow(rho, 2 * k) * r0 * r0;
          if (lhs > rhs + 1e-12 * r0 * r0) cell.viol[ki] = 1;
        }
      }
      cvg[p][i] = std::move(cell);
    });
  }
  for (double r0 : y_star_norms) m_cvg = std::max(m_cvg, r0);

  // --- stability: per (phi, pair) ratios + violations with per-pair scale ---
  struct StabCell {
    Vector ratio;
    std::vector<long> viol;
  };
  std::vector<std::vector<StabCell>> stab(cfg.n_phi, std::vector<StabCell>(cfg.n_samples));
  std::vector<double> pair_m(cfg.n_samples, 0.0);
  for (int p = 0; p < cfg.n_phi; ++p) {
    const double phi = phis[p];
    parallel_for(cfg.n_samples, cfg.jobs, [&, phi, p](int i) {
      SeededRng rng(cfg.seed, SeededRng::derive_stream(cfg.seed, kStabStreamBase + static_cast<uint64_t>(i)));
      const StabPair pair = sample_stab_pair(rng, cfg);
      pair_m[i] = std::max(pair.m1, pair.m2);
      UnrollTrace t1, t2;
      layer_forward(make_plain_layer(cfg.alg, phi, cfg.mu, max_k), pair.p1.q, pair.p1.b, &t1);
      layer_forward(make_plain_layer(cfg.alg, phi, cfg.mu, max_k), pair.p2.q, pair.p2.b, &t2);
      StabCell cell;
      cell.ratio.assign(nk, 0.0);
      cell.viol.assign(nk, 0);
      const double denom = pair.dq_norm + pair.db_norm;
      for (int ki = 0; ki < nk; ++ki) {
        const int k = cfg.k_grid[ki];
        const double num = norm2(t1.iterates[k] - t2.iterates[k]);
        cell.ratio[ki] = denom > 1e-14 ? num / denom : 0.0;
        const StabCoefs coefs = stab_bound(cfg.alg, k, phi, cfg.mu, std::min(pair.m1, pair.m2));
        if (num > coefs.coef_q * pair.dq_norm + coefs.coef_b * pair.db_norm + 1e-12) cell.viol[ki] = 1;
      }
      stab[p][i] = std::move(cell);
    });
  }
  double m_stab = 0.0;
  for (double m : pair_m) m_stab = std::max(m_stab, m);

  // --- sensitivity: per (triple) ratios + violations with per-problem r0 ---
  std::vector<Vector> sens_ratio(cfg.n_samples);
  std::vector<std::vector<long>> sens_viol(cfg.n_samples);
  double r0_max = 0.0;
  std::vector<double> sens_r0(cfg.n_samples, 0.0);
  parallel_for(cfg.n_samples, cfg.jobs, [&](int i) {
    SeededRng rng(cfg.seed, SeededRng::derive_stream(cfg.seed, kSensStreamBase + static_cast<uint64_t>(i)));
    const QuadraticProblem prob = sample_spd_problem(rng, cfg.d, cfg.mu, cfg.L, cfg.b_range);
    const Vector y_star = opt_solve(prob);
    const double r0 = norm2(y_star);
    sens_r0[i] = r0;
    const auto [phi1, phi2] = sample_phi_pair(rng, region);
    UnrollTrace t1, t2;
    layer_forward(make_plain_layer(cfg.alg, phi1, cfg.mu, max_k), prob.q, prob.b, &t1);
    layer_forward(make_plain_layer(cfg.alg, phi2, cfg.mu, max_k), prob.q, prob.b, &t2);
    const double dphi = std::fabs(phi1 - phi2);
    sens_ratio[i].assign(nk, 0.0);
    sens_viol[i].assign(nk, 0);
    for (int ki = 0; ki < nk; ++ki) {
      const int k = cfg.k_grid[ki];
      const double num = norm2(t1.iterates[k] - t2.iterates[k]);
      sens_ratio[i][ki] = num / dphi;
      if (num > sens_bound(cfg.alg, k, cfg.c0, cfg.mu, cfg.L, r0) * dphi + 1e-12) sens_viol[i][ki] = 1;
    }
  });
  for (double r0 : sens_r0) r0_max = std::max(r0_max, r0);

  // --- assemble rows ---
  std::vector<PropertyRow> rows;
  for (int ki = 0; ki < nk; ++ki) {
    const int k = cfg.k_grid[ki];
    double sens_sup = 0.0;
    long sens_violations = 0;
    for (int i = 0; i < cfg.n_samples; ++i) {
      sens_sup = std::max(sens_sup, sens_ratio[i][ki]);
      sens_violations += sens_viol[i][ki];
    }
    const double sens_bnd = sens_bound(cfg.alg, k, cfg.c0, cfg.mu, cfg.L, r0_max);
    for (int p = 0; p < cfg.n_phi; ++p) {
      PropertyRow row;
      row.alg = alg_name(cfg.alg);
      row.k = k;
      row.phi = phis[p];
      row.cvg_bnd = raw_cvg(cfg.alg, k, phis[p], cfg.mu);
      const StabCoefs disp = stab_bound(cfg.alg, k, phis[p], cfg.mu, m_stab);
      row.stab_q_bnd = disp.coef_q;
      row.stab_b_bnd = disp.coef_b;
      row.sens_emp = sens_sup;
      row.sens_bnd = sens_bnd;
      long v = p == 0 ? sens_violations : 0;
      for (int i = 0; i < cfg.n_samples; ++i) {
        row.cvg_emp = std::max(row.cvg_emp, cvg[p][i].ratio[ki]);
        row.stab_emp = std::max(row.stab_emp, stab[p][i].ratio[ki]);
        v += cvg[p][i].viol[ki] + stab[p][i].viol[ki];
      }
      row.violations = v;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string property_report_csv(const std::vector<PropertyRow>& rows) {
  std::ostringstream out;
  out << "alg,k,phi,cvg_emp,cvg_bound,stab_emp,stabQ_bound,stabB_bound,sens_emp,sens_bound,violations\n";
  for (const PropertyRow& r : rows) {
    out << r.alg << ',' << r.k << ',' << fmt_g17(r.phi) << ',' << fmt_g17(r.cvg_emp) << ',' << fmt_g17(r.cvg_bnd)
        << ',' << fmt_g17(r.stab_emp) << ',' << fmt_g17(r.stab_q_bnd) << ',' << fmt_g17(r.stab_b_bnd) << ','
        << fmt_g17(r.sens_emp) << ',' << fmt_g17(r.sens_bnd) << ',' << r.violations << '\n';
  }
  return out.str();
}

RnnStabCheck certify_rnn_stability(const RnnCellWeights& w, const PropertyConfig& cfg) {
  w.validate();
  if (w.state_dim() != cfg.d) throw std::invalid_argument("certify_rnn_stability: dimension mismatch");
  const int max_k = max_of(cfg.k_grid);

  std::vector<StabPair> pairs(cfg.n_samples);
  parallel_for(cfg.n_samples, cfg.jobs, [&](int i) {
    SeededRng rng(cfg.seed, SeededRng::derive_stream(cfg.seed, kStabStreamBase + static_cast<uint64_t>(i)));
    pairs[i] = sample_stab_pair(rng, cfg);
  });

  std::vector<Matrix> probes;
  probes.reserve(2 * pairs.size());
  for (const StabPair& p : pairs) {
    probes.push_back(p.p1.q);
    probes.push_back(p.p2.q);
  }
  RnnStabCheck check;
  check.c_phi = rnn_contraction_coefficient(w, probes, cfg.mu, cfg.L);
  if (!(check.c_phi < 1.0))
    throw std::domain_error("certify_rnn_stability: cell is not contractive over the sampled class");

  std::vector<Vector> ratios(cfg.n_samples);
  std::vector<long> viols(cfg.n_samples, 0);
  parallel_for(cfg.n_samples, cfg.jobs, [&](int i) {
    const StabPair& pair = pairs[i];
    UnrollTrace t1, t2;
    rnn_forward(w, max_k, pair.p1.q, pair.p1.b, &t1);
    rnn_forward(w, max_k, pair.p2.q, pair.p2.b, &t2);
    const double b_norm = std::min(norm2(pair.p1.b), norm2(pair.p2.b));
    const double denom = pair.dq_norm + pair.db_norm;
    ratios[i].assign(cfg.k_grid.size(), 0.0);
    long v = 0;
    for (size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
      const int k = cfg.k_grid[ki];
      const double num = norm2(t1.iterates[k] - t2.iterates[k]);
      ratios[i][ki] = denom > 1e-14 ? num / denom : 0.0;
      const StabCoefs coefs = rnn_stab_bound(w, k, b_norm, check.c_phi);
      if (num > coefs.coef_q * pair.dq_norm + coefs.coef_b * pair.db_norm + 1e-12) ++v;
    }
    viols[i] = v;
  });
  for (int i = 0; i < cfg.n_samples; ++i) {
    check.violations += viols[i];
    for (double r : ratios[i]) check.sup_ratio = std::max(check.sup_ratio, r);
  }
  return check;
}

GeneralizationCheck generalization_check(const ModelState& model, const SyntheticDataset& data, const std::vector<int>& idx) {
  if (!model.energy) throw std::invalid_argument("generalization_check: model has no energy net");
  if (model.alg == Alg::kRnn) throw std::invalid_argument("generalization_check: no convergence factor for recurrent cells");
  if (idx.empty()) throw std::invalid_argument("generalization_check: empty index set");
  const Layer layer = model.layer();

  GeneralizationCheck res;
  for (int i : idx) {
    const SyntheticSample& s = data.samples[i];
    const InputPoint x = data.input(i);
    const Matrix q_theta = q_forward(*model.energy, x);
    const Matrix q_star = q_forward(data.star, x);
    const double f = frobenius_norm(q_theta - q_star);
    res.lhs += f * f;
    const double loss = norm2(layer_forward(layer, q_theta, s.b) - s.y_star);
    res.p_loss_sq += loss * loss;
    res.m_star = std::max(res.m_star, norm2(s.y_star));
  }
  const double n = static_cast<double>(idx.size());
  res.lhs /= n;
  res.p_loss_sq /= n;
  res.cvg = raw_cvg(model.alg, model.k, model.phi, model.mu);
  const double l4 = std::pow(data.spec.L, 4);
  const double root = std::sqrt(res.p_loss_sq) + res.m_star * res.cvg;
  res.rhs = l4 / data.spec.sigma_b_sq() * root * root;
  res.holds = res.lhs <= res.rhs * (1.0 + 1e-9);
  return res;
}

BoundCurves bound_curves(const BoundCurveConfig& cfg, Alg alg) {
  if (cfg.phi_grid < 2) throw std::invalid_argument("bound_curves: need at least two grid points");
  const Interval region = stable_region(alg, cfg.mu, cfg.L, cfg.c0);
  BoundCurves out;
  out.b_q = 2.0 * cfg.L * std::sqrt(static_cast<double>(cfg.d));
  for (int k : cfg.k_grid) {
    BoundCurveRow row;
    row.k = k;
    row.cvg = raw_cvg(alg, k, cfg.c0, cfg.mu);  // decreasing in phi, so the sup sits at c0
    if (alg == Alg::kNag && k == 0 && row.cvg > 1.0) {
      row.cvg = 1.0;  // trivial factor at depth zero; the raw formula is loose there
      out.nag_k0_clamped = true;
    }
    for (int p = 0; p < cfg.phi_grid; ++p) {
      const double phi = region.lo + region.width() * static_cast<double>(p) / (cfg.phi_grid - 1);
      const StabCoefs coefs = stab_bound(alg, k, phi, cfg.mu, cfg.m_scale);
      row.stab = std::max(row.stab, std::max(coefs.coef_q, coefs.coef_b));
    }
    row.product = row.stab * (row.cvg * cfg.m_scale + std::sqrt(cfg.r_term));
    row.sens = sens_bound(alg, k, cfg.c0, cfg.mu, cfg.L, cfg.m_scale) * region.width();
    out.rows.push_back(row);
  }
  return out;
}

std::string bound_curves_csv(const BoundCurves& gd, const BoundCurves& nag) {
  std::ostringstream out;
  out << "alg,k,cvg,stab,product,sens\n";
  auto emit = [&](const char* name, const BoundCurves& c) {
    for (const BoundCurveRow& r : c.rows)
      out << name << ',' << r.k << ',' << fmt_g17(r.cvg) << ',' << fmt_g17(r.stab) << ',' << fmt_g17(r.product) << ','
          << fmt_g17(r.sens) << '\n';
  };
  emit("gd", gd);
  emit("nag", nag);
  return out.str();
}

double rademacher_lower_bound(const RademacherConfig& cfg, const SyntheticDataset& data, const std::vector<int>& idx) {
  if (cfg.alg == Alg::kRnn) throw std::invalid_argument("rademacher_lower_bound: cell families not supported");
  if (idx.empty()) throw std::invalid_argument("rademacher_lower_bound: empty index set");
  if (cfg.n_sigma < 1) throw std::invalid_argument("rademacher_lower_bound: need at least one sign draw");
  const double n = static_cast<double>(idx.size());
  const Interval region = stable_region(cfg.alg, data.spec.mu, data.spec.L, cfg.c0);

  TrainConfig family;
  family.alg = cfg.alg;
  family.k = cfg.k;
  family.hidden_dim = cfg.hidden_dim;
  family.c0 = cfg.c0;
  SeededRng init_rng(cfg.seed, SeededRng::derive_stream(cfg.seed, 12));
  const ModelState init =
      init_model(family, data.spec.mu, data.spec.L, /*with_energy=*/true, data.spec.z_dim, data.spec.d, {}, init_rng);

  // Signed empirical objective and its gradient at the current parameters.
  auto objective = [&](const ModelState& m, const std::vector<int>& signs, std::vector<double>* grad) {
    double value = 0.0;
    for (size_t si = 0; si < idx.size(); ++si) {
      const SyntheticSample& s = data.samples[idx[si]];
      const LossGrad lg = loss_and_grad(m, {s.z, s.u}, s.b, s.y_star);
      const double w = static_cast<double>(signs[si]) / n;
      value += w * lg.loss;
      if (grad) {
        if (grad->empty()) grad->assign(lg.grad.size(), 0.0);
        for (size_t gi = 0; gi < lg.grad.size(); ++gi) (*grad)[gi] += w * lg.grad[gi];
      }
    }
    return value;
  };

  auto ascend = [&](const std::vector<int>& signs) {
    ModelState m = init;
    std::vector<double*> params = trainable_refs(m);
    double best = -std::numeric_limits<double>::infinity();
    for (int step = 0; step <= cfg.ascent_steps; ++step) {
      std::vector<double> grad;
      const double value = objective(m, signs, step < cfg.ascent_steps ? &grad : nullptr);
      if (std::isfinite(value)) best = std::max(best, value);
      if (step == cfg.ascent_steps) break;
      if (!all_finite(grad)) break;
      for (size_t gi = 0; gi < grad.size(); ++gi) *params[gi] += cfg.ascent_lr * grad[gi];
      if (cfg.project) m.phi = project_phi(m.phi, region);
    }
    return best;
  };

  double total = 0.0;
  int count = 0;
  for (int j = 0; j < cfg.n_sigma; ++j) {
    SeededRng sign_rng(cfg.seed, SeededRng::derive_stream(cfg.seed, 5000 + static_cast<uint64_t>(j)));
    std::vector<int> signs(idx.size());
    for (int& s : signs) s = (sign_rng.next_u64() & 1u) ? 1 : -1;
    std::vector<int> anti(signs.size());
    for (size_t i = 0; i < signs.size(); ++i) anti[i] = -signs[i];
    const double v1 = ascend(signs);
    const double v2 = ascend(anti);
    if (std::isfinite(v1)) {
      total += v1;
      ++count;
    }
    if (std::isfinite(v2)) {
      total += v2;
      ++count;
    }
  }
  if (count == 0) throw std::runtime_error("rademacher_lower_bound: every ascent diverged");
  return std::max(0.0, total / static_cast<double>(count));
}

}  // namespace unroll
