//! Constructive singular-solution certificates. A power solution
//! U_j = r^{i lambda0} sum_l (i ln r)^l phi_j^{(l0-l)} / l! built from a
//! Jordan chain solves the homogeneous model problem; its order-2m
//! derivative energy over dyadic annuli grows geometrically towards the
//! vertex, certifying that the solution misses the target Sobolev class.

use crate::conditions::LogWitness;
use crate::model::{Error, HomogeneousOperator, Result};
use crate::numeric::{c, gauss_legendre, C64, I};
use crate::pencil::Collocation;
use crate::polar::{to_polar, PolarOperator};
use crate::spectrum::EigenvalueRecord;
use crate::tols::Tols;
use rayon::prelude::*;
use serde::Serialize;

/// Power solution with angular profiles sampled on the collocation grid.
/// `profiles[l]` holds phi^{(l)}; phi^{(0)} multiplies the highest log
/// power. `boundary_target` carries the data coefficients reproduced by the
/// boundary rows (zero for eigenvalue certificates).
#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub lambda0: C64,
    pub l0: usize,
    pub profiles: Vec<Vec<Vec<C64>>>,
    pub boundary_target: Vec<C64>,
}

impl PowerSolution {
    /// Value of component `comp` at polar coordinates (r, omega).
    pub fn eval(&self, colloc: &Collocation, comp: usize, r: f64, omega: f64) -> C64 {
        let lnr = r.ln();
        let rad = (I * self.lambda0 * lnr).exp();
        let mut acc = c(0.0, 0.0);
        let mut inv_fact = 1.0;
        for l in 0..=self.l0 {
            if l > 0 {
                inv_fact /= l as f64;
            }
            let phi = &self.profiles[self.l0 - l];
            let v = colloc.eval_profile(comp, &phi[comp], omega, 0);
            acc += (I * c(lnr, 0.0)).powu(l as u32) * v * inv_fact;
        }
        rad * acc
    }
}

/// Applies a homogeneous operator (through its polar form) to a power
/// solution at (r, omega) for one component's profile stack. Returns the
/// value and the cancellation scale (sum of term magnitudes).
fn apply_op_to_stack(
    colloc: &Collocation,
    polar: &PolarOperator,
    comp: usize,
    profiles: &[Vec<Vec<C64>>],
    l0: usize,
    lambda0: C64,
    log_base: f64,
    radial: C64,
    omega: f64,
) -> (C64, f64) {
    // global size of the profile stack keeps the relative residual honest
    // where the profile happens to vanish at the evaluation angle
    let profile_sup = profiles
        .iter()
        .flat_map(|phi| phi[comp].iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let mut acc = c(0.0, 0.0);
    let mut scale = 0.0f64;
    let mut fact_a = 1.0;
    for a in 0..=l0 {
        if a > 0 {
            fact_a *= a as f64;
        }
        let logpow = (I * c(log_base, 0.0)).powu(a as u32) / fact_a;
        let mut inner = c(0.0, 0.0);
        let mut fact_b = 1.0;
        for b in 0..=(l0 - a) {
            if b > 0 {
                fact_b *= b as f64;
            }
            let phi = &profiles[l0 - a - b];
            let derivs: Vec<C64> = (0..=polar.order)
                .map(|q| colloc.eval_profile(comp, &phi[comp], omega, q))
                .collect();
            let (term, term_scale) =
                polar.apply_dlambda_with_scale(omega, lambda0, b as u32, &derivs);
            inner += term / fact_b;
            let floor = polar_coeff_scale(polar, omega, lambda0, b as u32) * profile_sup;
            scale += (radial * logpow).norm() * term_scale.max(floor) / fact_b;
        }
        acc += logpow * inner;
    }
    (radial * acc, scale)
}

fn polar_coeff_scale(polar: &PolarOperator, omega: f64, lambda: C64, q: u32) -> f64 {
    polar
        .coeffs
        .iter()
        .map(|a| a.eval_dlambda(omega, lambda, q).norm())
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub interior_max_rel: f64,
    pub boundary_max_rel: f64,
}

impl ResidualReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.interior_max_rel <= tol && self.boundary_max_rel <= tol
    }
}

/// Applies the interior operators and the nonlocal boundary rows to the
/// power solution on a grid of radii and checks the results against zero
/// and the boundary target, respectively.
pub fn verify_residual(
    ps: &PowerSolution,
    colloc: &Collocation,
    radii: &[f64],
) -> ResidualReport {
    let p = &colloc.problem;
    let two_m = p.order_2m;
    let mut interior_max = 0.0f64;
    for (j, op) in p.interior_ops.iter().enumerate() {
        let polar = to_polar(op);
        for &r in radii {
            let radial = (((I * ps.lambda0) - c(two_m as f64, 0.0)) * r.ln()).exp();
            for &omega in colloc.nodes[j].iter().step_by(3) {
                let (val, scale) = apply_op_to_stack(
                    colloc, &polar, j, &ps.profiles, ps.l0, ps.lambda0, r.ln(), radial, omega,
                );
                if scale > 0.0 {
                    interior_max = interior_max.max(val.norm() / scale.max(1e-300));
                }
            }
        }
    }
    let mut boundary_max = 0.0f64;
    for (bi, row) in p.rows.iter().enumerate() {
        for &r in radii {
            let mut val = c(0.0, 0.0);
            let mut scale = 0.0f64;
            for term in &row.terms {
                let theta = p.shifted_angle(row, term);
                let polar = to_polar(&term.op);
                let rr = term.homothety * r;
                let radial = (((I * ps.lambda0) - c(row.order as f64, 0.0)) * rr.ln()).exp();
                let (tval, tscale) = apply_op_to_stack(
                    colloc,
                    &polar,
                    term.target,
                    &ps.profiles,
                    ps.l0,
                    ps.lambda0,
                    rr.ln(),
                    radial,
                    theta,
                );
                val += tval;
                scale += tscale;
            }
            let target = ps.boundary_target[bi]
                * (((I * ps.lambda0) - c(row.order as f64, 0.0)) * r.ln()).exp();
            scale += target.norm();
            if scale > 0.0 {
                boundary_max = boundary_max.max((val - target).norm() / scale.max(1e-300));
            }
        }
    }
    ResidualReport {
        interior_max_rel: interior_max,
        boundary_max_rel: boundary_max,
    }
}

/// Selects the smallest log depth at which the power solution built from
/// the record's kernel and chains is certifiably not a polynomial vector.
pub fn build_power_solution(
    rec: &EigenvalueRecord,
    colloc: &Collocation,
    tols: &Tols,
) -> Result<PowerSolution> {
    let n_rows = colloc.problem.rows.len();
    let exponent = -rec.lambda.im;
    let s_int = exponent.round();
    let integer_exponent = s_int >= 0.0
        && (rec.lambda + c(0.0, s_int)).norm() <= tols.integer_exponent_tol;
    // depth 0: a non-polynomial eigenvector suffices
    for profile in &rec.profiles {
        let non_poly = if !integer_exponent {
            true
        } else {
            crate::classify::polynomial_test(colloc, s_int as usize, profile)
                > tols.polynomial_residual_rel
        };
        if non_poly {
            return Ok(PowerSolution {
                lambda0: rec.lambda,
                l0: 0,
                profiles: vec![profile.clone()],
                boundary_target: vec![c(0.0, 0.0); n_rows],
            });
        }
    }
    // all eigenvectors polynomial: a genuine log term from an associated
    // vector is needed
    for chain in &rec.chains {
        if chain.len() >= 2 {
            return Ok(PowerSolution {
                lambda0: rec.lambda,
                l0: 1,
                profiles: vec![colloc.split(&chain[0]), colloc.split(&chain[1])],
                boundary_target: vec![c(0.0, 0.0); n_rows],
            });
        }
    }
    Err(Error::Numerical(
        "no non-polynomial power solution found for an improper eigenvalue; \
         rerun at higher resolution"
            .into(),
    ))
}

/// Converts a failing-condition witness into a power solution with its
/// monomial boundary target.
pub fn witness_to_power_solution(w: &LogWitness, colloc: &Collocation) -> PowerSolution {
    let log_norm = colloc.profile_norm(&w.phi_log);
    if log_norm > 1e-10 {
        PowerSolution {
            lambda0: c(0.0, -(w.s as f64)),
            l0: 1,
            profiles: vec![w.phi_log.clone(), w.phi_c.clone()],
            boundary_target: w.cvec.clone(),
        }
    } else {
        PowerSolution {
            lambda0: c(0.0, -(w.s as f64)),
            l0: 0,
            profiles: vec![w.phi_c.clone()],
            boundary_target: w.cvec.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupProfile {
    /// (n, energy over the annulus 2^{-n-1} < r < 2^{-n}).
    pub energies: Vec<(usize, f64)>,
    pub ratios: Vec<f64>,
    pub fitted_ratio: f64,
    pub theoretical_ratio: f64,
    /// Divergence certified: energies grow geometrically towards the vertex.
    pub diverges: bool,
}

/// Quadrature of the order-2m derivative energy over dyadic annuli. With an
/// exponent in the critical band and a non-polynomial profile the
/// consecutive ratios approach 2^{2(2m-1+Im lambda0)} >= 1.
pub fn blowup_profile(
    ps: &PowerSolution,
    colloc: &Collocation,
    n_range: std::ops::RangeInclusive<usize>,
    tols: &Tols,
) -> BlowupProfile {
    let p = &colloc.problem;
    let two_m = p.order_2m;
    // all order-2m monomial derivative operators
    let ops: Vec<PolarOperator> = (0..=two_m)
        .map(|i| {
            let mut coeffs = vec![c(0.0, 0.0); two_m + 1];
            coeffs[i] = c(1.0, 0.0);
            to_polar(&HomogeneousOperator { order: two_m, coeffs })
        })
        .collect();
    let (gr, gw) = gauss_legendre(32);
    let (ar, aw) = gauss_legendre(64);
    // Radius-independent angular data, precomputed once: profile
    // derivatives and polar coefficients (with their lambda-derivatives)
    // at every angular quadrature node of every component.
    // angular[j][k] = (coeffs[op][b][n], derivs[l][n]).
    type Coeffs = Vec<Vec<Vec<C64>>>;
    type Derivs = Vec<Vec<C64>>;
    let angular: Vec<Vec<(Coeffs, Derivs)>> = (0..p.n_components())
        .map(|j| {
            let w = p.half_angles[j];
            ar.iter()
                .map(|&u| {
                    let omega = w * u;
                    let coeffs: Coeffs = ops
                        .iter()
                        .map(|polar| {
                            (0..=ps.l0 as u32)
                                .map(|b| {
                                    (0..=two_m)
                                        .map(|n| {
                                            polar.coeffs[n].eval_dlambda(omega, ps.lambda0, b)
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect();
                    let derivs: Derivs = ps
                        .profiles
                        .iter()
                        .map(|phi| {
                            (0..=two_m)
                                .map(|q| colloc.eval_profile(j, &phi[j], omega, q))
                                .collect()
                        })
                        .collect();
                    (coeffs, derivs)
                })
                .collect()
        })
        .collect();
    let ns: Vec<usize> = n_range.collect();
    let energies: Vec<(usize, f64)> = ns
        .par_iter()
        .map(|&n| {
            let r1 = 2f64.powi(-(n as i32 + 1));
            let r2 = 2f64.powi(-(n as i32));
            let mut total = 0.0;
            for j in 0..p.n_components() {
                let w = p.half_angles[j];
                for (&t, &wt) in gr.iter().zip(gw.iter()) {
                    let r = 0.5 * (r1 + r2) + 0.5 * (r2 - r1) * t;
                    let jac_r = 0.5 * (r2 - r1);
                    let radial = (((I * ps.lambda0) - c(two_m as f64, 0.0)) * r.ln()).exp();
                    let ilnr = I * c(r.ln(), 0.0);
                    for (k, (&_u, &wu)) in ar.iter().zip(aw.iter()).enumerate() {
                        let (coeffs, derivs) = &angular[j][k];
                        let mut dens = 0.0;
                        for opc in coeffs {
                            let mut acc = c(0.0, 0.0);
                            let mut fact_a = 1.0;
                            for a in 0..=ps.l0 {
                                if a > 0 {
                                    fact_a *= a as f64;
                                }
                                let logpow = ilnr.powu(a as u32) / fact_a;
                                let mut inner = c(0.0, 0.0);
                                let mut fact_b = 1.0;
                                for b in 0..=(ps.l0 - a) {
                                    if b > 0 {
                                        fact_b *= b as f64;
                                    }
                                    let dv = &derivs[ps.l0 - a - b];
                                    let cf = &opc[b];
                                    let mut term = c(0.0, 0.0);
                                    for nn in 0..=two_m {
                                        term += cf[nn] * dv[nn];
                                    }
                                    inner += term / fact_b;
                                }
                                acc += logpow * inner;
                            }
                            dens += (radial * acc).norm_sqr();
                        }
                        total += dens * r * jac_r * w * wt * wu;
                    }
                }
            }
            (n, total)
        })
        .collect();
    let ratios: Vec<f64> = energies
        .windows(2)
        .map(|w| if w[0].1 > 0.0 { w[1].1 / w[0].1 } else { 0.0 })
        .collect();
    // least-squares slope of log2(E_n) against n
    let k = energies.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut valid = true;
    let scale = energies.iter().map(|e| e.1).fold(0.0, f64::max);
    for &(n, e) in &energies {
        if e <= 1e-250 || e <= 1e-14 * scale {
            valid = false;
            break;
        }
        let x = n as f64;
        let y = e.log2();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let fitted_ratio = if valid && k >= 2.0 {
        let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        2f64.powf(slope)
    } else {
        0.0
    };
    let theoretical_ratio = 2f64.powf(2.0 * (two_m as f64 - 1.0 + ps.lambda0.im));
    let diverges = valid && fitted_ratio >= 1.0 + tols.blowup_min_ratio;
    BlowupProfile {
        energies,
        ratios,
        fitted_ratio,
        theoretical_ratio,
        diverges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::strip_report;
    use crate::oracle;
    use crate::pencil::{Collocation, Pencil};
    use crate::spectrum::{find_in_strip, StripQuery};

    fn improper_record(
        b: f64,
    ) -> (crate::model::ModelProblem, Pencil, Collocation, EigenvalueRecord) {
        let tols = Tols::default();
        let p = oracle::fix_bs(b / 2.0, b / 2.0, 1.0, 1.0, 1);
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 48).unwrap();
        let scan = find_in_strip(
            &pencil,
            &colloc,
            &StripQuery { c1: -0.99, c2: -0.01, re_halfwidth: 10.0 },
            &tols,
        )
        .unwrap();
        let rec = scan.records[0].clone();
        (p, pencil, colloc, rec)
    }

    #[test]
    fn certificate_for_two_thirds_eigenvalue() {
        let tols = Tols::default();
        let (_p, _pencil, colloc, rec) = improper_record(-1.0);
        assert!((rec.lambda - c(0.0, -2.0 / 3.0)).norm() < 1e-8);
        let ps = build_power_solution(&rec, &colloc, &tols).unwrap();
        assert_eq!(ps.l0, 0);
        let radii = [1e-3, 1e-2, 0.1, 0.5, 1.0];
        let rep = verify_residual(&ps, &colloc, &radii);
        assert!(rep.interior_max_rel < 1e-9, "{rep:?}");
        assert!(rep.boundary_max_rel < 1e-9, "{rep:?}");
        // annulus energy ratio 2^(2/3)
        let blow = blowup_profile(&ps, &colloc, 4..=10, &tols);
        let expect = 2f64.powf(2.0 / 3.0);
        assert!(blow.diverges);
        assert!(
            (blow.fitted_ratio - expect).abs() <= 0.02 * expect,
            "fitted {} vs {expect}",
            blow.fitted_ratio
        );
        for r in &blow.ratios {
            assert!((r - expect).abs() <= 0.02 * expect, "ratio {r}");
        }
    }

    #[test]
    fn perturbed_lambda_fails_residual() {
        let tols = Tols::default();
        let (_p, _pencil, colloc, rec) = improper_record(-1.0);
        let mut ps = build_power_solution(&rec, &colloc, &tols).unwrap();
        ps.lambda0 += c(1e-3, 0.0);
        let rep = verify_residual(&ps, &colloc, &[1e-2, 0.1, 1.0]);
        assert!(
            !rep.passes(1e-7) && rep.interior_max_rel > 1e-5,
            "perturbed certificate must fail: {rep:?}"
        );
        // with a homothety the boundary functionals also feel the
        // perturbation through the chi power
        let ph = crate::oracle::fix_hom(1.0, 2.0, 1);
        let pencil_h = Pencil::new(&ph).unwrap();
        let colloc_h = Collocation::new(&ph, 48).unwrap();
        let scan = find_in_strip(
            &pencil_h,
            &colloc_h,
            &StripQuery { c1: -1.9, c2: -0.05, re_halfwidth: 10.0 },
            &tols,
        )
        .unwrap();
        if let Some(rec_h) = scan.records.first() {
            let mut ps_h = PowerSolution {
                lambda0: rec_h.lambda,
                l0: 0,
                profiles: vec![rec_h.profiles[0].clone()],
                boundary_target: vec![c(0.0, 0.0); 2],
            };
            let clean = verify_residual(&ps_h, &colloc_h, &[1e-2, 0.1, 1.0]);
            assert!(clean.boundary_max_rel < 1e-9, "{clean:?}");
            ps_h.lambda0 += c(1e-3, 0.0);
            let rep_h = verify_residual(&ps_h, &colloc_h, &[1e-2, 0.1, 1.0]);
            assert!(
                rep_h.boundary_max_rel > 1e-6,
                "perturbed homothety certificate must fail: {rep_h:?}"
            );
        } else {
            panic!("expected at least one eigenvalue for the homothety fixture");
        }
    }

    #[test]
    fn zero_function_residual() {
        let tols = Tols::default();
        let (_p, _pencil, colloc, rec) = improper_record(-1.0);
        let mut ps = build_power_solution(&rec, &colloc, &tols).unwrap();
        for prof in ps.profiles.iter_mut() {
            for comp in prof.iter_mut() {
                for v in comp.iter_mut() {
                    *v = c(0.0, 0.0);
                }
            }
        }
        let rep = verify_residual(&ps, &colloc, &[0.1, 1.0]);
        assert_eq!(rep.interior_max_rel, 0.0);
        assert_eq!(rep.boundary_max_rel, 0.0);
    }

    #[test]
    fn nonpolynomial_profile_at_zero_exponent() {
        // b1 + b2 = -2 with b1 != b2: eigenfunction A(1 + (b1-b2) omega / pi)
        // at lambda = 0; D^2 U ~ r^-2, annulus ratio 4
        let tols = Tols::default();
        let p = oracle::fix_bs(-0.5, -1.5, 1.0, 1.0, 1);
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 48).unwrap();
        let report = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
        let e = report
            .eigenvalues
            .iter()
            .find(|e| e.record.lambda.norm() < 1e-7)
            .expect("eigenvalue at 0");
        let ps = build_power_solution(&e.record, &colloc, &tols).unwrap();
        assert_eq!(ps.l0, 0);
        let blow = blowup_profile(&ps, &colloc, 4..=10, &tols);
        assert!(blow.diverges);
        assert!((blow.fitted_ratio - 4.0).abs() < 0.08, "{}", blow.fitted_ratio);
    }

    #[test]
    fn polynomial_negative_control_refused() {
        // border case: the proper eigenvector at -i gives a polynomial;
        // the certificate builder must refuse it and the blow-up profile of
        // the polynomial shows no divergence
        let tols = Tols::default();
        let p = oracle::fix_bs(0.4, -0.4, 1.0, 1.0, 1);
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 48).unwrap();
        let report = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
        let e = report.on_line().next().unwrap();
        assert!(build_power_solution(&e.record, &colloc, &tols).is_err());
        let ps = PowerSolution {
            lambda0: e.record.lambda,
            l0: 0,
            profiles: vec![e.record.profiles[0].clone()],
            boundary_target: vec![c(0.0, 0.0); 2],
        };
        let blow = blowup_profile(&ps, &colloc, 4..=10, &tols);
        assert!(!blow.diverges, "{blow:?}");
    }
}
