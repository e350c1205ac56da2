//! Test-support fixtures with closed-form characteristic determinants, and
//! the exact polynomial-ansatz solver used as an independent oracle for the
//! monomial-data conditions.

use crate::model::{
    BoundaryRow, HomogeneousOperator, ModelProblem, NonlocalTerm, Side,
};
use crate::numeric::{c, lstsq_min_norm, C64, HomoPoly2, I};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::{FRAC_PI_2, PI};

/// Local Dirichlet Laplacian on the angle |omega| < omega0.
/// Closed form: det ~ sinh(2 lambda omega0) / lambda, eigenvalues
/// i k pi / (2 omega0), k nonzero integer.
pub fn fix_loc(omega0: f64, ell: usize) -> ModelProblem {
    let local = |side: Side| BoundaryRow {
        component: 0,
        side,
        mu: 1,
        order: 0,
        terms: vec![NonlocalTerm {
            target: 0,
            rotation: 0.0,
            homothety: 1.0,
            op: HomogeneousOperator::identity(),
        }],
    };
    ModelProblem::new(
        vec![omega0],
        2,
        vec![HomogeneousOperator::laplacian()],
        vec![local(Side::Minus), local(Side::Plus)],
        ell,
    )
    .unwrap()
}

/// Laplacian on the half-plane-like angle |omega| < pi/2 with rows
/// u((-1)^sigma pi/2) + b_sigma chi_sigma^{i lambda} u(0): each side carries
/// one nonlocal term whose rotation maps the side onto the bisector ray.
pub fn fix_bs(b1: f64, b2: f64, chi1: f64, chi2: f64, ell: usize) -> ModelProblem {
    let row = |side: Side, b: f64, chi: f64| {
        let rotation = -side.sign() * FRAC_PI_2;
        BoundaryRow {
            component: 0,
            side,
            mu: 1,
            order: 0,
            terms: vec![
                NonlocalTerm {
                    target: 0,
                    rotation: 0.0,
                    homothety: 1.0,
                    op: HomogeneousOperator::identity(),
                },
                NonlocalTerm {
                    target: 0,
                    rotation,
                    homothety: chi,
                    op: HomogeneousOperator::identity().scale(c(b, 0.0)),
                },
            ],
        }
    };
    ModelProblem::new(
        vec![FRAC_PI_2],
        2,
        vec![HomogeneousOperator::laplacian()],
        vec![row(Side::Minus, b1, chi1), row(Side::Plus, b2, chi2)],
        ell,
    )
    .unwrap()
}

/// One-sided homothety variant of the nonlocal fixture.
pub fn fix_hom(b: f64, chi: f64, ell: usize) -> ModelProblem {
    fix_bs(b, 0.0, chi, 1.0, ell)
}

/// Clamped-plate fixture: bilaplacian with rows (u, du/dnu) on each side of
/// the angle |omega| < omega0. No closed-form eigenvalues; the oracle is
/// collocation at doubled resolution.
pub fn fix_b4(omega0: f64, ell: usize) -> ModelProblem {
    let mk = |side: Side| {
        let nu = (
            -omega0.sin(),
            side.sign() * omega0.cos(),
        );
        vec![
            BoundaryRow {
                component: 0,
                side,
                mu: 1,
                order: 0,
                terms: vec![NonlocalTerm {
                    target: 0,
                    rotation: 0.0,
                    homothety: 1.0,
                    op: HomogeneousOperator::identity(),
                }],
            },
            BoundaryRow {
                component: 0,
                side,
                mu: 2,
                order: 1,
                terms: vec![NonlocalTerm {
                    target: 0,
                    rotation: 0.0,
                    homothety: 1.0,
                    op: HomogeneousOperator::directional(
                        I * c(nu.0, 0.0),
                        I * c(nu.1, 0.0),
                    ),
                }],
            },
        ]
    };
    let mut rows = mk(Side::Minus);
    rows.extend(mk(Side::Plus));
    ModelProblem::new(
        vec![omega0],
        4,
        vec![HomogeneousOperator::bilaplacian()],
        rows,
        ell,
    )
    .unwrap()
}

/// Closed-form determinant of the local Dirichlet fixture (up to a constant
/// factor): sinh(2 lambda omega0) / lambda.
pub fn loc_delta(lambda: C64, omega0: f64) -> C64 {
    let x = lambda * 2.0 * omega0;
    if x.norm() < 1e-4 {
        // sinh(x)/x * 2 omega0, series
        let x2 = x * x;
        (c(1.0, 0.0) + x2 / 6.0 + x2 * x2 / 120.0) * 2.0 * omega0
    } else {
        x.sinh() / lambda
    }
}

/// Closed-form determinant of the nonlocal fixture (up to a constant):
/// [sinh(lambda pi) + (b1 chi1^{i lambda} + b2 chi2^{i lambda})
///  sinh(lambda pi / 2)] / lambda.
pub fn bs_delta(lambda: C64, b1: f64, b2: f64, chi1: f64, chi2: f64) -> C64 {
    let pow = |chi: f64| (I * lambda * chi.ln()).exp();
    let num = (lambda * PI).sinh()
        + (pow(chi1) * b1 + pow(chi2) * b2) * (lambda * FRAC_PI_2).sinh();
    if lambda.norm() < 1e-6 {
        // remove the simple zero of the numerator at 0 by series
        let d_num = c(PI, 0.0)
            + (pow(chi1) * b1 + pow(chi2) * b2) * FRAC_PI_2;
        d_num + (num - d_num * lambda) / (lambda + c(1e-300, 0.0))
    } else {
        num / lambda
    }
}

/// Logarithmic derivative of `bs_delta`, used for cross-checking the pencil
/// determinant through an independent route.
pub fn bs_delta_logderiv(lambda: C64, b1: f64, b2: f64, chi1: f64, chi2: f64) -> C64 {
    let h = c(1e-6, 0.0);
    let fp = bs_delta(lambda + h, b1, b2, chi1, chi2);
    let fm = bs_delta(lambda - h, b1, b2, chi1, chi2);
    let f0 = bs_delta(lambda, b1, b2, chi1, chi2);
    (fp - fm) / (h * 2.0) / f0
}

/// Newton iteration on a closed-form determinant.
pub fn newton_on(
    f: impl Fn(C64) -> C64,
    start: C64,
    tol: f64,
) -> Option<C64> {
    let mut z = start;
    let h = 1e-7;
    for _ in 0..100 {
        let fz = f(z);
        let d = (f(z + c(h, 0.0)) - f(z - c(h, 0.0))) / c(2.0 * h, 0.0);
        if d.norm() == 0.0 {
            return None;
        }
        let step = fz / d;
        z -= step;
        if step.norm() <= tol * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    None
}

/// Eigenfunction of the nonlocal fixture at lambda = -i when b1 + b2 = 0:
/// phi(omega) = cos omega + b1 sin omega.
pub fn bs_border_eigenfunction(b1: f64, omega: f64) -> C64 {
    c(omega.cos() + b1 * omega.sin(), 0.0)
}

/// Result of the exact polynomial-ansatz solve.
#[derive(Debug, Clone)]
pub struct BruteSolve {
    pub feasible: bool,
    pub residual: f64,
    /// Monomial coefficients per component when feasible.
    pub solution: Option<Vec<HomoPoly2>>,
}

/// Decides by exact finite linear algebra whether the boundary problem with
/// monomial data c r^{s - m_row} admits a homogeneous polynomial solution of
/// degree s. Interior equations are vacuous for s <= 2m - 2. Serves as the
/// independent oracle for the monomial-data checkers.
pub fn brute_polynomial_solve(p: &ModelProblem, s: usize, cvec: &[C64]) -> BruteSolve {
    assert!(s + 2 <= p.order_2m, "degree must satisfy s <= 2m - 2");
    assert_eq!(cvec.len(), p.rows.len());
    let n = p.n_components();
    let unknowns = n * (s + 1);
    let mut rows_mat: Vec<Vec<C64>> = Vec::new();
    let mut rhs: Vec<C64> = Vec::new();
    for (ri, row) in p.rows.iter().enumerate() {
        if s < row.order {
            // the trace of the ansatz vanishes identically on such rows,
            // so nonzero data there is infeasible outright
            if cvec[ri].norm() > 0.0 {
                return BruteSolve {
                    feasible: false,
                    residual: cvec[ri].norm(),
                    solution: None,
                };
            }
            continue;
        }
        let mut eq = vec![c(0.0, 0.0); unknowns];
        for term in &row.terms {
            for i in 0..=s {
                // unknown: coefficient of y1^(s-i) y2^i in component target
                let mono = HomoPoly2::monomial(s, i);
                let mut applied = mono;
                // apply the term operator
                let mut acc = HomoPoly2::zero(s - row.order);
                for (oi, &ocoef) in term.op.coeffs.iter().enumerate() {
                    if ocoef.norm() == 0.0 {
                        continue;
                    }
                    let mut work = applied.clone();
                    for _ in 0..(term.op.order - oi) {
                        work = work.d1();
                    }
                    for _ in 0..oi {
                        work = work.d2();
                    }
                    acc.add_scaled(&work, ocoef);
                }
                applied = acc.compose_rot_scale(term.rotation, term.homothety);
                // the composition maps y -> G y, so the trace on the side
                // is read off at the side direction itself
                let side_angle = row.side.sign() * p.half_angles[row.component];
                eq[term.target * (s + 1) + i] += applied.eval_dir(side_angle);
            }
        }
        rows_mat.push(eq);
        rhs.push(cvec[ri]);
    }
    if rows_mat.is_empty() {
        return BruteSolve {
            feasible: true,
            residual: 0.0,
            solution: Some(vec![HomoPoly2::zero(s); n]),
        };
    }
    let a = DMatrix::from_fn(rows_mat.len(), unknowns, |i, j| rows_mat[i][j]);
    let b = DVector::from_vec(rhs);
    let (x, residual) = lstsq_min_norm(&a, &b, 1e-12);
    let scale = b.norm() + a.norm();
    let feasible = residual <= 1e-9 * (1.0 + scale);
    let solution = if feasible {
        let mut polys = Vec::new();
        for k in 0..n {
            let mut poly = HomoPoly2::zero(s);
            for i in 0..=s {
                poly.coeffs[i] = x[k * (s + 1) + i];
            }
            polys.push(poly);
        }
        Some(polys)
    } else {
        None
    };
    BruteSolve {
        feasible,
        residual,
        solution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate() {
        for p in [
            fix_loc(FRAC_PI_2, 1),
            fix_loc(PI / 6.0, 0),
            fix_bs(-0.5, -0.5, 1.0, 1.0, 1),
            fix_hom(1.0, 2.0, 1),
            fix_b4(1.1, 2),
        ] {
            let report = p.validate();
            assert!(report.passed(), "{}", report.summary());
        }
    }

    #[test]
    fn bs_closed_form_zero_loci() {
        // b1 + b2 = -1: cos(y pi / 2) = 1/2 at y = -2/3
        let z = newton_on(
            |l| bs_delta(l, -0.5, -0.5, 1.0, 1.0),
            c(0.05, -0.7),
            1e-13,
        )
        .unwrap();
        assert!((z - c(0.0, -2.0 / 3.0)).norm() < 1e-10, "{z}");
        // b1 + b2 = -sqrt(2): y = -1/2
        let b = -(2.0f64.sqrt()) / 2.0;
        let z2 = newton_on(
            |l| bs_delta(l, b, b, 1.0, 1.0),
            c(0.05, -0.6),
            1e-13,
        )
        .unwrap();
        assert!((z2 - c(0.0, -0.5)).norm() < 1e-10, "{z2}");
    }

    #[test]
    fn loc_closed_form_zeros() {
        let z = newton_on(|l| loc_delta(l, FRAC_PI_2), c(0.02, -1.1), 1e-13).unwrap();
        assert!((z - c(0.0, -1.0)).norm() < 1e-10);
    }

    #[test]
    fn brute_constant_data() {
        let p = fix_loc(FRAC_PI_2, 0);
        // s = 0: constants; equal boundary values feasible, unequal not
        let feas = brute_polynomial_solve(&p, 0, &[c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(feas.feasible);
        let infeas = brute_polynomial_solve(&p, 0, &[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert!(!infeas.feasible);
        let zero = brute_polynomial_solve(&p, 0, &[c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(zero.feasible);
    }
}
