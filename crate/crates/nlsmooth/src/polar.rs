//! Reduction of homogeneous Cartesian operators to their polar form: an ODE
//! in the angle whose coefficients are trigonometric polynomials in omega
//! and polynomials in the pencil parameter. Applying an operator of order k
//! to r^{i lambda} phi(omega) yields r^{i lambda - k} times the reduced
//! operator acting on phi.

use crate::model::HomogeneousOperator;
use crate::numeric::{c, C64, I};
use std::collections::BTreeMap;

/// Finite table (kappa, p) -> coefficient representing
/// sum c_{kappa p} e^{i kappa omega} lambda^p.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrigLambdaPoly {
    pub table: BTreeMap<(i32, u32), C64>,
}

impl TrigLambdaPoly {
    pub fn zero() -> Self {
        TrigLambdaPoly { table: BTreeMap::new() }
    }

    pub fn constant(v: C64) -> Self {
        let mut t = TrigLambdaPoly::zero();
        t.add_term(0, 0, v);
        t
    }

    pub fn add_term(&mut self, kappa: i32, p: u32, v: C64) {
        if v.norm() == 0.0 {
            return;
        }
        let e = self.table.entry((kappa, p)).or_insert(c(0.0, 0.0));
        *e += v;
        if e.norm() <= 1e-300 {
            self.table.remove(&(kappa, p));
        }
    }

    pub fn add(&mut self, other: &TrigLambdaPoly, factor: C64) {
        for (&(kappa, p), &v) in &other.table {
            self.add_term(kappa, p, v * factor);
        }
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.table.values().all(|v| v.norm() <= tol)
    }

    pub fn max_abs(&self) -> f64 {
        self.table.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Degree bounds (max |kappa|, max p).
    pub fn degrees(&self) -> (i32, u32) {
        let mut mk = 0;
        let mut mp = 0;
        for &(kappa, p) in self.table.keys() {
            mk = mk.max(kappa.abs());
            mp = mp.max(p);
        }
        (mk, mp)
    }

    /// Multiply by cos(omega): shifts Fourier modes by +-1 with weight 1/2.
    pub fn mul_cos(&self) -> TrigLambdaPoly {
        let mut out = TrigLambdaPoly::zero();
        for (&(kappa, p), &v) in &self.table {
            out.add_term(kappa + 1, p, v * 0.5);
            out.add_term(kappa - 1, p, v * 0.5);
        }
        out
    }

    /// Multiply by sin(omega).
    pub fn mul_sin(&self) -> TrigLambdaPoly {
        let half_over_i = c(0.0, -0.5); // 1/(2i)
        let mut out = TrigLambdaPoly::zero();
        for (&(kappa, p), &v) in &self.table {
            out.add_term(kappa + 1, p, v * half_over_i);
            out.add_term(kappa - 1, p, -v * half_over_i);
        }
        out
    }

    /// Multiply by (i lambda + shift).
    pub fn mul_ilambda_plus(&self, shift: C64) -> TrigLambdaPoly {
        let mut out = TrigLambdaPoly::zero();
        for (&(kappa, p), &v) in &self.table {
            out.add_term(kappa, p + 1, v * I);
            out.add_term(kappa, p, v * shift);
        }
        out
    }

    /// d/d omega.
    pub fn deriv_omega(&self) -> TrigLambdaPoly {
        let mut out = TrigLambdaPoly::zero();
        for (&(kappa, p), &v) in &self.table {
            out.add_term(kappa, p, v * I * kappa as f64);
        }
        out
    }

    pub fn eval(&self, omega: f64, lambda: C64) -> C64 {
        let mut acc = c(0.0, 0.0);
        for (&(kappa, p), &v) in &self.table {
            let trig = (I * c(kappa as f64 * omega, 0.0)).exp();
            acc += v * trig * lambda.powu(p);
        }
        acc
    }

    /// Evaluation of the q-th lambda-derivative.
    pub fn eval_dlambda(&self, omega: f64, lambda: C64, q: u32) -> C64 {
        let mut acc = c(0.0, 0.0);
        for (&(kappa, p), &v) in &self.table {
            if p < q {
                continue;
            }
            let mut fall = 1.0;
            for t in 0..q {
                fall *= (p - t) as f64;
            }
            let trig = (I * c(kappa as f64 * omega, 0.0)).exp();
            acc += v * trig * lambda.powu(p - q) * fall;
        }
        acc
    }

    /// Substitute lambda -> lambda + shift (binomial expansion).
    pub fn shift_lambda(&self, shift: C64) -> TrigLambdaPoly {
        let mut out = TrigLambdaPoly::zero();
        for (&(kappa, p), &v) in &self.table {
            // (lambda + s)^p = sum binom(p, t) s^(p-t) lambda^t
            let mut binom = 1.0;
            for t in 0..=p {
                // binom(p, t) computed incrementally below
                let term = v * shift.powu(p - t) * binom;
                out.add_term(kappa, t, term);
                binom = binom * (p - t) as f64 / (t + 1) as f64;
            }
        }
        out
    }
}

/// Polar form of a homogeneous operator of order k: phi ->
/// sum_n coeffs[n](omega, lambda) phi^(n)(omega), with the r^{i lambda - k}
/// homogeneity factored out.
#[derive(Debug, Clone)]
pub struct PolarOperator {
    pub order: usize,
    pub coeffs: Vec<TrigLambdaPoly>,
}

impl PolarOperator {
    /// Applies the reduced operator to samples of phi derivatives:
    /// derivs[n] = phi^(n)(omega).
    pub fn apply(&self, omega: f64, lambda: C64, derivs: &[C64]) -> C64 {
        let mut acc = c(0.0, 0.0);
        for (n, a) in self.coeffs.iter().enumerate() {
            acc += a.eval(omega, lambda) * derivs[n];
        }
        acc
    }

    /// Same with the q-th derivative in lambda of the coefficients.
    pub fn apply_dlambda(&self, omega: f64, lambda: C64, q: u32, derivs: &[C64]) -> C64 {
        self.apply_dlambda_with_scale(omega, lambda, q, derivs).0
    }

    /// Value together with a conservative scale for relative-residual
    /// decisions: the 1-norm of the coefficient values times the largest
    /// derivative magnitude.
    pub fn apply_dlambda_with_scale(
        &self,
        omega: f64,
        lambda: C64,
        q: u32,
        derivs: &[C64],
    ) -> (C64, f64) {
        let mut acc = c(0.0, 0.0);
        let mut coeff_scale = 0.0;
        let mut deriv_scale = 0.0f64;
        for (n, a) in self.coeffs.iter().enumerate() {
            let av = a.eval_dlambda(omega, lambda, q);
            acc += av * derivs[n];
            coeff_scale += av.norm();
            deriv_scale = deriv_scale.max(derivs[n].norm());
        }
        (acc, coeff_scale * deriv_scale)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|a| a.max_abs()).fold(0.0, f64::max)
    }

    /// Symbolic composition: the polar form of A o B for constant-coefficient
    /// A, B equals A-polar with lambda shifted by i*order(B), applied after
    /// B-polar, with the product rule in omega expanded.
    pub fn compose(&self, inner: &PolarOperator) -> PolarOperator {
        let shift = I * c(inner.order as f64, 0.0);
        let order = self.order + inner.order;
        let mut coeffs = vec![TrigLambdaPoly::zero(); order + 1];
        for (q, a_q) in self.coeffs.iter().enumerate() {
            let a_shifted = a_q.shift_lambda(shift);
            // a_shifted * d^q/domega^q [ sum_n b_n phi^(n) ]
            for (n, b_n) in inner.coeffs.iter().enumerate() {
                // Leibniz: d^q (b_n phi^(n)) = sum_j binom(q,j) b_n^(q-j) phi^(n+j)
                let mut binom = 1.0;
                for j in 0..=q {
                    let mut b_deriv = b_n.clone();
                    for _ in 0..(q - j) {
                        b_deriv = b_deriv.deriv_omega();
                    }
                    // product a_shifted * b_deriv
                    let mut prod = TrigLambdaPoly::zero();
                    for (&(k1, p1), &v1) in &a_shifted.table {
                        for (&(k2, p2), &v2) in &b_deriv.table {
                            prod.add_term(k1 + k2, p1 + p2, v1 * v2 * binom);
                        }
                    }
                    coeffs[n + j].add(&prod, c(1.0, 0.0));
                    binom = binom * (q - j) as f64 / (j + 1) as f64;
                }
            }
        }
        PolarOperator { order, coeffs }
    }
}

/// Symbolic reduction of a homogeneous Cartesian operator to polar form.
///
/// Internally tracks expressions r^{i lambda - q} sum_n a_n(omega, lambda)
/// phi^(n)(omega); each application of D1 or D2 lowers the homogeneity by
/// one and uses the parameter (i lambda - q) of the current depth.
pub fn to_polar(op: &HomogeneousOperator) -> PolarOperator {
    let k = op.order;
    let mut total: Vec<TrigLambdaPoly> = vec![TrigLambdaPoly::zero(); k + 1];
    for (idx, &coef) in op.coeffs.iter().enumerate() {
        if coef.norm() == 0.0 {
            continue;
        }
        let a1 = k - idx;
        let a2 = idx;
        // start from phi itself at depth 0
        let mut state: Vec<TrigLambdaPoly> = vec![TrigLambdaPoly::constant(c(1.0, 0.0))];
        let mut depth = 0usize;
        for _ in 0..a2 {
            state = apply_polar_derivative(&state, depth, false);
            depth += 1;
        }
        for _ in 0..a1 {
            state = apply_polar_derivative(&state, depth, true);
            depth += 1;
        }
        debug_assert_eq!(depth, k);
        for (n, t) in state.iter().enumerate() {
            total[n].add(t, coef);
        }
    }
    PolarOperator { order: k, coeffs: total }
}

/// One application of D1 (`first = true`) or D2 to a polar expression at
/// homogeneity r^{i lambda - depth}.
fn apply_polar_derivative(state: &[TrigLambdaPoly], depth: usize, first: bool) -> Vec<TrigLambdaPoly> {
    let mut out = vec![TrigLambdaPoly::zero(); state.len() + 1];
    let minus_i = c(0.0, -1.0);
    let shift = c(-(depth as f64), 0.0);
    for (n, t) in state.iter().enumerate() {
        if t.table.is_empty() {
            continue;
        }
        let radial = t.mul_ilambda_plus(shift);
        let dt = t.deriv_omega();
        if first {
            // D1 = -i cos w d_r + i sin w r^{-1} d_w
            out[n].add(&radial.mul_cos(), minus_i);
            out[n].add(&dt.mul_sin(), I);
            out[n + 1].add(&t.mul_sin(), I);
        } else {
            // D2 = -i sin w d_r - i cos w r^{-1} d_w
            out[n].add(&radial.mul_sin(), minus_i);
            out[n].add(&dt.mul_cos(), minus_i);
            out[n + 1].add(&t.mul_cos(), minus_i);
        }
    }
    out
}

/// A trigonometric polynomial sum c_kappa e^{i kappa omega} used as test
/// profile for the reduction oracle.
#[derive(Debug, Clone)]
pub struct TrigPoly {
    pub modes: Vec<(i32, C64)>,
}

impl TrigPoly {
    pub fn eval_deriv(&self, omega: f64, q: usize) -> C64 {
        let mut acc = c(0.0, 0.0);
        for &(kappa, v) in &self.modes {
            let ik = I * c(kappa as f64, 0.0);
            acc += v * ik.powu(q as u32) * (ik * c(omega, 0.0)).exp();
        }
        acc
    }
}

/// Exact Cartesian application of a homogeneous operator to
/// r^{i lambda} e^{i kappa omega} via the complex-monomial algebra
/// z^a zbar^b, a = (i lambda + kappa)/2, b = (i lambda - kappa)/2.
/// Returns the value at the point with polar coordinates (r, omega).
pub fn cartesian_apply_exact(
    op: &HomogeneousOperator,
    lambda: C64,
    phi: &TrigPoly,
    r: f64,
    omega: f64,
) -> C64 {
    let ln_z = c(r.ln(), omega);
    let ln_zbar = c(r.ln(), -omega);
    let mut acc = c(0.0, 0.0);
    for &(kappa, v) in &phi.modes {
        let a0 = (I * lambda + c(kappa as f64, 0.0)) * 0.5;
        let b0 = (I * lambda - c(kappa as f64, 0.0)) * 0.5;
        // terms (coef, a, b)
        let terms: Vec<(C64, C64, C64)> = vec![(v, a0, b0)];
        for (idx, &coef) in op.coeffs.iter().enumerate() {
            if coef.norm() == 0.0 {
                continue;
            }
            let a1 = op.order - idx;
            let a2 = idx;
            let mut cur = terms.clone();
            for _ in 0..a1 {
                cur = cart_step(&cur, true);
            }
            for _ in 0..a2 {
                cur = cart_step(&cur, false);
            }
            for (cc, a, b) in cur {
                acc += coef * cc * (a * ln_z + b * ln_zbar).exp();
            }
        }
    }
    acc
}

fn cart_step(terms: &[(C64, C64, C64)], first: bool) -> Vec<(C64, C64, C64)> {
    let mut out = Vec::with_capacity(terms.len() * 2);
    for &(cc, a, b) in terms {
        if first {
            // D1 = -i (dz + dzbar)
            out.push((c(0.0, -1.0) * cc * a, a - c(1.0, 0.0), b));
            out.push((c(0.0, -1.0) * cc * b, a, b - c(1.0, 0.0)));
        } else {
            // D2 = dz - dzbar
            out.push((cc * a, a - c(1.0, 0.0), b));
            out.push((-cc * b, a, b - c(1.0, 0.0)));
        }
    }
    out
}

/// Sup over the grid of |exact Cartesian application - polar application|,
/// together with the magnitude scale of the two sides.
pub fn polar_residual(
    op: &HomogeneousOperator,
    lambda: C64,
    phi: &TrigPoly,
    grid: &[(f64, f64)],
) -> (f64, f64) {
    let polar = to_polar(op);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for &(r, omega) in grid {
        let cart = cartesian_apply_exact(op, lambda, phi, r, omega);
        let derivs: Vec<C64> = (0..=op.order).map(|q| phi.eval_deriv(omega, q)).collect();
        let hom = (I * lambda - c(op.order as f64, 0.0)) * c(r.ln(), 0.0);
        let pol = hom.exp() * polar.apply(omega, lambda, &derivs);
        worst = worst.max((cart - pol).norm());
        scale = scale.max(cart.norm()).max(pol.norm());
    }
    (worst, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HomogeneousOperator;
    use crate::numeric::SplitMix64;

    fn tlp_value(t: &TrigLambdaPoly, kappa: i32, p: u32) -> C64 {
        t.table.get(&(kappa, p)).cloned().unwrap_or(c(0.0, 0.0))
    }

    #[test]
    fn laplacian_polar_form() {
        // D1^2 + D2^2 = -Delta: a2 = -1, a1 = 0, a0 = lambda^2
        let p = to_polar(&HomogeneousOperator::laplacian());
        assert!((tlp_value(&p.coeffs[2], 0, 0) - c(-1.0, 0.0)).norm() < 1e-14);
        assert!(p.coeffs[1].is_zero(1e-14));
        assert!((tlp_value(&p.coeffs[0], 0, 2) - c(1.0, 0.0)).norm() < 1e-14);
        assert!(tlp_value(&p.coeffs[0], 0, 1).norm() < 1e-14);
        assert!(tlp_value(&p.coeffs[0], 0, 0).norm() < 1e-14);
    }

    #[test]
    fn d1_polar_form() {
        // D1: a1 = i sin w, a0 = lambda cos w
        let op = HomogeneousOperator::new(1, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let p = to_polar(&op);
        // i sin w = i (e^{iw} - e^{-iw})/(2i) = (e^{iw} - e^{-iw})/2
        assert!((tlp_value(&p.coeffs[1], 1, 0) - c(0.5, 0.0)).norm() < 1e-14);
        assert!((tlp_value(&p.coeffs[1], -1, 0) - c(-0.5, 0.0)).norm() < 1e-14);
        // lambda cos w
        assert!((tlp_value(&p.coeffs[0], 1, 1) - c(0.5, 0.0)).norm() < 1e-14);
        assert!((tlp_value(&p.coeffs[0], -1, 1) - c(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn order_zero_passthrough() {
        let op = HomogeneousOperator::identity();
        let p = to_polar(&op);
        assert_eq!(p.order, 0);
        assert!((tlp_value(&p.coeffs[0], 0, 0) - c(1.0, 0.0)).norm() < 1e-14);
    }

    fn grid() -> Vec<(f64, f64)> {
        let mut g = Vec::new();
        for i in 0..5 {
            for k in 0..7 {
                g.push((0.3 + 0.55 * i as f64, -1.4 + 0.45 * k as f64));
            }
        }
        g
    }

    #[test]
    fn residual_laplacian_cos2() {
        let phi = TrigPoly { modes: vec![(2, c(0.5, 0.0)), (-2, c(0.5, 0.0))] };
        let (res, scale) = polar_residual(
            &HomogeneousOperator::laplacian(),
            c(0.0, 2.0),
            &phi,
            &grid(),
        );
        assert!(res <= 1e-10 * scale.max(1.0), "res={res} scale={scale}");
    }

    #[test]
    fn residual_trivial_cases() {
        let op = HomogeneousOperator::new(1, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let constant = TrigPoly { modes: vec![(0, c(1.0, 0.0))] };
        let (res, _) = polar_residual(&op, c(0.0, 0.0), &constant, &grid());
        assert!(res < 1e-12);
        let zero = TrigPoly { modes: vec![] };
        let (res0, _) = polar_residual(&HomogeneousOperator::laplacian(), c(1.3, -0.4), &zero, &grid());
        assert_eq!(res0, 0.0);
    }

    #[test]
    fn residual_random_operators() {
        let mut rng = SplitMix64(42);
        for trial in 0..60 {
            let k = 1 + (rng.next_u64() % 6) as usize;
            let coeffs: Vec<C64> = (0..=k).map(|_| rng.next_c64()).collect();
            let op = HomogeneousOperator::new(k, coeffs).unwrap();
            let lambda = rng.next_c64() * 3.0;
            let phi = TrigPoly {
                modes: (0..3)
                    .map(|_| ((rng.next_u64() % 9) as i32 - 4, rng.next_c64()))
                    .collect(),
            };
            let (res, scale) = polar_residual(&op, lambda, &phi, &grid());
            assert!(
                res <= 1e-10 * scale.max(1.0),
                "trial {trial}: res={res} scale={scale}"
            );
        }
    }

    #[test]
    fn linearity_of_reduction() {
        let mut rng = SplitMix64(7);
        for _ in 0..20 {
            let k = 1 + (rng.next_u64() % 5) as usize;
            let ca: Vec<C64> = (0..=k).map(|_| rng.next_c64()).collect();
            let cb: Vec<C64> = (0..=k).map(|_| rng.next_c64()).collect();
            let alpha = rng.next_c64();
            let beta = rng.next_c64();
            let a = HomogeneousOperator::new(k, ca.clone()).unwrap();
            let b = HomogeneousOperator::new(k, cb.clone()).unwrap();
            let combined = HomogeneousOperator::new(
                k,
                ca.iter().zip(&cb).map(|(&x, &y)| alpha * x + beta * y).collect(),
            )
            .unwrap();
            let pa = to_polar(&a);
            let pb = to_polar(&b);
            let pc = to_polar(&combined);
            for n in 0..=k {
                let mut expect = TrigLambdaPoly::zero();
                expect.add(&pa.coeffs[n], alpha);
                expect.add(&pb.coeffs[n], beta);
                let mut diff = pc.coeffs[n].clone();
                diff.add(&expect, c(-1.0, 0.0));
                let scale = expect.max_abs().max(pc.coeffs[n].max_abs()).max(1.0);
                assert!(diff.max_abs() <= 1e-13 * scale);
            }
        }
    }

    #[test]
    fn composition_matches_product() {
        let mut rng = SplitMix64(11);
        for _ in 0..15 {
            let k1 = 1 + (rng.next_u64() % 2) as usize;
            let k2 = 1 + (rng.next_u64() % 2) as usize;
            let a = HomogeneousOperator::new(k1, (0..=k1).map(|_| rng.next_c64()).collect()).unwrap();
            let b = HomogeneousOperator::new(k2, (0..=k2).map(|_| rng.next_c64()).collect()).unwrap();
            let prod = a.multiply(&b);
            let direct = to_polar(&prod);
            let composed = to_polar(&a).compose(&to_polar(&b));
            for n in 0..=prod.order {
                let mut diff = direct.coeffs[n].clone();
                diff.add(&composed.coeffs[n], c(-1.0, 0.0));
                let scale = direct.coeffs[n].max_abs().max(composed.coeffs[n].max_abs()).max(1.0);
                assert!(diff.max_abs() <= 1e-12 * scale, "n={n}");
            }
        }
    }

    #[test]
    fn degree_bounds_hold() {
        let mut rng = SplitMix64(23);
        for _ in 0..30 {
            let k = 1 + (rng.next_u64() % 6) as usize;
            let op = HomogeneousOperator::new(k, (0..=k).map(|_| rng.next_c64()).collect()).unwrap();
            let p = to_polar(&op);
            for a in &p.coeffs {
                let (mk, mp) = a.degrees();
                assert!(mk as usize <= k);
                assert!(mp as usize <= k);
            }
        }
    }
}
