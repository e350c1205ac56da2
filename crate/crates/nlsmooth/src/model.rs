//! Domain types for model problems in plane angles and their structural
//! validation: geometry of the nonlocal shifts, proper ellipticity of the
//! interior operators and the complementing (Lopatinsky) check for the
//! local parts of the boundary rows.

use crate::numeric::{c, cluster_roots, poly_roots, poly_trim, C64, I};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Constant-coefficient homogeneous operator sum c_a D1^a1 D2^a2 with
/// |a| = order; `coeffs[i]` multiplies D1^(order-i) D2^i.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousOperator {
    pub order: usize,
    pub coeffs: Vec<C64>,
}

impl HomogeneousOperator {
    pub fn new(order: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != order + 1 {
            return Err(Error::InvalidProblem(format!(
                "operator of order {} needs {} coefficients, got {}",
                order,
                order + 1,
                coeffs.len()
            )));
        }
        Ok(HomogeneousOperator { order, coeffs })
    }

    pub fn identity() -> Self {
        HomogeneousOperator {
            order: 0,
            coeffs: vec![c(1.0, 0.0)],
        }
    }

    /// The Laplacian written as D1^2 + D2^2 (equal to -Delta).
    pub fn laplacian() -> Self {
        HomogeneousOperator {
            order: 2,
            coeffs: vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        }
    }

    /// (D1^2 + D2^2)^2.
    pub fn bilaplacian() -> Self {
        HomogeneousOperator {
            order: 4,
            coeffs: vec![
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(2.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0),
            ],
        }
    }

    /// First-order directional operator d1 D1 + d2 D2.
    pub fn directional(d1: C64, d2: C64) -> Self {
        HomogeneousOperator {
            order: 1,
            coeffs: vec![d1, d2],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|a| a.norm() == 0.0)
    }

    pub fn scale(&self, factor: C64) -> Self {
        HomogeneousOperator {
            order: self.order,
            coeffs: self.coeffs.iter().map(|&a| a * factor).collect(),
        }
    }

    /// Symbol restricted to (1, z): sum coeffs[i] z^i.
    pub fn symbol_in_z(&self) -> Vec<C64> {
        self.coeffs.clone()
    }

    /// Full symbol at (xi1, xi2).
    pub fn symbol(&self, xi1: C64, xi2: C64) -> C64 {
        let mut acc = c(0.0, 0.0);
        for (i, &a) in self.coeffs.iter().enumerate() {
            acc += a * xi1.powu((self.order - i) as u32) * xi2.powu(i as u32);
        }
        acc
    }

    /// Operator product (composition of constant-coefficient operators):
    /// symbols multiply, coefficient vectors convolve.
    pub fn multiply(&self, other: &HomogeneousOperator) -> HomogeneousOperator {
        let order = self.order + other.order;
        let mut coeffs = vec![c(0.0, 0.0); order + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        HomogeneousOperator { order, coeffs }
    }
}

/// Boundary side of the angle: sigma = 1 is the ray omega = -omega_j,
/// sigma = 2 the ray omega = +omega_j.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn sigma(self) -> usize {
        match self {
            Side::Minus => 1,
            Side::Plus => 2,
        }
    }

    pub fn from_sigma(sigma: usize) -> Result<Self> {
        match sigma {
            1 => Ok(Side::Minus),
            2 => Ok(Side::Plus),
            _ => Err(Error::InvalidProblem(format!("side must be 1 or 2, got {sigma}"))),
        }
    }

    /// (-1)^sigma.
    pub fn sign(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }
}

/// One term of a nonlocal boundary row: operator applied to component
/// `target` evaluated after rotation by `rotation` and scaling by
/// `homothety`. Components are 0-based internally.
#[derive(Debug, Clone)]
pub struct NonlocalTerm {
    pub target: usize,
    pub rotation: f64,
    pub homothety: f64,
    pub op: HomogeneousOperator,
}

impl NonlocalTerm {
    pub fn is_local_for(&self, component: usize) -> bool {
        self.target == component && self.rotation == 0.0 && self.homothety == 1.0
    }
}

/// Boundary row (j, sigma, mu): a sum of nonlocal terms of common order.
/// The first term must be the local one.
#[derive(Debug, Clone)]
pub struct BoundaryRow {
    pub component: usize,
    pub side: Side,
    pub mu: usize,
    pub order: usize,
    pub terms: Vec<NonlocalTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowIndex {
    pub component: usize,
    pub sigma: usize,
    pub mu: usize,
}

impl BoundaryRow {
    pub fn index(&self) -> RowIndex {
        RowIndex {
            component: self.component,
            sigma: self.side.sigma(),
            mu: self.mu,
        }
    }
}

/// Model problem at one orbit of conjugation points: N plane angles,
/// interior operators of order 2m and 2mN nonlocal boundary rows, together
/// with the regularity index `ell` of the generalized solutions under study.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub half_angles: Vec<f64>,
    pub order_2m: usize,
    pub interior_ops: Vec<HomogeneousOperator>,
    pub rows: Vec<BoundaryRow>,
    pub ell: usize,
}

impl ModelProblem {
    pub fn new(
        half_angles: Vec<f64>,
        order_2m: usize,
        interior_ops: Vec<HomogeneousOperator>,
        mut rows: Vec<BoundaryRow>,
        ell: usize,
    ) -> Result<Self> {
        let n = half_angles.len();
        if n == 0 {
            return Err(Error::InvalidProblem("at least one component required".into()));
        }
        if order_2m < 2 || !order_2m.is_multiple_of(2) {
            return Err(Error::InvalidProblem(format!(
                "order 2m must be a positive even integer, got {order_2m}"
            )));
        }
        let m = order_2m / 2;
        if interior_ops.len() != n {
            return Err(Error::InvalidProblem("one interior operator per component".into()));
        }
        for (j, op) in interior_ops.iter().enumerate() {
            if op.order != order_2m {
                return Err(Error::InvalidProblem(format!(
                    "interior operator {} has order {}, expected {}",
                    j + 1,
                    op.order,
                    order_2m
                )));
            }
            if op.is_zero() {
                return Err(Error::InvalidProblem(format!(
                    "interior operator {} is identically zero",
                    j + 1
                )));
            }
        }
        for (j, &w) in half_angles.iter().enumerate() {
            if !(w > 0.0 && w < std::f64::consts::PI) {
                return Err(Error::InvalidProblem(format!(
                    "half angle {} must lie in (0, pi), got {w}",
                    j + 1
                )));
            }
        }
        if ell > order_2m - 1 {
            return Err(Error::InvalidProblem(format!(
                "ell must satisfy 0 <= ell <= 2m-1, got {ell}"
            )));
        }
        rows.sort_by_key(|r| r.index());
        let mut expected = Vec::new();
        for j in 0..n {
            for sigma in 1..=2 {
                for mu in 1..=m {
                    expected.push(RowIndex { component: j, sigma, mu });
                }
            }
        }
        let got: Vec<RowIndex> = rows.iter().map(|r| r.index()).collect();
        if got != expected {
            return Err(Error::InvalidProblem(
                "boundary rows must cover each (component, side, mu) exactly once".into(),
            ));
        }
        for row in &rows {
            if row.order > order_2m - 1 {
                return Err(Error::InvalidProblem(format!(
                    "row ({},{},{}) has order {} > 2m-1",
                    row.component + 1,
                    row.side.sigma(),
                    row.mu,
                    row.order
                )));
            }
            if row.terms.is_empty() || !row.terms[0].is_local_for(row.component) {
                return Err(Error::InvalidProblem(format!(
                    "row ({},{},{}) must start with its local term",
                    row.component + 1,
                    row.side.sigma(),
                    row.mu
                )));
            }
            if row.terms[0].op.is_zero() {
                return Err(Error::InvalidProblem(format!(
                    "row ({},{},{}) has a zero local operator",
                    row.component + 1,
                    row.side.sigma(),
                    row.mu
                )));
            }
            for t in &row.terms {
                if t.op.order != row.order {
                    return Err(Error::InvalidProblem(format!(
                        "row ({},{},{}): term operator order {} differs from row order {}",
                        row.component + 1,
                        row.side.sigma(),
                        row.mu,
                        t.op.order,
                        row.order
                    )));
                }
                if t.target >= n {
                    return Err(Error::InvalidProblem("term target out of range".into()));
                }
                if !(t.homothety > 0.0) {
                    return Err(Error::InvalidProblem("homothety must be positive".into()));
                }
            }
        }
        Ok(ModelProblem {
            half_angles,
            order_2m,
            interior_ops,
            rows,
            ell,
        })
    }

    pub fn n_components(&self) -> usize {
        self.half_angles.len()
    }

    pub fn m(&self) -> usize {
        self.order_2m / 2
    }

    pub fn pencil_dim(&self) -> usize {
        self.order_2m * self.n_components()
    }

    /// Unit tangent of the side ray gamma_{j sigma}.
    pub fn tangent(&self, component: usize, side: Side) -> (f64, f64) {
        let t = side.sign() * self.half_angles[component];
        (t.cos(), t.sin())
    }

    /// Angle of the evaluation point of a term on a given row's side.
    pub fn shifted_angle(&self, row: &BoundaryRow, term: &NonlocalTerm) -> f64 {
        row.side.sign() * self.half_angles[row.component] + term.rotation
    }

    pub fn validate(&self) -> ValidationReport {
        let geometry = validate_geometry(self);
        let ellipticity: Vec<EllipticityCheck> = self
            .interior_ops
            .iter()
            .map(check_proper_ellipticity)
            .collect();
        let lopatinsky = if ellipticity.iter().all(|e| e.passed) {
            check_lopatinsky(self)
        } else {
            Vec::new()
        };
        ValidationReport {
            geometry,
            ellipticity,
            lopatinsky,
        }
    }
}

/// One violated geometry constraint: the shifted evaluation point of a
/// nonlocal term must lie strictly inside the target angle.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryViolation {
    pub component: usize,
    pub sigma: usize,
    pub mu: usize,
    pub term: usize,
    pub shifted_angle: f64,
    pub target_half_angle: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityCheck {
    pub passed: bool,
    pub degree_drop: bool,
    pub real_roots: Vec<f64>,
    pub upper_count: usize,
    pub lower_count: usize,
    pub roots: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LopatinskyCheck {
    pub component: usize,
    pub sigma: usize,
    pub passed: bool,
    pub rank: usize,
    pub expected_rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub geometry: Vec<GeometryViolation>,
    pub ellipticity: Vec<EllipticityCheck>,
    pub lopatinsky: Vec<LopatinskyCheck>,
}

impl ValidationReport {
    pub fn geometry_ok(&self) -> bool {
        self.geometry.is_empty()
    }

    pub fn ellipticity_ok(&self) -> bool {
        self.ellipticity.iter().all(|e| e.passed)
    }

    pub fn lopatinsky_ok(&self) -> bool {
        !self.lopatinsky.is_empty() && self.lopatinsky.iter().all(|l| l.passed)
    }

    /// True when the fundamental-system path is available (no degree drop).
    pub fn fundamental_ok(&self) -> bool {
        self.ellipticity.iter().all(|e| !e.degree_drop)
    }

    pub fn passed(&self) -> bool {
        self.geometry_ok() && self.ellipticity_ok() && self.lopatinsky_ok()
    }

    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        lines.push(format!(
            "geometry: {}",
            if self.geometry_ok() { "ok".into() } else { format!("{} violations", self.geometry.len()) }
        ));
        for (j, e) in self.ellipticity.iter().enumerate() {
            lines.push(format!(
                "ellipticity[{}]: {}{}{}",
                j + 1,
                if e.passed { "ok" } else { "FAIL" },
                if e.degree_drop { " (degree drop)" } else { "" },
                if e.real_roots.is_empty() {
                    String::new()
                } else {
                    format!(" real roots {:?}", e.real_roots)
                }
            ));
        }
        for l in &self.lopatinsky {
            lines.push(format!(
                "complementing[{},{}]: {} (rank {}/{})",
                l.component + 1,
                l.sigma,
                if l.passed { "ok" } else { "FAIL" },
                l.rank,
                l.expected_rank
            ));
        }
        lines.join("\n")
    }
}

/// Strictness margin on the shifted-point inclusion. The inequality is
/// strict in the model; near-equality within this margin is rejected.
pub const GEOMETRY_MARGIN: f64 = 1e-12;

/// Checks that every nonlocal term evaluates strictly inside the target
/// angle: |(-1)^sigma omega_j + rotation| < omega_k.
pub fn validate_geometry(p: &ModelProblem) -> Vec<GeometryViolation> {
    let mut out = Vec::new();
    for row in &p.rows {
        for (ti, term) in row.terms.iter().enumerate() {
            if ti == 0 {
                continue;
            }
            let theta = p.shifted_angle(row, term);
            let limit = p.half_angles[term.target];
            if !(theta.abs() < limit - GEOMETRY_MARGIN) {
                out.push(GeometryViolation {
                    component: row.component,
                    sigma: row.side.sigma(),
                    mu: row.mu,
                    term: ti,
                    shifted_angle: theta,
                    target_half_angle: limit,
                });
            }
        }
    }
    out
}

/// Proper ellipticity of a single interior operator: the symbol P(1, z)
/// must have no real roots and exactly m roots in each open half-plane.
/// A vanishing leading coefficient (pure D2 power) is a degree drop: the
/// missing roots sit at infinity and the closed-form solution basis is not
/// available in these coordinates.
pub fn check_proper_ellipticity(op: &HomogeneousOperator) -> EllipticityCheck {
    let symbol = op.symbol_in_z();
    let scale = symbol.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let degree_drop = symbol[op.order].norm() <= 1e-14 * scale;
    let trimmed = poly_trim(&symbol);
    let roots = poly_roots(&trimmed);
    let clusters = cluster_roots(&roots, &trimmed, 1e-8);
    let mut real_roots = Vec::new();
    let mut upper = 0usize;
    let mut lower = 0usize;
    for rc in &clusters {
        if rc.z.im.abs() <= 1e-8 * (1.0 + rc.z.norm()) {
            real_roots.push(rc.z.re);
        } else if rc.z.im > 0.0 {
            upper += rc.mult;
        } else {
            lower += rc.mult;
        }
    }
    let m = op.order / 2;
    let passed = !degree_drop && real_roots.is_empty() && upper == m && lower == m;
    EllipticityCheck {
        passed,
        degree_drop,
        real_roots,
        upper_count: upper,
        lower_count: lower,
        roots: clusters.iter().map(|rc| (rc.z.re, rc.z.im, rc.mult)).collect(),
    }
}

/// Substitute xi = xi_t * tau + eta * nu into a homogeneous operator and
/// collect the result as a polynomial in eta (coefficients low to high).
fn symbol_along(op: &HomogeneousOperator, tau: (f64, f64), nu: (f64, f64), xi_t: f64) -> Vec<C64> {
    let mut out = vec![c(0.0, 0.0); op.order + 1];
    for (i, &a) in op.coeffs.iter().enumerate() {
        if a.norm() == 0.0 {
            continue;
        }
        let p = op.order - i; // power of the first symbol component
        let q = i;
        // (xi_t tau1 + eta nu1)^p convolved with (xi_t tau2 + eta nu2)^q
        let f1 = binom_poly(xi_t * tau.0, nu.0, p);
        let f2 = binom_poly(xi_t * tau.1, nu.1, q);
        for (u, &x) in f1.iter().enumerate() {
            for (v, &y) in f2.iter().enumerate() {
                out[u + v] += a * x * y;
            }
        }
    }
    out
}

fn binom_poly(a: f64, b: f64, p: usize) -> Vec<C64> {
    let mut out = vec![c(0.0, 0.0); p + 1];
    let mut binom = 1.0;
    for i in 0..=p {
        out[i] = c(a.powi((p - i) as i32) * b.powi(i as i32) * binom, 0.0);
        binom = binom * (p - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Remainder of `num` modulo the monic polynomial `den`.
fn poly_rem(num: &[C64], den: &[C64]) -> Vec<C64> {
    let mut r: Vec<C64> = num.to_vec();
    let dn = den.len() - 1;
    debug_assert!((den[dn] - c(1.0, 0.0)).norm() < 1e-12);
    while r.len() > dn {
        let k = r.len() - 1;
        let factor = r[k];
        for i in 0..dn {
            let idx = k - dn + i;
            r[idx] -= factor * den[i];
        }
        r.pop();
    }
    while r.len() < dn {
        r.push(c(0.0, 0.0));
    }
    r
}

/// Classical algebraic complementing check on each side, using only the
/// local terms of the rows on that side. The boundary symbols, reduced
/// modulo the factor of the interior symbol with roots in the decaying
/// half-plane, must be linearly independent; checked for both tangential
/// frequencies.
pub fn check_lopatinsky(p: &ModelProblem) -> Vec<LopatinskyCheck> {
    let m = p.m();
    let mut out = Vec::new();
    for j in 0..p.n_components() {
        for side in [Side::Minus, Side::Plus] {
            let tau = p.tangent(j, side);
            // Inward normal: rotate tau towards the interior of the angle.
            let nu = match side {
                Side::Minus => (-tau.1, tau.0),
                Side::Plus => (tau.1, -tau.0),
            };
            let mut passed = true;
            let mut min_rank = m;
            for xi_t in [1.0f64, -1.0f64] {
                let interior = symbol_along(&p.interior_ops[j], tau, nu, xi_t);
                let trimmed = poly_trim(&interior);
                if trimmed.len() != p.order_2m + 1 {
                    passed = false;
                    min_rank = 0;
                    continue;
                }
                let roots = poly_roots(&trimmed);
                let upper: Vec<C64> = roots.iter().cloned().filter(|z| z.im > 0.0).collect();
                if upper.len() != m {
                    passed = false;
                    min_rank = 0;
                    continue;
                }
                // Monic plus-factor.
                let mut plus = vec![c(1.0, 0.0)];
                for z in &upper {
                    let mut next = vec![c(0.0, 0.0); plus.len() + 1];
                    for (i, &a) in plus.iter().enumerate() {
                        next[i + 1] += a;
                        next[i] -= a * z;
                    }
                    plus = next;
                }
                let rows_here: Vec<&BoundaryRow> = p
                    .rows
                    .iter()
                    .filter(|r| r.component == j && r.side == side)
                    .collect();
                // each remainder row is normalized by the magnitude of its
                // boundary symbol, so vanishing remainders read as rank loss
                let mut mat = DMatrix::<C64>::zeros(rows_here.len(), m);
                for (ri, row) in rows_here.iter().enumerate() {
                    let b = symbol_along(&row.terms[0].op, tau, nu, xi_t);
                    let scale = b.iter().map(|x| x.norm()).fold(1e-300, f64::max);
                    let rem = poly_rem(&b, &plus);
                    for k in 0..m {
                        mat[(ri, k)] = rem[k] / scale;
                    }
                }
                let svd = mat.svd(false, false);
                let rank = svd.singular_values.iter().filter(|&&s| s > 1e-8).count();
                if rank < m {
                    passed = false;
                }
                min_rank = min_rank.min(rank);
            }
            out.push(LopatinskyCheck {
                component: j,
                sigma: side.sigma(),
                passed,
                rank: min_rank,
                expected_rank: m,
            });
        }
    }
    out
}

/// Directional derivative d/dtau as an operator in D = -i grad:
/// d/dtau = i (tau . D).
pub fn tangential_derivative_op(tau: (f64, f64)) -> HomogeneousOperator {
    HomogeneousOperator::directional(I * c(tau.0, 0.0), I * c(tau.1, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn dirichlet_laplacian(half_angle: f64, ell: usize) -> ModelProblem {
        let rows = vec![
            BoundaryRow {
                component: 0,
                side: Side::Minus,
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
                side: Side::Plus,
                mu: 1,
                order: 0,
                terms: vec![NonlocalTerm {
                    target: 0,
                    rotation: 0.0,
                    homothety: 1.0,
                    op: HomogeneousOperator::identity(),
                }],
            },
        ];
        ModelProblem::new(
            vec![half_angle],
            2,
            vec![HomogeneousOperator::laplacian()],
            rows,
            ell,
        )
        .unwrap()
    }

    #[test]
    fn geometry_inside_passes() {
        let mut p = dirichlet_laplacian(FRAC_PI_2, 1);
        p.rows[0].terms.push(NonlocalTerm {
            target: 0,
            rotation: FRAC_PI_2,
            homothety: 1.0,
            op: HomogeneousOperator::identity().scale(c(0.5, 0.0)),
        });
        // shifted point: -pi/2 + pi/2 = 0, strictly inside
        assert!(validate_geometry(&p).is_empty());
    }

    #[test]
    fn geometry_boundary_case_fails() {
        let mut p = dirichlet_laplacian(FRAC_PI_2, 1);
        p.rows[0].terms.push(NonlocalTerm {
            target: 0,
            rotation: PI,
            homothety: 1.0,
            op: HomogeneousOperator::identity().scale(c(0.5, 0.0)),
        });
        // shifted point: -pi/2 + pi = pi/2, on the boundary: strictness fails
        let v = validate_geometry(&p);
        assert_eq!(v.len(), 1);
        assert!((v[0].shifted_angle - FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn geometry_local_only_vacuous() {
        let p = dirichlet_laplacian(1.0, 1);
        assert!(validate_geometry(&p).is_empty());
    }

    #[test]
    fn laplacian_properly_elliptic() {
        let e = check_proper_ellipticity(&HomogeneousOperator::laplacian());
        assert!(e.passed);
        assert_eq!(e.roots.len(), 2);
        assert!((e.roots[0].1 + 1.0).abs() < 1e-10);
        assert!((e.roots[1].1 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hyperbolic_fails() {
        // D1^2 - D2^2: symbol 1 - z^2, real roots +-1
        let op = HomogeneousOperator::new(2, vec![c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]).unwrap();
        let e = check_proper_ellipticity(&op);
        assert!(!e.passed);
        assert_eq!(e.real_roots.len(), 2);
    }

    #[test]
    fn bilaplacian_double_roots() {
        let e = check_proper_ellipticity(&HomogeneousOperator::bilaplacian());
        assert!(e.passed);
        assert_eq!(e.roots.len(), 2);
        assert!(e.roots.iter().all(|r| r.2 == 2));
    }

    #[test]
    fn degree_drop_detected() {
        // D1^2 alone: symbol = 1, constant in z
        let op = HomogeneousOperator::new(2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let e = check_proper_ellipticity(&op);
        assert!(e.degree_drop);
        assert!(!e.passed);
    }

    #[test]
    fn real_second_order_elliptic_always_passes() {
        // a D1^2 + b D1 D2 + c D2^2 with b^2 < 4ac is elliptic
        let mut rng = crate::numeric::SplitMix64(7);
        for _ in 0..50 {
            let a = 0.2 + rng.next_f64().abs() * 3.0;
            let cc = 0.2 + rng.next_f64().abs() * 3.0;
            let b = rng.next_f64() * 2.0 * (a * cc).sqrt() * 0.99;
            let op = HomogeneousOperator::new(2, vec![c(a, 0.0), c(b, 0.0), c(cc, 0.0)]).unwrap();
            assert!(check_proper_ellipticity(&op).passed, "a={a} b={b} c={cc}");
        }
    }

    #[test]
    fn dirichlet_satisfies_complementing() {
        let p = dirichlet_laplacian(FRAC_PI_2, 1);
        let checks = check_lopatinsky(&p);
        assert!(checks.iter().all(|c| c.passed));
    }

    #[test]
    fn cauchy_riemann_row_fails_complementing() {
        // Boundary operator proportional to the complex derivative along the
        // decaying characteristic: its symbol vanishes modulo the plus factor
        // on one of the two tangential frequencies.
        let mut p = dirichlet_laplacian(FRAC_PI_2, 1);
        let tau = p.tangent(0, Side::Minus);
        let nu = (-tau.1, tau.0);
        let op = HomogeneousOperator::directional(
            c(tau.0, 0.0) + I * c(nu.0, 0.0),
            c(tau.1, 0.0) + I * c(nu.1, 0.0),
        );
        p.rows[0].order = 1;
        p.rows[0].terms[0].op = op;
        let checks = check_lopatinsky(&p);
        let failed = checks.iter().find(|c| c.sigma == 1).unwrap();
        assert!(!failed.passed);
        assert!(checks.iter().find(|c| c.sigma == 2).unwrap().passed);
    }

    #[test]
    fn clamped_bilaplacian_passes_complementing() {
        let normal_minus = {
            let w: f64 = 1.0;
            (-(w.sin()), -(w.cos()))
        };
        let normal_plus = {
            let w: f64 = 1.0;
            (-(w.sin()), w.cos())
        };
        let mk_rows = |nm: (f64, f64), np: (f64, f64)| {
            vec![
                BoundaryRow {
                    component: 0,
                    side: Side::Minus,
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
                    side: Side::Minus,
                    mu: 2,
                    order: 1,
                    terms: vec![NonlocalTerm {
                        target: 0,
                        rotation: 0.0,
                        homothety: 1.0,
                        op: HomogeneousOperator::directional(
                            I * c(nm.0, 0.0),
                            I * c(nm.1, 0.0),
                        ),
                    }],
                },
                BoundaryRow {
                    component: 0,
                    side: Side::Plus,
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
                    side: Side::Plus,
                    mu: 2,
                    order: 1,
                    terms: vec![NonlocalTerm {
                        target: 0,
                        rotation: 0.0,
                        homothety: 1.0,
                        op: HomogeneousOperator::directional(
                            I * c(np.0, 0.0),
                            I * c(np.1, 0.0),
                        ),
                    }],
                },
            ]
        };
        let p = ModelProblem::new(
            vec![1.0],
            4,
            vec![HomogeneousOperator::bilaplacian()],
            mk_rows(normal_minus, normal_plus),
            2,
        )
        .unwrap();
        let checks = check_lopatinsky(&p);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn relabeling_invariance_of_geometry() {
        // two components with a cross term; swapping labels (and rows) keeps
        // the validation verdict
        let rows = |a: usize, b: usize| {
            let mut v = Vec::new();
            for (jj, side) in [(a, Side::Minus), (a, Side::Plus), (b, Side::Minus), (b, Side::Plus)] {
                let mut terms = vec![NonlocalTerm {
                    target: jj,
                    rotation: 0.0,
                    homothety: 1.0,
                    op: HomogeneousOperator::identity(),
                }];
                if side == Side::Minus {
                    terms.push(NonlocalTerm {
                        target: if jj == a { b } else { a },
                        rotation: FRAC_PI_2,
                        homothety: 1.0,
                        op: HomogeneousOperator::identity().scale(c(0.3, 0.0)),
                    });
                }
                v.push(BoundaryRow {
                    component: jj,
                    side,
                    mu: 1,
                    order: 0,
                    terms,
                });
            }
            v
        };
        let p1 = ModelProblem::new(
            vec![FRAC_PI_2, FRAC_PI_2 + 0.3],
            2,
            vec![HomogeneousOperator::laplacian(), HomogeneousOperator::laplacian()],
            rows(0, 1),
            1,
        )
        .unwrap();
        let p2 = ModelProblem::new(
            vec![FRAC_PI_2 + 0.3, FRAC_PI_2],
            2,
            vec![HomogeneousOperator::laplacian(), HomogeneousOperator::laplacian()],
            rows(1, 0),
            1,
        )
        .unwrap();
        assert_eq!(validate_geometry(&p1).is_empty(), validate_geometry(&p2).is_empty());
    }
}
