//! Shared numerical kernels: polynomial roots, differentiation weights,
//! quadrature rules, dense least squares and null spaces.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;

pub const I: C64 = Complex::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Horner evaluation of a polynomial with coefficients ordered low to high.
pub fn poly_eval(coeffs: &[C64], z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        acc = acc * z + a;
    }
    acc
}

pub fn poly_derivative(coeffs: &[C64]) -> Vec<C64> {
    if coeffs.len() <= 1 {
        return vec![C64::new(0.0, 0.0)];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * k as f64)
        .collect()
}

/// Drops trailing coefficients that are negligible against the largest one.
pub fn poly_trim(coeffs: &[C64]) -> Vec<C64> {
    let scale = coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let mut out: Vec<C64> = coeffs.to_vec();
    while out.len() > 1 {
        if out.last().unwrap().norm() <= 1e-14 * scale {
            out.pop();
        } else {
            break;
        }
    }
    out
}

/// Roots of a complex polynomial via the companion matrix and a complex
/// Schur decomposition. Coefficients are ordered low to high; the leading
/// coefficient must be nonzero after trimming.
pub fn poly_roots(coeffs: &[C64]) -> Vec<C64> {
    let p = poly_trim(coeffs);
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = p[n];
    if n == 1 {
        return vec![-p[0] / lead];
    }
    let mut comp = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        comp[(i, n - 1)] = -p[i] / lead;
    }
    let mut roots: Vec<C64> = match comp.try_schur(1e-13, 20_000) {
        Some(schur) => {
            let (_, t) = schur.unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
        None => aberth_roots(&p),
    };
    roots.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    roots
}

/// Aberth-Ehrlich simultaneous iteration, used when the Schur iteration on
/// the companion matrix fails to converge (clustered eigenvalues).
fn aberth_roots(p: &[C64]) -> Vec<C64> {
    let n = p.len() - 1;
    let d = poly_derivative(p);
    // initial guesses on a circle scaled by the coefficient magnitudes
    let radius = 1.0
        + p[..n]
            .iter()
            .map(|a| (a / p[n]).norm())
            .fold(0.0, f64::max);
    let mut zs: Vec<C64> = (0..n)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            C64::new(radius * 0.7 * ang.cos(), radius * 0.7 * ang.sin())
        })
        .collect();
    for _ in 0..200 {
        let mut done = true;
        let prev = zs.clone();
        for i in 0..n {
            let z = prev[i];
            let f = poly_eval(p, z);
            let df = poly_eval(&d, z);
            if f.norm() == 0.0 {
                continue;
            }
            let newton = f / df;
            let mut sum = C64::new(0.0, 0.0);
            for (j, &w) in prev.iter().enumerate() {
                if j != i {
                    sum += C64::new(1.0, 0.0) / (z - w);
                }
            }
            let denom = C64::new(1.0, 0.0) - newton * sum;
            let step = newton / denom;
            zs[i] = z - step;
            if step.norm() > 1e-14 * (1.0 + zs[i].norm()) {
                done = false;
            }
        }
        if done {
            break;
        }
    }
    zs
}

/// A root cluster: center and multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct RootCluster {
    pub z: C64,
    pub mult: usize,
}

fn newton_univariate(coeffs: &[C64], start: C64) -> C64 {
    let d = poly_derivative(coeffs);
    let mut z = start;
    for _ in 0..60 {
        let f = poly_eval(coeffs, z);
        let g = poly_eval(&d, z);
        if g.norm() == 0.0 {
            break;
        }
        let step = f / g;
        z -= step;
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Clusters numerically split multiple roots. Greedy clustering at the given
/// relative tolerance, then an attempted merge of clusters within 100x of it:
/// a merge is accepted only when the center refined as a root of the
/// (k-1)-st derivative annihilates all lower derivatives, so genuinely close
/// simple roots stay separate.
pub fn cluster_roots(roots: &[C64], coeffs: &[C64], rel_tol: f64) -> Vec<RootCluster> {
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    for &r in roots {
        match clusters
            .iter_mut()
            .find(|(z, _)| (*z - r).norm() <= rel_tol * (1.0 + r.norm()))
        {
            Some((z, m)) => {
                *z = (*z * (*m as f64) + r) / (*m as f64 + 1.0);
                *m += 1;
            }
            None => clusters.push((r, 1)),
        }
    }

    // Derivative tables for the verification below.
    let mut derivs: Vec<Vec<C64>> = vec![poly_trim(coeffs)];
    for _ in 0..coeffs.len() {
        let last = derivs.last().unwrap();
        if last.len() <= 1 {
            break;
        }
        derivs.push(poly_derivative(last));
    }
    let scales: Vec<f64> = derivs
        .iter()
        .map(|d| d.iter().map(|a| a.norm()).fold(1e-300, f64::max))
        .collect();

    let verify = |z: C64, mult: usize| -> bool {
        (0..mult).all(|j| {
            let grow = (1.0 + z.norm()).powi((derivs[j].len() - 1) as i32);
            poly_eval(&derivs[j], z).norm() <= 1e-7 * scales[j] * grow
        })
    };

    let mut merged = true;
    while merged {
        merged = false;
        'outer: for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let (zi, mi) = clusters[i];
                let (zj, mj) = clusters[j];
                if (zi - zj).norm() <= 100.0 * rel_tol * (1.0 + zi.norm()) {
                    let m = mi + mj;
                    let center = (zi * mi as f64 + zj * mj as f64) / m as f64;
                    let refined = if m - 1 < derivs.len() {
                        newton_univariate(&derivs[m - 1], center)
                    } else {
                        center
                    };
                    if verify(refined, m) {
                        clusters[i] = (refined, m);
                        clusters.remove(j);
                        merged = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    // Refine multiple-root centers on the corresponding derivative.
    for (z, m) in clusters.iter_mut() {
        if *m > 1 && *m - 1 < derivs.len() {
            let refined = newton_univariate(&derivs[*m - 1], *z);
            if verify(refined, *m) {
                *z = refined;
            }
        }
    }

    clusters.sort_by(|a, b| {
        a.0.re
            .partial_cmp(&b.0.re)
            .unwrap()
            .then(a.0.im.partial_cmp(&b.0.im).unwrap())
    });
    clusters
        .into_iter()
        .map(|(z, mult)| RootCluster { z, mult })
        .collect()
}

/// Finite-difference weights on arbitrary nodes (Fornberg's recurrence):
/// `weights[q][i]` multiplies the value at `nodes[i]` to approximate the
/// q-th derivative at `x0`, exactly for polynomials up to degree n-1.
pub fn fornberg_weights(nodes: &[f64], x0: f64, max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let m = max_order.min(n - 1);
    let mut c: Vec<Vec<f64>> = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    (0..=m).map(|q| (0..n).map(|i| c[i][q]).collect()).collect()
}

/// Chebyshev-Gauss-Lobatto nodes on [a, b] in increasing order.
pub fn chebyshev_lobatto(n: usize, a: f64, b: f64) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|k| {
            let t = (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            0.5 * (a + b) - 0.5 * (b - a) * t
        })
        .collect()
}

/// Clenshaw-Curtis quadrature weights matching `chebyshev_lobatto(n, a, b)`.
pub fn clenshaw_curtis_weights(n: usize, a: f64, b: f64) -> Vec<f64> {
    assert!(n >= 2);
    let nm1 = n - 1;
    let mut w = vec![0.0; n];
    for k in 0..n {
        let mut s = 1.0;
        for j in 1..=nm1 / 2 {
            let bj = if 2 * j == nm1 { 1.0 } else { 2.0 };
            s -= bj / (4.0 * (j * j) as f64 - 1.0)
                * (2.0 * std::f64::consts::PI * (j * k) as f64 / nm1 as f64).cos();
        }
        let ck = if k == 0 || k == nm1 { 1.0 } else { 2.0 };
        w[k] = ck * s / nm1 as f64;
    }
    // Nodes from chebyshev_lobatto are reversed relative to cos(pi k / nm1);
    // the weights are symmetric, so the order is unchanged.
    let half = 0.5 * (b - a);
    w.iter_mut().for_each(|x| *x *= half);
    w
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Right null-space basis from an SVD with a relative singular-value cutoff.
/// Returns the vectors together with (smin, smax) of the input matrix.
pub fn null_space(m: &DMatrix<C64>, rel_tol: f64) -> (Vec<DVector<C64>>, f64, f64) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= rel_tol * smax {
            basis.push(vt.row(i).adjoint());
        }
    }
    // nalgebra only returns min(nrows, ncols) singular values; for wide
    // matrices the remaining right singular vectors also span the kernel.
    for i in svd.singular_values.len()..m.ncols().min(vt.nrows()) {
        basis.push(vt.row(i).adjoint());
    }
    (basis, smin, smax)
}

/// Left null-space basis (vectors u with u^H M = 0).
pub fn left_null_space(m: &DMatrix<C64>, rel_tol: f64) -> Vec<DVector<C64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let u = svd.u.as_ref().expect("svd u");
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= rel_tol * smax {
            basis.push(u.column(i).into_owned());
        }
    }
    basis
}

pub fn smin_smax(m: &DMatrix<C64>) -> (f64, f64) {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    (smin, smax)
}

/// Minimum-norm least-squares solution via SVD with relative cutoff.
/// Returns the solution and the residual norm ||Ax - b||.
pub fn lstsq_min_norm(
    a: &DMatrix<C64>,
    b: &DVector<C64>,
    rel_tol: f64,
) -> (DVector<C64>, f64) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let k = svd.singular_values.len();
    let mut y = DVector::<C64>::zeros(k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > rel_tol * smax {
            let ui = u.column(i);
            let proj: C64 = ui.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
            y[i] = proj / C64::new(s, 0.0);
        }
    }
    let mut x = DVector::<C64>::zeros(a.ncols());
    for i in 0..k {
        if y[i].norm() != 0.0 {
            let vi = vt.row(i).adjoint();
            x += vi * y[i];
        }
    }
    let res = (a * &x - b).norm();
    (x, res)
}

/// Row-equilibrated copy: every row scaled to unit max-magnitude. Returns the
/// scaled matrix and the scale factors applied.
pub fn equilibrate_rows(m: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>) {
    let mut out = m.clone();
    let mut scales = vec![1.0; m.nrows()];
    for i in 0..m.nrows() {
        let mx = (0..m.ncols()).map(|j| m[(i, j)].norm()).fold(0.0, f64::max);
        if mx > 0.0 {
            let s = 1.0 / mx;
            scales[i] = s;
            for j in 0..m.ncols() {
                out[(i, j)] *= s;
            }
        }
    }
    (out, scales)
}

/// Deterministic pseudo-random stream for tests and contour nudging.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    pub fn next_c64(&mut self) -> C64 {
        let re = self.next_f64();
        let im = self.next_f64();
        C64::new(re, im)
    }
}

/// Bivariate homogeneous polynomial: `coeffs[i]` multiplies y1^(deg-i) y2^i.
#[derive(Debug, Clone, PartialEq)]
pub struct HomoPoly2 {
    pub deg: usize,
    pub coeffs: Vec<C64>,
}

impl HomoPoly2 {
    pub fn zero(deg: usize) -> Self {
        HomoPoly2 {
            deg,
            coeffs: vec![C64::new(0.0, 0.0); deg + 1],
        }
    }

    pub fn monomial(deg: usize, i: usize) -> Self {
        let mut p = Self::zero(deg);
        p.coeffs[i] = C64::new(1.0, 0.0);
        p
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= tol)
    }

    /// D1 = -i d/dy1.
    pub fn d1(&self) -> HomoPoly2 {
        if self.deg == 0 {
            return HomoPoly2::zero(0);
        }
        let mut out = HomoPoly2::zero(self.deg - 1);
        for i in 0..self.deg {
            out.coeffs[i] = -I * self.coeffs[i] * (self.deg - i) as f64;
        }
        out
    }

    /// D2 = -i d/dy2.
    pub fn d2(&self) -> HomoPoly2 {
        if self.deg == 0 {
            return HomoPoly2::zero(0);
        }
        let mut out = HomoPoly2::zero(self.deg - 1);
        for i in 1..=self.deg {
            out.coeffs[i - 1] = -I * self.coeffs[i] * i as f64;
        }
        out
    }

    /// Substitutes y -> G y where G is rotation by `angle` composed with
    /// scaling by `scale`: p(G y) expanded exactly.
    pub fn compose_rot_scale(&self, angle: f64, scale: f64) -> HomoPoly2 {
        // (G y)_1 = s(c y1 - n y2), (G y)_2 = s(n y1 + c y2)
        let (n, cs) = angle.sin_cos();
        let a = c(scale * cs, 0.0);
        let b = c(-scale * n, 0.0);
        let d = c(scale * n, 0.0);
        let e = c(scale * cs, 0.0);
        let mut out = HomoPoly2::zero(self.deg);
        // For each monomial y1^p y2^q: (a y1 + b y2)^p (d y1 + e y2)^q.
        for (i, &coef) in self.coeffs.iter().enumerate() {
            if coef.norm() == 0.0 {
                continue;
            }
            let p = self.deg - i;
            let q = i;
            let f1 = binom_expand(a, b, p);
            let f2 = binom_expand(d, e, q);
            // convolve
            for (u, &x) in f1.iter().enumerate() {
                for (v, &y) in f2.iter().enumerate() {
                    out.coeffs[u + v] += coef * x * y;
                }
            }
        }
        out
    }

    /// Value at the unit direction (cos t, sin t); the value on the ray at
    /// radius r is r^deg times this.
    pub fn eval_dir(&self, t: f64) -> C64 {
        let (s, cs) = t.sin_cos();
        let mut acc = C64::new(0.0, 0.0);
        for (i, &coef) in self.coeffs.iter().enumerate() {
            acc += coef * cs.powi((self.deg - i) as i32) * s.powi(i as i32);
        }
        acc
    }

    pub fn add_scaled(&mut self, other: &HomoPoly2, factor: C64) {
        assert_eq!(self.deg, other.deg);
        for (a, b) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a += factor * b;
        }
    }
}

/// Coefficients of (a y1 + b y2)^p in the basis y1^(p-i) y2^i.
fn binom_expand(a: C64, b: C64, p: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); p + 1];
    let mut binom = 1.0;
    for i in 0..=p {
        out[i] = a.powu((p - i) as u32) * b.powu(i as u32) * binom;
        binom = binom * (p - i) as f64 / (i + 1) as f64;
    }
    out
}
