//! Assembly of the operator pencil in two independent discretizations: the
//! boundary matrix over the closed-form fundamental basis with a
//! Wronskian-normalized determinant, and a Chebyshev collocation matrix used
//! for kernels, adjoint kernels and spurious-zero filtering.

use crate::fundamental::{char_roots, BasisEvaluator, BasisFunction, CharRoots};
use crate::model::{BoundaryRow, Error, ModelProblem, Result, RowIndex};
use crate::numeric::{
    c, chebyshev_lobatto, clenshaw_curtis_weights, equilibrate_rows, fornberg_weights,
    lstsq_min_norm, null_space, C64, I,
};
use crate::polar::{to_polar, PolarOperator};
use nalgebra::{DMatrix, DVector};

/// Value of an analytic function in log form: f = exp(log_abs + i arg).
#[derive(Debug, Clone, Copy)]
pub struct LogVal {
    pub log_abs: f64,
    pub arg: f64,
}

impl LogVal {
    pub fn to_c64(self) -> C64 {
        let clamped = self.log_abs.clamp(-700.0, 700.0);
        (c(clamped, 0.0) + I * c(self.arg, 0.0)).exp()
    }
}

/// Pencil over the closed-form fundamental basis.
pub struct Pencil {
    pub problem: ModelProblem,
    pub roots: CharRoots,
    pub basis: Vec<BasisFunction>,
    evaluator: BasisEvaluator,
    row_polars: Vec<Vec<PolarOperator>>,
}

impl Pencil {
    pub fn new(problem: &ModelProblem) -> Result<Self> {
        let roots = char_roots(problem)?;
        let mut basis = Vec::new();
        for (j, comp_roots) in roots.per_component.iter().enumerate() {
            for (t, root) in comp_roots.iter().enumerate() {
                for level in 0..root.mult {
                    basis.push(BasisFunction { component: j, root: t, level });
                }
            }
        }
        if basis.len() != problem.pencil_dim() {
            return Err(Error::Numerical("basis does not span the solution space".into()));
        }
        let p_max = roots
            .per_component
            .iter()
            .flat_map(|rs| rs.iter().map(|r| r.mult - 1))
            .max()
            .unwrap_or(0);
        let evaluator = BasisEvaluator::new(p_max, problem.order_2m);
        let row_polars = problem
            .rows
            .iter()
            .map(|row| row.terms.iter().map(|t| to_polar(&t.op)).collect())
            .collect();
        Ok(Pencil {
            problem: problem.clone(),
            roots,
            basis,
            evaluator,
            row_polars,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn basis_derivs(
        &self,
        b: &BasisFunction,
        lambda: C64,
        omega: f64,
        up_to: usize,
    ) -> (Vec<C64>, Vec<C64>) {
        let z = self.roots.per_component[b.component][b.root].z;
        let mut vals = Vec::with_capacity(up_to + 1);
        let mut dvals = Vec::with_capacity(up_to + 1);
        for q in 0..=up_to {
            let (v, dv) = self.evaluator.eval_full(z, b.level, lambda, omega, q);
            vals.push(v);
            dvals.push(dv);
        }
        (vals, dvals)
    }

    /// Entry of the boundary matrix: the row functional applied to one basis
    /// function, with the homothety power chi^{i lambda - m_row} on each
    /// nonlocal term.
    pub fn boundary_entry(&self, row_idx: usize, lambda: C64, b: &BasisFunction) -> C64 {
        self.boundary_entry_full(row_idx, lambda, b).0
    }

    fn boundary_entry_full(&self, row_idx: usize, lambda: C64, b: &BasisFunction) -> (C64, C64) {
        let row = &self.problem.rows[row_idx];
        let mut val = c(0.0, 0.0);
        let mut dval = c(0.0, 0.0);
        for (ti, term) in row.terms.iter().enumerate() {
            if term.target != b.component {
                continue;
            }
            let theta = self.problem.shifted_angle(row, term);
            let (w, dw) = self.basis_derivs(b, lambda, theta, row.order);
            let polar = &self.row_polars[row_idx][ti];
            let mut s = c(0.0, 0.0);
            let mut ds = c(0.0, 0.0);
            for n in 0..=row.order {
                let a = polar.coeffs[n].eval(theta, lambda);
                let da = polar.coeffs[n].eval_dlambda(theta, lambda, 1);
                s += a * w[n];
                ds += da * w[n] + a * dw[n];
            }
            let lnchi = term.homothety.ln();
            let chifac = ((I * lambda - c(row.order as f64, 0.0)) * lnchi).exp();
            val += chifac * s;
            dval += chifac * (s * I * lnchi + ds);
        }
        (val, dval)
    }

    /// Boundary matrix and its lambda-derivative, rows in canonical order,
    /// columns grouped by component.
    pub fn matrix_with_deriv(&self, lambda: C64) -> (DMatrix<C64>, DMatrix<C64>) {
        let n = self.dim();
        let mut m = DMatrix::<C64>::zeros(n, n);
        let mut dm = DMatrix::<C64>::zeros(n, n);
        for (i, _row) in self.problem.rows.iter().enumerate() {
            for (k, b) in self.basis.iter().enumerate() {
                let (v, dv) = self.boundary_entry_full(i, lambda, b);
                m[(i, k)] = v;
                dm[(i, k)] = dv;
            }
        }
        (m, dm)
    }

    pub fn matrix(&self, lambda: C64) -> DMatrix<C64> {
        self.matrix_with_deriv(lambda).0
    }

    /// Wronskian matrix of one component's basis at omega = 0 and its
    /// lambda-derivative.
    pub fn wronskian_with_deriv(&self, lambda: C64, comp: usize) -> (DMatrix<C64>, DMatrix<C64>) {
        let funcs: Vec<&BasisFunction> =
            self.basis.iter().filter(|b| b.component == comp).collect();
        let k = funcs.len();
        let mut m = DMatrix::<C64>::zeros(k, k);
        let mut dm = DMatrix::<C64>::zeros(k, k);
        for (col, b) in funcs.iter().enumerate() {
            let (vals, dvals) = self.basis_derivs(b, lambda, 0.0, k - 1);
            for q in 0..k {
                m[(q, col)] = vals[q];
                dm[(q, col)] = dvals[q];
            }
        }
        (m, dm)
    }

    /// Normalized characteristic determinant in log form:
    /// det M(lambda) / prod_j W_j(lambda).
    pub fn char_det_log(&self, lambda: C64) -> LogVal {
        let m = self.matrix(lambda);
        let mut lv = log_det(&m);
        for j in 0..self.problem.n_components() {
            let (w, _) = self.wronskian_with_deriv(lambda, j);
            let wv = log_det(&w);
            lv.log_abs -= wv.log_abs;
            lv.arg -= wv.arg;
        }
        lv
    }

    pub fn char_det(&self, lambda: C64) -> C64 {
        self.char_det_log(lambda).to_c64()
    }

    /// Exact logarithmic derivative of the normalized determinant:
    /// tr(M^-1 M') - sum_j tr(W_j^-1 W_j').
    pub fn char_det_logderiv(&self, lambda: C64) -> C64 {
        let (m, dm) = self.matrix_with_deriv(lambda);
        let lu = m.lu();
        let mut acc = c(0.0, 0.0);
        if let Some(x) = lu.solve(&dm) {
            for i in 0..x.nrows() {
                acc += x[(i, i)];
            }
        } else {
            return c(f64::NAN, 0.0);
        }
        for j in 0..self.problem.n_components() {
            let (w, dw) = self.wronskian_with_deriv(lambda, j);
            let lu = w.lu();
            if let Some(x) = lu.solve(&dw) {
                for i in 0..x.nrows() {
                    acc -= x[(i, i)];
                }
            } else {
                return c(f64::NAN, 0.0);
            }
        }
        acc
    }

    /// Smallest relative Wronskian singular value over the components; small
    /// values flag basis degeneration at this lambda.
    pub fn basis_health(&self, lambda: C64) -> f64 {
        let mut worst = f64::MAX;
        for j in 0..self.problem.n_components() {
            let (w, _) = self.wronskian_with_deriv(lambda, j);
            let svd = w.svd(false, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
            if smax > 0.0 {
                worst = worst.min(smin / smax);
            } else {
                worst = 0.0;
            }
        }
        worst
    }
}

fn log_det(m: &DMatrix<C64>) -> LogVal {
    let n = m.nrows();
    let lu = m.clone().lu();
    let u = lu.u();
    let mut log_abs = 0.0;
    let mut arg = 0.0;
    for i in 0..n {
        let d = u[(i, i)];
        log_abs += d.norm().ln();
        arg += d.arg();
    }
    // permutation parity
    let parity: f64 = if lu.p().len().is_multiple_of(2) { 0.0 } else { std::f64::consts::PI };
    LogVal { log_abs, arg: arg + parity }
}

/// Chebyshev collocation discretization: values of each angular profile at
/// Lobatto nodes, the interior equation enforced at inner nodes, boundary
/// functionals appended. Square by construction.
pub struct Collocation {
    pub problem: ModelProblem,
    pub m_c: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    dmats: Vec<Vec<DMatrix<f64>>>,
    interior_polar: Vec<PolarOperator>,
    row_polars: Vec<Vec<PolarOperator>>,
    interp_rows: Vec<Vec<Vec<Vec<f64>>>>,
    /// (component, node index) for each interior equation row, in order.
    pub interior_layout: Vec<(usize, usize)>,
    comp_offsets: Vec<usize>,
}

impl Collocation {
    pub fn new(problem: &ModelProblem, m_c: usize) -> Result<Self> {
        let two_m = problem.order_2m;
        if m_c < 2 * two_m + 4 {
            return Err(Error::InvalidProblem(format!(
                "collocation size {m_c} too small, need at least {}",
                2 * two_m + 4
            )));
        }
        let n = problem.n_components();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut dmats = Vec::with_capacity(n);
        for j in 0..n {
            let w = problem.half_angles[j];
            let xs = chebyshev_lobatto(m_c, -w, w);
            let qw = clenshaw_curtis_weights(m_c, -w, w);
            let mut per_order: Vec<DMatrix<f64>> = Vec::with_capacity(two_m + 1);
            for _ in 0..=two_m {
                per_order.push(DMatrix::zeros(m_c, m_c));
            }
            for i in 0..m_c {
                let fw = fornberg_weights(&xs, xs[i], two_m);
                for q in 0..=two_m {
                    for k in 0..m_c {
                        per_order[q][(i, k)] = fw[q][k];
                    }
                }
            }
            nodes.push(xs);
            weights.push(qw);
            dmats.push(per_order);
        }
        let interior_polar = problem.interior_ops.iter().map(to_polar).collect();
        let row_polars: Vec<Vec<PolarOperator>> = problem
            .rows
            .iter()
            .map(|row| row.terms.iter().map(|t| to_polar(&t.op)).collect())
            .collect();
        let mut interp_rows = Vec::with_capacity(problem.rows.len());
        for row in &problem.rows {
            let mut per_term = Vec::with_capacity(row.terms.len());
            for term in &row.terms {
                let theta = problem.shifted_angle(row, term);
                let fw = fornberg_weights(&nodes[term.target], theta, row.order);
                per_term.push(fw);
            }
            interp_rows.push(per_term);
        }
        let mut interior_layout = Vec::new();
        let m = two_m / 2;
        for j in 0..n {
            for i in m..(m_c - m) {
                interior_layout.push((j, i));
            }
        }
        let comp_offsets = (0..n).map(|j| j * m_c).collect();
        Ok(Collocation {
            problem: problem.clone(),
            m_c,
            nodes,
            weights,
            dmats,
            interior_polar,
            row_polars,
            interp_rows,
            interior_layout,
            comp_offsets,
        })
    }

    pub fn size(&self) -> usize {
        self.problem.n_components() * self.m_c
    }

    pub fn n_interior_rows(&self) -> usize {
        self.interior_layout.len()
    }

    pub fn comp_offset(&self, j: usize) -> usize {
        self.comp_offsets[j]
    }

    /// Assembles d^q/dlambda^q of the collocation matrix, q <= 2.
    pub fn matrix_dlambda(&self, lambda: C64, q: u32) -> DMatrix<C64> {
        assert!(q <= 2);
        let size = self.size();
        let mut out = DMatrix::<C64>::zeros(size, size);
        let two_m = self.problem.order_2m;
        // interior equations
        for (ri, &(j, i)) in self.interior_layout.iter().enumerate() {
            let omega = self.nodes[j][i];
            let off = self.comp_offsets[j];
            for nn in 0..=two_m {
                let a = self.interior_polar[j].coeffs[nn].eval_dlambda(omega, lambda, q);
                if a.norm() == 0.0 {
                    continue;
                }
                for k in 0..self.m_c {
                    let d = self.dmats[j][nn][(i, k)];
                    if d != 0.0 {
                        out[(ri, off + k)] += a * d;
                    }
                }
            }
        }
        // boundary functionals
        let base = self.interior_layout.len();
        for (bi, row) in self.problem.rows.iter().enumerate() {
            let ri = base + bi;
            for (ti, term) in row.terms.iter().enumerate() {
                let theta = self.problem.shifted_angle(row, term);
                let off = self.comp_offsets[term.target];
                let lnchi = term.homothety.ln();
                let chifac = ((I * lambda - c(row.order as f64, 0.0)) * lnchi).exp();
                let il = I * c(lnchi, 0.0);
                for nn in 0..=row.order {
                    // product rule on chi^{i lambda - m} * a_n(theta, lambda)
                    let mut coef = c(0.0, 0.0);
                    for t in 0..=q {
                        let chi_part = match q - t {
                            0 => c(1.0, 0.0),
                            1 => il,
                            2 => il * il,
                            _ => unreachable!(),
                        };
                        let binom = if q == 2 && t == 1 { 2.0 } else { 1.0 };
                        coef += chi_part
                            * self.row_polars[bi][ti].coeffs[nn].eval_dlambda(theta, lambda, t)
                            * binom;
                    }
                    coef *= chifac;
                    if coef.norm() == 0.0 {
                        continue;
                    }
                    let wrow = &self.interp_rows[bi][ti][nn];
                    for k in 0..self.m_c {
                        if wrow[k] != 0.0 {
                            out[(ri, off + k)] += coef * wrow[k];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn matrix(&self, lambda: C64) -> DMatrix<C64> {
        self.matrix_dlambda(lambda, 0)
    }

    /// Relative smallest singular value of the row-equilibrated matrix.
    pub fn rank_ratio(&self, lambda: C64) -> f64 {
        let m = self.matrix(lambda);
        let (eq, _) = equilibrate_rows(&m);
        let svd = eq.svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
        if smax == 0.0 {
            0.0
        } else {
            smin / smax
        }
    }

    /// Number of singular values below the relative threshold, and the
    /// corresponding kernel basis, from the row-equilibrated matrix.
    pub fn kernel(&self, lambda: C64, rel_tol: f64) -> Vec<DVector<C64>> {
        let m = self.matrix(lambda);
        let (eq, _) = equilibrate_rows(&m);
        let (basis, _, _) = null_space(&eq, rel_tol);
        basis
    }

    /// Splits a solution vector into per-component node values.
    pub fn split(&self, v: &DVector<C64>) -> Vec<Vec<C64>> {
        (0..self.problem.n_components())
            .map(|j| {
                (0..self.m_c)
                    .map(|i| v[self.comp_offsets[j] + i])
                    .collect()
            })
            .collect()
    }

    /// Barycentric evaluation of the q-th derivative of a profile given by
    /// node values of one component.
    pub fn eval_profile(&self, comp: usize, values: &[C64], omega: f64, q: usize) -> C64 {
        let fw = fornberg_weights(&self.nodes[comp], omega, q);
        values
            .iter()
            .zip(fw[q].iter())
            .map(|(&v, &w)| v * w)
            .sum()
    }

    /// Weighted L2-type norm of a profile vector over all components.
    pub fn profile_norm(&self, profile: &[Vec<C64>]) -> f64 {
        let mut acc = 0.0;
        for (j, values) in profile.iter().enumerate() {
            for (i, v) in values.iter().enumerate() {
                acc += self.weights[j][i] * v.norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Left kernel directions of the raw collocation matrix: exactly `dim`
    /// smallest left singular vectors, guarded by a spectral-gap check so a
    /// dimension disagreement with the primal kernel is flagged instead of
    /// silently absorbed.
    pub fn left_kernel(&self, lambda: C64, dim: usize) -> Result<Vec<DVector<C64>>> {
        let m = self.matrix(lambda);
        let svd = m.svd(true, true);
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| {
            svd.singular_values[a]
                .partial_cmp(&svd.singular_values[b])
                .unwrap()
        });
        if dim == 0 || dim >= idx.len() {
            return Err(Error::Numerical(format!(
                "left kernel dimension {dim} out of range"
            )));
        }
        let s_in = svd.singular_values[idx[dim - 1]];
        let s_out = svd.singular_values[idx[dim]];
        if !(s_out > 1e3 * s_in.max(1e-300)) {
            return Err(Error::Numerical(format!(
                "adjoint kernel dimension disagrees with primal kernel {dim}: \
                 singular values {s_in:.3e} | {s_out:.3e} show no gap"
            )));
        }
        let u = svd.u.as_ref().expect("svd u");
        Ok(idx
            .iter()
            .take(dim)
            .map(|&i| u.column(i).into_owned())
            .collect())
    }

    /// Dual vectors of the pencil at an eigenvalue: the left kernel of the
    /// collocation matrix reweighted so the discrete pairing matches the
    /// L2 x C^{2mN} product. `expected_dim` comes from the primal rank test.
    pub fn adjoint_kernel(
        &self,
        lambda: C64,
        _rel_tol: f64,
        expected_dim: usize,
    ) -> Result<Vec<AdjointVector>> {
        let left = self.left_kernel(lambda, expected_dim)?;
        let base = self.interior_layout.len();
        let mut out = Vec::new();
        for u in left {
            let mut interior: Vec<Vec<C64>> =
                vec![Vec::new(); self.problem.n_components()];
            for (ri, &(j, i)) in self.interior_layout.iter().enumerate() {
                // discrete pairing uses quadrature weights on interior rows
                interior[j].push(u[ri] / self.weights[j][i]);
            }
            let boundary: Vec<C64> = (0..self.problem.rows.len())
                .map(|bi| u[base + bi])
                .collect();
            let norm = (u.norm_squared()).sqrt();
            out.push(AdjointVector { interior, boundary, norm });
        }
        Ok(out)
    }

    /// Minimum-norm solve of the collocation system with given boundary data
    /// (interior right-hand side zero). The residual is measured in the
    /// row-equilibrated metric, which weighs every equation equally.
    pub fn solve_boundary(
        &self,
        lambda: C64,
        boundary_values: &[C64],
    ) -> (DVector<C64>, f64) {
        assert_eq!(boundary_values.len(), self.problem.rows.len());
        let m = self.matrix(lambda);
        let (eqm, scales) = equilibrate_rows(&m);
        let base = self.interior_layout.len();
        let mut rhs = DVector::<C64>::zeros(self.size());
        for (bi, &v) in boundary_values.iter().enumerate() {
            rhs[base + bi] = v * scales[base + bi];
        }
        let (x, res) = lstsq_min_norm(&eqm, &rhs, 1e-10);
        let scale = rhs.norm().max(1e-300);
        (x, res / scale)
    }

    /// Index of a boundary row in the canonical ordering.
    pub fn row_position(&self, idx: RowIndex) -> usize {
        self.problem
            .rows
            .iter()
            .position(|r| r.index() == idx)
            .expect("row index")
    }

    pub fn row(&self, bi: usize) -> &BoundaryRow {
        &self.problem.rows[bi]
    }
}

/// Dual vector split into the interior density part and the boundary
/// functional part in the canonical row order.
#[derive(Debug, Clone)]
pub struct AdjointVector {
    pub interior: Vec<Vec<C64>>,
    pub boundary: Vec<C64>,
    pub norm: f64,
}
