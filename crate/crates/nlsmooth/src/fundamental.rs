//! Closed-form fundamental systems of the angular ODEs. For each
//! characteristic root z of P(1, z) the function
//! w(omega; lambda) = d^p/dz^p (cos omega + z sin omega)^{i lambda}
//! solves the reduced interior equation; multiplicities are handled through
//! z-derivatives. Evaluation keeps the branch of log(cos omega + z sin omega)
//! continuous in omega with the principal value at omega = 0.

use crate::model::{Error, HomogeneousOperator, ModelProblem, Result};
use crate::numeric::{c, cluster_roots, poly_roots, poly_trim, C64, I};

/// Characteristic roots of a component's interior symbol with multiplicities.
#[derive(Debug, Clone)]
pub struct CharRoots {
    pub per_component: Vec<Vec<Root>>,
}

#[derive(Debug, Clone)]
pub struct Root {
    pub z: C64,
    pub mult: usize,
    pub upper: bool,
}

/// One basis function: component j, root index t, z-derivative level p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisFunction {
    pub component: usize,
    pub root: usize,
    pub level: usize,
}

pub fn char_roots(p: &ModelProblem) -> Result<CharRoots> {
    let mut per_component = Vec::with_capacity(p.n_components());
    for (j, op) in p.interior_ops.iter().enumerate() {
        per_component.push(component_roots(op, j)?);
    }
    Ok(CharRoots { per_component })
}

fn component_roots(op: &HomogeneousOperator, j: usize) -> Result<Vec<Root>> {
    let symbol = op.symbol_in_z();
    let scale = symbol.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if symbol[op.order].norm() <= 1e-14 * scale {
        return Err(Error::Unsupported(format!(
            "component {}: leading symbol coefficient vanishes (degree drop); \
             the closed-form basis is unavailable, use the collocation path",
            j + 1
        )));
    }
    let trimmed = poly_trim(&symbol);
    let roots = poly_roots(&trimmed);
    let clusters = cluster_roots(&roots, &trimmed, 1e-8);
    let mut out = Vec::new();
    for rc in clusters {
        if rc.z.im.abs() <= 1e-8 * (1.0 + rc.z.norm()) {
            return Err(Error::InvalidProblem(format!(
                "component {}: real characteristic root {} (not properly elliptic)",
                j + 1,
                rc.z.re
            )));
        }
        out.push(Root {
            z: rc.z,
            mult: rc.mult,
            upper: rc.z.im > 0.0,
        });
    }
    let total: usize = out.iter().map(|r| r.mult).sum();
    if total != op.order {
        return Err(Error::Numerical(format!(
            "component {}: root multiplicities sum to {total}, expected {}",
            j + 1,
            op.order
        )));
    }
    Ok(out)
}

/// Continuous branch of log(cos omega + z sin omega), fixed to the principal
/// value at omega = 0. Writing g = A e^{i omega} + B e^{-i omega} with
/// A = (1 - iz)/2 and B = (1 + iz)/2, the factor with the larger modulus is
/// pulled out so the remaining logarithm stays in the principal strip for
/// every real omega; |B/A| < 1 exactly when Im z > 0.
pub fn continuous_log_g(z: C64, omega: f64) -> C64 {
    let a = (c(1.0, 0.0) - I * z) * 0.5;
    let b = (c(1.0, 0.0) + I * z) * 0.5;
    if z.im > 0.0 {
        let w = (b / a) * (c(0.0, -2.0 * omega)).exp();
        a.ln() + c(0.0, omega) + (c(1.0, 0.0) + w).ln()
    } else {
        let w = (a / b) * (c(0.0, 2.0 * omega)).exp();
        b.ln() + c(0.0, -omega) + (c(1.0, 0.0) + w).ln()
    }
}

#[derive(Debug, Clone)]
struct Term {
    lam: Vec<C64>,
    n: i32,
    gp: u32,
    sin: u32,
    cos: u32,
}

#[derive(Debug, Clone, Default)]
struct DerivTable {
    terms: Vec<Term>,
}

fn lam_mul_linear(lam: &[C64], n: i32) -> Vec<C64> {
    // multiply by (i lambda - n)
    let mut out = vec![c(0.0, 0.0); lam.len() + 1];
    for (j, &v) in lam.iter().enumerate() {
        out[j + 1] += I * v;
        out[j] += v * c(-(n as f64), 0.0);
    }
    out
}

fn lam_scale(lam: &[C64], s: f64) -> Vec<C64> {
    lam.iter().map(|&v| v * s).collect()
}

fn merge(terms: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::new();
    for t in terms {
        if t.lam.iter().all(|v| v.norm() == 0.0) {
            continue;
        }
        match out
            .iter_mut()
            .find(|u| u.n == t.n && u.gp == t.gp && u.sin == t.sin && u.cos == t.cos)
        {
            Some(u) => {
                if u.lam.len() < t.lam.len() {
                    u.lam.resize(t.lam.len(), c(0.0, 0.0));
                }
                for (j, &v) in t.lam.iter().enumerate() {
                    u.lam[j] += v;
                }
            }
            None => out.push(t),
        }
    }
    out.sort_by_key(|t| (t.n, t.gp, t.sin, t.cos));
    out
}

fn dz(table: &DerivTable) -> DerivTable {
    let mut terms = Vec::new();
    for t in &table.terms {
        terms.push(Term {
            lam: lam_mul_linear(&t.lam, t.n),
            n: t.n + 1,
            gp: t.gp,
            sin: t.sin + 1,
            cos: t.cos,
        });
        if t.gp > 0 {
            terms.push(Term {
                lam: lam_scale(&t.lam, t.gp as f64),
                n: t.n,
                gp: t.gp - 1,
                sin: t.sin,
                cos: t.cos + 1,
            });
        }
    }
    DerivTable { terms: merge(terms) }
}

fn domega(table: &DerivTable) -> DerivTable {
    let mut terms = Vec::new();
    for t in &table.terms {
        terms.push(Term {
            lam: lam_mul_linear(&t.lam, t.n),
            n: t.n + 1,
            gp: t.gp + 1,
            sin: t.sin,
            cos: t.cos,
        });
        if t.gp > 0 {
            terms.push(Term {
                lam: lam_scale(&t.lam, -(t.gp as f64)),
                n: t.n - 1,
                gp: t.gp - 1,
                sin: t.sin,
                cos: t.cos,
            });
        }
        if t.sin > 0 {
            terms.push(Term {
                lam: lam_scale(&t.lam, t.sin as f64),
                n: t.n,
                gp: t.gp,
                sin: t.sin - 1,
                cos: t.cos + 1,
            });
        }
        if t.cos > 0 {
            terms.push(Term {
                lam: lam_scale(&t.lam, -(t.cos as f64)),
                n: t.n,
                gp: t.gp,
                sin: t.sin + 1,
                cos: t.cos - 1,
            });
        }
    }
    DerivTable { terms: merge(terms) }
}

/// Symbolic tables of d^q/domega^q d^p/dz^p (cos w + z sin w)^{i lambda},
/// shared across all roots and components.
pub struct BasisEvaluator {
    tables: Vec<Vec<DerivTable>>, // [p][q]
}

impl BasisEvaluator {
    pub fn new(p_max: usize, q_max: usize) -> Self {
        let base = DerivTable {
            terms: vec![Term { lam: vec![c(1.0, 0.0)], n: 0, gp: 0, sin: 0, cos: 0 }],
        };
        let mut by_p = vec![base];
        for p in 0..p_max {
            let next = dz(&by_p[p]);
            by_p.push(next);
        }
        let tables = by_p
            .into_iter()
            .map(|t0| {
                let mut row = vec![t0];
                for q in 0..q_max {
                    let next = domega(&row[q]);
                    row.push(next);
                }
                row
            })
            .collect();
        BasisEvaluator { tables }
    }

    pub fn p_max(&self) -> usize {
        self.tables.len() - 1
    }

    pub fn q_max(&self) -> usize {
        self.tables[0].len() - 1
    }

    /// Value of the q-th omega-derivative of the level-p basis function for
    /// root z, at (omega, lambda).
    pub fn eval(&self, z: C64, level: usize, lambda: C64, omega: f64, q: usize) -> C64 {
        self.eval_full(z, level, lambda, omega, q).0
    }

    /// Value together with its lambda-derivative (both exact).
    pub fn eval_full(&self, z: C64, level: usize, lambda: C64, omega: f64, q: usize) -> (C64, C64) {
        let table = &self.tables[level][q];
        let h = continuous_log_g(z, omega);
        let (s, cs) = omega.sin_cos();
        let gp = c(-s, 0.0) + z * cs;
        let mut val = c(0.0, 0.0);
        let mut dval = c(0.0, 0.0);
        for t in &table.terms {
            let mut poly = c(0.0, 0.0);
            let mut dpoly = c(0.0, 0.0);
            for &a in t.lam.iter().rev() {
                dpoly = dpoly * lambda + poly;
                poly = poly * lambda + a;
            }
            let expfac = ((I * lambda - c(t.n as f64, 0.0)) * h).exp();
            let alg = gp.powu(t.gp) * s.powi(t.sin as i32) * cs.powi(t.cos as i32);
            let base = expfac * alg;
            val += poly * base;
            dval += (dpoly + poly * I * h) * base;
        }
        (val, dval)
    }
}
