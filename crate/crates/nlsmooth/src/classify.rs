//! Proper/improper classification of eigenvalues and the strip report that
//! drives the verdict logic. An eigenvalue is proper when its exponent
//! i*lambda is a nonnegative integer, no eigenvector has an associated
//! vector, and every kernel profile spans a homogeneous polynomial.

use crate::model::Result;
use crate::numeric::{c, C64};
use crate::pencil::{Collocation, Pencil};
use crate::spectrum::{find_in_strip, EigenvalueRecord, StripQuery};
use crate::tols::Tols;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ImproperReason {
    NonIntegerExponent,
    HasAssociatedVector,
    EigenfunctionNotPolynomial,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropernessVerdict {
    pub proper: bool,
    pub reasons: Vec<ImproperReason>,
    /// Nearest nonnegative integer to i*lambda, when within tolerance.
    pub exponent: Option<usize>,
    pub integer_distance: f64,
    pub polynomial_residual: f64,
}

/// Relative residual of the weighted least-squares projection of a profile
/// vector onto the span of e^{i kappa omega} with |kappa| <= s and
/// kappa = s (mod 2) per component: zero exactly when r^s phi is a
/// homogeneous polynomial of degree s.
pub fn polynomial_test(colloc: &Collocation, s: usize, profile: &[Vec<C64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, values) in profile.iter().enumerate() {
        let nodes = &colloc.nodes[j];
        let w = &colloc.weights[j];
        let modes: Vec<i32> = (-(s as i32)..=s as i32).step_by(2).collect();
        let mut a = DMatrix::<C64>::zeros(nodes.len(), modes.len());
        let mut b = DVector::<C64>::zeros(nodes.len());
        for (i, (&x, &wi)) in nodes.iter().zip(w.iter()).enumerate() {
            let sw = wi.sqrt();
            for (k, &kappa) in modes.iter().enumerate() {
                a[(i, k)] = c(0.0, kappa as f64 * x).exp() * sw;
            }
            b[i] = values[i] * sw;
        }
        let (_, res) = crate::numeric::lstsq_min_norm(&a, &b, 1e-12);
        num += res * res;
        den += b.norm_squared();
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

pub fn classify_eigenvalue(
    colloc: &Collocation,
    rec: &EigenvalueRecord,
    tols: &Tols,
) -> PropernessVerdict {
    let mut reasons = Vec::new();
    // i * lambda must be a nonnegative integer
    let exponent_est = -rec.lambda.im;
    let s_int = exponent_est.round();
    let integer_distance = (rec.lambda + c(0.0, s_int)).norm();
    let exponent = if s_int >= 0.0 && integer_distance <= tols.integer_exponent_tol {
        Some(s_int as usize)
    } else {
        None
    };
    if exponent.is_none() {
        reasons.push(ImproperReason::NonIntegerExponent);
    }
    if rec.has_associated_vector() {
        reasons.push(ImproperReason::HasAssociatedVector);
    }
    let polynomial_residual = match exponent {
        Some(s) => {
            let mut worst = 0.0f64;
            for profile in &rec.profiles {
                worst = worst.max(polynomial_test(colloc, s, profile));
            }
            worst
        }
        None => f64::NAN,
    };
    if exponent.is_some() && polynomial_residual > tols.polynomial_residual_rel {
        reasons.push(ImproperReason::EigenfunctionNotPolynomial);
    }
    PropernessVerdict {
        proper: reasons.is_empty(),
        reasons,
        exponent,
        integer_distance,
        polynomial_residual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Location {
    /// On the critical line Im lambda = 1 - 2m.
    OnLine,
    /// Strictly inside the open band.
    InBand,
    /// On the upper band edge Im lambda = 1 - ell (outside the open band).
    UpperEdge,
    /// Within the ambiguity ring of either edge: undecidable side.
    Straddle,
    /// In the widened scan window but outside the band.
    Outside,
}

#[derive(Debug, Clone)]
pub struct ClassifiedEigenvalue {
    pub record: EigenvalueRecord,
    pub location: Location,
    pub properness: PropernessVerdict,
}

/// Spectral evidence for the verdict: the eigenvalues of the widened band
/// around 1-2m < Im lambda < 1-ell with locations and properness, plus the
/// condition flags they induce.
#[derive(Debug, Clone)]
pub struct StripReport {
    pub ell: usize,
    pub order_2m: usize,
    pub band: (f64, f64),
    pub eigenvalues: Vec<ClassifiedEigenvalue>,
    /// No eigenvalues on the critical line.
    pub line_clear: bool,
    /// Every eigenvalue strictly inside the band is proper.
    pub band_all_proper: bool,
    /// The critical line carries exactly the eigenvalue i(1-2m), proper.
    pub border_case: bool,
    /// An improper eigenvalue sits in the closed-below band
    /// 1-2m <= Im lambda < 1-ell.
    pub violation_band: bool,
    /// Eigenvalues in the straddle ring of either edge.
    pub straddle: Vec<C64>,
    pub spurious: Vec<C64>,
    pub cap_ok: bool,
    pub effective_re_halfwidth: f64,
}

impl StripReport {
    pub fn in_band(&self) -> impl Iterator<Item = &ClassifiedEigenvalue> {
        self.eigenvalues.iter().filter(|e| e.location == Location::InBand)
    }

    pub fn on_line(&self) -> impl Iterator<Item = &ClassifiedEigenvalue> {
        self.eigenvalues.iter().filter(|e| e.location == Location::OnLine)
    }

    /// Eigenvalue record at lambda = -is inside the band, if present.
    pub fn band_record_at(&self, s: usize, tol: f64) -> Option<&ClassifiedEigenvalue> {
        self.eigenvalues
            .iter()
            .filter(|e| matches!(e.location, Location::InBand))
            .find(|e| (e.record.lambda - c(0.0, -(s as f64))).norm() <= tol * (1.0 + s as f64))
    }
}

pub fn strip_report(
    pencil: &Pencil,
    colloc: &Collocation,
    tols: &Tols,
    re_halfwidth: f64,
) -> Result<StripReport> {
    let p = &pencil.problem;
    let line_level = 1.0 - p.order_2m as f64;
    let edge_level = 1.0 - p.ell as f64;
    let query = StripQuery {
        c1: line_level - tols.edge_margin,
        c2: edge_level + tols.edge_margin,
        re_halfwidth,
    };
    let scan = find_in_strip(pencil, colloc, &query, tols)?;
    let mut eigenvalues = Vec::new();
    let mut straddle = Vec::new();
    for rec in scan.records {
        let d_line = (rec.lambda.im - line_level).abs();
        let d_edge = (rec.lambda.im - edge_level).abs();
        let location = if d_line <= tols.line_snap {
            Location::OnLine
        } else if d_edge <= tols.line_snap {
            Location::UpperEdge
        } else if d_line <= tols.line_band || d_edge <= tols.line_band {
            Location::Straddle
        } else if rec.lambda.im > line_level && rec.lambda.im < edge_level {
            Location::InBand
        } else {
            Location::Outside
        };
        if location == Location::Straddle {
            straddle.push(rec.lambda);
        }
        let properness = classify_eigenvalue(colloc, &rec, tols);
        eigenvalues.push(ClassifiedEigenvalue { record: rec, location, properness });
    }
    let line: Vec<&ClassifiedEigenvalue> = eigenvalues
        .iter()
        .filter(|e| e.location == Location::OnLine)
        .collect();
    let line_clear = line.is_empty();
    let band_all_proper = eigenvalues
        .iter()
        .filter(|e| e.location == Location::InBand)
        .all(|e| e.properness.proper);
    let border_case = line.len() == 1 && {
        let e = line[0];
        let target = c(0.0, line_level);
        (e.record.lambda - target).norm() <= tols.line_snap && e.properness.proper
    };
    let violation_band = eigenvalues.iter().any(|e| {
        matches!(e.location, Location::OnLine | Location::InBand) && !e.properness.proper
    });
    Ok(StripReport {
        ell: p.ell,
        order_2m: p.order_2m,
        band: (line_level, edge_level),
        eigenvalues,
        line_clear,
        band_all_proper,
        border_case,
        violation_band,
        straddle,
        spurious: scan.spurious,
        cap_ok: scan.cap_ok,
        effective_re_halfwidth: scan.effective_re_halfwidth,
    })
}
