//! Decision procedure: combines the strip report, the monomial-data
//! conditions, the border-case machinery and the certificate builders into
//! a single verdict with a full evidence bundle.

use crate::certificate::{
    blowup_profile, build_power_solution, verify_residual, witness_to_power_solution,
    BlowupProfile, PowerSolution, ResidualReport,
};
use crate::classify::{strip_report, Location, StripReport};
use crate::conditions::{
    check_monomial_conditions, cs_basis, witness_log_solution, ConditionsReport, TriVerdict,
};
use crate::consistency::{
    beta_decompose, build_hat_system, check_probes, consistency_check, polynomial_data_check,
    BetaDecomposition, BoundaryTrace, FunctionalReport, PolynomialDataCheck, ProbeReport,
};
use crate::model::{Error, ModelProblem, Result, ValidationReport};
use crate::pencil::{Collocation, Pencil};
use crate::tols::Tols;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Smooth,
    ConditionallySmooth,
    Violated,
    Undetermined,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Smooth => 0,
            Verdict::ConditionallySmooth => 10,
            Verdict::Violated => 20,
            Verdict::Undetermined => 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub tols: Tols,
    pub re_halfwidth: f64,
    pub colloc_size: usize,
    /// Boundary trace data standing in for the right-hand sides near the
    /// vertex, one per row, canonical order.
    pub traces: Option<Vec<BoundaryTrace>>,
    /// Named probe trace sets for the admissible-data checks.
    pub probes: Vec<(String, Vec<BoundaryTrace>)>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        let tols = Tols::default();
        AnalyzeOptions {
            re_halfwidth: tols.re_halfwidth,
            colloc_size: tols.colloc_size,
            tols,
            traces: None,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BorderEvidence {
    pub beta: BetaDecomposition,
    pub polynomial_data: PolynomialDataCheck,
    pub trace_functionals: Option<Vec<FunctionalReport>>,
    pub probe_reports: Vec<ProbeReport>,
}

#[derive(Debug, Clone)]
pub struct CertificateEvidence {
    pub trigger: String,
    pub power: PowerSolution,
    pub residual: ResidualReport,
    pub blowup: BlowupProfile,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub verdict: Verdict,
    pub reason: String,
    pub validation: ValidationReport,
    pub strip: Option<StripReport>,
    pub conditions: Option<ConditionsReport>,
    pub border: Option<BorderEvidence>,
    pub certificate: Option<CertificateEvidence>,
}

/// Default radii for residual certification, away from the vertex.
fn certificate_radii() -> Vec<f64> {
    vec![1e-3, 1e-2, 0.1, 0.3, 1.0]
}

pub fn analyze(p: &ModelProblem, opts: &AnalyzeOptions) -> Result<Analysis> {
    let validation = p.validate();
    if !validation.passed() {
        return Err(Error::InvalidProblem(format!(
            "validation failed:\n{}",
            validation.summary()
        )));
    }
    if !validation.fundamental_ok() {
        return Err(Error::Unsupported(
            "interior symbol degree drop: rotate coordinates so the leading \
             coefficient is nonzero"
                .into(),
        ));
    }
    let tols = &opts.tols;
    let pencil = Pencil::new(p)?;
    let colloc = Collocation::new(p, opts.colloc_size)?;
    let strip = strip_report(&pencil, &colloc, tols, opts.re_halfwidth)?;

    // violation by an improper eigenvalue in 1-2m <= Im lambda < 1-ell
    if strip.violation_band {
        let improper = strip
            .eigenvalues
            .iter()
            .find(|e| {
                matches!(e.location, Location::OnLine | Location::InBand)
                    && !e.properness.proper
            })
            .expect("violation flag implies an improper eigenvalue");
        let lambda = improper.record.lambda;
        match certify_eigenvalue(&colloc, improper, tols) {
            Ok(cert) => {
                return Ok(Analysis {
                    verdict: Verdict::Violated,
                    reason: format!(
                        "improper eigenvalue at lambda = {:.12} + {:.12}i inside the \
                         critical band; singular solution certified",
                        lambda.re, lambda.im
                    ),
                    validation,
                    strip: Some(strip),
                    conditions: None,
                    border: None,
                    certificate: Some(cert),
                });
            }
            Err(e) => {
                return Ok(Analysis {
                    verdict: Verdict::Undetermined,
                    reason: format!(
                        "improper eigenvalue at lambda = {:.12} + {:.12}i, but the \
                         certificate failed verification: {e}",
                        lambda.re, lambda.im
                    ),
                    validation,
                    strip: Some(strip),
                    conditions: None,
                    border: None,
                    certificate: None,
                });
            }
        }
    }

    // monomial-data conditions, applicable when ell <= 2m-2
    let conditions = check_monomial_conditions(&colloc, &strip, tols)?;
    if conditions.verdict == TriVerdict::Fail {
        let (s, ci) = conditions.witness.expect("failing conditions carry a witness");
        let cvec = cs_basis(p, s)[ci].clone();
        match certify_witness(&colloc, &strip, s, &cvec, tols) {
            Ok(cert) => {
                return Ok(Analysis {
                    verdict: Verdict::Violated,
                    reason: format!(
                        "monomial boundary data of degree {s} admits no polynomial \
                         solution; log-type singular solution certified"
                    ),
                    validation,
                    strip: Some(strip),
                    conditions: Some(conditions),
                    border: None,
                    certificate: Some(cert),
                });
            }
            Err(e) => {
                return Ok(Analysis {
                    verdict: Verdict::Undetermined,
                    reason: format!(
                        "monomial-data condition fails at degree {s}, but the witness \
                         certificate failed verification: {e}"
                    ),
                    validation,
                    strip: Some(strip),
                    conditions: Some(conditions),
                    border: None,
                    certificate: None,
                });
            }
        }
    }
    if conditions.verdict == TriVerdict::Undetermined {
        return Ok(Analysis {
            verdict: Verdict::Undetermined,
            reason: "a monomial-data check landed within the ambiguity ring of its \
                     threshold"
                .into(),
            validation,
            strip: Some(strip),
            conditions: Some(conditions),
            border: None,
            certificate: None,
        });
    }

    // positive claims need an unambiguous spectrum
    if !strip.straddle.is_empty() {
        let list = strip
            .straddle
            .iter()
            .map(|l| format!("{:.9} + {:.9}i", l.re, l.im))
            .collect::<Vec<_>>()
            .join(", ");
        return Ok(Analysis {
            verdict: Verdict::Undetermined,
            reason: format!("eigenvalues straddle a band edge within tolerance: {list}"),
            validation,
            strip: Some(strip),
            conditions: Some(conditions),
            border: None,
            certificate: None,
        });
    }
    if strip
        .eigenvalues
        .iter()
        .any(|e| matches!(e.location, Location::OnLine | Location::InBand) && e.record.cluster)
    {
        return Ok(Analysis {
            verdict: Verdict::Undetermined,
            reason: "unresolved eigenvalue cluster in the critical band".into(),
            validation,
            strip: Some(strip),
            conditions: Some(conditions),
            border: None,
            certificate: None,
        });
    }

    if strip.line_clear {
        return Ok(Analysis {
            verdict: Verdict::Smooth,
            reason: "critical line clear, all band eigenvalues proper, monomial-data \
                     conditions hold"
                .into(),
            validation,
            strip: Some(strip),
            conditions: Some(conditions),
            border: None,
            certificate: None,
        });
    }

    if strip.border_case {
        let hat = build_hat_system(p);
        let beta = beta_decompose(&hat, tols);
        if beta.dependent.is_empty() {
            return Ok(Analysis {
                verdict: Verdict::Undetermined,
                reason: "border eigenvalue present but the differentiated local system \
                         is full rank; the two border detectors disagree"
                    .into(),
                validation,
                strip: Some(strip),
                conditions: Some(conditions),
                border: None,
                certificate: None,
            });
        }
        let polynomial_data = polynomial_data_check(p, &beta, tols);
        let trace_functionals = match &opts.traces {
            Some(traces) => Some(consistency_check(p, &beta, traces, tols)?),
            None => None,
        };
        let probe_reports = check_probes(p, &beta, &opts.probes, tols)?;
        return Ok(Analysis {
            verdict: Verdict::ConditionallySmooth,
            reason: "unique proper eigenvalue on the critical line: smoothness holds \
                     exactly under the consistency conditions on the boundary data"
                .into(),
            validation,
            strip: Some(strip),
            conditions: Some(conditions),
            border: Some(BorderEvidence {
                beta,
                polynomial_data,
                trace_functionals,
                probe_reports,
            }),
            certificate: None,
        });
    }

    // line spectrum outside the covered configurations
    let line: Vec<String> = strip
        .on_line()
        .map(|e| {
            format!(
                "{:.9} + {:.9}i ({})",
                e.record.lambda.re,
                e.record.lambda.im,
                if e.properness.proper { "proper" } else { "improper" }
            )
        })
        .collect();
    Ok(Analysis {
        verdict: Verdict::Undetermined,
        reason: format!(
            "critical-line spectrum outside the decided configurations: [{}]",
            line.join(", ")
        ),
        validation,
        strip: Some(strip),
        conditions: Some(conditions),
        border: None,
        certificate: None,
    })
}

fn certify_eigenvalue(
    colloc: &Collocation,
    e: &crate::classify::ClassifiedEigenvalue,
    tols: &Tols,
) -> Result<CertificateEvidence> {
    let power = build_power_solution(&e.record, colloc, tols)?;
    let residual = verify_residual(&power, colloc, &certificate_radii());
    if !residual.passes(tols.certificate_residual) {
        return Err(Error::Numerical(format!(
            "certificate residual too large: interior {:.3e}, boundary {:.3e}",
            residual.interior_max_rel, residual.boundary_max_rel
        )));
    }
    let blowup = blowup_profile(&power, colloc, 4..=10, tols);
    if !blowup.diverges {
        return Err(Error::Numerical(format!(
            "annulus energies do not certify divergence (fitted ratio {:.6})",
            blowup.fitted_ratio
        )));
    }
    Ok(CertificateEvidence {
        trigger: format!(
            "improper eigenvalue {:.12} + {:.12}i",
            e.record.lambda.re, e.record.lambda.im
        ),
        power,
        residual,
        blowup,
    })
}

fn certify_witness(
    colloc: &Collocation,
    strip: &StripReport,
    s: usize,
    cvec: &[crate::numeric::C64],
    tols: &Tols,
) -> Result<CertificateEvidence> {
    let witness = witness_log_solution(colloc, strip, s, cvec, tols)?;
    if !witness.non_polynomial {
        return Err(Error::Numerical(
            "witness solution unexpectedly polynomial".into(),
        ));
    }
    if witness.solve_residual > tols.witness_residual {
        return Err(Error::Numerical(format!(
            "witness solve residual {:.3e}",
            witness.solve_residual
        )));
    }
    let power = witness_to_power_solution(&witness, colloc);
    let residual = verify_residual(&power, colloc, &certificate_radii());
    if !residual.passes(tols.witness_residual) {
        return Err(Error::Numerical(format!(
            "witness residual too large: interior {:.3e}, boundary {:.3e}",
            residual.interior_max_rel, residual.boundary_max_rel
        )));
    }
    let blowup = blowup_profile(&power, colloc, 4..=10, tols);
    if !blowup.diverges {
        return Err(Error::Numerical(format!(
            "witness energies do not certify divergence (fitted ratio {:.6})",
            blowup.fitted_ratio
        )));
    }
    Ok(CertificateEvidence {
        trigger: format!("monomial data of degree {s} without polynomial solution"),
        power,
        residual,
        blowup,
    })
}

/// Human-readable rendering of the evidence bundle.
pub fn explain(a: &Analysis) -> String {
    let mut out = String::new();
    out.push_str(&format!("verdict: {:?}\n", a.verdict));
    out.push_str(&format!("reason: {}\n", a.reason));
    out.push_str("\n== validation ==\n");
    out.push_str(&a.validation.summary());
    out.push('\n');
    if let Some(strip) = &a.strip {
        out.push_str("\n== spectrum ==\n");
        out.push_str(&format!(
            "band: {:.6} < Im lambda < {:.6} (scan half-width {:.3})\n",
            strip.band.0, strip.band.1, strip.effective_re_halfwidth
        ));
        if strip.eigenvalues.is_empty() {
            out.push_str("no eigenvalues detected in the scan window\n");
        }
        for e in &strip.eigenvalues {
            out.push_str(&format!(
                "lambda = {:+.12} {:+.12}i  alg {}  geo {}  {:?}  {}",
                e.record.lambda.re,
                e.record.lambda.im,
                e.record.alg,
                e.record.geo,
                e.location,
                if e.properness.proper { "proper" } else { "improper" }
            ));
            if !e.properness.proper {
                out.push_str(&format!("  reasons {:?}", e.properness.reasons));
            }
            out.push('\n');
        }
        if !strip.spurious.is_empty() {
            out.push_str(&format!(
                "filtered {} determinant zeros as basis artifacts\n",
                strip.spurious.len()
            ));
        }
        out.push_str(&format!(
            "flags: line_clear={} band_all_proper={} border={} violation_band={} cap_ok={}\n",
            strip.line_clear,
            strip.band_all_proper,
            strip.border_case,
            strip.violation_band,
            strip.cap_ok
        ));
    }
    if let Some(cond) = &a.conditions {
        out.push_str("\n== monomial-data conditions ==\n");
        if !cond.applicable {
            out.push_str("vacuous: ell = 2m - 1\n");
        } else {
            for d in &cond.per_degree {
                out.push_str(&format!(
                    "degree {}: {:?} (in spectrum: {}, admissible data dim {})\n",
                    d.s,
                    d.verdict,
                    d.in_spectrum,
                    d.per_c.len()
                ));
                if let Some(orth) = &d.orthogonality {
                    out.push_str(&format!(
                        "  adjoint pairing max {:.3e} -> {:?}\n",
                        orth.max_pairing, orth.verdict
                    ));
                }
            }
        }
    }
    if let Some(border) = &a.border {
        out.push_str("\n== border case ==\n");
        out.push_str(&format!(
            "differentiated local system rank {} of {}\n",
            border.beta.rank,
            border.beta.rank + border.beta.dependent.len()
        ));
        for dep in &border.beta.dependent {
            let terms: Vec<String> = border
                .beta
                .independent
                .iter()
                .zip(dep.beta.iter())
                .map(|(&pos, &(re, im))| {
                    if im.abs() < 1e-12 {
                        format!("({re:+.12}) * d^p Z[{pos}]/dr^p")
                    } else {
                        format!("({re:+.12}{im:+.12}i) * d^p Z[{pos}]/dr^p")
                    }
                })
                .collect();
            out.push_str(&format!(
                "consistency functional for row {}: int_0^eps r^-1 | d^p Z[{}]/dr^p - {} |^2 dr < inf\n",
                dep.position,
                dep.position,
                terms.join(" - ")
            ));
        }
        out.push_str(&format!(
            "polynomial-data check: {:?} (max |g(0)| = {:.3e})\n",
            border.polynomial_data.verdict, border.polynomial_data.max_g_at_zero
        ));
        if let Some(fs) = &border.trace_functionals {
            for f in fs {
                out.push_str(&format!(
                    "trace data, row {}: {:?}",
                    f.row_position, f.verdict
                ));
                if let Some(g0) = f.g_at_zero {
                    out.push_str(&format!(" |g(0)| = {g0:.3e}"));
                }
                if let Some(alpha) = f.fitted_exponent {
                    out.push_str(&format!(" fitted exponent {alpha:.4}"));
                }
                out.push('\n');
            }
        }
        for probe in &border.probe_reports {
            out.push_str(&format!(
                "probe '{}': admissible={}",
                probe.name, probe.admissible
            ));
            for f in &probe.functionals {
                out.push_str(&format!(" row{}:{:?}", f.row_position, f.verdict));
            }
            out.push('\n');
        }
    }
    if let Some(cert) = &a.certificate {
        out.push_str("\n== singular-solution certificate ==\n");
        out.push_str(&format!("trigger: {}\n", cert.trigger));
        out.push_str(&format!(
            "power solution: lambda0 = {:+.12} {:+.12}i, log depth {}\n",
            cert.power.lambda0.re, cert.power.lambda0.im, cert.power.l0
        ));
        out.push_str(&format!(
            "residuals: interior {:.3e}, boundary {:.3e}\n",
            cert.residual.interior_max_rel, cert.residual.boundary_max_rel
        ));
        out.push_str(&format!(
            "annulus energy ratio: fitted {:.6}, theoretical {:.6}\n",
            cert.blowup.fitted_ratio, cert.blowup.theoretical_ratio
        ));
        for (n, e) in &cert.blowup.energies {
            out.push_str(&format!("  annulus 2^-{} : energy {:.6e}\n", n + 1, e));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn run(b_sum: f64, ell: usize) -> Analysis {
        let p = oracle::fix_bs(b_sum / 2.0, b_sum / 2.0, 1.0, 1.0, ell);
        analyze(&p, &AnalyzeOptions::default()).unwrap()
    }

    #[test]
    fn parameter_sweep_matches_theory() {
        // thresholds: smooth for sum > 0 or <= -2, violated in (-2, 0),
        // conditionally smooth at 0
        assert_eq!(run(0.5, 1).verdict, Verdict::Smooth);
        assert_eq!(run(1.0, 1).verdict, Verdict::Smooth);
        assert_eq!(run(-1.0, 1).verdict, Verdict::Violated);
        assert_eq!(run(-0.5, 1).verdict, Verdict::Violated);
        assert_eq!(run(0.0, 1).verdict, Verdict::ConditionallySmooth);
        assert_eq!(run(-2.5, 1).verdict, Verdict::Smooth);
    }

    #[test]
    fn edge_case_at_minus_two() {
        // at exactly -2 the eigenvalue lambda = 0 sits on the open band
        // edge: verdict stays smooth-or-undetermined with the eigenvalue
        // recorded at the edge
        let a = run(-2.0, 1);
        assert!(
            matches!(a.verdict, Verdict::Smooth | Verdict::Undetermined),
            "{:?}",
            a.verdict
        );
        let strip = a.strip.as_ref().unwrap();
        let edge: Vec<_> = strip
            .eigenvalues
            .iter()
            .filter(|e| e.record.lambda.norm() < 1e-6)
            .collect();
        assert_eq!(edge.len(), 1, "lambda = 0 must be detected and reported");
    }

    #[test]
    fn violated_carries_verified_certificate() {
        let a = run(-1.0, 1);
        let cert = a.certificate.expect("certificate");
        assert!(cert.residual.interior_max_rel <= 1e-7);
        assert!(cert.residual.boundary_max_rel <= 1e-7);
        assert!(cert.blowup.diverges);
    }

    #[test]
    fn border_evidence_contents() {
        let a = run(0.0, 1);
        let border = a.border.as_ref().expect("border evidence");
        assert_eq!(border.beta.rank, 1);
        assert_eq!(border.beta.dependent.len(), 1);
        let beta = border.beta.beta_c64(&border.beta.dependent[0]);
        assert!((beta[0] - crate::numeric::c(-1.0, 0.0)).norm() < 1e-10);
        assert_eq!(
            border.polynomial_data.verdict,
            crate::conditions::TriVerdict::Pass
        );
        let text = explain(&a);
        assert!(text.contains("consistency functional"));
    }

    #[test]
    fn dirichlet_low_regularity_is_violated() {
        // local Dirichlet data on the half-plane angle with ell = 0 fails
        // the monomial-data condition at degree 0
        let p = oracle::fix_loc(std::f64::consts::FRAC_PI_2, 0);
        let a = analyze(&p, &AnalyzeOptions::default()).unwrap();
        assert_eq!(a.verdict, Verdict::Violated);
        let cert = a.certificate.expect("log witness certificate");
        assert!(cert.residual.boundary_max_rel <= 1e-7, "{:?}", cert.residual);
    }

    #[test]
    fn bisection_locates_transitions() {
        // The border at b1 + b2 = 0 is located by both detectors: the
        // spectral border flag brackets it within the line-snap ring, and
        // the algebraic detector (rank loss of the differentiated local
        // system) is exact. The Smooth <-> Violated flip at -2 is located
        // through the band-violation flag.
        let tols = Tols::default();
        let spectral_border = |b: f64| {
            let p = oracle::fix_bs(b / 2.0, b / 2.0, 1.0, 1.0, 1);
            let pencil = Pencil::new(&p).unwrap();
            let colloc = Collocation::new(&p, 32).unwrap();
            strip_report(&pencil, &colloc, &tols, 10.0).unwrap()
        };
        let bisect = |mut lo: f64, mut hi: f64, pred: &dyn Fn(f64) -> bool| {
            while hi - lo > 2e-7 {
                let mid = 0.5 * (lo + hi);
                if pred(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        // spectral flag: on within the snap ring around 0, off outside
        let upper = bisect(0.0, 0.0078125, &|b| !spectral_border(b).border_case);
        let lower = bisect(-0.0078125, 0.0, &|b| spectral_border(b).border_case);
        let transition = 0.5 * (upper + lower);
        assert!(transition.abs() <= 1e-6, "spectral transition at {transition}");

        // algebraic detector transitions exactly at 0
        let algebraic = |b: f64| {
            let p = oracle::fix_bs(b / 2.0, b / 2.0, 1.0, 1.0, 1);
            beta_decompose(&build_hat_system(&p), &tols).rank == 1
        };
        let t_alg_hi = bisect(0.0, 0.0078125, &|b| !algebraic(b));
        assert!(t_alg_hi.abs() <= 1e-6, "algebraic transition at {t_alg_hi}");

        // violation flag flips at -2
        let t2 = bisect(-2.0078125, -1.9921875, &|b| {
            spectral_border(b).violation_band
        });
        assert!((t2 + 2.0).abs() <= 1e-6, "transition at {t2}");
    }
}
