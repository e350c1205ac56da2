//! Command-line interface: JSON problem documents (schema "nlsmooth/1"),
//! report files, eigenvalue CSV and SVG strip plots.

use crate::consistency::{
    beta_decompose, build_hat_system, consistency_check, BoundaryTrace,
};
use crate::classify::{strip_report, Location};
use crate::model::{
    BoundaryRow, Error, HomogeneousOperator, ModelProblem, NonlocalTerm, Result, Side,
};
use crate::numeric::c;
use crate::pencil::{Collocation, Pencil};
use crate::spectrum::StripQuery;
use crate::tols::Tols;
use crate::verdict::{analyze, explain, Analysis, AnalyzeOptions, Verdict};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA: &str = "nlsmooth/1";
pub const REPORT_SCHEMA: &str = "nlsmooth-report/1";

/// Number or decimal string; angles are serialized as strings so fixture
/// files stay free of binary-float drift.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NumStr {
    Num(f64),
    Str(String),
}

impl NumStr {
    fn value(&self) -> Result<f64> {
        match self {
            NumStr::Num(v) => Ok(*v),
            NumStr::Str(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidProblem(format!("bad number '{s}': {e}"))),
        }
    }
}

impl Serialize for NumStr {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NumStr::Num(v) => ser.serialize_str(&format!("{v:?}")),
            NumStr::Str(s) => ser.serialize_str(s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpDoc {
    pub order: usize,
    /// Entries [alpha1, alpha2, re, im] with alpha1 + alpha2 = order.
    pub coeffs: Vec<(usize, usize, f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentDoc {
    pub half_angle: NumStr,
    pub interior_op: OpDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermDoc {
    pub target: usize,
    pub rotation: NumStr,
    pub homothety: NumStr,
    pub op: OpDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowDoc {
    pub component: usize,
    pub side: usize,
    pub mu: usize,
    pub order: usize,
    pub terms: Vec<TermDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRowDoc {
    pub component: usize,
    pub side: usize,
    pub mu: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<SamplesDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplesDoc {
    pub r: Vec<f64>,
    pub z: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracesDoc {
    pub rows: Vec<TraceRowDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeDoc {
    pub name: String,
    pub rows: Vec<TraceRowDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub schema: String,
    pub order_2m: usize,
    pub ell: usize,
    pub components: Vec<ComponentDoc>,
    pub rows: Vec<RowDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<TracesDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeDoc>,
}

fn op_from_doc(doc: &OpDoc) -> Result<HomogeneousOperator> {
    let mut coeffs = vec![c(0.0, 0.0); doc.order + 1];
    for &(a1, a2, re, im) in &doc.coeffs {
        if a1 + a2 != doc.order {
            return Err(Error::InvalidProblem(format!(
                "coefficient index ({a1},{a2}) does not match operator order {}",
                doc.order
            )));
        }
        coeffs[a2] += c(re, im);
    }
    HomogeneousOperator::new(doc.order, coeffs)
}

fn op_to_doc(op: &HomogeneousOperator) -> OpDoc {
    OpDoc {
        order: op.order,
        coeffs: op
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, v)| (op.order - i, i, v.re, v.im))
            .collect(),
    }
}

impl ProblemDoc {
    pub fn parse(text: &str) -> Result<ProblemDoc> {
        let doc: ProblemDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidProblem(format!("JSON parse error: {e}")))?;
        if doc.schema != SCHEMA {
            return Err(Error::InvalidProblem(format!(
                "unsupported schema '{}', expected '{SCHEMA}'",
                doc.schema
            )));
        }
        Ok(doc)
    }

    pub fn to_model(&self) -> Result<ModelProblem> {
        let mut half_angles = Vec::new();
        let mut interior_ops = Vec::new();
        for comp in &self.components {
            half_angles.push(comp.half_angle.value()?);
            interior_ops.push(op_from_doc(&comp.interior_op)?);
        }
        let n = half_angles.len();
        let check_index = |name: &str, v: usize| -> Result<usize> {
            if v == 0 || v > n {
                Err(Error::InvalidProblem(format!(
                    "{name} index {v} out of range 1..={n}"
                )))
            } else {
                Ok(v - 1)
            }
        };
        let mut rows = Vec::new();
        for row in &self.rows {
            let mut terms = Vec::new();
            for term in &row.terms {
                terms.push(NonlocalTerm {
                    target: check_index("target", term.target)?,
                    rotation: term.rotation.value()?,
                    homothety: term.homothety.value()?,
                    op: op_from_doc(&term.op)?,
                });
            }
            rows.push(BoundaryRow {
                component: check_index("component", row.component)?,
                side: Side::from_sigma(row.side)?,
                mu: row.mu,
                order: row.order,
                terms,
            });
        }
        ModelProblem::new(half_angles, self.order_2m, interior_ops, rows, self.ell)
    }

    pub fn from_model(p: &ModelProblem) -> ProblemDoc {
        ProblemDoc {
            schema: SCHEMA.into(),
            order_2m: p.order_2m,
            ell: p.ell,
            components: p
                .half_angles
                .iter()
                .zip(&p.interior_ops)
                .map(|(&w, op)| ComponentDoc {
                    half_angle: NumStr::Str(format!("{w:?}")),
                    interior_op: op_to_doc(op),
                })
                .collect(),
            rows: p
                .rows
                .iter()
                .map(|row| RowDoc {
                    component: row.component + 1,
                    side: row.side.sigma(),
                    mu: row.mu,
                    order: row.order,
                    terms: row
                        .terms
                        .iter()
                        .map(|t| TermDoc {
                            target: t.target + 1,
                            rotation: NumStr::Str(format!("{:?}", t.rotation)),
                            homothety: NumStr::Str(format!("{:?}", t.homothety)),
                            op: op_to_doc(&t.op),
                        })
                        .collect(),
                })
                .collect(),
            traces: None,
            probes: Vec::new(),
        }
    }

    /// Traces in canonical row order, if present.
    pub fn trace_set(&self, p: &ModelProblem) -> Result<Option<Vec<BoundaryTrace>>> {
        match &self.traces {
            None => Ok(None),
            Some(doc) => Ok(Some(trace_rows(p, &doc.rows)?)),
        }
    }

    pub fn probe_sets(&self, p: &ModelProblem) -> Result<Vec<(String, Vec<BoundaryTrace>)>> {
        self.probes
            .iter()
            .map(|probe| Ok((probe.name.clone(), trace_rows(p, &probe.rows)?)))
            .collect()
    }
}

fn trace_rows(p: &ModelProblem, rows: &[TraceRowDoc]) -> Result<Vec<BoundaryTrace>> {
    let mut out: Vec<Option<BoundaryTrace>> = vec![None; p.rows.len()];
    for tr in rows {
        let pos = p
            .rows
            .iter()
            .position(|r| {
                r.component + 1 == tr.component && r.side.sigma() == tr.side && r.mu == tr.mu
            })
            .ok_or_else(|| {
                Error::InvalidProblem(format!(
                    "trace row ({},{},{}) does not match any boundary row",
                    tr.component, tr.side, tr.mu
                ))
            })?;
        let trace = match (&tr.poly, &tr.samples) {
            (Some(poly), None) => {
                BoundaryTrace::Polynomial(poly.iter().map(|&(re, im)| c(re, im)).collect())
            }
            (None, Some(samples)) => {
                if samples.r.len() != samples.z.len() {
                    return Err(Error::InvalidProblem(
                        "trace samples: r and z lengths differ".into(),
                    ));
                }
                BoundaryTrace::Samples {
                    r: samples.r.clone(),
                    z: samples.z.iter().map(|&(re, im)| c(re, im)).collect(),
                }
            }
            _ => {
                return Err(Error::InvalidProblem(
                    "each trace row needs exactly one of 'poly' or 'samples'".into(),
                ))
            }
        };
        out[pos] = Some(trace);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, t)| {
            t.ok_or_else(|| {
                let r = &p.rows[i];
                Error::InvalidProblem(format!(
                    "missing trace for row ({},{},{})",
                    r.component + 1,
                    r.side.sigma(),
                    r.mu
                ))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// report documents

#[derive(Debug, Serialize)]
struct EigRowDoc {
    re: f64,
    im: f64,
    alg: usize,
    geo: usize,
    partials: Vec<usize>,
    location: String,
    proper: bool,
    reasons: Vec<String>,
    integer_distance: f64,
    polynomial_residual: Option<f64>,
    rank_ratio: f64,
    cluster: bool,
}

#[derive(Debug, Serialize)]
struct SpectrumDoc {
    band: (f64, f64),
    re_halfwidth: f64,
    cap_ok: bool,
    line_clear: bool,
    band_all_proper: bool,
    border_case: bool,
    violation_band: bool,
    eigenvalues: Vec<EigRowDoc>,
    straddle: Vec<(f64, f64)>,
    spurious_filtered: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
struct BetaDoc {
    rank: usize,
    independent_rows: Vec<usize>,
    dependent: Vec<crate::consistency::DependentRow>,
}

#[derive(Debug, Serialize)]
struct BorderDoc {
    beta: BetaDoc,
    polynomial_data: crate::consistency::PolynomialDataCheck,
    trace_functionals: Option<Vec<crate::consistency::FunctionalReport>>,
    probes: Vec<crate::consistency::ProbeReport>,
}

#[derive(Debug, Serialize)]
struct CertificateDoc {
    trigger: String,
    lambda0: (f64, f64),
    log_depth: usize,
    interior_residual: f64,
    boundary_residual: f64,
    fitted_ratio: f64,
    theoretical_ratio: f64,
    energies: Vec<(usize, f64)>,
}

#[derive(Debug, Serialize)]
struct ReportDoc {
    schema: String,
    verdict: String,
    exit_code: i32,
    reason: String,
    tol_group: String,
    colloc_size: usize,
    validation: crate::model::ValidationReport,
    spectrum: Option<SpectrumDoc>,
    conditions: Option<crate::conditions::ConditionsReport>,
    border: Option<BorderDoc>,
    certificate: Option<CertificateDoc>,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Smooth => "smooth",
        Verdict::ConditionallySmooth => "conditionally_smooth",
        Verdict::Violated => "violated",
        Verdict::Undetermined => "undetermined",
    }
}

fn spectrum_doc(strip: &crate::classify::StripReport) -> SpectrumDoc {
    SpectrumDoc {
        band: strip.band,
        re_halfwidth: strip.effective_re_halfwidth,
        cap_ok: strip.cap_ok,
        line_clear: strip.line_clear,
        band_all_proper: strip.band_all_proper,
        border_case: strip.border_case,
        violation_band: strip.violation_band,
        eigenvalues: strip
            .eigenvalues
            .iter()
            .map(|e| EigRowDoc {
                re: e.record.lambda.re,
                im: e.record.lambda.im,
                alg: e.record.alg,
                geo: e.record.geo,
                partials: e.record.partials.clone(),
                location: format!("{:?}", e.location),
                proper: e.properness.proper,
                reasons: e.properness.reasons.iter().map(|r| format!("{r:?}")).collect(),
                integer_distance: e.properness.integer_distance,
                polynomial_residual: if e.properness.polynomial_residual.is_nan() {
                    None
                } else {
                    Some(e.properness.polynomial_residual)
                },
                rank_ratio: e.record.rank_ratio,
                cluster: e.record.cluster,
            })
            .collect(),
        straddle: strip.straddle.iter().map(|l| (l.re, l.im)).collect(),
        spurious_filtered: strip.spurious.iter().map(|l| (l.re, l.im)).collect(),
    }
}

fn report_doc(a: &Analysis, tols: &Tols, colloc_size: usize) -> ReportDoc {
    ReportDoc {
        schema: REPORT_SCHEMA.into(),
        verdict: verdict_name(a.verdict).into(),
        exit_code: a.verdict.exit_code(),
        reason: a.reason.clone(),
        tol_group: tols.name.into(),
        colloc_size,
        validation: a.validation.clone(),
        spectrum: a.strip.as_ref().map(spectrum_doc),
        conditions: a.conditions.clone(),
        border: a.border.as_ref().map(|b| BorderDoc {
            beta: BetaDoc {
                rank: b.beta.rank,
                independent_rows: b.beta.independent.clone(),
                dependent: b.beta.dependent.clone(),
            },
            polynomial_data: b.polynomial_data.clone(),
            trace_functionals: b.trace_functionals.clone(),
            probes: b.probe_reports.clone(),
        }),
        certificate: a.certificate.as_ref().map(|cert| CertificateDoc {
            trigger: cert.trigger.clone(),
            lambda0: (cert.power.lambda0.re, cert.power.lambda0.im),
            log_depth: cert.power.l0,
            interior_residual: cert.residual.interior_max_rel,
            boundary_residual: cert.residual.boundary_max_rel,
            fitted_ratio: cert.blowup.fitted_ratio,
            theoretical_ratio: cert.blowup.theoretical_ratio,
            energies: cert.blowup.energies.clone(),
        }),
    }
}

// ---------------------------------------------------------------------------
// plots and tables

pub fn eigenvalues_csv(strip: &crate::classify::StripReport) -> String {
    let mut out = String::from("re,im,alg_mult,geo_mult,proper\n");
    for e in &strip.eigenvalues {
        out.push_str(&format!(
            "{:.6},{:.6},{},{},{}\n",
            e.record.lambda.re,
            e.record.lambda.im,
            e.record.alg,
            e.record.geo,
            if e.properness.proper { "proper" } else { "improper" }
        ));
    }
    out
}

pub fn strip_svg(strip: &crate::classify::StripReport) -> String {
    let (w, h) = (800.0, 400.0);
    let r = strip.effective_re_halfwidth;
    let margin = 0.2 * (strip.band.1 - strip.band.0);
    let (im0, im1) = (strip.band.0 - margin, strip.band.1 + margin);
    let x = |re: f64| (re + r) / (2.0 * r) * (w - 80.0) + 40.0;
    let y = |im: f64| h - 40.0 - (im - im0) / (im1 - im0) * (h - 80.0);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<rect x=\"40\" y=\"40\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 80.0,
        h - 80.0
    ));
    for (level, name) in [(strip.band.0, "critical line"), (strip.band.1, "band edge")] {
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n",
            x(-r),
            y(level),
            x(r),
            y(level)
        ));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">Im = {:.4} ({name})</text>\n",
            x(-r) + 4.0,
            y(level) - 4.0,
            level
        ));
    }
    if im0 < 0.0 && im1 > 0.0 {
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"lightgray\"/>\n",
            x(-r),
            y(0.0),
            x(r),
            y(0.0)
        ));
    }
    s.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"lightgray\"/>\n",
        x(0.0),
        y(im0),
        x(0.0),
        y(im1)
    ));
    for e in &strip.eigenvalues {
        let color = if e.properness.proper { "blue" } else { "red" };
        let fill = match e.location {
            Location::InBand | Location::OnLine => color,
            _ => "none",
        };
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"{}\" stroke=\"{}\"/>\n",
            x(e.record.lambda.re),
            y(e.record.lambda.im),
            fill,
            color
        ));
    }
    s.push_str("</svg>\n");
    s
}

// ---------------------------------------------------------------------------
// commands

#[derive(Parser)]
#[command(
    name = "nlsmooth",
    about = "Smoothness analysis of nonlocal elliptic problems in plane angles"
)]
pub struct CliArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct CommonOpts {
    /// Problem specification document (JSON, schema nlsmooth/1).
    pub spec: PathBuf,
    /// Output directory for report files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Half-width of the real-axis search window.
    #[arg(long)]
    pub re_halfwidth: Option<f64>,
    /// Collocation grid size per component.
    #[arg(long)]
    pub colloc_size: Option<usize>,
    /// Tolerance group: default | strict.
    #[arg(long, default_value = "default")]
    pub tol_group: String,
}

#[derive(Subcommand)]
pub enum Command {
    /// Full smoothness analysis with verdict and evidence report.
    Analyze(CommonOpts),
    /// Eigenvalue table and strip plot.
    Spectrum {
        #[command(flatten)]
        common: CommonOpts,
        /// Imaginary-part range "a,b" of the scan (default: critical band).
        #[arg(long, allow_hyphen_values = true)]
        strip: Option<String>,
    },
    /// Singular-solution certificate for a selected eigenvalue.
    Certificate {
        #[command(flatten)]
        common: CommonOpts,
        /// Eigenvalue selector "re,im" (nearest improper eigenvalue).
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
    },
    /// Beta coefficients and consistency-functional verdicts for the trace
    /// data in the document.
    Consistency(CommonOpts),
}

fn load(common: &CommonOpts) -> Result<(ProblemDoc, ModelProblem, Tols)> {
    let text = std::fs::read_to_string(&common.spec)
        .map_err(|e| Error::InvalidProblem(format!("cannot read {:?}: {e}", common.spec)))?;
    let doc = ProblemDoc::parse(&text)?;
    let model = doc.to_model()?;
    let tols = Tols::by_name(&common.tol_group)
        .ok_or_else(|| Error::InvalidProblem(format!("unknown tol group '{}'", common.tol_group)))?;
    Ok((doc, model, tols))
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Numerical(format!("cannot create {dir:?}: {e}")))?;
    std::fs::write(dir.join(name), content)
        .map_err(|e| Error::Numerical(format!("cannot write {name}: {e}")))
}

pub fn cmd_analyze(common: &CommonOpts) -> Result<i32> {
    let (doc, model, tols) = load(common)?;
    let opts = AnalyzeOptions {
        re_halfwidth: common.re_halfwidth.unwrap_or(tols.re_halfwidth),
        colloc_size: common.colloc_size.unwrap_or(tols.colloc_size),
        traces: doc.trace_set(&model)?,
        probes: doc.probe_sets(&model)?,
        tols,
    };
    let analysis = analyze(&model, &opts)?;
    let report = report_doc(&analysis, &opts.tols, opts.colloc_size);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Numerical(format!("report serialization: {e}")))?;
    write_file(&common.out, "report.json", &json)?;
    write_file(&common.out, "report.txt", &explain(&analysis))?;
    println!("{}", explain(&analysis));
    Ok(analysis.verdict.exit_code())
}

pub fn cmd_spectrum(common: &CommonOpts, strip_flag: &Option<String>) -> Result<i32> {
    let (_, model, tols) = load(common)?;
    let validation = model.validate();
    if !validation.passed() || !validation.fundamental_ok() {
        return Err(Error::InvalidProblem(validation.summary()));
    }
    let pencil = Pencil::new(&model)?;
    let colloc = Collocation::new(&model, common.colloc_size.unwrap_or(tols.colloc_size))?;
    let r = common.re_halfwidth.unwrap_or(tols.re_halfwidth);
    let report = match strip_flag {
        None => strip_report(&pencil, &colloc, &tols, r)?,
        Some(text) => {
            let parts: Vec<&str> = text.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::InvalidProblem("--strip expects 'a,b'".into()));
            }
            let a: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidProblem(format!("--strip: {e}")))?;
            let b: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidProblem(format!("--strip: {e}")))?;
            if !(a < b) {
                return Err(Error::InvalidProblem("--strip needs a < b".into()));
            }
            // custom band: scan the requested window, classify against the
            // critical levels of the problem
            let scan = crate::spectrum::find_in_strip(
                &pencil,
                &colloc,
                &StripQuery { c1: a, c2: b, re_halfwidth: r },
                &tols,
            )?;
            let mut rep = strip_report(&pencil, &colloc, &tols, r)?;
            rep.eigenvalues = scan
                .records
                .into_iter()
                .map(|rec| {
                    let properness = crate::classify::classify_eigenvalue(&colloc, &rec, &tols);
                    crate::classify::ClassifiedEigenvalue {
                        record: rec,
                        location: Location::Outside,
                        properness,
                    }
                })
                .collect();
            rep
        }
    };
    let csv = eigenvalues_csv(&report);
    write_file(&common.out, "eigenvalues.csv", &csv)?;
    write_file(&common.out, "spectrum.svg", &strip_svg(&report))?;
    print!("{csv}");
    Ok(0)
}

pub fn cmd_certificate(common: &CommonOpts, lambda: &str) -> Result<i32> {
    let (_, model, tols) = load(common)?;
    let parts: Vec<&str> = lambda.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidProblem("--lambda expects 're,im'".into()));
    }
    let target = c(
        parts[0]
            .trim()
            .parse()
            .map_err(|e| Error::InvalidProblem(format!("--lambda: {e}")))?,
        parts[1]
            .trim()
            .parse()
            .map_err(|e| Error::InvalidProblem(format!("--lambda: {e}")))?,
    );
    let pencil = Pencil::new(&model)?;
    let colloc = Collocation::new(&model, common.colloc_size.unwrap_or(tols.colloc_size))?;
    let r = common.re_halfwidth.unwrap_or(tols.re_halfwidth);
    let strip = strip_report(&pencil, &colloc, &tols, r)?;
    let nearest = strip
        .eigenvalues
        .iter()
        .min_by(|a, b| {
            (a.record.lambda - target)
                .norm()
                .partial_cmp(&(b.record.lambda - target).norm())
                .unwrap()
        })
        .ok_or_else(|| Error::InvalidProblem("no eigenvalues in the scan window".into()))?;
    if nearest.properness.proper {
        return Err(Error::InvalidProblem(format!(
            "selected eigenvalue {:.9}+{:.9}i is proper; no singular certificate exists",
            nearest.record.lambda.re, nearest.record.lambda.im
        )));
    }
    let power = crate::certificate::build_power_solution(&nearest.record, &colloc, &tols)?;
    let radii = [1e-3, 1e-2, 0.1, 0.3, 1.0];
    let residual = crate::certificate::verify_residual(&power, &colloc, &radii);
    let blowup = crate::certificate::blowup_profile(&power, &colloc, 2..=12, &tols);
    #[derive(Serialize)]
    struct CertOut {
        schema: String,
        lambda0: (f64, f64),
        log_depth: usize,
        residual: crate::certificate::ResidualReport,
        blowup: crate::certificate::BlowupProfile,
        profile_samples: Vec<Vec<(f64, f64, f64)>>,
    }
    let samples: Vec<Vec<(f64, f64, f64)>> = power
        .profiles
        .iter()
        .map(|prof| {
            prof.iter()
                .enumerate()
                .flat_map(|(j, vals)| {
                    colloc.nodes[j]
                        .iter()
                        .zip(vals.iter())
                        .map(move |(&w, v)| (w, v.re, v.im))
                })
                .collect()
        })
        .collect();
    let out = CertOut {
        schema: "nlsmooth-certificate/1".into(),
        lambda0: (power.lambda0.re, power.lambda0.im),
        log_depth: power.l0,
        residual,
        blowup,
        profile_samples: samples,
    };
    let json = serde_json::to_string_pretty(&out)
        .map_err(|e| Error::Numerical(format!("serialization: {e}")))?;
    write_file(&common.out, "certificate.json", &json)?;
    println!("{json}");
    Ok(0)
}

pub fn cmd_consistency(common: &CommonOpts) -> Result<i32> {
    let (doc, model, tols) = load(common)?;
    let traces = doc
        .trace_set(&model)?
        .ok_or_else(|| Error::InvalidProblem("document carries no trace data".into()))?;
    let hat = build_hat_system(&model);
    let beta = beta_decompose(&hat, &tols);
    let functionals = consistency_check(&model, &beta, &traces, &tols)?;
    #[derive(Serialize)]
    struct ConsOut {
        schema: String,
        rank: usize,
        independent_rows: Vec<usize>,
        dependent: Vec<crate::consistency::DependentRow>,
        functionals: Vec<crate::consistency::FunctionalReport>,
    }
    let out = ConsOut {
        schema: "nlsmooth-consistency/1".into(),
        rank: beta.rank,
        independent_rows: beta.independent.clone(),
        dependent: beta.dependent.clone(),
        functionals: functionals.clone(),
    };
    let json = serde_json::to_string_pretty(&out)
        .map_err(|e| Error::Numerical(format!("serialization: {e}")))?;
    write_file(&common.out, "consistency.json", &json)?;
    for f in &functionals {
        println!(
            "row {}: {:?}{}",
            f.row_position,
            f.verdict,
            f.g_at_zero
                .map(|g| format!(" |g(0)| = {g:.3e}"))
                .unwrap_or_default()
        );
    }
    Ok(0)
}

/// Entry point used by the binary: configures the thread pool from
/// NLSMOOTH_THREADS, dispatches the subcommand and maps errors to exit
/// codes (2 for input problems, 1 for internal failures).
pub fn run() -> i32 {
    if let Ok(threads) = std::env::var("NLSMOOTH_THREADS") {
        if let Ok(n) = threads.trim().parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let args = CliArgs::parse();
    let result = match &args.command {
        Command::Analyze(common) => cmd_analyze(common),
        Command::Spectrum { common, strip } => cmd_spectrum(common, strip),
        Command::Certificate { common, lambda } => cmd_certificate(common, lambda),
        Command::Consistency(common) => cmd_consistency(common),
    };
    match result {
        Ok(code) => code,
        Err(Error::InvalidProblem(msg)) | Err(Error::Unsupported(msg)) => {
            eprintln!("input error: {msg}");
            2
        }
        Err(Error::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    #[test]
    fn round_trip_is_idempotent() {
        let p = oracle::fix_bs(0.5, -0.25, 2.0, 1.0, 1);
        let doc = ProblemDoc::from_model(&p);
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let doc2 = ProblemDoc::parse(&text).unwrap();
        let text2 = serde_json::to_string_pretty(&doc2).unwrap();
        assert_eq!(text, text2);
        let model2 = doc2.to_model().unwrap();
        assert_eq!(model2.half_angles, p.half_angles);
        assert_eq!(model2.rows.len(), p.rows.len());
        for (a, b) in model2.rows.iter().zip(p.rows.iter()) {
            assert_eq!(a.index(), b.index());
            assert_eq!(a.terms.len(), b.terms.len());
            for (ta, tb) in a.terms.iter().zip(b.terms.iter()) {
                assert_eq!(ta.rotation, tb.rotation);
                assert_eq!(ta.homothety, tb.homothety);
                assert_eq!(ta.op.coeffs, tb.op.coeffs);
            }
        }
    }

    #[test]
    fn malformed_document_is_input_error() {
        assert!(ProblemDoc::parse("{}").is_err());
        let missing_angles = r#"{"schema":"nlsmooth/1","order_2m":2,"ell":1,
            "components":[],"rows":[]}"#;
        let doc = ProblemDoc::parse(missing_angles).unwrap();
        assert!(doc.to_model().is_err());
    }

    #[test]
    fn csv_format() {
        let p = oracle::fix_bs(-0.5, -0.5, 1.0, 1.0, 1);
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 32).unwrap();
        let tols = Tols::default();
        let strip = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
        let csv = eigenvalues_csv(&strip);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "re,im,alg_mult,geo_mult,proper");
        let improper_row = lines.find(|l| l.contains("-0.666667")).unwrap();
        assert!(improper_row.ends_with("1,1,improper"), "{improper_row}");
    }
}
