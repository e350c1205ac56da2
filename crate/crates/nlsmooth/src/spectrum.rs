//! Nonlinear eigenvalue solver for the normalized characteristic
//! determinant: winding-number counting on rectangles, adaptive subdivision,
//! Newton refinement on the exact logarithmic derivative, spurious-zero
//! filtering through the collocation rank test, and Jordan structure from
//! successive least-squares chain extension.

use crate::model::{Error, Result};
use crate::numeric::{c, equilibrate_rows, lstsq_min_norm, C64};
use crate::pencil::{Collocation, LogVal, Pencil};
use crate::tols::Tols;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Search box: c1 < Im lambda < c2, |Re lambda| <= re_halfwidth.
#[derive(Debug, Clone)]
pub struct StripQuery {
    pub c1: f64,
    pub c2: f64,
    pub re_halfwidth: f64,
}

/// A located eigenvalue with its multiplicities, kernel data and chains.
#[derive(Debug, Clone)]
pub struct EigenvalueRecord {
    pub lambda: C64,
    pub alg: usize,
    pub geo: usize,
    pub partials: Vec<usize>,
    /// Kernel profiles as per-component node values on the collocation grid.
    pub profiles: Vec<Vec<Vec<C64>>>,
    /// Jordan chains: chains[k] extends profiles-vector k; each entry is a
    /// full collocation vector (flat). chains[k][0] is the eigenvector.
    pub chains: Vec<Vec<DVector<C64>>>,
    /// Kernel coefficient vectors in the fundamental basis, when the basis
    /// is healthy at this lambda.
    pub basis_coeffs: Option<Vec<DVector<C64>>>,
    /// Relative collocation rank ratio at lambda (the kernel residual).
    pub rank_ratio: f64,
    /// Relative residual of the basis-coefficient kernel vectors, if any.
    pub coeff_residual: Option<f64>,
    /// Set when the record came from an unresolved tiny cell with several
    /// zeros; multiplicity structure may be a cluster.
    pub cluster: bool,
}

impl EigenvalueRecord {
    pub fn has_associated_vector(&self) -> bool {
        self.alg > self.geo
    }
}

#[derive(Debug, Clone)]
pub struct StripScan {
    pub records: Vec<EigenvalueRecord>,
    pub spurious: Vec<C64>,
    pub cap_ok: bool,
    pub cap_min_logabs: f64,
    pub effective_re_halfwidth: f64,
}

#[derive(Debug, Clone)]
pub struct LineScan {
    pub on_line: Vec<EigenvalueRecord>,
    pub straddling: Vec<C64>,
}

enum ContourFail {
    OnZero,
    TooDeep,
}

fn wrap_angle(d: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    d - two_pi * (d / two_pi).round()
}

struct ContourAccum {
    phase: f64,
    moment: C64,
    evals: usize,
}

fn refine_segment(
    f: &dyn Fn(C64) -> LogVal,
    path: &dyn Fn(f64) -> C64,
    ta: f64,
    va: LogVal,
    tb: f64,
    vb: LogVal,
    depth: usize,
    acc: &mut ContourAccum,
) -> std::result::Result<(), ContourFail> {
    if !va.log_abs.is_finite() || !vb.log_abs.is_finite() || va.arg.is_nan() || vb.arg.is_nan() {
        return Err(ContourFail::OnZero);
    }
    let d = wrap_angle(vb.arg - va.arg);
    let dla = vb.log_abs - va.log_abs;
    if d.abs() <= 0.8 && dla.abs() <= 1.0 {
        let la = path(ta);
        let lb = path(tb);
        let mid = (la + lb) * 0.5;
        let dlog = c(dla, d);
        acc.phase += d;
        acc.moment += mid * dlog;
        return Ok(());
    }
    if depth >= 46 {
        return Err(ContourFail::TooDeep);
    }
    let tm = 0.5 * (ta + tb);
    let vm = f(path(tm));
    acc.evals += 1;
    refine_segment(f, path, ta, va, tm, vm, depth + 1, acc)?;
    refine_segment(f, path, tm, vm, tb, vb, depth + 1, acc)
}

/// Winding number and first moment of d log Delta along a closed path,
/// parametrized over [0, 1]. Returns None when the contour runs through a
/// zero (caller nudges and retries).
fn contour_winding(
    f: &dyn Fn(C64) -> LogVal,
    path: &dyn Fn(f64) -> C64,
    init_samples: usize,
    slack: f64,
) -> Option<(i64, C64)> {
    let n = init_samples.max(8);
    let ts: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let vals: Vec<LogVal> = ts.iter().map(|&t| f(path(t))).collect();
    if vals.iter().any(|v| !v.log_abs.is_finite() || v.arg.is_nan()) {
        return None;
    }
    let mut acc = ContourAccum { phase: 0.0, moment: c(0.0, 0.0), evals: 0 };
    for k in 0..n {
        match refine_segment(f, path, ts[k], vals[k], ts[k + 1], vals[k + 1], 0, &mut acc) {
            Ok(()) => {}
            Err(_) => return None,
        }
    }
    let w = acc.phase / (2.0 * std::f64::consts::PI);
    if (w - w.round()).abs() > slack {
        return None;
    }
    let winding = w.round() as i64;
    let two_pi_i = c(0.0, 2.0 * std::f64::consts::PI);
    Some((winding, acc.moment / two_pi_i))
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    re0: f64,
    re1: f64,
    im0: f64,
    im1: f64,
}

impl Rect {
    fn center(&self) -> C64 {
        c(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))
    }

    fn path(&self) -> impl Fn(f64) -> C64 + '_ {
        move |t: f64| {
            let t = t * 4.0;
            if t < 1.0 {
                c(self.re0 + t * (self.re1 - self.re0), self.im0)
            } else if t < 2.0 {
                c(self.re1, self.im0 + (t - 1.0) * (self.im1 - self.im0))
            } else if t < 3.0 {
                c(self.re1 - (t - 2.0) * (self.re1 - self.re0), self.im1)
            } else {
                c(self.re0, self.im1 - (t - 3.0) * (self.im1 - self.im0))
            }
        }
    }
}

fn rect_winding(
    pencil: &Pencil,
    rect: Rect,
    tols: &Tols,
) -> Option<(i64, C64)> {
    let f = |l: C64| pencil.char_det_log(l);
    let per_edge = 12;
    contour_winding(&f, &rect.path(), 4 * per_edge, tols.winding_integer_slack)
}

/// Zero count of the normalized determinant inside a rectangle. The contour
/// is perturbed outward and retried when a zero sits on it.
pub fn count_zeros(
    pencil: &Pencil,
    re0: f64,
    re1: f64,
    im0: f64,
    im1: f64,
    tols: &Tols,
) -> Result<usize> {
    let mut rect = Rect { re0, re1, im0, im1 };
    for attempt in 0..5 {
        if let Some((w, _)) = rect_winding(pencil, rect, tols) {
            if w < 0 {
                return Err(Error::Numerical("negative winding number".into()));
            }
            return Ok(w as usize);
        }
        let eps = 2e-7 * (attempt + 1) as f64;
        rect = Rect {
            re0: re0 - eps * (1.0 + re0.abs()),
            re1: re1 + eps * (1.0 + re1.abs()),
            im0: im0 - eps * (1.0 + im0.abs()),
            im1: im1 + eps * (1.0 + im1.abs()),
        };
    }
    Err(Error::Numerical(
        "contour repeatedly passes through a zero of the determinant".into(),
    ))
}

struct Leaf {
    rect: Rect,
    count: usize,
    moment: C64,
}

fn subdivide(pencil: &Pencil, root: Rect, root_count: usize, root_moment: C64, tols: &Tols) -> Vec<Leaf> {
    let mut queue = vec![Leaf { rect: root, count: root_count, moment: root_moment }];
    let mut leaves = Vec::new();
    while let Some(leaf) = queue.pop() {
        if leaf.count == 0 {
            continue;
        }
        let rect = leaf.rect;
        let w = rect.re1 - rect.re0;
        let h = rect.im1 - rect.im0;
        let scale = 1.0 + leaf.rect.center().norm();
        if leaf.count == 1 || w.max(h) <= 1e-8 * scale {
            leaves.push(leaf);
            continue;
        }
        let split_re = w >= h;
        let len = if split_re { w } else { h };
        let mut split_done = false;
        for k in 0..6 {
            let shift = match k {
                0 => 0.0,
                _ => len * 1e-5 * (1 << (k - 1)) as f64 * if k % 2 == 0 { -1.0 } else { 1.0 },
            };
            let mid = if split_re {
                0.5 * (rect.re0 + rect.re1) + shift
            } else {
                0.5 * (rect.im0 + rect.im1) + shift
            };
            let (ra, rb) = if split_re {
                (
                    Rect { re1: mid, ..rect },
                    Rect { re0: mid, ..rect },
                )
            } else {
                (
                    Rect { im1: mid, ..rect },
                    Rect { im0: mid, ..rect },
                )
            };
            let wa = rect_winding(pencil, ra, tols);
            let wb = rect_winding(pencil, rb, tols);
            if let (Some((ca, ma)), Some((cb, mb))) = (wa, wb) {
                if ca + cb == leaf.count as i64 && ca >= 0 && cb >= 0 {
                    queue.push(Leaf { rect: ra, count: ca as usize, moment: ma });
                    queue.push(Leaf { rect: rb, count: cb as usize, moment: mb });
                    split_done = true;
                    break;
                }
            }
        }
        if !split_done {
            // unsplittable cluster; keep as a joint leaf
            leaves.push(leaf);
        }
    }
    leaves
}

fn newton_polish(pencil: &Pencil, start: C64, bound_center: C64, bound_radius: f64, tols: &Tols) -> Option<C64> {
    let mut l = start;
    for _ in 0..80 {
        let ld = pencil.char_det_logderiv(l);
        if !ld.re.is_finite() || !ld.im.is_finite() || ld.norm() == 0.0 {
            l += c(1e-11, 1e-11);
            continue;
        }
        let step = c(1.0, 0.0) / ld;
        l -= step;
        if (l - bound_center).norm() > bound_radius {
            return None;
        }
        if step.norm() <= tols.newton_step_rel * (1.0 + l.norm()) {
            return Some(l);
        }
    }
    Some(l)
}

fn inside(rect: Rect, l: C64, margin: f64) -> bool {
    l.re >= rect.re0 - margin
        && l.re <= rect.re1 + margin
        && l.im >= rect.im0 - margin
        && l.im <= rect.im1 + margin
}

/// Shrinks a count-one rectangle around its zero by repeated bisection.
fn shrink_to_zero(pencil: &Pencil, rect: Rect, count: usize, tols: &Tols) -> C64 {
    let mut cur = rect;
    for _ in 0..90 {
        let scale = 1.0 + cur.center().norm();
        if (cur.re1 - cur.re0).max(cur.im1 - cur.im0) <= 1e-10 * scale {
            break;
        }
        let split_re = (cur.re1 - cur.re0) >= (cur.im1 - cur.im0);
        let len = if split_re { cur.re1 - cur.re0 } else { cur.im1 - cur.im0 };
        let mut advanced = false;
        for k in 0..5 {
            let shift = match k {
                0 => 0.0,
                _ => len * 1e-4 * k as f64 * if k % 2 == 0 { -1.0 } else { 1.0 },
            };
            let mid = if split_re {
                0.5 * (cur.re0 + cur.re1) + shift
            } else {
                0.5 * (cur.im0 + cur.im1) + shift
            };
            let (ra, rb) = if split_re {
                (Rect { re1: mid, ..cur }, Rect { re0: mid, ..cur })
            } else {
                (Rect { im1: mid, ..cur }, Rect { im0: mid, ..cur })
            };
            if let Some((ca, _)) = rect_winding(pencil, ra, tols) {
                if ca as usize == count {
                    cur = ra;
                    advanced = true;
                    break;
                }
                if let Some((cb, _)) = rect_winding(pencil, rb, tols) {
                    if cb as usize == count && ca == 0 {
                        cur = rb;
                        advanced = true;
                        break;
                    }
                }
            }
        }
        if !advanced {
            break;
        }
    }
    cur.center()
}

/// Refines a zero inside a leaf and returns (location, multiplicity hint,
/// cluster flag).
fn locate_in_leaf(pencil: &Pencil, leaf: &Leaf, tols: &Tols) -> (C64, usize, bool) {
    let rect = leaf.rect;
    let center = rect.center();
    let radius = c(rect.re1 - rect.re0, rect.im1 - rect.im0).norm();
    let margin = 1e-7 * (1.0 + center.norm());
    let seed = if leaf.count >= 1 {
        leaf.moment / leaf.count as f64
    } else {
        center
    };
    let seed = if (seed - center).norm() <= radius { seed } else { center };
    for start in [seed, center] {
        if let Some(l) = newton_polish(pencil, start, center, radius.max(1e-6) * 8.0, tols) {
            if inside(rect, l, margin) {
                return (l, leaf.count, false);
            }
        }
    }
    // Newton kept escaping: pin the zero down by bisection, then polish
    let pinned = shrink_to_zero(pencil, rect, leaf.count, tols);
    if let Some(l) = newton_polish(pencil, pinned, pinned, 1e-6 * (1.0 + pinned.norm()), tols) {
        if inside(rect, l, margin) {
            return (l, leaf.count, false);
        }
    }
    (pinned, leaf.count, leaf.count > 1)
}

fn circle_winding(pencil: &Pencil, center: C64, radius: f64, tols: &Tols) -> Option<i64> {
    let mut r = radius;
    for _ in 0..14 {
        let f = |l: C64| pencil.char_det_log(l);
        let path = |t: f64| {
            let ang = 2.0 * std::f64::consts::PI * t;
            center + c(r * ang.cos(), r * ang.sin())
        };
        if let Some((w, _)) = contour_winding(&f, &path, 48, tols.winding_integer_slack) {
            return Some(w);
        }
        r *= 0.7;
    }
    None
}

/// Finds eigenvalues of the pencil in the open box of the query, filtering
/// zeros of the determinant at which the collocation matrix stays full rank
/// (fundamental-basis degeneration artifacts).
pub fn find_in_strip(
    pencil: &Pencil,
    colloc: &Collocation,
    query: &StripQuery,
    tols: &Tols,
) -> Result<StripScan> {
    let mut r = query.re_halfwidth;
    let mut cap_min;
    let mut widened = false;
    loop {
        cap_min = cap_diagnostic(pencil, r, query.c1, query.c2);
        if cap_min > tols.cap_min_abs.ln() || widened {
            break;
        }
        r *= 2.0;
        widened = true;
    }
    let cap_ok = cap_min > tols.cap_min_abs.ln();

    let mut root = Rect { re0: -r, re1: r, im0: query.c1, im1: query.c2 };
    let mut found = None;
    for attempt in 0..6 {
        if let Some(res) = rect_winding(pencil, root, tols) {
            found = Some(res);
            break;
        }
        let eps = 2e-7 * (attempt + 1) as f64;
        root = Rect {
            re0: -r - eps * (1.0 + r),
            re1: r + eps * (1.0 + r),
            im0: query.c1 - eps * (1.0 + query.c1.abs()),
            im1: query.c2 + eps * (1.0 + query.c2.abs()),
        };
    }
    let (total, moment) = found.ok_or_else(|| {
        Error::Numerical("outer contour repeatedly passes through zeros".into())
    })?;
    if total < 0 {
        return Err(Error::Numerical("negative winding on outer contour".into()));
    }
    let mut records = Vec::new();
    let mut spurious = Vec::new();
    if total > 0 {
        let leaves = subdivide(pencil, root, total as usize, moment, tols);
        let located: Vec<(C64, usize, bool)> = leaves
            .par_iter()
            .map(|leaf| locate_in_leaf(pencil, leaf, tols))
            .collect();
        // deduplicate
        let mut cands: Vec<(C64, usize, bool)> = Vec::new();
        for (l, mult_hint, cluster) in located {
            match cands
                .iter_mut()
                .find(|(x, _, _)| (*x - l).norm() <= tols.dedup_rel * (1.0 + l.norm()))
            {
                Some(entry) => {
                    entry.1 += mult_hint;
                    entry.2 |= cluster;
                }
                None => cands.push((l, mult_hint, cluster)),
            }
        }
        cands.sort_by(|a, b| {
            (a.0.im, a.0.re)
                .partial_cmp(&(b.0.im, b.0.re))
                .unwrap()
        });
        // spurious filter via collocation rank
        let filtered: Vec<(C64, usize, bool, f64)> = cands
            .par_iter()
            .map(|&(l, mult, cl)| (l, mult, cl, colloc.rank_ratio(l)))
            .collect();
        let mut survivors = Vec::new();
        for (l, mult, cl, ratio) in filtered {
            if ratio < tols.spurious_rank_rel {
                survivors.push((l, mult, cl, ratio));
            } else {
                spurious.push(l);
            }
        }
        // multiplicities via tight circles; candidates closer than the
        // winding resolution are one cluster and get merged
        let mut cands: Vec<(C64, usize, bool, f64)> = survivors;
        let mut algs: Vec<(usize, f64)> = Vec::new();
        for _pass in 0..8 {
            let positions: Vec<C64> = cands.iter().map(|s| s.0).collect();
            algs = cands
                .par_iter()
                .enumerate()
                .map(|(i, &(l, mult_hint, _, _))| {
                    let mut gap = f64::MAX;
                    for (k, &other) in positions.iter().enumerate() {
                        if k != i {
                            gap = gap.min((other - l).norm());
                        }
                    }
                    let radius = (gap / 3.0).clamp(1e-7, 0.05);
                    let alg = circle_winding(pencil, l, radius, tols)
                        .map(|w| w.max(0) as usize)
                        .unwrap_or(mult_hint)
                        .max(1);
                    (alg, radius)
                })
                .collect();
            let mut merged = false;
            'outer: for i in 0..cands.len() {
                for j in (i + 1)..cands.len() {
                    let dist = (cands[i].0 - cands[j].0).norm();
                    if dist <= algs[i].1.max(algs[j].1) {
                        let (li, lj) = (cands[i].0, cands[j].0);
                        let merged_cand = (
                            (li + lj) * 0.5,
                            algs[i].0.max(algs[j].0),
                            cands[i].2 || cands[j].2,
                            cands[i].3.min(cands[j].3),
                        );
                        cands[i] = merged_cand;
                        cands.remove(j);
                        merged = true;
                        break 'outer;
                    }
                }
            }
            if !merged {
                break;
            }
        }
        if algs.len() != cands.len() {
            algs = cands
                .iter()
                .map(|&(l, mult_hint, _, _)| {
                    let alg = circle_winding(pencil, l, 1e-7, tols)
                        .map(|w| w.max(0) as usize)
                        .unwrap_or(mult_hint)
                        .max(1);
                    (alg, 1e-7)
                })
                .collect();
        }
        let built: Vec<Result<EigenvalueRecord>> = cands
            .par_iter()
            .zip(algs.par_iter())
            .map(|(&(l, _hint, cl, ratio), &(alg, _))| {
                build_record(pencil, colloc, l, alg, cl, ratio, tols)
            })
            .collect();
        for r in built {
            records.push(r?);
        }
        records.sort_by(|a, b| {
            (a.lambda.im, a.lambda.re)
                .partial_cmp(&(b.lambda.im, b.lambda.re))
                .unwrap()
        });
    }
    Ok(StripScan {
        records,
        spurious,
        cap_ok,
        cap_min_logabs: cap_min,
        effective_re_halfwidth: r,
    })
}

fn cap_diagnostic(pencil: &Pencil, r: f64, c1: f64, c2: f64) -> f64 {
    let mut min_log = f64::INFINITY;
    for side in [-r, r] {
        for k in 0..=64 {
            let im = c1 + (c2 - c1) * k as f64 / 64.0;
            let v = pencil.char_det_log(c(side, im));
            min_log = min_log.min(v.log_abs);
        }
    }
    min_log
}

fn build_record(
    pencil: &Pencil,
    colloc: &Collocation,
    lambda: C64,
    alg: usize,
    cluster: bool,
    rank_ratio: f64,
    tols: &Tols,
) -> Result<EigenvalueRecord> {
    let mut kernel = colloc.kernel(lambda, tols.spurious_rank_rel);
    if kernel.is_empty() {
        // threshold straddling: loosen towards the observed rank ratio
        kernel = colloc.kernel(lambda, (rank_ratio * 10.0).max(tols.spurious_rank_rel));
    }
    if kernel.is_empty() {
        return Err(Error::Numerical(format!(
            "eigenvalue {lambda} passed the rank filter but yields no kernel vector"
        )));
    }
    let geo = kernel.len();
    let alg = alg.max(geo);
    let profiles: Vec<Vec<Vec<C64>>> = kernel.iter().map(|v| colloc.split(v)).collect();
    let (partials, chains) = jordan_chains(colloc, lambda, &kernel, alg, tols)?;
    // fundamental-basis coefficient vectors when the basis is healthy
    let (basis_coeffs, coeff_residual) = if pencil.basis_health(lambda) > 1e-10 {
        let m = pencil.matrix(lambda);
        let (eq, _) = equilibrate_rows(&m);
        let (vecs, _, smax) = crate::numeric::null_space(&eq, tols.spurious_rank_rel * 10.0);
        if vecs.is_empty() {
            (None, None)
        } else {
            let resid = vecs
                .iter()
                .map(|v| (&eq * v).norm() / (smax * v.norm()))
                .fold(0.0, f64::max);
            if resid <= tols.eig_residual_rel {
                (Some(vecs), Some(resid))
            } else {
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    Ok(EigenvalueRecord {
        lambda,
        alg,
        geo,
        partials,
        profiles,
        chains,
        basis_coeffs,
        rank_ratio,
        coeff_residual,
        cluster,
    })
}

/// Chain extension by successive least squares. chains[k][m] solves
/// C x_m = - sum_{t=1}^{m} (1/t!) C^(t) x_{m-t}; existence per direction is
/// decided by the relative residual.
fn jordan_chains(
    colloc: &Collocation,
    lambda: C64,
    kernel: &[DVector<C64>],
    alg: usize,
    tols: &Tols,
) -> Result<(Vec<usize>, Vec<Vec<DVector<C64>>>)> {
    let geo = kernel.len();
    if geo == 0 {
        return Ok((vec![], vec![]));
    }
    if alg == geo {
        // sum of partial multiplicities equals alg, each at least one:
        // all equal one and no eigenvector has an associated vector
        return Ok((vec![1; geo], kernel.iter().map(|v| vec![v.clone()]).collect()));
    }
    let c0 = colloc.matrix(lambda);
    let c1 = colloc.matrix_dlambda(lambda, 1);
    let c2 = colloc.matrix_dlambda(lambda, 2);
    let left = colloc.left_kernel(lambda, geo).unwrap_or_default();
    let mnorm = c0.norm();
    // solvability matrix <C' phi_n, mu_k>
    let mut chains: Vec<Vec<DVector<C64>>> = Vec::new();
    let mut partials = Vec::new();
    let mut basis_dirs: Vec<DVector<C64>> = Vec::new();
    if left.len() == geo && geo > 0 {
        let mut p = DMatrix::<C64>::zeros(geo, geo);
        for (n, phi) in kernel.iter().enumerate() {
            let v = &c1 * phi;
            for (k, mu) in left.iter().enumerate() {
                let pairing: C64 = mu.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                p[(n, k)] = pairing;
            }
        }
        // null directions of P^T give eigenvector combinations with chains
        let (null_dirs, _, _) = crate::numeric::null_space(&p.transpose(), 1e-6);
        for a in null_dirs {
            let mut dir = DVector::<C64>::zeros(kernel[0].len());
            for (n, phi) in kernel.iter().enumerate() {
                dir += phi * a[n];
            }
            let nrm = dir.norm();
            if nrm > 1e-12 {
                basis_dirs.push(dir / c(nrm, 0.0));
            }
        }
    }
    if basis_dirs.is_empty() {
        basis_dirs.push(kernel[0].clone());
    }
    // complete with the remaining kernel directions
    for phi in kernel {
        let mut residual = phi.clone();
        for d in &basis_dirs {
            let proj: C64 = d.iter().zip(residual.iter()).map(|(a, b)| a.conj() * b).sum();
            residual -= d * proj;
        }
        if residual.norm() > 1e-8 * phi.norm() {
            basis_dirs.push(residual.normalize());
        }
    }
    basis_dirs.truncate(geo);
    let mut extra = alg - geo;
    for dir in &basis_dirs {
        let mut chain = vec![dir.clone()];
        while extra > 0 {
            let m = chain.len();
            if m >= 3 {
                break; // third lambda-derivative not assembled; stop extension
            }
            // rhs = -sum_{t=1..m} (1/t!) C^(t) x_{m-t}
            let mut rhs = DVector::<C64>::zeros(dir.len());
            rhs -= &c1 * &chain[m - 1];
            if m >= 2 {
                rhs -= (&c2 * &chain[m - 2]) * c(0.5, 0.0);
            }
            let (x, res) = lstsq_min_norm(&c0, &rhs, tols.spurious_rank_rel);
            let scale = mnorm * (x.norm() + chain.iter().map(|v| v.norm()).sum::<f64>()).max(1e-300);
            if res / scale <= tols.assoc_residual {
                chain.push(x);
                extra -= 1;
            } else {
                break;
            }
        }
        partials.push(chain.len());
        chains.push(chain);
    }
    // account for multiplicity that could not be attached to a chain
    if extra > 0 && !partials.is_empty() {
        partials[0] += extra;
    }
    partials.sort_unstable_by(|a, b| b.cmp(a));
    Ok((partials, chains))
}

/// Independent eigenvalue localization through the collocation matrix only:
/// Newton-type iteration driving the smallest singular value to zero,
/// lambda <- lambda - sigma / (u^H C'(lambda) v) with u, v the extreme
/// singular vectors. Returns the refined location when the iteration
/// converges to a rank-deficient point.
pub fn refine_rank_deficiency(
    colloc: &Collocation,
    start: C64,
    tols: &Tols,
) -> Option<C64> {
    let mut lambda = start;
    for _ in 0..60 {
        let m = colloc.matrix(lambda);
        let svd = m.svd(true, true);
        let (mut sigma, mut idx) = (f64::MAX, 0usize);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s < sigma {
                sigma = s;
                idx = i;
            }
        }
        if smax == 0.0 {
            return None;
        }
        let u = svd.u.as_ref()?.column(idx).into_owned();
        let v = svd.v_t.as_ref()?.row(idx).adjoint();
        let dm = colloc.matrix_dlambda(lambda, 1);
        let denom: C64 = {
            let w = &dm * &v;
            u.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum()
        };
        if denom.norm() == 0.0 {
            return None;
        }
        let step = C64::new(sigma, 0.0) / denom;
        lambda -= step;
        if step.norm() <= tols.newton_step_rel.max(1e-13) * (1.0 + lambda.norm()) {
            return if colloc.rank_ratio(lambda) < tols.spurious_rank_rel * 10.0 {
                Some(lambda)
            } else {
                None
            };
        }
    }
    None
}

/// Eigenvalues on the horizontal line Im lambda = level, found by scanning a
/// razor-thin band and snapping.
pub fn line_eigenvalues(
    pencil: &Pencil,
    colloc: &Collocation,
    level: f64,
    re_halfwidth: f64,
    tols: &Tols,
) -> Result<LineScan> {
    let query = StripQuery {
        c1: level - tols.line_band,
        c2: level + tols.line_band,
        re_halfwidth,
    };
    let scan = find_in_strip(pencil, colloc, &query, tols)?;
    let mut on_line = Vec::new();
    let mut straddling = Vec::new();
    for rec in scan.records {
        if (rec.lambda.im - level).abs() <= tols.line_snap {
            on_line.push(rec);
        } else {
            straddling.push(rec.lambda);
        }
    }
    Ok(LineScan { on_line, straddling })
}
