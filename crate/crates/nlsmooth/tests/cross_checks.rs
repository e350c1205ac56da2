//! Cross-method invariants and property tests that tie the independent
//! computation routes together.

use nlsmooth::classify::{classify_eigenvalue, strip_report, Location};
use nlsmooth::conditions::TriVerdict;
use nlsmooth::model::HomogeneousOperator;
use nlsmooth::numeric::{c, C64, SplitMix64};
use nlsmooth::oracle;
use nlsmooth::pencil::{Collocation, Pencil};
use nlsmooth::polar::{to_polar, TrigLambdaPoly};
use nlsmooth::spectrum::{count_zeros, find_in_strip, StripQuery};
use nlsmooth::tols::Tols;
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

#[test]
fn determinant_and_rank_agree_at_random_points() {
    let tols = Tols::default();
    for (p, name) in [
        (oracle::fix_bs(-0.5, -0.5, 1.0, 1.0, 1), "sum=-1"),
        (oracle::fix_hom(1.0, 2.0, 1), "hom chi=2"),
    ] {
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 32).unwrap();
        let mut rng = SplitMix64(7_777);
        let mut tested = 0;
        while tested < 100 {
            let lambda = c(rng.next_f64() * 2.0, -1.0 + rng.next_f64());
            let delta = pencil.char_det(lambda).norm();
            let ratio = colloc.rank_ratio(lambda);
            let det_zero = delta < 1e-9;
            let rank_zero = ratio < tols.spurious_rank_rel;
            assert_eq!(
                det_zero, rank_zero,
                "{name}: disagreement at {lambda}: |det| {delta:.3e}, rank ratio {ratio:.3e}"
            );
            tested += 1;
        }
    }
}

#[test]
fn eigenvalues_of_symmetric_fixture_sit_on_imaginary_axis() {
    let tols = Tols::default();
    for sum in [-1.5, -1.0, -0.5] {
        let p = oracle::fix_bs(sum / 2.0, sum / 2.0, 1.0, 1.0, 1);
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 32).unwrap();
        let scan = find_in_strip(
            &pencil,
            &colloc,
            &StripQuery { c1: -0.99, c2: -0.01, re_halfwidth: 10.0 },
            &tols,
        )
        .unwrap();
        for rec in &scan.records {
            assert!(
                rec.lambda.re.abs() < 1e-8,
                "sum={sum}: eigenvalue off the axis: {}",
                rec.lambda
            );
        }
    }
}

#[test]
fn winding_counts_stable_under_contour_perturbation() {
    let tols = Tols::default();
    let p = oracle::fix_bs(-0.5, -0.5, 1.0, 1.0, 1);
    let pencil = Pencil::new(&p).unwrap();
    let mut rng = SplitMix64(5150);
    for _ in 0..12 {
        let dx = rng.next_f64() * 0.07;
        let dy = rng.next_f64() * 0.03;
        let n = count_zeros(&pencil, -1.0 + dx, 1.0 + dx, -0.9 + dy, -0.1 + dy, &tols).unwrap();
        assert_eq!(n, 1, "shifted rectangle lost the zero (dx={dx}, dy={dy})");
    }
    // a zero-free contour integrates to zero winding exactly
    let gap = count_zeros(&pencil, 0.4, 1.4, -0.5, -0.1, &tols).unwrap();
    assert_eq!(gap, 0);
}

#[test]
fn band_empty_when_top_regularity_and_all_proper() {
    // with ell = 2m-1 the admissible exponent set is empty, so a strip
    // report whose band eigenvalues are all proper must have none at all
    let tols = Tols::default();
    for sum in [-2.5, -1.0, 0.0, 0.5, 1.5] {
        let p = oracle::fix_bs(sum / 2.0, sum / 2.0, 1.0, 1.0, 1);
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 32).unwrap();
        let rep = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
        if rep.band_all_proper {
            assert_eq!(
                rep.in_band().count(),
                0,
                "sum={sum}: proper in-band eigenvalue with ell = 2m-1"
            );
        }
    }
}

#[test]
fn conditions_routing_covers_every_degree_once() {
    let tols = Tols::default();
    for p in [
        oracle::fix_loc(FRAC_PI_2, 0),
        oracle::fix_b4(1.1, 0),
        oracle::fix_b4(FRAC_PI_2, 0),
        oracle::fix_b4(FRAC_PI_2, 2),
    ] {
        let pencil = Pencil::new(&p).unwrap();
        let colloc = Collocation::new(&p, 32).unwrap();
        let strip = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
        let rep =
            nlsmooth::conditions::check_monomial_conditions(&colloc, &strip, &tols).unwrap();
        if p.ell + 2 > p.order_2m {
            assert!(!rep.applicable);
            continue;
        }
        let degrees: Vec<usize> = rep.per_degree.iter().map(|d| d.s).collect();
        let expected: Vec<usize> = (p.ell..=(p.order_2m - 2)).collect();
        assert_eq!(degrees, expected, "routing must cover the full range once");
        for d in &rep.per_degree {
            // the adjoint-orthogonality step runs exactly on spectrum hits
            assert_eq!(d.orthogonality.is_some(), d.in_spectrum);
            // non-empty index set is prerequisite for orthogonality: a
            // failed prerequisite forces a failed pairing check
            if d.in_spectrum && d.j_set_nonempty_when_needed == TriVerdict::Fail {
                assert_eq!(
                    d.orthogonality.as_ref().unwrap().verdict,
                    TriVerdict::Fail
                );
            }
        }
    }
}

#[test]
fn plate_fixture_spectrum_against_double_resolution() {
    // the clamped-plate fixture has no closed form; its oracle is the same
    // computation at doubled collocation resolution
    let tols = Tols::default();
    let p = oracle::fix_b4(1.1, 2);
    let pencil = Pencil::new(&p).unwrap();
    let coarse = Collocation::new(&p, 32).unwrap();
    let fine = Collocation::new(&p, 64).unwrap();
    let scan = find_in_strip(
        &pencil,
        &coarse,
        &StripQuery { c1: -4.5, c2: -0.05, re_halfwidth: 8.0 },
        &tols,
    )
    .unwrap();
    assert!(
        scan.records.len() >= 4,
        "expected the two complex pairs in the band, got {:?}",
        scan.records.iter().map(|r| r.lambda).collect::<Vec<_>>()
    );
    // complex pairs come with their mirror images for real coefficients
    for rec in &scan.records {
        let mirror = c(-rec.lambda.re, rec.lambda.im);
        assert!(
            scan.records.iter().any(|r| (r.lambda - mirror).norm() < 1e-7),
            "missing mirror of {}",
            rec.lambda
        );
    }
    for rec in &scan.records {
        let r32 = coarse.rank_ratio(rec.lambda);
        let r64 = fine.rank_ratio(rec.lambda);
        assert!(r32 < 1e-8, "coarse rank ratio {r32:.3e} at {}", rec.lambda);
        assert!(r64 < 1e-8, "fine rank ratio {r64:.3e} at {}", rec.lambda);
    }
}

#[test]
fn classification_stable_across_resolution() {
    let tols = Tols::default();
    let p = oracle::fix_bs(0.7, -0.7, 1.0, 1.0, 1);
    let pencil = Pencil::new(&p).unwrap();
    for m_c in [32usize, 48, 64] {
        let colloc = Collocation::new(&p, m_c).unwrap();
        let rep = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
        assert!(rep.border_case, "m_c = {m_c}");
        let e = rep.on_line().next().unwrap();
        let v = classify_eigenvalue(&colloc, &e.record, &tols);
        assert!(v.proper, "m_c = {m_c}");
    }
}

#[test]
fn adjoint_pairing_matches_double_resolution() {
    // dual vectors computed at doubled resolution give the same boundary
    // pairings (up to normalization) as the working resolution
    let tols = Tols::default();
    let p = oracle::fix_bs(0.4, -0.4, 1.0, 1.0, 1);
    let lam = c(0.0, -1.0);
    let a32 = Collocation::new(&p, 32)
        .unwrap()
        .adjoint_kernel(lam, tols.spurious_rank_rel, 1)
        .unwrap();
    let a64 = Collocation::new(&p, 64)
        .unwrap()
        .adjoint_kernel(lam, tols.spurious_rank_rel, 1)
        .unwrap();
    let b32 = &a32[0].boundary;
    let b64 = &a64[0].boundary;
    // compare the boundary parts as rays: normalize by the first component
    let ratio32 = b32[1] / b32[0];
    let ratio64 = b64[1] / b64[0];
    assert!(
        (ratio32 - ratio64).norm() < 1e-6,
        "boundary pairing rays differ: {ratio32} vs {ratio64}"
    );
}

#[test]
fn certificate_residual_invariant_under_profile_rescaling() {
    let tols = Tols::default();
    let p = oracle::fix_bs(-0.5, -0.5, 1.0, 1.0, 1);
    let pencil = Pencil::new(&p).unwrap();
    let colloc = Collocation::new(&p, 48).unwrap();
    let scan = find_in_strip(
        &pencil,
        &colloc,
        &StripQuery { c1: -0.99, c2: -0.01, re_halfwidth: 10.0 },
        &tols,
    )
    .unwrap();
    let mut ps =
        nlsmooth::certificate::build_power_solution(&scan.records[0], &colloc, &tols).unwrap();
    let base = nlsmooth::certificate::verify_residual(&ps, &colloc, &[0.1, 1.0]);
    let phase = c(0.0, 1.234).exp() * 3.7;
    for prof in ps.profiles.iter_mut() {
        for compv in prof.iter_mut() {
            for v in compv.iter_mut() {
                *v *= phase;
            }
        }
    }
    let scaled = nlsmooth::certificate::verify_residual(&ps, &colloc, &[0.1, 1.0]);
    assert!((base.interior_max_rel - scaled.interior_max_rel).abs() < 1e-12);
    assert!((base.boundary_max_rel - scaled.boundary_max_rel).abs() < 1e-12);
}

#[test]
fn closed_form_logderivative_agreement_local() {
    let p = oracle::fix_loc(0.9, 1);
    let pencil = Pencil::new(&p).unwrap();
    let mut rng = SplitMix64(808);
    let mut tested = 0;
    while tested < 50 {
        let lambda = c(rng.next_f64() * 2.5, rng.next_f64() * 2.5);
        let closed = oracle::loc_delta(lambda, 0.9);
        if closed.norm() < 0.2 || lambda.norm() < 0.2 {
            continue;
        }
        let h = 1e-6;
        let ld_closed = (oracle::loc_delta(lambda + c(h, 0.0), 0.9)
            - oracle::loc_delta(lambda - c(h, 0.0), 0.9))
            / (c(2.0 * h, 0.0) * closed);
        let ld = pencil.char_det_logderiv(lambda);
        assert!(
            (ld - ld_closed).norm() <= 1e-6 * (1.0 + ld_closed.norm()),
            "lambda {lambda}: {ld} vs {ld_closed}"
        );
        tested += 1;
    }
}

#[test]
fn spurious_zero_filtering_works_at_basis_degeneration() {
    // the exponential basis degenerates at lambda = 0; the normalized
    // determinant and the rank filter must keep the spectrum clean there
    let tols = Tols::default();
    let p = oracle::fix_bs(0.9, 0.7, 1.0, 1.0, 1);
    let pencil = Pencil::new(&p).unwrap();
    let colloc = Collocation::new(&p, 32).unwrap();
    assert!(pencil.basis_health(c(0.0, 0.0)) < 1e-12);
    let scan = find_in_strip(
        &pencil,
        &colloc,
        &StripQuery { c1: -0.4, c2: 0.4, re_halfwidth: 3.0 },
        &tols,
    )
    .unwrap();
    assert!(
        scan.records.is_empty(),
        "degeneration leaked: {:?}",
        scan.records.iter().map(|r| r.lambda).collect::<Vec<_>>()
    );
}

#[test]
fn upper_edge_eigenvalues_do_not_blow_verdicts() {
    // real-axis eigenvalues for strongly negative parameter sums sit on the
    // band edge and must be recorded without disturbing the verdict
    let tols = Tols::default();
    let p = oracle::fix_bs(-1.25, -1.25, 1.0, 1.0, 1);
    let pencil = Pencil::new(&p).unwrap();
    let colloc = Collocation::new(&p, 32).unwrap();
    let rep = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
    let edge: Vec<_> = rep
        .eigenvalues
        .iter()
        .filter(|e| e.location == Location::UpperEdge)
        .collect();
    assert_eq!(edge.len(), 2, "expected the symmetric real pair on the edge");
    assert!(edge.iter().all(|e| e.record.lambda.im.abs() < 1e-7));
    assert!(rep.line_clear);
    assert!(!rep.violation_band);
}

#[test]
fn homothety_fixture_newton_on_closed_form() {
    // Newton on the closed-form determinant of the homothety fixture from
    // the stated start converges to a zero that the strip search confirms.
    let (b, chi) = (1.0, 2.0);
    let zero = oracle::newton_on(
        |l| oracle::bs_delta(l, b, 0.0, chi, 1.0),
        c(-0.5, -0.5),
        1e-13,
    )
    .expect("closed-form Newton converged");
    let p = oracle::fix_hom(b, chi, 1);
    let pencil = Pencil::new(&p).unwrap();
    let colloc = Collocation::new(&p, 48).unwrap();
    let tols = Tols::default();
    let scan = find_in_strip(
        &pencil,
        &colloc,
        &StripQuery {
            c1: zero.im - 0.2,
            c2: zero.im + 0.2,
            re_halfwidth: zero.re.abs() + 1.0,
        },
        &tols,
    )
    .unwrap();
    let hit = scan
        .records
        .iter()
        .map(|r| (r.lambda - zero).norm())
        .fold(f64::MAX, f64::min);
    assert!(hit <= 1e-8, "closed-form zero {zero} vs strip search (gap {hit:.3e})");
}

#[test]
fn near_line_eigenvalue_is_flagged_as_straddling() {
    // parameter tuned so the eigenvalue sits inside the ambiguity ring of
    // the critical line: reported as straddling, not on-line
    let tols = Tols::default();
    let eps = std::f64::consts::PI * 5e-7;
    let p = oracle::fix_bs(-eps / 2.0, -eps / 2.0, 1.0, 1.0, 1);
    let pencil = Pencil::new(&p).unwrap();
    let colloc = Collocation::new(&p, 32).unwrap();
    let line = nlsmooth::spectrum::line_eigenvalues(&pencil, &colloc, -1.0, 10.0, &tols).unwrap();
    assert!(line.on_line.is_empty());
    assert_eq!(line.straddling.len(), 1, "{:?}", line.straddling);
    let rep = strip_report(&pencil, &colloc, &tols, 10.0).unwrap();
    assert!(!rep.straddle.is_empty());
    let a = nlsmooth::verdict::analyze(&p, &nlsmooth::verdict::AnalyzeOptions::default()).unwrap();
    assert_eq!(a.verdict, nlsmooth::verdict::Verdict::Undetermined);
}

#[test]
fn log_witness_with_integer_exponent_in_spectrum() {
    // Clamped plate on the half-plane opening at ell = 2: the band holds
    // only proper eigenvalues, but degree-2 monomial data pairs
    // nontrivially with the adjoint kernel at the in-band eigenvalue -2i.
    // The violation witness must carry a genuine log term on top of the
    // polynomial eigenvector.
    let p = oracle::fix_b4(FRAC_PI_2, 2);
    let a = nlsmooth::verdict::analyze(&p, &nlsmooth::verdict::AnalyzeOptions::default()).unwrap();
    assert_eq!(a.verdict, nlsmooth::verdict::Verdict::Violated);
    let cond = a.conditions.as_ref().unwrap();
    let deg2 = cond.per_degree.iter().find(|d| d.s == 2).unwrap();
    assert!(deg2.in_spectrum);
    assert_eq!(deg2.j_set_size, 0);
    let orth = deg2.orthogonality.as_ref().unwrap();
    assert_eq!(orth.verdict, TriVerdict::Fail);
    assert!(orth.max_pairing > 0.1);
    let cert = a.certificate.as_ref().unwrap();
    assert_eq!(cert.power.l0, 1, "witness must carry the log term");
    assert!(cert.residual.interior_max_rel <= 1e-7);
    assert!(cert.residual.boundary_max_rel <= 1e-7);
    // order-2m derivatives annihilate the polynomial log factor, so the
    // annulus ratios sit at the clean theoretical constant
    assert!((cert.blowup.fitted_ratio - 4.0).abs() < 0.02 * 4.0);
    // the solution value itself carries the logarithm: fit V(r)/r^2 at a
    // fixed angle to A + B (i ln r) from two radii and predict a third
    let colloc = Collocation::new(&p, Tols::default().colloc_size).unwrap();
    let omega = 0.37;
    let v = |r: f64| cert.power.eval(&colloc, 0, r, omega) / c(r * r, 0.0);
    let (r1, r2, r3) = (0.2f64, 0.02f64, 0.002f64);
    let (v1, v2) = (v(r1), v(r2));
    let b = (v1 - v2) / (c(0.0, 1.0) * (r1.ln() - r2.ln()));
    let a0 = v1 - b * c(0.0, r1.ln());
    assert!(
        b.norm() > 1e-3 * a0.norm().max(1e-12),
        "log coefficient too small: A = {a0}, B = {b}"
    );
    let predicted = a0 + b * c(0.0, r3.ln());
    let actual = v(r3);
    assert!(
        (predicted - actual).norm() <= 1e-8 * (1.0 + actual.norm()),
        "radial profile is not A + B ln r: predicted {predicted}, actual {actual}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn polar_reduction_is_linear(
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = SplitMix64(seed);
        let ca: Vec<C64> = (0..=k).map(|_| rng.next_c64()).collect();
        let cb: Vec<C64> = (0..=k).map(|_| rng.next_c64()).collect();
        let alpha = rng.next_c64();
        let a = HomogeneousOperator::new(k, ca.clone()).unwrap();
        let b = HomogeneousOperator::new(k, cb.clone()).unwrap();
        let combined = HomogeneousOperator::new(
            k,
            ca.iter().zip(&cb).map(|(&x, &y)| alpha * x + y).collect(),
        )
        .unwrap();
        let pa = to_polar(&a);
        let pb = to_polar(&b);
        let pc = to_polar(&combined);
        for n in 0..=k {
            let mut expect = TrigLambdaPoly::zero();
            expect.add(&pa.coeffs[n], alpha);
            expect.add(&pb.coeffs[n], c(1.0, 0.0));
            let mut diff = pc.coeffs[n].clone();
            diff.add(&expect, c(-1.0, 0.0));
            let scale = expect.max_abs().max(pc.coeffs[n].max_abs()).max(1.0);
            prop_assert!(diff.max_abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn lambda_shift_consistency(
        seed in any::<u64>(),
        shift_re in -2.0f64..2.0,
        shift_im in -2.0f64..2.0,
    ) {
        // shifting lambda in the table then evaluating equals evaluating at
        // the shifted argument
        let mut rng = SplitMix64(seed);
        let mut t = TrigLambdaPoly::zero();
        for _ in 0..6 {
            let kappa = (rng.next_u64() % 7) as i32 - 3;
            let p = (rng.next_u64() % 4) as u32;
            t.add_term(kappa, p, rng.next_c64());
        }
        let shift = c(shift_re, shift_im);
        let shifted = t.shift_lambda(shift);
        let lambda = rng.next_c64();
        let omega = rng.next_f64() * 1.4;
        let direct = t.eval(omega, lambda + shift);
        let via_shift = shifted.eval(omega, lambda);
        prop_assert!(
            (direct - via_shift).norm() <= 1e-11 * (1.0 + direct.norm()),
            "direct {direct} vs shifted {via_shift}"
        );
    }
}
