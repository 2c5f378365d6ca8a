use phl::numerics::make_context;
use phl::opsys::BuildOptions;
use phl::painleve::*;
use phl::weight::WeightParams;
use proptest::prelude::*;
use rug::Float;

fn canonical(t: f64) -> WeightParams {
    WeightParams::new(1.3, 2.0, 1.0, 0.0, t)
}

fn general(t: f64) -> WeightParams {
    WeightParams::new(1.3, 1.5, 1.0, 1.0, t)
}

#[test]
fn catalogue_passes_at_low_precision() {
    let ctx = make_context(40).unwrap();
    let opts = SweepOptions { zs: vec![-1.0], ..Default::default() };
    for p in [canonical(1.0), general(0.7)] {
        let rows = verify_point(&p, &[1, 2], &ctx, &opts).unwrap();
        let bad: Vec<_> = rows.iter().filter(|r| !r.pass).map(|r| format!("{} n={} {:e}", r.id, r.n, r.residual_rel)).collect();
        assert!(bad.is_empty(), "failing rows: {bad:?}");
        for id in IdentityId::ALL {
            assert!(rows.iter().any(|r| r.id == id.as_str()), "missing {id}");
        }
    }
}

#[test]
fn perturbed_moment_is_detected() {
    let ctx = make_context(40).unwrap();
    let mut opts = SweepOptions { zs: vec![], ..Default::default() };
    opts.build = BuildOptions { perturb: Some((3, 1e-8)), ..Default::default() };
    let rows = verify_point(&canonical(1.0), &[1, 2, 3], &ctx, &opts).unwrap();
    let failing: std::collections::BTreeSet<_> = rows.iter().filter(|r| !r.pass).map(|r| r.id.clone()).collect();
    assert!(failing.len() >= 5, "only {failing:?} failed");
}

#[test]
fn identity_filter_restricts_report() {
    let ctx = make_context(30).unwrap();
    let opts = SweepOptions { ids: vec![IdentityId::S24, IdentityId::Td1], zs: vec![], ..Default::default() };
    let rows = verify_point(&canonical(0.5), &[1, 2], &ctx, &opts).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.id == "s24" || r.id == "td1"));
}

#[test]
fn small_t_limits_are_linear() {
    // R_n -> gamma/(alpha+gamma), r_n -> -n gamma/(alpha+gamma) with O(t) corrections.
    let ctx = make_context(40).unwrap();
    let p = canonical(1.0);
    let ag = 3.3;
    for n in 1..=2usize {
        let dev = |t: f64| {
            let (big_r, small_r) = riccati_at(n, &p.with_t_f64(t), &ctx).unwrap();
            let dr = (big_r.to_f64() - 2.0 / ag).abs();
            let ds = (small_r.to_f64() + n as f64 * 2.0 / ag).abs();
            (dr, ds)
        };
        let (a1, b1) = dev(1e-3);
        let (a2, b2) = dev(1e-4);
        for ratio in [a1 / a2, b1 / b2] {
            assert!((5.0..20.0).contains(&ratio), "n={n} ratio {ratio}");
        }
    }
}

#[test]
fn riccati_endpoint_matches_quadrature() {
    let ctx = make_context(40).unwrap();
    let bits = ctx.bits();
    let p = canonical(1.0);
    let t0 = Float::with_val(bits, 0.5);
    let t1 = Float::with_val(bits, 1.0);
    let tol = Float::with_val(bits, 1e-30);
    let traj = integrate_riccati(2, &p, &t0, &t1, &ctx, &tol).unwrap();
    let (big_r, small_r) = riccati_at(2, &p.with_t(t1.clone()), &ctx).unwrap();
    let k = traj.t_grid.len() - 1;
    assert!((traj.big_r[k].clone() - &big_r).abs().to_f64() < 1e-26);
    assert!((traj.small_r[k].clone() - &small_r).abs().to_f64() < 1e-26);

    let pv = integrate_pv(2, &p, &t0, &t1, &ctx, &tol).unwrap();
    let s_end = &pv.last_state()[0];
    assert!((s_end.clone() - mobius(&traj.big_r[k])).abs().to_f64() < 1e-24);
}

#[test]
fn int_rep_converges_and_vanishes_on_empty_span() {
    let ctx = make_context(40).unwrap();
    let bits = ctx.bits();
    let p = canonical(1.0);
    let a = Float::with_val(bits, 1.25);
    let b = Float::with_val(bits, 2.5);
    let rows = int_rep_sweep(&[1, 2], &a, &b, &p, 64, &ctx, &BuildOptions::default()).unwrap();
    for r in &rows {
        assert!(r.worst().rel < 1e-10, "n={} {:e}", r.n, r.worst().rel);
    }
    let z = residual_int_rep(2, &a, &a, &p, 40, &ctx).unwrap();
    assert_eq!(z.rel, 0.0);
    let (ad, used) = int_rep_adaptive(&[2], &a, &b, &p, 1e-12, 257, &ctx, &BuildOptions::default()).unwrap();
    assert!(used >= 65);
    assert!(ad[0].worst().rel < 1e-11);
}

#[test]
fn grid_too_small_is_rejected() {
    let ctx = make_context(30).unwrap();
    let bits = ctx.bits();
    let a = Float::with_val(bits, 0.5);
    let b = Float::with_val(bits, 1.0);
    assert!(residual_int_rep(1, &a, &b, &canonical(1.0), 8, &ctx).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mobius_is_an_involution(x in -50.0f64..50.0) {
        prop_assume!((x - 1.0).abs() > 1e-3);
        let v = Float::with_val(200, x);
        let back = mobius(&mobius(&v));
        prop_assert!((back - &v).abs().to_f64() <= 1e-50 * (1.0 + x.abs()));
    }

    #[test]
    fn tolerance_ladder_is_ordered(d in 20u32..400) {
        let a = ToleranceClass::Algebraic.tolerance(d);
        let f = ToleranceClass::FirstDerivative.tolerance(d);
        let s = ToleranceClass::SecondDerivative.tolerance(d);
        prop_assert!(a <= f && f <= s);
    }
}
