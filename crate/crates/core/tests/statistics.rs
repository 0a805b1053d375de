use proptest::prelude::*;
use wavegraph::rmt::*;

fn identity_rhs(u: &UnfoldedSpectrum, l: f64, steps: usize) -> f64 {
    let h = l / steps as f64;
    let rs: Vec<f64> = (1..=steps).map(|i| i as f64 * h).collect();
    let s2 = number_variance(u, &rs);
    let f = |r: f64, s: f64| (l.powi(3) - 2.0 * l * l * r + r.powi(3)) * s;
    // Trapezoid rule with Sigma^2(0) = 0.
    let mut sum = 0.0;
    let mut prev = (0.0, 0.0);
    for p in &s2.points {
        let cur = (p.l, f(p.l, p.value));
        sum += 0.5 * (cur.0 - prev.0) * (cur.1 + prev.1);
        prev = cur;
    }
    2.0 / l.powi(4) * sum
}

#[test]
fn poisson_sequence_matches_linear_curves() {
    let u = poisson_levels(10_000, 11);
    let ls: Vec<f64> = (1..=10).map(|l| l as f64).collect();
    for p in number_variance(&u, &ls).points {
        assert!(
            (p.value - sigma2_poisson(p.l)).abs() <= 3.0 * p.std_err,
            "{p:?}"
        );
    }
    for p in rigidity_delta3(&u, &ls).points {
        assert!(
            (p.value - delta3_poisson(p.l)).abs() <= 3.0 * p.std_err,
            "{p:?}"
        );
    }
}

#[test]
fn goe_sample_follows_rmt_curves() {
    let u = goe_levels(2000, 5);
    let ls = [1.0, 2.0, 3.0, 5.0];
    for p in number_variance(&u, &ls).points {
        assert!(
            (p.value - sigma2_goe(p.l)).abs() <= 3.0 * p.std_err + 0.02,
            "{p:?}"
        );
    }
    // The rigidity reference is a large-L asymptote.
    for p in rigidity_delta3(&u, &[10.0, 20.0]).points {
        assert!(
            (p.value - delta3_goe(p.l)).abs() <= 3.0 * p.std_err,
            "{p:?}"
        );
    }
    let ks = nnsd(&u, None).ks;
    assert!(ks.goe < ks.poisson);
}

#[test]
fn delta3_is_integral_of_sigma2() {
    for u in [poisson_levels(20_000, 3), goe_levels(2000, 9)] {
        for l in [2.0, 5.0] {
            let lhs = rigidity_delta3(&u, &[l]).points[0].value;
            let rhs = identity_rhs(&u, l, 400);
            assert!((lhs - rhs).abs() <= 0.02 * lhs, "L={l}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn picket_fence_rigidity() {
    let u = from_unfolded(
        (0..2000).map(|i| i as f64 + 0.5).collect(),
        LevelSource::Synthetic,
    )
    .unwrap();
    let p = rigidity_delta3(&u, &[20.0]).points[0];
    assert!((p.value - 1.0 / 12.0).abs() < 0.01);
}

#[test]
fn short_sequences_drop_long_windows() {
    let u = poisson_levels(100, 1);
    let c = number_variance(&u, &[1.0, 5.0, 20.0]);
    assert_eq!(c.points.len(), 2);
    assert_eq!(c.dropped, vec![20.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn statistics_ignore_global_shift(seed in 0u64..1000, c in -1000i32..1000) {
        let u = poisson_levels(600, seed);
        let v = u.shifted(c as f64);
        let (a, b) = (nnsd(&u, None), nnsd(&v, None));
        for (x, y) in a.spacings.iter().zip(&b.spacings) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!((a.ks.goe - b.ks.goe).abs() < 1e-9);
        let ls = [1.0, 3.0];
        for (p, q) in number_variance(&u, &ls).points.iter().zip(number_variance(&v, &ls).points) {
            prop_assert!((p.value - q.value).abs() < 1e-9);
        }
        for (p, q) in rigidity_delta3(&u, &ls).points.iter().zip(rigidity_delta3(&v, &ls).points) {
            prop_assert!((p.value - q.value).abs() < 1e-9);
        }
    }

    #[test]
    fn cumulative_is_monotone(seed in 0u64..1000) {
        let s = nnsd(&poisson_levels(300, seed), None);
        prop_assert!(s.cumulative.windows(2).all(|w| w[1].1 >= w[0].1));
        let h = s.histogram.unwrap();
        let area: f64 = h.density.iter().sum::<f64>() * h.bin_width();
        prop_assert!((area - 1.0).abs() < 1e-9);
    }
}
