use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use wavegraph::catalog;
use wavegraph::graph::IndexModel;
use wavegraph::operator::QuantumMap;
use wavegraph::spectral::{closed_spectrum, k_window, missing_fraction, weyl_count, ScanOptions};

#[test]
fn interval_roots_match_closed_form() {
    let (l, n) = (100.0, 1.5);
    let k1 = PI / (n * l);
    let set = closed_spectrum(
        &catalog::interval(l, n),
        0.5 * k1,
        500.5 * k1,
        ScanOptions::default(),
    )
    .unwrap();
    assert_eq!(set.count(), 500);
    for (j, r) in set.roots.iter().enumerate() {
        assert!((r.k - (j + 1) as f64 * k1).abs() <= 1e-9);
        assert_eq!(r.multiplicity, 1);
    }
}

#[test]
fn ring_roots_are_doubly_degenerate() {
    let (l, n) = (50.0, 2.0);
    let k1 = 2.0 * PI / (n * l);
    let set = closed_spectrum(
        &catalog::ring(l, n),
        0.5 * k1,
        100.5 * k1,
        ScanOptions::default(),
    )
    .unwrap();
    assert_eq!(set.roots.len(), 100);
    for (j, r) in set.roots.iter().enumerate() {
        assert!((r.k - (j + 1) as f64 * k1).abs() <= 1e-9);
        assert_eq!(r.multiplicity, 2);
        assert_eq!(r.null_dim, 2);
    }
}

/// Positions and null dimensions of the minima of the smallest singular value
/// of `I - U(k)` on a dense grid.
fn brute_force_roots(map: &QuantumMap, k_min: f64, k_max: f64, step: f64) -> Vec<(f64, usize)> {
    let n = ((k_max - k_min) / step) as usize;
    let ks: Vec<f64> = (0..=n).map(|i| k_min + step * i as f64).collect();
    let sv: Vec<nalgebra::DVector<f64>> = ks
        .iter()
        .map(|&k| {
            let a = nalgebra::DMatrix::<Complex64>::identity(map.dim(), map.dim())
                - map.u(Complex64::new(k, 0.0));
            a.singular_values()
        })
        .collect();
    let smin: Vec<f64> = sv.iter().map(|s| s.min()).collect();
    (1..n)
        .filter(|&i| smin[i] < smin[i - 1] && smin[i] <= smin[i + 1] && smin[i] < 1e-2)
        .map(|i| (ks[i], sv[i].iter().filter(|&&s| s < 1e-2).count()))
        .collect()
}

#[test]
fn star_degeneracies_match_determinant_scan() {
    let g = catalog::star(10.0);
    let (a, b) = (0.05, 2.0);
    let set = closed_spectrum(&g, a, b, ScanOptions::default()).unwrap();
    let brute = brute_force_roots(&QuantumMap::new(&g).unwrap(), a, b, 1e-4);
    assert_eq!(set.roots.len(), brute.len());
    for (r, (k, m)) in set.roots.iter().zip(&brute) {
        assert!((r.k - k).abs() < 1e-4);
        assert_eq!(r.multiplicity, *m);
        let j = (r.k * 20.0 / PI).round() as usize;
        assert!((r.k - j as f64 * PI / 20.0).abs() < 1e-9);
        assert_eq!(r.multiplicity, if j.is_multiple_of(2) { 2 } else { 1 });
    }
}

#[test]
fn btg_count_follows_weyl_law() {
    let g = catalog::btg();
    let (a, b) = k_window(1.50, 1.52);
    let set = closed_spectrum(&g, a, b, ScanOptions::default()).unwrap();
    let weyl = weyl_count(&g, b) - weyl_count(&g, a);
    assert!((set.count() as f64 - weyl).abs() < 0.05 * weyl + 3.0);
    assert!(missing_fraction(set.count(), &g, a, b).abs() < 0.05);
    assert_eq!(set.count(), set.winding);
    for r in &set.roots {
        assert!(r.residual < 1e-8);
    }
}

#[test]
fn coarse_grid_is_reported() {
    let opts = ScanOptions {
        grid_per_spacing: 0.05,
        ..ScanOptions::default()
    };
    let err = closed_spectrum(&catalog::btg(), 4.0, 4.2, opts).unwrap_err();
    assert!(matches!(err, wavegraph::Error::Resolution { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn doubling_index_halves_roots(n in 1.5f64..3.0, start in 4.0f64..4.1) {
        let base = catalog::btg().with_index(IndexModel::constant(n));
        let double = catalog::btg().with_index(IndexModel::constant(2.0 * n));
        let (a, b) = (start, start + 0.02);
        let r1 = closed_spectrum(&base, a, b, ScanOptions::default()).unwrap();
        let r2 = closed_spectrum(&double, a / 2.0, b / 2.0, ScanOptions::default()).unwrap();
        prop_assert_eq!(r1.count(), r2.count());
        for (x, y) in r1.levels().iter().zip(r2.levels()) {
            prop_assert!((x / 2.0 - y).abs() < 1e-9);
        }
    }
}
