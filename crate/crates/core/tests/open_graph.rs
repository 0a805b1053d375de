use proptest::prelude::*;
use wavegraph::catalog;
use wavegraph::length::k_grid;
use wavegraph::measured::{find_dips, k_to_lambda_nm, MeasuredSpectrum};
use wavegraph::open::{
    open_poles, open_transmission, ring_linewidth, transmission_sweep, OpenGraph,
};
use wavegraph::spectral::{closed_spectrum, k_window, mean_spacing, ScanOptions};

#[test]
fn ring_linewidths_follow_closed_form() {
    for (l, c, n) in [(40.0, 0.05, 2.4), (120.0, 0.3, 3.0), (75.0, 0.6, 1.8)] {
        let open = OpenGraph::new(catalog::side_coupled_ring(l, c, n)).unwrap();
        let roots = closed_spectrum(
            &open.closed_limit().unwrap(),
            4.0,
            4.3,
            ScanOptions::default(),
        )
        .unwrap();
        let poles = open_poles(&open, &roots.roots).unwrap();
        assert!(!poles.poles.is_empty());
        for p in &poles.poles {
            assert!((p.gamma() / ring_linewidth(l, c, n) - 1.0).abs() < 0.01);
        }
    }
}

#[test]
fn btg_dips_track_poles() {
    let base = catalog::btg();
    let open = OpenGraph::from_bus_placement(&base, 0.5).unwrap();
    let (a, b) = k_window(1.498, 1.502);
    let roots =
        closed_spectrum(&open.closed_limit().unwrap(), a, b, ScanOptions::default()).unwrap();
    let poles = open_poles(&open, &roots.roots).unwrap();
    let spacing = mean_spacing(&base);
    assert!(poles.max_shift() <= 0.1 * spacing);

    let k = k_grid(1.498, 1.502, 20_000);
    let t: Vec<f64> = transmission_sweep(&open, &k)
        .unwrap()
        .iter()
        .map(|x| x.power())
        .collect();
    let lambda: Vec<f64> = k.iter().map(|&x| k_to_lambda_nm(x)).collect();
    let dips = find_dips(&MeasuredSpectrum::new(lambda, t).unwrap(), 0.05, 0.1);
    let in_window = poles
        .poles
        .iter()
        .filter(|p| p.k.re >= a && p.k.re <= b)
        .count();
    assert_eq!(dips.detected(), in_window);

    for p in &poles.poles {
        let isolated = poles
            .poles
            .iter()
            .filter(|q| q.k != p.k)
            .all(|q| (q.k.re - p.k.re).abs() >= 2.0 * (p.gamma() + q.gamma()));
        if !isolated || p.gamma() > spacing / 5.0 {
            continue;
        }
        let fit = dips
            .fits
            .iter()
            .min_by(|x, y| (x.k0 - p.k.re).abs().total_cmp(&(y.k0 - p.k.re).abs()))
            .unwrap();
        assert!((fit.k0 - p.k.re).abs() < 0.05 * p.gamma());
        assert!((fit.fwhm_k / p.gamma() - 1.0).abs() < 0.05);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lead_scattering_matrix_is_unitary(c in 0.0f64..1.0, k in 4.0f64..4.3) {
        let open = OpenGraph::from_bus_placement(&catalog::btg(), c).unwrap();
        let t = open_transmission(&open, k).unwrap();
        prop_assume!(!t.near_pole);
        prop_assert!(t.unitarity_defect() < 1e-9);
        prop_assert!(t.power() <= 1.0 + 1e-9);
    }

    #[test]
    fn cavity_scattering_is_unitary(l1 in 10.0f64..100.0, l2 in 10.0f64..100.0, c in 0.01f64..0.99, k in 1.0f64..10.0) {
        let open = OpenGraph::new(catalog::fabry_perot(l1, l2, c, 2.0)).unwrap();
        let t = open_transmission(&open, k).unwrap();
        prop_assume!(!t.near_pole);
        prop_assert!(t.unitarity_defect() < 1e-9);
    }
}
