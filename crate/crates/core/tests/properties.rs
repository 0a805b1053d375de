use proptest::prelude::*;
use wavegraph::coupler::{splitting_from_phase, CouplerDesign};
use wavegraph::localization::{
    bond_probabilities, entropy, ipr, localization, BondIntensityProfile,
};
use wavegraph::measured::{find_dips, k_to_lambda_nm, lambda_nm_to_k, MeasuredSpectrum};

fn intensities() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, 2..30)
}

proptest! {
    #[test]
    fn localization_is_scale_invariant(i in intensities(), c in 1e-6f64..1e6) {
        let a = localization(&BondIntensityProfile::model(i.clone())).unwrap();
        let b = localization(&BondIntensityProfile::model(i.iter().map(|x| x * c).collect())).unwrap();
        prop_assert!((a.entropy_norm - b.entropy_norm).abs() < 1e-12);
        prop_assert!((a.ipr - b.ipr).abs() < 1e-12);
    }

    #[test]
    fn levelling_two_bonds_spreads_the_mode(i in intensities(), t in 0.0f64..0.5, a in 0usize..30, b in 0usize..30) {
        let p = bond_probabilities(&BondIntensityProfile::model(i)).unwrap();
        let (a, b) = (a % p.len(), b % p.len());
        prop_assume!(a != b);
        let mut q = p.clone();
        let d = t * (p[a] - p[b]);
        q[a] -= d;
        q[b] += d;
        prop_assert!(entropy(&q).0 >= entropy(&p).0 - 1e-12);
        prop_assert!(ipr(&q) <= ipr(&p) + 1e-12);
    }

    #[test]
    fn third_harmonic_cube_root_round_trip(i in intensities()) {
        let direct = bond_probabilities(&BondIntensityProfile::model(i.clone())).unwrap();
        let thg = bond_probabilities(&BondIntensityProfile::thg(i.iter().map(|x| x.powi(3)).collect())).unwrap();
        for (x, y) in direct.iter().zip(&thg) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_bounds(i in intensities()) {
        let r = localization(&BondIntensityProfile::model(i.clone())).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.entropy_norm));
        prop_assert!(r.ipr >= 1.0 / i.len() as f64 - 1e-12 && r.ipr <= 1.0 + 1e-12);
    }

    #[test]
    fn splitting_conserves_power(lambda in 1.40f64..1.70, l_dc in 0.0f64..100.0) {
        let s = CouplerDesign::design_point().with_l_dc(l_dc).splitting(lambda).unwrap();
        prop_assert_eq!(s.bar + s.cross, 1.0);
        prop_assert!((0.0..=1.0).contains(&s.cross));
    }

    #[test]
    fn splitting_is_periodic_in_phase(phi in -20.0f64..20.0) {
        let a = splitting_from_phase(phi);
        let b = splitting_from_phase(phi + std::f64::consts::TAU);
        prop_assert!((a.cross - b.cross).abs() < 1e-12);
    }

    #[test]
    fn wavelength_wavenumber_round_trip(l in 200.0f64..5000.0) {
        let back = k_to_lambda_nm(lambda_nm_to_k(l));
        prop_assert!((back - l).abs() <= 1e-12 * l);
    }

    #[test]
    fn noiseless_lorentzian_fit_is_exact(
        centre in 1549.9f64..1550.1,
        q in 2e4f64..2e5,
        depth in 0.2f64..0.95,
        base in 0.5f64..1.0,
    ) {
        let k0 = lambda_nm_to_k(centre);
        let w = k0 / q;
        let fwhm_nm = centre / q;
        let step = fwhm_nm / 12.0;
        let n = (12.0 * fwhm_nm / step) as usize;
        let lambda: Vec<f64> = (0..n).map(|i| centre - 6.0 * fwhm_nm + step * i as f64).collect();
        let t: Vec<f64> = lambda
            .iter()
            .map(|&l| {
                let u = 2.0 * (lambda_nm_to_k(l) - k0) / w;
                base * (1.0 - depth / (1.0 + u * u))
            })
            .collect();
        let r = find_dips(&MeasuredSpectrum::new(lambda, t).unwrap(), 0.05, 0.1);
        prop_assert_eq!(r.fits.len(), 1);
        let f = r.fits[0];
        prop_assert!((f.k0 - k0).abs() <= 1e-3 * w);
        prop_assert!((f.fwhm_k - w).abs() <= 1e-3 * w);
        prop_assert!((f.lambda0_nm - centre).abs() <= 1e-3 * fwhm_nm);
    }
}
