mod common;

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use wavegraph::classical::{classify, frobenius};
use wavegraph::operator::{assemble_sigma, evolution_operator, QuantumMap};
use wavegraph::Graph;

use common::random_graph;

fn sorted_moduli(mut z: Vec<Complex64>) -> Vec<f64> {
    let mut m: Vec<f64> = z.drain(..).map(|x| x.norm()).collect();
    m.sort_by(f64::total_cmp);
    m
}

fn permuted_bonds(g: &Graph, shift: usize) -> Graph {
    let mut bonds = g.bonds().to_vec();
    let n = bonds.len();
    bonds.rotate_left(shift % n);
    Graph::new("permuted", g.vertices().to_vec(), bonds, vec![], g.index).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn evolution_operator_is_unitary(seed in any::<u64>(), k in 0.5f64..50.0) {
        let g = random_graph(seed, 20);
        prop_assert!(g.num_bonds() <= 20);
        let op = evolution_operator(&g, k).unwrap();
        prop_assert!(op.unitarity_defect() <= 1e-10);
    }

    #[test]
    fn sigma_does_not_depend_on_k(seed in any::<u64>(), k1 in 0.5f64..50.0, k2 in 0.5f64..50.0) {
        let g = random_graph(seed, 20);
        let a = evolution_operator(&g, k1).unwrap().sigma;
        let b = evolution_operator(&g, k2).unwrap().sigma;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn frobenius_is_bistochastic(seed in any::<u64>()) {
        let g = random_graph(seed, 20);
        let f = frobenius(&assemble_sigma(&g).unwrap()).unwrap();
        prop_assert!(f.stochastic_defect() <= 1e-12);
        let n = f.dim();
        let uniform = DVector::from_element(n, 1.0 / n as f64);
        let image = f.evolve(&uniform, 1).unwrap();
        prop_assert!((image - &uniform).amax() <= 1e-12);
        let ev = f.eigenvalues();
        prop_assert!(ev.iter().any(|z| (z - Complex64::new(1.0, 0.0)).norm() <= 1e-9));
    }

    #[test]
    fn bond_relabelling_keeps_spectra(seed in any::<u64>(), shift in 0usize..20, k in 0.5f64..20.0) {
        let g = random_graph(seed, 12);
        let p = permuted_bonds(&g, shift);
        let ua = QuantumMap::new(&g).unwrap().eigenvalues(k).unwrap();
        let ub = QuantumMap::new(&p).unwrap().eigenvalues(k).unwrap();
        let mut aa: Vec<f64> = ua.iter().map(|z| z.arg()).collect();
        let mut bb: Vec<f64> = ub.iter().map(|z| z.arg()).collect();
        aa.sort_by(f64::total_cmp);
        bb.sort_by(f64::total_cmp);
        for (x, y) in aa.iter().zip(&bb) {
            prop_assert!((x - y).abs() < 1e-8 || (x - y).abs() > 6.0);
        }
        let fa = sorted_moduli(frobenius(&assemble_sigma(&g).unwrap()).unwrap().eigenvalues());
        let fb = sorted_moduli(frobenius(&assemble_sigma(&p).unwrap()).unwrap().eigenvalues());
        for (x, y) in fa.iter().zip(&fb) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn classification_ignores_cross_phase_convention(c in 0.05f64..0.95) {
        let g = wavegraph::catalog::btg().with_uniform_coupling(c).unwrap();
        let mut h = g.clone();
        for v in 0..h.vertices().len() {
            let s = h.vertices()[v].scatterer.conjugate_cross_phase();
            h = h.with_scatterer(v, s).unwrap();
        }
        let a = classify(&frobenius(&assemble_sigma(&g).unwrap()).unwrap());
        let b = classify(&frobenius(&assemble_sigma(&h).unwrap()).unwrap());
        prop_assert_eq!(a.is_mixing, b.is_mixing);
        prop_assert_eq!(a.unimodular.len(), b.unimodular.len());
        match (a.gap, b.gap) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
        }
    }
}
