//! The quantum map `U_B(k) = P(k) Sigma` on directed bonds, lead couplings
//! for open graphs, and eigenmode extraction.
//!
//! Amplitude vectors live on directed bonds and are taken at the arrival end:
//! `Sigma` scatters arriving waves into departing waves, `P(k)` carries them
//! along the bond.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{Attachment, Graph, IndexModel, PortRef};

/// Absolute tolerance on `||Sigma^H Sigma - I||_F` for closed graphs.
pub const SIGMA_UNITARITY_TOL: f64 = 1e-10;
/// Largest smallest-singular-value accepted by [`eigenmode_at`].
pub const SPECTRAL_POINT_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Directed bond leaving port `p`, if `p` is a bond end.
fn departing(graph: &Graph, p: PortRef) -> Option<usize> {
    match graph.attachment(p) {
        Attachment::BondEnd { bond, end } => Some(graph.basis().index(bond, end == 0)),
        Attachment::Lead(_) => None,
    }
}

/// Nonzero outgoing amplitudes for a unit wave arriving on port `p`.
fn scatter_from(graph: &Graph, p: PortRef) -> Vec<(Attachment, PortRef, Complex64)> {
    let vertex = &graph.vertices()[p.vertex];
    (0..vertex.scatterer.degree())
        .filter_map(|q| {
            let a = vertex.scatterer.matrix[(q, p.slot)];
            let out = PortRef {
                vertex: p.vertex,
                slot: q,
            };
            (a != ZERO).then(|| (graph.attachment(out), out, a))
        })
        .collect()
}

/// Sigma together with the lead couplings of an open graph.
#[derive(Clone, Debug)]
pub struct Scattering {
    /// `2B x 2B` internal block.
    pub sigma: DMatrix<Complex64>,
    /// `2B x nleads`: lead `i` into departing directed bonds.
    pub w_in: DMatrix<Complex64>,
    /// `nleads x 2B`: arriving directed bonds out to lead `j`.
    pub w_out: DMatrix<Complex64>,
    /// `nleads x nleads`: lead to lead without entering a bond.
    pub direct: DMatrix<Complex64>,
}

pub fn assemble_scattering(graph: &Graph) -> Scattering {
    let n = graph.basis().len();
    let nl = graph.leads().len();
    let mut sigma = DMatrix::from_element(n, n, ZERO);
    let mut w_in = DMatrix::from_element(n, nl, ZERO);
    let mut w_out = DMatrix::from_element(nl, n, ZERO);
    let mut direct = DMatrix::from_element(nl, nl, ZERO);

    for (d, db) in graph.basis().iter().enumerate() {
        for (att, out, a) in scatter_from(graph, db.destination) {
            match att {
                Attachment::Lead(j) => w_out[(j, d)] += a,
                Attachment::BondEnd { .. } => sigma[(departing(graph, out).unwrap(), d)] += a,
            }
        }
    }
    for (i, &lp) in graph.leads().iter().enumerate() {
        for (att, out, a) in scatter_from(graph, lp) {
            match att {
                Attachment::Lead(j) => direct[(j, i)] += a,
                Attachment::BondEnd { .. } => w_in[(departing(graph, out).unwrap(), i)] += a,
            }
        }
    }
    Scattering {
        sigma,
        w_in,
        w_out,
        direct,
    }
}

/// Bond-scattering matrix `Sigma`. For graphs with leads this is the
/// subunitary internal block.
pub fn assemble_sigma(graph: &Graph) -> Result<DMatrix<Complex64>> {
    for v in graph.vertices() {
        v.scatterer.validate()?;
    }
    let sigma = assemble_scattering(graph).sigma;
    if !graph.is_open() {
        let defect = crate::scatterer::unitarity_defect(&sigma);
        if defect > SIGMA_UNITARITY_TOL {
            return Err(Error::Validation(format!(
                "assembled Sigma is not unitary (defect {defect:.3e})"
            )));
        }
    }
    Ok(sigma)
}

/// Reusable evaluator of `U_B(k)` for one graph.
#[derive(Clone, Debug)]
pub struct QuantumMap {
    pub sigma: DMatrix<Complex64>,
    /// Length of each directed bond.
    pub lengths: Vec<f64>,
    pub index: IndexModel,
    pub open: bool,
}

impl QuantumMap {
    pub fn new(graph: &Graph) -> Result<Self> {
        Ok(Self::from_sigma(graph, assemble_sigma(graph)?))
    }

    pub fn from_sigma(graph: &Graph, sigma: DMatrix<Complex64>) -> Self {
        let lengths = graph
            .basis()
            .iter()
            .map(|d| graph.bonds()[d.bond].length_um)
            .collect();
        Self {
            sigma,
            lengths,
            index: graph.index,
            open: graph.is_open(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    /// Diagonal of `P(k)`.
    pub fn phases(&self, k: Complex64) -> DVector<Complex64> {
        DVector::from_iterator(
            self.lengths.len(),
            self.lengths
                .iter()
                .map(|&l| (Complex64::i() * self.index.phase(k, l)).exp()),
        )
    }

    /// Sum of all directed-bond phases at real `k`.
    pub fn total_phase(&self, k: f64) -> f64 {
        let k = Complex64::new(k, 0.0);
        self.lengths
            .iter()
            .map(|&l| self.index.phase(k, l).re)
            .sum()
    }

    pub fn u(&self, k: Complex64) -> DMatrix<Complex64> {
        let p = self.phases(k);
        let mut u = self.sigma.clone();
        for (i, mut row) in u.row_iter_mut().enumerate() {
            row *= p[i];
        }
        u
    }

    pub fn eigenvalues(&self, k: f64) -> Result<Vec<Complex64>> {
        eigenvalues(self.u(Complex64::new(k, 0.0)))
    }
}

/// Eigenvalues by complex Schur decomposition. Shifted QR can stall on
/// permutation-like matrices, so a failed attempt is retried on a fixed
/// Householder similarity transform of `m`.
pub fn eigenvalues(m: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let max_iter = 100 * n.max(10);
    let attempt = |a: DMatrix<Complex64>| {
        Schur::try_new(a, f64::EPSILON, max_iter).and_then(|s| s.eigenvalues())
    };
    if let Some(ev) = attempt(m.clone()) {
        return Ok(ev.iter().copied().collect());
    }
    let v = DVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.37 * i as f64, 0.11 * (i * i) as f64)
    });
    let h = DMatrix::<Complex64>::identity(n, n)
        - (&v * v.adjoint()) * Complex64::new(2.0 / v.norm_squared(), 0.0);
    attempt(&h * m * &h)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Validation("Schur decomposition did not converge".into()))
}

#[derive(Clone, Debug)]
pub struct EvolutionOperator {
    pub k: f64,
    pub sigma: DMatrix<Complex64>,
    /// Diagonal of `P(k)`.
    pub phases: DVector<Complex64>,
    pub u: DMatrix<Complex64>,
    pub open: bool,
}

impl EvolutionOperator {
    pub fn unitarity_defect(&self) -> f64 {
        crate::scatterer::unitarity_defect(&self.u)
    }

    /// Secular function `det(I - U_B(k))`.
    pub fn secular(&self) -> Complex64 {
        let n = self.u.nrows();
        (DMatrix::identity(n, n) - &self.u).determinant()
    }
}

pub fn evolution_operator(graph: &Graph, k: f64) -> Result<EvolutionOperator> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    let map = QuantumMap::new(graph)?;
    let kc = Complex64::new(k, 0.0);
    Ok(EvolutionOperator {
        k,
        phases: map.phases(kc),
        u: map.u(kc),
        sigma: map.sigma,
        open: map.open,
    })
}

#[derive(Clone, Debug)]
pub struct Eigenmode {
    pub k: f64,
    /// Unit-norm null vector of `I - U_B(k)` (arrival amplitudes).
    pub amplitudes: DVector<Complex64>,
    /// Orthonormal null-space basis when the root is degenerate.
    pub null_basis: Vec<DVector<Complex64>>,
    pub degenerate: bool,
    pub residual: f64,
    pub sigma_min: f64,
    /// Mean of `|psi_b(x)|^2` along each bond.
    pub bond_intensity: Vec<f64>,
}

/// Eigenmode at a spectral point `k`, from the smallest singular direction of
/// `I - U_B(k)`.
pub fn eigenmode_at(graph: &Graph, k: f64) -> Result<Eigenmode> {
    let map = QuantumMap::new(graph)?;
    eigenmode_with(&map, graph, k)
}

pub fn eigenmode_with(map: &QuantumMap, graph: &Graph, k: f64) -> Result<Eigenmode> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    let n = map.dim();
    let u = map.u(Complex64::new(k, 0.0));
    let a = DMatrix::identity(n, n) - &u;
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^H");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sigma_min = svd.singular_values[order[0]];
    if sigma_min > SPECTRAL_POINT_TOL {
        return Err(Error::NotSpectralPoint { k, sigma_min });
    }
    let null_basis: Vec<DVector<Complex64>> = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] <= SPECTRAL_POINT_TOL)
        .map(|&i| v_t.row(i).adjoint())
        .collect();
    let amplitudes = null_basis[0].clone();
    let residual = (&a * &amplitudes).norm();
    let bond_intensity = bond_intensities(map, graph, k, &amplitudes);
    Ok(Eigenmode {
        k,
        degenerate: null_basis.len() > 1,
        amplitudes,
        null_basis,
        residual,
        sigma_min,
        bond_intensity,
    })
}

/// Mean intensity on each bond for arrival amplitudes `a` at real `k`.
///
/// On bond `b` the field is `psi(x) = a+ e^{i beta x} + a- e^{-i beta x}` with
/// `a+` the forward departure amplitude and `a-` the backward one referred to
/// `x = 0`.
pub fn bond_intensities(
    map: &QuantumMap,
    graph: &Graph,
    k: f64,
    a: &DVector<Complex64>,
) -> Vec<f64> {
    let start = &map.sigma * a;
    let kc = Complex64::new(k, 0.0);
    graph
        .bonds()
        .iter()
        .enumerate()
        .map(|(b, bond)| {
            let l = bond.length_um;
            let phase = map.index.phase(kc, l).re;
            let beta = phase / l;
            let ap = start[2 * b];
            let am = start[2 * b + 1] * Complex64::from_polar(1.0, phase);
            let x = Complex64::new(0.0, 2.0 * phase);
            let avg = if phase.abs() < 1e-12 {
                Complex64::new(1.0, 0.0)
            } else {
                (x.exp() - 1.0) / (Complex64::new(0.0, 2.0 * beta) * l)
            };
            ap.norm_sqr() + am.norm_sqr() + 2.0 * (ap * am.conj() * avg).re
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::f64::consts::PI;

    #[test]
    fn interval_sigma_is_swap() {
        let s = assemble_sigma(&catalog::interval(1.0, 1.0)).unwrap();
        assert_eq!(s[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(s[(1, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(s[(0, 0)].norm() + s[(1, 1)].norm(), 0.0);
    }

    #[test]
    fn balanced_couplers_give_equal_moduli() {
        let s = assemble_sigma(&catalog::btg()).unwrap();
        assert!(crate::scatterer::unitarity_defect(&s) < 1e-12);
        for z in s.iter().filter(|z| z.norm() > 0.0) {
            assert!((z.norm() - 0.5f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn sigma_follows_incidence() {
        let g = catalog::fg();
        let s = assemble_sigma(&g).unwrap();
        let basis = g.basis();
        for (col, d) in basis.iter().enumerate() {
            for row in 0..basis.len() {
                if s[(row, col)].norm() > 0.0 {
                    assert_eq!(basis.get(row).origin.vertex, d.destination.vertex);
                }
            }
        }
    }

    #[test]
    fn sigma_rows_follow_vertex_scatterers() {
        for g in [catalog::btg(), catalog::fg()] {
            let s = assemble_sigma(&g).unwrap();
            for (row, d) in g.basis().iter().enumerate() {
                let sigma = &g.vertices()[d.origin.vertex].scatterer.matrix;
                let expected = sigma
                    .row(d.origin.slot)
                    .iter()
                    .filter(|z| z.norm() > 0.0)
                    .count();
                let found = s.row(row).iter().filter(|z| z.norm() > 0.0).count();
                assert_eq!(found, expected);
            }
        }
    }

    #[test]
    fn interval_secular_vanishes_at_n_pi() {
        let g = catalog::interval(1.0, 1.0);
        for n in 1..5 {
            let op = evolution_operator(&g, n as f64 * PI).unwrap();
            assert!(op.secular().norm() < 1e-12);
        }
        let op = evolution_operator(&g, 0.5 * PI).unwrap();
        assert!(op.secular().norm() > 1.0);
    }

    #[test]
    fn nonpositive_k_is_domain_error() {
        assert!(matches!(
            evolution_operator(&catalog::ring(1.0, 1.0), 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn commensurate_period_repeats_operator() {
        let g = catalog::star(1.0);
        let k = 0.731;
        let a = evolution_operator(&g, k).unwrap();
        let b = evolution_operator(&g, k + 2.0 * PI).unwrap();
        assert!((&a.u - &b.u).norm() < 1e-12);
    }

    #[test]
    fn interval_mode_is_standing_wave() {
        let g = catalog::interval(1.0, 1.0);
        let m = eigenmode_at(&g, PI).unwrap();
        assert!(!m.degenerate);
        assert!((m.amplitudes[0].norm() - m.amplitudes[1].norm()).abs() < 1e-12);
        assert!(m.residual < 1e-8);
        assert!((m.amplitudes.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ring_mode_is_degenerate() {
        let m = eigenmode_at(&catalog::ring(1.0, 1.0), 2.0 * PI).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.null_basis.len(), 2);
    }

    #[test]
    fn off_spectrum_point_rejected() {
        assert!(matches!(
            eigenmode_at(&catalog::interval(1.0, 1.0), 1.3),
            Err(Error::NotSpectralPoint { .. })
        ));
    }

    #[test]
    fn open_ring_blocks_are_consistent() {
        let g = catalog::side_coupled_ring(50.0, 0.3, 2.0);
        let s = assemble_scattering(&g);
        // Full scattering of arrivals plus lead inputs must be unitary.
        let n = s.sigma.nrows();
        let mut full = DMatrix::from_element(n + 2, n + 2, ZERO);
        full.view_mut((0, 0), (n, n)).copy_from(&s.sigma);
        full.view_mut((0, n), (n, 2)).copy_from(&s.w_in);
        full.view_mut((n, 0), (2, n)).copy_from(&s.w_out);
        full.view_mut((n, n), (2, 2)).copy_from(&s.direct);
        assert!(crate::scatterer::unitarity_defect(&full) < 1e-12);
        assert!(s.sigma.norm() < (n as f64).sqrt());
    }
}
