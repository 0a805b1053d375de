//! Open graphs: a network coupled to a bus waveguide through one
//! input-output coupler, its lead scattering matrix and complex poles.
//!
//! The input-output coupler carries the two leads on ports 1 (input) and 3
//! (output); ports 2 and 4 face the network.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{BondEntry, Graph, GraphFile, VertexEntry};
use crate::operator::{assemble_scattering, QuantumMap, Scattering};
use crate::scatterer::ScattererKind;

/// Solutions with `||x||` above this are flagged as evaluated on top of a pole.
const NEAR_POLE_NORM: f64 = 1e10;
/// Continuation steps in the bus coupling used by [`open_poles`].
pub const CONTINUATION_STEPS: usize = 20;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Clone, Debug)]
pub struct OpenGraph {
    graph: Graph,
    io_vertex: usize,
    /// Extra bus length whose phase multiplies the transmission.
    pub bus_length_um: f64,
    scattering: Scattering,
    map: QuantumMap,
}

#[derive(Clone, Copy, Debug)]
pub struct Transmission {
    pub k: f64,
    /// Lead scattering matrix; index 0 is the input lead, 1 the output lead.
    pub s: Matrix2<Complex64>,
    /// Input-to-output amplitude including the bus phase.
    pub t: Complex64,
    pub near_pole: bool,
}

impl Transmission {
    pub fn power(&self) -> f64 {
        self.t.norm_sqr()
    }

    /// `||S^H S - I||_F`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.s.adjoint() * self.s - Matrix2::identity()).norm()
    }
}

impl OpenGraph {
    /// Wraps a graph whose only two leads sit on ports 1 and 3 of one coupler.
    pub fn new(graph: Graph) -> Result<Self> {
        let leads = graph.leads();
        if leads.len() != 2 || leads[0].vertex != leads[1].vertex {
            return Err(Error::Structure(
                "an open graph needs exactly two leads on the same coupler".into(),
            ));
        }
        let io = leads[0].vertex;
        if !matches!(
            graph.vertices()[io].scatterer.kind,
            ScattererKind::Coupler { .. }
        ) || leads[0].slot != 0
            || leads[1].slot != 2
        {
            return Err(Error::Structure(
                "leads must sit on ports 1 and 3 of a coupler".into(),
            ));
        }
        let scattering = assemble_scattering(&graph);
        let map = QuantumMap::from_sigma(&graph, scattering.sigma.clone());
        Ok(Self {
            graph,
            io_vertex: io,
            bus_length_um: 0.0,
            scattering,
            map,
        })
    }

    /// Splits bond `bond` of a closed graph at `fraction` of its length and
    /// inserts an input-output coupler of coupling `c_bus` there.
    pub fn attach_bus(base: &Graph, bond: usize, fraction: f64, c_bus: f64) -> Result<Self> {
        if base.is_open() {
            return Err(Error::Structure("base graph already has leads".into()));
        }
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Domain(format!(
                "bus split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let mut file = base.to_file();
        if bond >= file.bonds.len() {
            return Err(Error::Structure(format!("no bond with index {bond}")));
        }
        let old = file.bonds.remove(bond);
        let id = old.id.clone().unwrap_or_else(|| format!("b{bond}"));
        let io = unique_id(&file, "io");
        let p = |n: usize| format!("{io}.{n}");
        file.vertices.push(VertexEntry {
            id: io.clone(),
            kind: "coupler".into(),
            c: Some(c_bus),
            r: None,
            r_phase: None,
            matrix: None,
            ports: (1..=4).map(p).collect(),
        });
        file.bonds.push(BondEntry {
            id: Some(format!("{id}_a")),
            from_port: old.from_port,
            to_port: p(4),
            length_um: old.length_um * fraction,
        });
        file.bonds.push(BondEntry {
            id: Some(format!("{id}_b")),
            from_port: p(2),
            to_port: old.to_port,
            length_um: old.length_um * (1.0 - fraction),
        });
        file.leads = vec![p(1), p(3)];
        file.bus = None;
        file.incommensurate = false;
        let mut open = Self::new(file.into_graph()?)?;
        if let Some(bus) = &base.bus {
            open.bus_length_um = bus.length_um;
        }
        Ok(open)
    }

    /// Uses the bus placement stored with the graph.
    pub fn from_bus_placement(base: &Graph, c_bus: f64) -> Result<Self> {
        let bus = base
            .bus
            .as_ref()
            .ok_or_else(|| Error::Structure("graph has no bus placement".into()))?;
        let b = base
            .bond_by_id(&bus.bond)
            .ok_or_else(|| Error::Structure(format!("bus bond {} not found", bus.bond)))?;
        Self::attach_bus(base, b, bus.fraction, c_bus)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn map(&self) -> &QuantumMap {
        &self.map
    }

    pub fn bus_coupling(&self) -> f64 {
        match self.graph.vertices()[self.io_vertex].scatterer.kind {
            ScattererKind::Coupler { c } => c,
            _ => unreachable!("io vertex is a coupler"),
        }
    }

    pub fn with_bus_coupling(&self, c: f64) -> Result<Self> {
        let g = self
            .graph
            .clone()
            .with_scatterer(self.io_vertex, crate::VertexScatterer::coupler(c)?)?;
        let mut out = Self::new(g)?;
        out.bus_length_um = self.bus_length_um;
        Ok(out)
    }

    /// Same network with every coupler, the bus coupler included, set to `c`.
    pub fn with_uniform_coupling(&self, c: f64) -> Result<Self> {
        let mut out = Self::new(self.graph.clone().with_uniform_coupling(c)?)?;
        out.bus_length_um = self.bus_length_um;
        Ok(out)
    }

    /// The closed graph reached as the bus coupling goes to zero: the
    /// input-output coupler becomes a passthrough joining ports 2 and 4.
    pub fn closed_limit(&self) -> Result<Graph> {
        let mut file = self.graph.to_file();
        let v = &mut file.vertices[self.io_vertex];
        let ports = v.ports.clone();
        *v = VertexEntry {
            id: v.id.clone(),
            kind: "passthrough".into(),
            c: None,
            r: None,
            r_phase: None,
            matrix: None,
            ports: vec![ports[1].clone(), ports[3].clone()],
        };
        file.leads.clear();
        file.into_graph()
    }

    /// `Sigma~`, the subunitary internal scattering block.
    pub fn sigma(&self) -> &DMatrix<Complex64> {
        &self.scattering.sigma
    }

    pub fn internal_operator(&self, k: Complex64) -> DMatrix<Complex64> {
        self.map.u(k)
    }

    /// `det(I - U~(k))`.
    pub fn secular(&self, k: Complex64) -> Complex64 {
        let n = self.map.dim();
        (DMatrix::identity(n, n) - self.map.u(k)).determinant()
    }
}

fn unique_id(file: &GraphFile, stem: &str) -> String {
    let mut id = stem.to_string();
    let mut i = 0;
    while file.vertices.iter().any(|v| v.id == id) {
        i += 1;
        id = format!("{stem}{i}");
    }
    id
}

/// Lead scattering at real `k` from `(I - P Sigma~) x = P W_in a`.
pub fn open_transmission(open: &OpenGraph, k: f64) -> Result<Transmission> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    let kc = Complex64::new(k, 0.0);
    let n = open.map.dim();
    let p = open.map.phases(kc);
    let u = open.map.u(kc);
    let a = DMatrix::identity(n, n) - u;
    let mut rhs = open.scattering.w_in.clone();
    for (i, mut row) in rhs.row_iter_mut().enumerate() {
        row *= p[i];
    }
    let (x, near_pole) = match a.lu().solve(&rhs) {
        Some(x) if x.iter().all(|z| z.is_finite()) => {
            let big = x.norm() > NEAR_POLE_NORM;
            (x, big)
        }
        _ => (
            DMatrix::from_element(n, 2, Complex64::new(f64::NAN, f64::NAN)),
            true,
        ),
    };
    let full = &open.scattering.direct + &open.scattering.w_out * x;
    let s = Matrix2::new(full[(0, 0)], full[(0, 1)], full[(1, 0)], full[(1, 1)]);
    let bus = (Complex64::i() * open.graph.index.phase(kc, open.bus_length_um)).exp();
    Ok(Transmission {
        k,
        s,
        t: s[(1, 0)] * bus,
        near_pole,
    })
}

/// Transmission on a set of wavenumbers, evaluated in parallel.
pub fn transmission_sweep(open: &OpenGraph, ks: &[f64]) -> Result<Vec<Transmission>> {
    ks.par_iter().map(|&k| open_transmission(open, k)).collect()
}

/// As [`transmission_sweep`], with every coupler following `coupling(lambda_um)`.
pub fn transmission_sweep_dispersive(
    open: &OpenGraph,
    ks: &[f64],
    coupling: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<Vec<Transmission>> {
    ks.par_iter()
        .map(|&k| {
            let local = open.with_uniform_coupling(coupling(std::f64::consts::TAU / k))?;
            open_transmission(&local, k)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pole {
    /// `Re k - i Gamma / 2`.
    pub k: Complex64,
    /// Closed-graph root this pole was continued from.
    pub seed: f64,
    pub multiplicity: usize,
    pub converged: bool,
}

impl Pole {
    pub fn gamma(&self) -> f64 {
        -2.0 * self.k.im
    }

    /// `Re k / Gamma`.
    pub fn q(&self) -> f64 {
        self.k.re / self.gamma()
    }
}

#[derive(Clone, Debug)]
pub struct PoleSet {
    pub poles: Vec<Pole>,
    pub bus_coupling: f64,
}

impl PoleSet {
    pub fn unpaired(&self) -> impl Iterator<Item = &Pole> {
        self.poles.iter().filter(|p| !p.converged)
    }

    /// Largest `|Re k_p - k_closed|` over converged poles.
    pub fn max_shift(&self) -> f64 {
        self.poles
            .iter()
            .filter(|p| p.converged)
            .map(|p| (p.k.re - p.seed).abs())
            .fold(0.0, f64::max)
    }
}

/// Newton step on `det(I - U~)` with a central-difference derivative;
/// `m` is the expected root multiplicity.
fn newton(open: &OpenGraph, mut k: Complex64, m: usize) -> (Complex64, bool) {
    for _ in 0..NEWTON_MAX_ITER {
        let h = 1e-7 * k.norm();
        let f = open.secular(k);
        if f.norm() == 0.0 {
            return (k, true);
        }
        let df = (open.secular(k + h) - open.secular(k - h)) / (2.0 * h);
        let step = m as f64 * f / df;
        if !step.is_finite() {
            return (k, false);
        }
        k -= step;
        if step.norm() <= 1e-13 * k.norm() {
            return (k, true);
        }
    }
    (k, false)
}

/// Resonance poles of `open`, each continued from a root of the closed limit
/// while the bus coupling is raised from zero to its value in
/// [`CONTINUATION_STEPS`] steps.
pub fn open_poles(open: &OpenGraph, closed_roots: &[crate::spectral::Root]) -> Result<PoleSet> {
    let target = open.bus_coupling();
    let stages: Vec<OpenGraph> = (1..=CONTINUATION_STEPS)
        .map(|i| open.with_bus_coupling(target * i as f64 / CONTINUATION_STEPS as f64))
        .collect::<Result<_>>()?;
    let poles: Vec<Pole> = closed_roots
        .par_iter()
        .map(|r| {
            let mut k = Complex64::new(r.k, 0.0);
            let mut ok = true;
            for stage in &stages {
                let (next, conv) = newton(stage, k, r.multiplicity);
                k = next;
                ok &= conv;
            }
            Pole {
                k,
                seed: r.k,
                multiplicity: r.multiplicity,
                converged: ok,
            }
        })
        .collect();
    if target > 0.0 {
        if let Some(bad) = poles.iter().find(|p| p.converged && p.k.im >= 0.0) {
            return Err(Error::UnitarityViolation(format!(
                "pole at k = {} lies on or above the real axis",
                bad.k
            )));
        }
    }
    let mut poles = poles;
    poles.sort_by(|a, b| a.k.re.total_cmp(&b.k.re));
    Ok(PoleSet {
        poles,
        bus_coupling: target,
    })
}

/// Linewidth `Gamma` of a side-coupled ring: `-ln(1 - C) / (n L)`.
pub fn ring_linewidth(length_um: f64, c: f64, n_eff: f64) -> f64 {
    -(1.0 - c).ln() / (n_eff * length_um)
}

/// All-pass transmission `(t - e^{i phi}) / (1 - t e^{i phi})` with `t = sqrt(1 - C)`.
pub fn ring_allpass(phi: f64, c: f64) -> Complex64 {
    let t = (1.0 - c).sqrt();
    let e = Complex64::from_polar(1.0, phi);
    (t - e) / (1.0 - t * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::spectral::{closed_spectrum, ScanOptions};
    use std::f64::consts::TAU;

    #[test]
    fn decoupled_bus_transmits_fully() {
        let open = OpenGraph::from_bus_placement(&catalog::btg(), 0.0).unwrap();
        for k in [4.0, 4.1, 4.2] {
            let t = open_transmission(&open, k).unwrap();
            assert!((t.t.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn side_coupled_ring_matches_allpass() {
        let (l, c, n) = (80.0, 0.2, 2.0);
        let open = OpenGraph::new(catalog::side_coupled_ring(l, c, n)).unwrap();
        for k in [3.9, 4.0, 4.05, TAU * 100.0 / (n * l)] {
            let t = open_transmission(&open, k).unwrap();
            let want = ring_allpass(n * k * l, c);
            assert!((t.t - want).norm() < 1e-10, "{k}: {} vs {want}", t.t);
            assert!(t.unitarity_defect() < 1e-10);
        }
    }

    #[test]
    fn closed_limit_has_base_spectrum() {
        let base = catalog::btg();
        let open = OpenGraph::from_bus_placement(&base, 0.3).unwrap();
        let closed = open.closed_limit().unwrap();
        assert!((closed.total_length() - base.total_length()).abs() < 1e-9);
        let a = closed_spectrum(&base, 4.0, 4.02, ScanOptions::default()).unwrap();
        let b = closed_spectrum(&closed, 4.0, 4.02, ScanOptions::default()).unwrap();
        assert_eq!(a.count(), b.count());
        for (x, y) in a.roots.iter().zip(&b.roots) {
            assert!((x.k - y.k).abs() < 1e-9);
        }
    }

    #[test]
    fn ring_pole_width_matches_closed_form() {
        let (l, c, n) = (60.0, 0.25, 2.2);
        let open = OpenGraph::new(catalog::side_coupled_ring(l, c, n)).unwrap();
        let closed = open.closed_limit().unwrap();
        let roots = closed_spectrum(&closed, 3.0, 3.5, ScanOptions::default()).unwrap();
        let poles = open_poles(&open, &roots.roots).unwrap();
        let want = ring_linewidth(l, c, n);
        for p in &poles.poles {
            assert!(p.converged);
            assert!(
                (p.gamma() / want - 1.0).abs() < 1e-3,
                "{} vs {want}",
                p.gamma()
            );
            assert!((p.k.re - p.seed).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_lead_layout_rejected() {
        assert!(OpenGraph::new(catalog::btg()).is_err());
    }
}
