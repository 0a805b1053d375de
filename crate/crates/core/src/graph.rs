//! Metric graph description: vertices with unitary scatterers, bonds with
//! lengths, optional external leads, and the guided-mode index model.
//!
//! Graphs are usually loaded from a JSON description:
//!
//! ```json
//! {
//!   "name": "interval",
//!   "n_eff": 1.0, "n_g": 1.0, "reference_wavelength_um": 1.55,
//!   "vertices": [
//!     {"id": "a", "kind": "reflector", "r": 1.0, "ports": ["a.1"]},
//!     {"id": "b", "kind": "reflector", "r": 1.0, "ports": ["b.1"]}
//!   ],
//!   "bonds": [{"from_port": "a.1", "to_port": "b.1", "length_um": 1.0}]
//! }
//! ```
//!
//! Coupler ports are listed in the order `1, 2, 3, 4`; see [`crate::scatterer`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scatterer::{ScattererKind, VertexScatterer};

/// Default denominator bound for the pairwise-rational length check.
pub const DEFAULT_RATIONAL_BOUND: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub vertex: usize,
    pub slot: usize,
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub id: String,
    pub scatterer: VertexScatterer,
    pub port_names: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Bond {
    pub id: String,
    /// `ends[0]` is `x = 0`, `ends[1]` is `x = L`.
    pub ends: [PortRef; 2],
    pub length_um: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attachment {
    BondEnd { bond: usize, end: usize },
    Lead(usize),
}

/// Phase-index model of the guided mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    /// Bond phase `n_eff k L`.
    #[default]
    Constant,
    /// Bond phase `n(k) k L` with `n(k) = n_eff + (n_g - n_eff)(1 - k_ref/k)`.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexModel {
    pub n_eff: f64,
    pub n_g: f64,
    pub reference_wavelength_um: f64,
    pub dispersion: Dispersion,
}

impl IndexModel {
    pub fn constant(n_eff: f64) -> Self {
        Self {
            n_eff,
            n_g: n_eff,
            reference_wavelength_um: 1.55,
            dispersion: Dispersion::Constant,
        }
    }

    pub fn k_ref(&self) -> f64 {
        2.0 * PI / self.reference_wavelength_um
    }

    pub fn phase_index(&self, k: Complex64) -> Complex64 {
        match self.dispersion {
            Dispersion::Constant => Complex64::new(self.n_eff, 0.0),
            Dispersion::Linear => self.n_eff + (self.n_g - self.n_eff) * (1.0 - self.k_ref() / k),
        }
    }

    /// Phase accumulated over a length `length_um` at (possibly complex) `k`.
    pub fn phase(&self, k: Complex64, length_um: f64) -> Complex64 {
        match self.dispersion {
            Dispersion::Constant => self.n_eff * k * length_um,
            Dispersion::Linear => {
                (self.n_g * k - (self.n_g - self.n_eff) * self.k_ref()) * length_um
            }
        }
    }

    /// `d(phase)/dk` per unit length; the index that sets the mean level density.
    pub fn density_index(&self) -> f64 {
        match self.dispersion {
            Dispersion::Constant => self.n_eff,
            Dispersion::Linear => self.n_g,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.n_eff > 0.0 && self.n_g > 0.0 && self.reference_wavelength_um > 0.0) {
            return Err(Error::Validation(format!(
                "indices and reference wavelength must be positive: n_eff={}, n_g={}, lambda_ref={}",
                self.n_eff, self.n_g, self.reference_wavelength_um
            )));
        }
        Ok(())
    }
}

/// Default placement of the input-output coupler used to open the graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusPlacement {
    pub bond: String,
    #[serde(default = "half")]
    pub fraction: f64,
    #[serde(default)]
    pub length_um: f64,
}

fn half() -> f64 {
    0.5
}

/// One directed bond: travel along `bond` from `origin` to `destination`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectedBond {
    pub bond: usize,
    pub forward: bool,
    pub origin: PortRef,
    pub destination: PortRef,
}

/// Bijection between `(bond, direction)` and a flat index in `[0, 2B)`.
/// Forward (`x: 0 -> L`) is `2b`, backward is `2b + 1`.
#[derive(Clone, Debug)]
pub struct DirectedBondBasis {
    directed: Vec<DirectedBond>,
}

impl DirectedBondBasis {
    fn new(bonds: &[Bond]) -> Self {
        let mut directed = Vec::with_capacity(2 * bonds.len());
        for (b, bond) in bonds.iter().enumerate() {
            directed.push(DirectedBond {
                bond: b,
                forward: true,
                origin: bond.ends[0],
                destination: bond.ends[1],
            });
            directed.push(DirectedBond {
                bond: b,
                forward: false,
                origin: bond.ends[1],
                destination: bond.ends[0],
            });
        }
        Self { directed }
    }

    pub fn len(&self) -> usize {
        self.directed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directed.is_empty()
    }

    pub fn index(&self, bond: usize, forward: bool) -> usize {
        2 * bond + usize::from(!forward)
    }

    pub fn get(&self, d: usize) -> &DirectedBond {
        &self.directed[d]
    }

    pub fn reversal(&self, d: usize) -> usize {
        d ^ 1
    }

    pub fn iter(&self) -> impl Iterator<Item = &DirectedBond> {
        self.directed.iter()
    }
}

#[derive(Clone, Debug)]
pub struct Graph {
    pub name: String,
    vertices: Vec<Vertex>,
    bonds: Vec<Bond>,
    leads: Vec<PortRef>,
    attachments: Vec<Vec<Attachment>>,
    basis: DirectedBondBasis,
    pub index: IndexModel,
    pub incommensurate: bool,
    pub bus: Option<BusPlacement>,
}

impl Graph {
    /// Builds and validates a graph. Every vertex port must be used by exactly
    /// one bond end or be declared as a lead.
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vertex>,
        bonds: Vec<Bond>,
        leads: Vec<PortRef>,
        index: IndexModel,
    ) -> Result<Self> {
        if bonds.is_empty() {
            return Err(Error::Structure("graph has no bonds".into()));
        }
        index.validate()?;
        let mut attachments: Vec<Vec<Option<Attachment>>> = vertices
            .iter()
            .map(|v| vec![None; v.scatterer.degree()])
            .collect();
        for v in &vertices {
            v.scatterer.validate().map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("vertex {}: {m}", v.id)),
                other => other,
            })?;
            if v.port_names.len() != v.scatterer.degree() {
                return Err(Error::Structure(format!(
                    "vertex {} lists {} ports but its scatterer has degree {}",
                    v.id,
                    v.port_names.len(),
                    v.scatterer.degree()
                )));
            }
        }
        let mut claim = |p: PortRef, what: Attachment| -> Result<()> {
            let slot = attachments
                .get_mut(p.vertex)
                .and_then(|s| s.get_mut(p.slot))
                .ok_or_else(|| Error::Structure(format!("port {p:?} does not exist")))?;
            if slot.is_some() {
                return Err(Error::Structure(format!(
                    "port {} of vertex {} is used twice",
                    vertices[p.vertex].port_names[p.slot], vertices[p.vertex].id
                )));
            }
            *slot = Some(what);
            Ok(())
        };
        for (b, bond) in bonds.iter().enumerate() {
            if !(bond.length_um > 0.0 && bond.length_um.is_finite()) {
                return Err(Error::Validation(format!(
                    "bond {} has non-positive length {}",
                    bond.id, bond.length_um
                )));
            }
            claim(bond.ends[0], Attachment::BondEnd { bond: b, end: 0 })?;
            claim(bond.ends[1], Attachment::BondEnd { bond: b, end: 1 })?;
        }
        for (i, &l) in leads.iter().enumerate() {
            claim(l, Attachment::Lead(i))?;
        }
        let mut resolved = Vec::with_capacity(attachments.len());
        for (v, slots) in attachments.into_iter().enumerate() {
            let mut row = Vec::with_capacity(slots.len());
            for (s, a) in slots.into_iter().enumerate() {
                row.push(a.ok_or_else(|| {
                    Error::Structure(format!(
                        "dangling port {} on vertex {}",
                        vertices[v].port_names[s], vertices[v].id
                    ))
                })?);
            }
            resolved.push(row);
        }
        let basis = DirectedBondBasis::new(&bonds);
        Ok(Self {
            name: name.into(),
            vertices,
            bonds,
            leads,
            attachments: resolved,
            basis,
            index,
            incommensurate: false,
            bus: None,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: GraphFile = serde_json::from_str(s)?;
        spec.into_graph()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn leads(&self) -> &[PortRef] {
        &self.leads
    }

    pub fn is_open(&self) -> bool {
        !self.leads.is_empty()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn basis(&self) -> &DirectedBondBasis {
        &self.basis
    }

    pub fn attachment(&self, p: PortRef) -> Attachment {
        self.attachments[p.vertex][p.slot]
    }

    pub fn total_length(&self) -> f64 {
        self.bonds.iter().map(|b| b.length_um).sum()
    }

    pub fn max_bond_length(&self) -> f64 {
        self.bonds.iter().map(|b| b.length_um).fold(0.0, f64::max)
    }

    pub fn bond_by_id(&self, id: &str) -> Option<usize> {
        self.bonds.iter().position(|b| b.id == id)
    }

    pub fn vertex_by_id(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn with_index(mut self, index: IndexModel) -> Self {
        self.index = index;
        self
    }

    pub fn with_dispersion(mut self, dispersion: Dispersion) -> Self {
        self.index.dispersion = dispersion;
        self
    }

    /// Replaces the scatterer of vertex `v`; the degree must not change.
    pub fn with_scatterer(mut self, v: usize, scatterer: VertexScatterer) -> Result<Self> {
        if scatterer.degree() != self.vertices[v].scatterer.degree() {
            return Err(Error::Structure(format!(
                "replacement scatterer for vertex {} changes its degree",
                self.vertices[v].id
            )));
        }
        scatterer.validate()?;
        self.vertices[v].scatterer = scatterer;
        Ok(self)
    }

    /// Sets the coupling of every coupler vertex.
    pub fn with_uniform_coupling(mut self, c: f64) -> Result<Self> {
        for v in &mut self.vertices {
            if let ScattererKind::Coupler { .. } = v.scatterer.kind {
                v.scatterer = VertexScatterer::coupler(c)?;
            }
        }
        Ok(self)
    }

    /// Connected-ness of the undirected multigraph of vertices and bonds.
    pub fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        let mut adj = vec![Vec::new(); n];
        for b in &self.bonds {
            adj[b.ends[0].vertex].push(b.ends[1].vertex);
            adj[b.ends[1].vertex].push(b.ends[0].vertex);
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// First pair of bonds whose length ratio is a fraction `p/q` with
    /// `q <= bound` (within relative tolerance 1e-9).
    pub fn commensurate_pair(&self, bound: u64) -> Option<(usize, usize, u64, u64)> {
        for i in 0..self.bonds.len() {
            for j in i + 1..self.bonds.len() {
                let r = self.bonds[i].length_um / self.bonds[j].length_um;
                for q in 1..=bound {
                    let p = (r * q as f64).round();
                    if p >= 1.0 && (r - p / q as f64).abs() <= 1e-9 * r {
                        return Some((i, j, p as u64, q));
                    }
                }
            }
        }
        None
    }

    /// Runs the length checks requested by the graph flags.
    pub fn validate_lengths(&self, bound: u64) -> Result<()> {
        let total = self.total_length();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Validation(format!(
                "total length {total} is not positive"
            )));
        }
        if self.incommensurate {
            if let Some((i, j, p, q)) = self.commensurate_pair(bound) {
                return Err(Error::Validation(format!(
                    "graph is flagged incommensurate but L({})/L({}) = {p}/{q}",
                    self.bonds[i].id, self.bonds[j].id
                )));
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> GraphFile {
        let vertices = self
            .vertices
            .iter()
            .map(|v| {
                let (kind, c, r, matrix) = match &v.scatterer.kind {
                    ScattererKind::Coupler { c } => ("coupler", Some(*c), None, None),
                    ScattererKind::Passthrough => ("passthrough", None, None, None),
                    ScattererKind::Reflector { r } => ("reflector", None, Some(*r), None),
                    ScattererKind::Custom => (
                        "custom",
                        None,
                        None,
                        Some(
                            (0..v.scatterer.degree())
                                .map(|i| {
                                    (0..v.scatterer.degree())
                                        .map(|j| {
                                            let z = v.scatterer.matrix[(i, j)];
                                            [z.re, z.im]
                                        })
                                        .collect()
                                })
                                .collect(),
                        ),
                    ),
                };
                VertexEntry {
                    id: v.id.clone(),
                    kind: kind.into(),
                    c,
                    r: r.map(|r| r.re),
                    r_phase: r
                        .map(|r| r.arg())
                        .filter(|a| a.abs() > 0.0 && (a.abs() - PI).abs() > 0.0),
                    matrix,
                    ports: v.port_names.clone(),
                }
            })
            .collect();
        let port_name = |p: PortRef| self.vertices[p.vertex].port_names[p.slot].clone();
        GraphFile {
            name: self.name.clone(),
            n_eff: self.index.n_eff,
            n_g: self.index.n_g,
            reference_wavelength_um: self.index.reference_wavelength_um,
            dispersion: self.index.dispersion,
            incommensurate: self.incommensurate,
            vertices,
            bonds: self
                .bonds
                .iter()
                .map(|b| BondEntry {
                    id: Some(b.id.clone()),
                    from_port: port_name(b.ends[0]),
                    to_port: port_name(b.ends[1]),
                    length_um: b.length_um,
                })
                .collect(),
            leads: self.leads.iter().map(|&p| port_name(p)).collect(),
            bus: self.bus.clone(),
        }
    }
}

/// Serialized graph description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default)]
    pub name: String,
    pub n_eff: f64,
    pub n_g: f64,
    #[serde(default = "default_lambda")]
    pub reference_wavelength_um: f64,
    #[serde(default)]
    pub dispersion: Dispersion,
    #[serde(default)]
    pub incommensurate: bool,
    pub vertices: Vec<VertexEntry>,
    pub bonds: Vec<BondEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leads: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<BusPlacement>,
}

fn default_lambda() -> f64 {
    1.55
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexEntry {
    pub id: String,
    pub kind: String,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Reflection phase in radians; overrides the sign of `r` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_phase: Option<f64>,
    /// Row-major `[re, im]` entries for `kind = "custom"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
    pub ports: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BondEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from_port: String,
    pub to_port: String,
    pub length_um: f64,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<Graph> {
        let mut port_index: HashMap<&str, PortRef> = HashMap::new();
        let mut vertices = Vec::with_capacity(self.vertices.len());
        for (vi, v) in self.vertices.iter().enumerate() {
            let scatterer = match v.kind.as_str() {
                "coupler" => VertexScatterer::coupler(v.c.ok_or_else(|| {
                    Error::Validation(format!("coupler {} needs a C value", v.id))
                })?)?,
                "passthrough" => VertexScatterer::passthrough(),
                "reflector" => {
                    let r = match (v.r_phase, v.r) {
                        (Some(phi), _) => Complex64::from_polar(1.0, phi),
                        (None, Some(r)) => Complex64::new(r, 0.0),
                        (None, None) => Complex64::new(1.0, 0.0),
                    };
                    VertexScatterer::reflector(r)?
                }
                "custom" => {
                    let rows = v.matrix.as_ref().ok_or_else(|| {
                        Error::Validation(format!("custom vertex {} needs a matrix", v.id))
                    })?;
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Error::Validation(format!(
                            "custom vertex {} matrix is not square",
                            v.id
                        )));
                    }
                    let m =
                        DMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
                    VertexScatterer::custom(m)?
                }
                other => {
                    return Err(Error::Validation(format!(
                        "vertex {}: unknown kind '{other}'",
                        v.id
                    )))
                }
            };
            for (slot, p) in v.ports.iter().enumerate() {
                if port_index
                    .insert(p.as_str(), PortRef { vertex: vi, slot })
                    .is_some()
                {
                    return Err(Error::Structure(format!("port name {p} declared twice")));
                }
            }
            vertices.push(Vertex {
                id: v.id.clone(),
                scatterer,
                port_names: v.ports.clone(),
            });
        }
        let lookup = |name: &str| -> Result<PortRef> {
            port_index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Structure(format!("unknown port {name}")))
        };
        let mut bonds = Vec::with_capacity(self.bonds.len());
        for (b, e) in self.bonds.iter().enumerate() {
            bonds.push(Bond {
                id: e.id.clone().unwrap_or_else(|| format!("b{b}")),
                ends: [lookup(&e.from_port)?, lookup(&e.to_port)?],
                length_um: e.length_um,
            });
        }
        let leads = self
            .leads
            .iter()
            .map(|l| lookup(l))
            .collect::<Result<Vec<_>>>()?;
        let index = IndexModel {
            n_eff: self.n_eff,
            n_g: self.n_g,
            reference_wavelength_um: self.reference_wavelength_um,
            dispersion: self.dispersion,
        };
        let mut g = Graph::new(self.name, vertices, bonds, leads, index)?;
        g.incommensurate = self.incommensurate;
        if let Some(bus) = &self.bus {
            if g.bond_by_id(&bus.bond).is_none() {
                return Err(Error::Structure(format!("bus bond {} not found", bus.bond)));
            }
        }
        g.bus = self.bus;
        g.validate_lengths(DEFAULT_RATIONAL_BOUND)?;
        Ok(g)
    }
}
