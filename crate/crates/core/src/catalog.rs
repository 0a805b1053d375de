//! Ready-made graphs: analytic test cases and the two shipped networks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::graph::{Bond, Graph, IndexModel, PortRef, Vertex};
use crate::scatterer::VertexScatterer;

pub const BTG_JSON: &str = include_str!("../graphs/btg.json");
pub const FG_JSON: &str = include_str!("../graphs/fg.json");

/// Five-coupler network with two bus-adjacent cycles; classically mixing.
pub fn btg() -> Graph {
    Graph::from_json_str(BTG_JSON).expect("shipped btg.json is valid")
}

/// Five-coupler network of four petals; classically ergodic but not mixing.
pub fn fg() -> Graph {
    Graph::from_json_str(FG_JSON).expect("shipped fg.json is valid")
}

fn reflector_vertex(id: &str) -> Vertex {
    Vertex {
        id: id.into(),
        scatterer: VertexScatterer::reflector(Complex64::new(1.0, 0.0)).unwrap(),
        port_names: vec![format!("{id}.1")],
    }
}

fn named(id: &str, scatterer: VertexScatterer) -> Vertex {
    let port_names = (1..=scatterer.degree())
        .map(|p| format!("{id}.{p}"))
        .collect();
    Vertex {
        id: id.into(),
        scatterer,
        port_names,
    }
}

fn port(vertex: usize, slot: usize) -> PortRef {
    PortRef { vertex, slot }
}

fn bond(id: &str, a: PortRef, b: PortRef, length_um: f64) -> Bond {
    Bond {
        id: id.into(),
        ends: [a, b],
        length_um,
    }
}

/// One bond between two `r = +1` reflectors. Roots `k_n = n pi / (n_eff L)`.
pub fn interval(length_um: f64, n_eff: f64) -> Graph {
    Graph::new(
        "interval",
        vec![reflector_vertex("a"), reflector_vertex("b")],
        vec![bond("b0", port(0, 0), port(1, 0), length_um)],
        vec![],
        IndexModel::constant(n_eff),
    )
    .expect("interval graph")
}

/// One bond closed on itself through a passthrough vertex. Roots
/// `k_n = 2 pi n / (n_eff L)`, each twice degenerate.
pub fn ring(length_um: f64, n_eff: f64) -> Graph {
    Graph::new(
        "ring",
        vec![named("p", VertexScatterer::passthrough())],
        vec![bond("b0", port(0, 0), port(0, 1), length_um)],
        vec![],
        IndexModel::constant(n_eff),
    )
    .expect("ring graph")
}

/// Two arms of lengths `L` and `2L` ending on reflectors, joined at a
/// hard-wall centre (`sigma = I`). Roots at `j pi / (2L)` with multiplicity
/// 2 for even `j`.
pub fn star(unit_um: f64) -> Graph {
    let centre = VertexScatterer::custom(DMatrix::identity(2, 2)).unwrap();
    Graph::new(
        "star",
        vec![
            named("c", centre),
            reflector_vertex("e1"),
            reflector_vertex("e2"),
        ],
        vec![
            bond("b0", port(0, 0), port(1, 0), unit_um),
            bond("b1", port(0, 1), port(2, 0), 2.0 * unit_um),
        ],
        vec![],
        IndexModel::constant(1.0),
    )
    .expect("star graph")
}

/// Ring of length `L` side-coupled to a bus through a coupler of coupling `c`.
/// Leads sit on coupler ports 1 (input) and 3 (output); the ring runs from
/// port 4 to port 2.
pub fn side_coupled_ring(length_um: f64, c: f64, n_eff: f64) -> Graph {
    Graph::new(
        "side_coupled_ring",
        vec![named(
            "io",
            VertexScatterer::coupler(c).expect("coupling in [0, 1]"),
        )],
        vec![bond("ring", port(0, 3), port(0, 1), length_um)],
        vec![port(0, 0), port(0, 2)],
        IndexModel::constant(n_eff),
    )
    .expect("side-coupled ring")
}

/// Two-mirror cavity fed through a coupler: ports 4 and 2 of the coupler lead
/// to reflectors at distances `l1` and `l2`.
pub fn fabry_perot(l1_um: f64, l2_um: f64, c: f64, n_eff: f64) -> Graph {
    Graph::new(
        "fabry_perot",
        vec![
            named(
                "io",
                VertexScatterer::coupler(c).expect("coupling in [0, 1]"),
            ),
            reflector_vertex("m1"),
            reflector_vertex("m2"),
        ],
        vec![
            bond("arm1", port(0, 3), port(1, 0), l1_um),
            bond("arm2", port(0, 1), port(2, 0), l2_um),
        ],
        vec![port(0, 0), port(0, 2)],
        IndexModel::constant(n_eff),
    )
    .expect("fabry-perot graph")
}
