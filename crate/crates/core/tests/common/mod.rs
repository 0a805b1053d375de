#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wavegraph::graph::{Bond, PortRef, Vertex};
use wavegraph::{Graph, IndexModel, VertexScatterer};

/// Haar-like random unitary from the QR factors of a complex Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Unitary and symmetric: `Q Q^T`.
pub fn random_symmetric_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let q = random_unitary(n, rng);
    &q * q.transpose()
}

/// Closed graph with at most `max_bonds` bonds, random vertex degrees in
/// 1..=4, random port pairing and random symmetric unitary scatterers.
pub fn random_graph(seed: u64, max_bonds: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bonds_target = rng.random_range(1..=max_bonds);
    let mut degrees = Vec::new();
    let mut ports = 0;
    while ports < 2 * bonds_target {
        let d = rng.random_range(1..=4).min(2 * bonds_target - ports);
        degrees.push(d);
        ports += d;
    }
    let mut slots: Vec<PortRef> = degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| (0..d).map(move |slot| PortRef { vertex: v, slot }))
        .collect();
    for i in (1..slots.len()).rev() {
        let j = rng.random_range(0..=i);
        slots.swap(i, j);
    }
    let vertices = degrees
        .iter()
        .enumerate()
        .map(|(v, &d)| Vertex {
            id: format!("v{v}"),
            scatterer: VertexScatterer::custom(random_symmetric_unitary(d, &mut rng)).unwrap(),
            port_names: (0..d).map(|p| format!("v{v}.{p}")).collect(),
        })
        .collect();
    let bonds = slots
        .chunks(2)
        .enumerate()
        .map(|(b, pair)| Bond {
            id: format!("b{b}"),
            ends: [pair[0], pair[1]],
            length_um: rng.random_range(10.0..200.0),
        })
        .collect();
    Graph::new(
        "random",
        vertices,
        bonds,
        vec![],
        IndexModel::constant(rng.random_range(1.0..3.0)),
    )
    .unwrap()
}
