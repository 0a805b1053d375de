//! Closed-graph spectrum: Weyl counting and an eigenphase root finder with an
//! exact winding-number completeness check.
//!
//! All eigenphases of `U_B(k)` advance monotonically with `k`, and their sum
//! advances exactly like the total bond phase `Phi(k)`. Reducing the
//! eigenphases to `[0, 2 pi)` and comparing the two sums between consecutive
//! grid points gives the number of eigenphases that wrapped through zero,
//! i.e. the number of roots of `det(I - U_B(k))` in that step.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::operator::QuantumMap;

/// Smallest singular value above which a refined root is not counted as degenerate.
const NULL_TOL: f64 = 1e-6;

pub fn weyl_count(graph: &Graph, k: f64) -> f64 {
    graph.index.density_index() * graph.total_length() * k / PI
}

/// Mean level spacing in `k` predicted by the Weyl law.
pub fn mean_spacing(graph: &Graph) -> f64 {
    PI / (graph.index.density_index() * graph.total_length())
}

#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    /// Grid points per mean Weyl spacing.
    pub grid_per_spacing: f64,
    /// Bracket width (relative to `k`) below which a multi-root bracket is
    /// treated as one degenerate root.
    pub degeneracy_width: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            grid_per_spacing: 10.0,
            degeneracy_width: 1e-11,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub k: f64,
    pub multiplicity: usize,
    /// Smallest singular value of `I - U_B(k)`.
    pub residual: f64,
    /// Null-space dimension at the refined root.
    pub null_dim: usize,
}

#[derive(Clone, Debug)]
pub struct ResonanceSet {
    pub k_min: f64,
    pub k_max: f64,
    pub roots: Vec<Root>,
    /// Total eigenphase winding through zero over the window.
    pub winding: usize,
    pub grid_step: f64,
}

impl ResonanceSet {
    /// Number of levels counted with multiplicity.
    pub fn count(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    /// Root positions, repeated by multiplicity.
    pub fn levels(&self) -> Vec<f64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.k, r.multiplicity))
            .collect()
    }
}

/// Eigenphases reduced to `[0, 2 pi)` and their sum.
#[derive(Clone, Copy)]
struct PhaseSample {
    total_phase: f64,
    reduced_sum: f64,
}

fn sample(map: &QuantumMap, k: f64) -> Result<PhaseSample> {
    let ev = map.eigenvalues(k)?;
    Ok(PhaseSample {
        total_phase: map.total_phase(k),
        reduced_sum: ev.iter().map(|z| z.arg().rem_euclid(TAU)).sum(),
    })
}

fn crossings(a: &PhaseSample, b: &PhaseSample) -> i64 {
    (((b.total_phase - a.total_phase) - (b.reduced_sum - a.reduced_sum)) / TAU).round() as i64
}

/// Eigenphase of `U_B(k)` closest to zero, in `(-pi, pi]`.
fn nearest_phase(map: &QuantumMap, k: f64) -> Result<f64> {
    let ev = map.eigenvalues(k)?;
    Ok(ev
        .iter()
        .map(|z| z.arg())
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(PI))
}

fn smallest_singular(map: &QuantumMap, k: f64) -> (f64, usize) {
    let n = map.dim();
    let a = nalgebra::DMatrix::<Complex64>::identity(n, n) - map.u(Complex64::new(k, 0.0));
    let sv = a.singular_values();
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (min, sv.iter().filter(|&&s| s <= NULL_TOL).count())
}

/// All real roots of `det(I - U_B(k)) = 0` in `[k_min, k_max]`.
pub fn closed_spectrum(
    graph: &Graph,
    k_min: f64,
    k_max: f64,
    opts: ScanOptions,
) -> Result<ResonanceSet> {
    if !(k_max > k_min && k_min > 0.0) {
        return Err(Error::Domain(format!(
            "need 0 < k_min < k_max, got [{k_min}, {k_max}]"
        )));
    }
    if graph.is_open() {
        return Err(Error::Domain(
            "closed_spectrum needs a graph without leads".into(),
        ));
    }
    let map = QuantumMap::new(graph)?;
    let spacing = mean_spacing(graph);
    let max_rate = graph.index.density_index() * graph.max_bond_length();
    let dk_target = spacing / opts.grid_per_spacing;
    // One eigenphase never advances faster than n L_max; keep that below pi per step.
    if max_rate * dk_target > PI {
        return Err(Error::Resolution {
            message: format!(
                "grid step {dk_target:.3e} lets an eigenphase advance more than pi per step"
            ),
            suggested_dk: 0.5 * PI / max_rate,
        });
    }
    // A global grid anchored at k = 0 keeps results independent of how the
    // window is split.
    let i0 = (k_min / dk_target).floor() as i64;
    let i1 = (k_max / dk_target).ceil() as i64;
    let mut grid: Vec<f64> = (i0..=i1).map(|i| i as f64 * dk_target).collect();
    grid[0] = k_min;
    *grid.last_mut().unwrap() = k_max;
    grid.dedup();
    let samples: Vec<PhaseSample> = grid
        .par_iter()
        .map(|&k| sample(&map, k))
        .collect::<Result<_>>()?;
    let winding: i64 = samples.windows(2).map(|w| crossings(&w[0], &w[1])).sum();

    let brackets: Vec<(f64, f64, PhaseSample, PhaseSample, i64)> = grid
        .windows(2)
        .zip(samples.windows(2))
        .filter_map(|(k, s)| {
            let c = crossings(&s[0], &s[1]);
            (c != 0).then_some((k[0], k[1], s[0], s[1], c))
        })
        .collect();
    if brackets.iter().any(|b| b.4 < 0) {
        return Err(Error::Resolution {
            message: "negative crossing count; eigenphases not monotone on this grid".into(),
            suggested_dk: dk_target / 4.0,
        });
    }

    let found: Vec<Vec<Root>> = brackets
        .par_iter()
        .map(|(a, b, sa, _, c)| isolate(&map, *a, *b, sa, *c as usize, &opts))
        .collect::<Result<_>>()?;
    let mut roots: Vec<Root> = found.into_iter().flatten().collect();
    roots.sort_by(|a, b| a.k.total_cmp(&b.k));
    // Merge roots that landed within 1e-9 of each other across bracket edges.
    let mut merged: Vec<Root> = Vec::with_capacity(roots.len());
    for r in roots {
        match merged.last_mut() {
            Some(last) if (r.k - last.k).abs() <= 1e-9 * r.k.max(1.0) => {
                last.multiplicity += r.multiplicity;
            }
            _ => merged.push(r),
        }
    }
    let res = ResonanceSet {
        k_min,
        k_max,
        roots: merged,
        winding: winding as usize,
        grid_step: dk_target,
    };
    if res.count() != res.winding {
        return Err(Error::Resolution {
            message: format!(
                "resolved {} roots but the winding number is {}",
                res.count(),
                res.winding
            ),
            suggested_dk: dk_target / 4.0,
        });
    }
    Ok(res)
}

fn isolate(
    map: &QuantumMap,
    a: f64,
    b: f64,
    sa: &PhaseSample,
    count: usize,
    opts: &ScanOptions,
) -> Result<Vec<Root>> {
    if count == 1 {
        return Ok(vec![refine(map, a, b, 1)?]);
    }
    if b - a <= opts.degeneracy_width * b {
        return Ok(vec![refine(map, a, b, count)?]);
    }
    let m = 0.5 * (a + b);
    let sm = sample(map, m)?;
    let left = crossings(sa, &sm).max(0) as usize;
    let right = count.saturating_sub(left);
    let mut out = Vec::new();
    if left > 0 {
        out.extend(isolate(map, a, m, sa, left, opts)?);
    }
    if right > 0 {
        out.extend(isolate(map, m, b, &sm, right, opts)?);
    }
    Ok(out)
}

/// Illinois iteration on the signed eigenphase nearest zero inside a bracket
/// known to contain exactly one crossing (or one degenerate cluster).
fn refine(map: &QuantumMap, mut a: f64, mut b: f64, multiplicity: usize) -> Result<Root> {
    // Shrink the bracket until the crossing eigenphase is the one nearest zero
    // at both ends: it is then negative at `a` and positive at `b`.
    let mut fa = nearest_phase(map, a)?;
    let mut fb = nearest_phase(map, b)?;
    let mut guard = 0;
    while !(fa <= 0.0 && fb >= 0.0) && guard < 60 {
        let m = 0.5 * (a + b);
        let fm = nearest_phase(map, m)?;
        if fm < 0.0 {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
        guard += 1;
    }
    let mut side = 0i8;
    let mut k = 0.5 * (a + b);
    for _ in 0..100 {
        if fb == fa {
            break;
        }
        k = (a * fb - b * fa) / (fb - fa);
        if !(k > a && k < b) {
            k = 0.5 * (a + b);
        }
        let fk = nearest_phase(map, k)?;
        if fk.abs() <= 1e-12 || b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
        if fk < 0.0 {
            a = k;
            fa = fk;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = k;
            fb = fk;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    let (residual, null_dim) = smallest_singular(map, k);
    Ok(Root {
        k,
        multiplicity,
        residual,
        null_dim,
    })
}

/// `1 - found / N_Weyl(window)`, clamped to `[-0.05, 1]`.
pub fn missing_fraction(found: usize, graph: &Graph, k_min: f64, k_max: f64) -> f64 {
    let expected = weyl_count(graph, k_max) - weyl_count(graph, k_min);
    if expected <= 0.0 {
        return 0.0;
    }
    (1.0 - found as f64 / expected).clamp(-0.05, 1.0)
}

/// Wavenumber window for a wavelength window in micrometres.
pub fn k_window(lambda_min_um: f64, lambda_max_um: f64) -> (f64, f64) {
    (TAU / lambda_max_um, TAU / lambda_min_um)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn weyl_matches_interval_count() {
        let g = catalog::interval(1.0, 1.0);
        assert_eq!(weyl_count(&g, 0.0), 0.0);
        for n in 1..20 {
            assert!((weyl_count(&g, PI * n as f64) - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_roots_are_n_pi() {
        let g = catalog::interval(1.0, 1.0);
        let s = closed_spectrum(&g, 1.0, 40.0, ScanOptions::default()).unwrap();
        assert_eq!(s.roots.len(), 12);
        for (i, r) in s.roots.iter().enumerate() {
            assert!((r.k - PI * (i + 1) as f64).abs() < 1e-9, "{r:?}");
            assert_eq!(r.multiplicity, 1);
        }
    }

    #[test]
    fn ring_roots_are_doubly_degenerate() {
        let g = catalog::ring(1.0, 1.0);
        let s = closed_spectrum(&g, 1.0, 30.0, ScanOptions::default()).unwrap();
        assert_eq!(s.roots.len(), 4);
        for (i, r) in s.roots.iter().enumerate() {
            assert!((r.k - TAU * (i + 1) as f64).abs() < 1e-9);
            assert_eq!(r.multiplicity, 2);
            assert_eq!(r.null_dim, 2);
        }
    }

    #[test]
    fn coarse_grid_is_resolution_error() {
        let g = catalog::star(1.0);
        let opts = ScanOptions {
            grid_per_spacing: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            closed_spectrum(&g, 1.0, 10.0, opts),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn missing_fraction_counts_deletions() {
        let g = catalog::interval(1.0, 1.0);
        let (a, b) = (0.5 * PI, 200.5 * PI);
        assert!(missing_fraction(200, &g, a, b).abs() < 1e-12);
        assert!((missing_fraction(195, &g, a, b) - 0.025).abs() < 1e-12);
        assert_eq!(missing_fraction(400, &g, a, b), -0.05);
    }
}
