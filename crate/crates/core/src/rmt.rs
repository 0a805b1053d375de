//! Spectral statistics on unfolded level sequences: spacing distribution,
//! number variance, spectral rigidity, and the GOE / GUE / Poisson references.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::spectral::{ResonanceSet, Root};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Offset used to separate exactly degenerate levels before unfolding.
pub const DEGENERACY_SPLIT: f64 = 1e-12;
/// Below this many spacings only the cumulative distribution is reported.
pub const MIN_HISTOGRAM_LEVELS: usize = 50;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelSource {
    #[default]
    Model,
    Experiment,
    Synthetic,
}

#[derive(Clone, Debug)]
pub struct UnfoldedSpectrum {
    pub levels: Vec<f64>,
    pub source: LevelSource,
    /// Number of levels nudged apart because they coincided.
    pub split_degeneracies: usize,
    /// Scale `n L_tot / pi` that mapped `k` to unfolded units (1 if already unfolded).
    pub scale: f64,
}

impl UnfoldedSpectrum {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn mean_spacing(&self) -> f64 {
        let n = self.levels.len();
        (self.levels[n - 1] - self.levels[0]) / (n - 1) as f64
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            levels: self.levels.iter().map(|x| x + c).collect(),
            ..self.clone()
        }
    }
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::Validation(
            "unfolding needs at least two levels".into(),
        ));
    }
    if let Some(i) = levels.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(format!(
            "levels must be strictly increasing (index {i}: {} then {})",
            levels[i],
            levels[i + 1]
        )));
    }
    Ok(())
}

/// `x_p = n L_tot k_p / pi`.
pub fn unfold(k: &[f64], density_index: f64, total_length: f64) -> Result<UnfoldedSpectrum> {
    check_levels(k)?;
    let scale = density_index * total_length / PI;
    Ok(UnfoldedSpectrum {
        levels: k.iter().map(|&x| x * scale).collect(),
        source: LevelSource::Model,
        split_degeneracies: 0,
        scale,
    })
}

/// Unfolds solver output with the graph's Weyl law. Degenerate roots are
/// expanded and split by [`DEGENERACY_SPLIT`].
pub fn unfold_roots(set: &ResonanceSet, graph: &Graph) -> Result<UnfoldedSpectrum> {
    unfold_root_list(
        &set.roots,
        graph.index.density_index(),
        graph.total_length(),
    )
}

/// [`unfold_roots`] with the density index and total length given directly.
pub fn unfold_root_list(
    roots: &[Root],
    density_index: f64,
    total_length: f64,
) -> Result<UnfoldedSpectrum> {
    let scale = density_index * total_length / PI;
    let mut levels = Vec::with_capacity(roots.iter().map(|r| r.multiplicity).sum());
    let mut split = 0;
    for r in roots {
        for j in 0..r.multiplicity {
            levels.push(r.k * scale + j as f64 * DEGENERACY_SPLIT * (1.0 + r.k * scale));
        }
        split += r.multiplicity - 1;
    }
    check_levels(&levels)?;
    Ok(UnfoldedSpectrum {
        levels,
        source: LevelSource::Model,
        split_degeneracies: split,
        scale,
    })
}

/// Levels already in unit-mean-spacing units.
pub fn from_unfolded(levels: Vec<f64>, source: LevelSource) -> Result<UnfoldedSpectrum> {
    check_levels(&levels)?;
    Ok(UnfoldedSpectrum {
        levels,
        source,
        split_degeneracies: 0,
        scale: 1.0,
    })
}

/// Re-unfolds with a straight-line fit of the staircase, so the empirical
/// mean spacing becomes exactly 1.
pub fn empirical_unfold(u: &UnfoldedSpectrum) -> UnfoldedSpectrum {
    let n = u.levels.len() as f64;
    let mx = u.levels.iter().sum::<f64>() / n;
    let my = (n - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &x) in u.levels.iter().enumerate() {
        sxy += (x - mx) * (i as f64 - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    UnfoldedSpectrum {
        levels: u.levels.iter().map(|&x| my + slope * (x - mx)).collect(),
        scale: u.scale * slope,
        ..u.clone()
    }
}

/// Index for which the Weyl count over `[k_min, k_max]` equals `target`.
pub fn calibrate_index(target: usize, k_min: f64, k_max: f64, total_length: f64) -> f64 {
    target as f64 * PI / (total_length * (k_max - k_min))
}

pub fn wigner_goe_pdf(s: f64) -> f64 {
    0.5 * PI * s * (-0.25 * PI * s * s).exp()
}

pub fn wigner_goe_cdf(s: f64) -> f64 {
    1.0 - (-0.25 * PI * s * s).exp()
}

pub fn gue_pdf(s: f64) -> f64 {
    32.0 / (PI * PI) * s * s * (-4.0 * s * s / PI).exp()
}

pub fn gue_cdf(s: f64) -> f64 {
    statrs::function::erf::erf(2.0 * s / PI.sqrt()) - 4.0 * s / PI * (-4.0 * s * s / PI).exp()
}

pub fn poisson_pdf(s: f64) -> f64 {
    (-s).exp()
}

pub fn poisson_cdf(s: f64) -> f64 {
    1.0 - (-s).exp()
}

/// Kolmogorov-Smirnov distance between the samples and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsDistances {
    pub goe: f64,
    pub gue: f64,
    pub poisson: f64,
}

impl KsDistances {
    /// GOE advantage over Poisson: `KS(Poisson) - KS(GOE)`.
    pub fn goe_margin(&self) -> f64 {
        self.poisson - self.goe
    }
}

#[derive(Clone, Debug)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Normalized so that `sum(density * width) = 1`.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SpacingStatistics {
    pub spacings: Vec<f64>,
    /// `None` with fewer than [`MIN_HISTOGRAM_LEVELS`] spacings.
    pub histogram: Option<Histogram>,
    /// Sorted spacings and the empirical `I(s)` just after each.
    pub cumulative: Vec<(f64, f64)>,
    pub ks: KsDistances,
}

/// Freedman-Diaconis width, never below 0.1.
pub fn freedman_diaconis(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let i = pos.floor() as usize;
        let j = (i + 1).min(s.len() - 1);
        s[i] + (pos - i as f64) * (s[j] - s[i])
    };
    let iqr = q(0.75) - q(0.25);
    (2.0 * iqr / (s.len() as f64).cbrt()).max(0.1)
}

pub fn nnsd(u: &UnfoldedSpectrum, bin_width: Option<f64>) -> SpacingStatistics {
    let spacings = u.spacings();
    let mut sorted = spacings.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let cumulative = sorted
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, (i + 1) as f64 / n))
        .collect();
    let histogram = (spacings.len() >= MIN_HISTOGRAM_LEVELS).then(|| {
        let w = bin_width.unwrap_or_else(|| freedman_diaconis(&spacings));
        let max = sorted.last().copied().unwrap_or(0.0);
        let bins = ((max / w).floor() as usize + 1).max(1);
        let mut counts = vec![0usize; bins];
        for &s in &spacings {
            counts[((s / w).floor() as usize).min(bins - 1)] += 1;
        }
        Histogram {
            edges: (0..=bins).map(|i| i as f64 * w).collect(),
            density: counts.iter().map(|&c| c as f64 / (n * w)).collect(),
        }
    });
    let ks = KsDistances {
        goe: ks_distance(&sorted, wigner_goe_cdf),
        gue: ks_distance(&sorted, gue_cdf),
        poisson: ks_distance(&sorted, poisson_cdf),
    };
    SpacingStatistics {
        spacings,
        histogram,
        cumulative,
        ks,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub l: f64,
    pub value: f64,
    /// Standard error from the spread over effectively independent windows.
    pub std_err: f64,
}

#[derive(Clone, Debug)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    /// Requested window lengths dropped because `L > N / 10`.
    pub dropped: Vec<f64>,
}

/// Window starts stepped by `L / 4` across the spectrum, and the count of
/// effectively independent windows.
fn window_starts(levels: &[f64], l: f64) -> (Vec<f64>, f64) {
    let first = levels[0];
    let span = levels[levels.len() - 1] - first;
    let n = ((span - l) / (0.25 * l)).floor().max(0.0) as usize + 1;
    (
        (0..n).map(|i| first + i as f64 * 0.25 * l).collect(),
        (span / l).max(1.0),
    )
}

fn windowed(u: &UnfoldedSpectrum, ls: &[f64], stat: impl Fn(&[f64], f64, f64) -> f64) -> Curve {
    let limit = u.levels.len() as f64 / 10.0;
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for &l in ls {
        if !(l > 0.0) || l > limit {
            dropped.push(l);
            continue;
        }
        let (starts, independent) = window_starts(&u.levels, l);
        let vals: Vec<f64> = starts.iter().map(|&x0| stat(&u.levels, x0, l)).collect();
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        points.push(CurvePoint {
            l,
            value: mean,
            std_err: (var / independent).sqrt(),
        });
    }
    Curve { points, dropped }
}

fn window(levels: &[f64], x0: f64, l: f64) -> &[f64] {
    let a = levels.partition_point(|&x| x < x0);
    let b = levels.partition_point(|&x| x < x0 + l);
    &levels[a..b]
}

/// `Sigma^2(L) = <(n(L) - L)^2>` over windows stepped by `L / 4`.
pub fn number_variance(u: &UnfoldedSpectrum, ls: &[f64]) -> Curve {
    windowed(u, ls, |levels, x0, l| {
        let n = window(levels, x0, l).len() as f64;
        (n - l).powi(2)
    })
}

/// Least-squares deviation of the staircase from a straight line on one window.
pub fn delta3_window(levels: &[f64], x0: f64, l: f64) -> f64 {
    let w = window(levels, x0, l);
    let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for (i, &x) in w.iter().enumerate() {
        let y = x - x0;
        i0 += l - y;
        i1 += 0.5 * (l * l - y * y);
        i2 += (2 * i + 1) as f64 * (l - y);
    }
    // Normal equations for the line A y + B.
    let (a11, a12, a22) = (l.powi(3) / 3.0, l * l / 2.0, l);
    let det = a11 * a22 - a12 * a12;
    let a = (i1 * a22 - a12 * i0) / det;
    let b = (a11 * i0 - a12 * i1) / det;
    ((i2 - a * i1 - b * i0) / l).max(0.0)
}

pub fn rigidity_delta3(u: &UnfoldedSpectrum, ls: &[f64]) -> Curve {
    windowed(u, ls, delta3_window)
}

pub fn sigma2_goe(l: f64) -> f64 {
    2.0 / (PI * PI) * ((2.0 * PI * l).ln() + EULER_GAMMA + 1.0 - PI * PI / 8.0)
}

pub fn sigma2_gue(l: f64) -> f64 {
    1.0 / (PI * PI) * ((2.0 * PI * l).ln() + EULER_GAMMA + 1.0)
}

pub fn sigma2_poisson(l: f64) -> f64 {
    l
}

/// Large-`L` asymptote; it undershoots below `L ~ 5`.
pub fn delta3_goe(l: f64) -> f64 {
    1.0 / (PI * PI) * ((2.0 * PI * l).ln() + EULER_GAMMA - 1.25 - PI * PI / 8.0)
}

/// Large-`L` asymptote.
pub fn delta3_gue(l: f64) -> f64 {
    1.0 / (2.0 * PI * PI) * ((2.0 * PI * l).ln() + EULER_GAMMA - 1.25)
}

pub fn delta3_poisson(l: f64) -> f64 {
    l / 15.0
}

/// `n` levels with independent unit-mean exponential spacings.
pub fn poisson_levels(n: usize, seed: u64) -> UnfoldedSpectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    let levels = (0..n)
        .map(|_| {
            let s: f64 = Exp1.sample(&mut rng);
            x += s;
            x
        })
        .collect();
    UnfoldedSpectrum {
        levels,
        source: LevelSource::Synthetic,
        split_degeneracies: 0,
        scale: 1.0,
    }
}

/// Eigenvalues of an `n x n` GOE matrix `(A + A^T) / 2`, unfolded with the
/// semicircle counting function; only the central half is kept.
pub fn goe_levels(n: usize, seed: u64) -> UnfoldedSpectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let h = (&a + a.transpose()) * 0.5;
    let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    let r2 = 2.0 * n as f64;
    let count = |x: f64| {
        let x = x.clamp(-r2.sqrt(), r2.sqrt());
        n as f64 * (0.5 + x * (r2 - x * x).sqrt() / (PI * r2) + (x / r2.sqrt()).asin() / PI)
    };
    let levels = e[n / 4..3 * n / 4].iter().map(|&x| count(x)).collect();
    UnfoldedSpectrum {
        levels,
        source: LevelSource::Synthetic,
        split_degeneracies: 0,
        scale: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn picket(n: usize) -> UnfoldedSpectrum {
        from_unfolded((0..n).map(|i| i as f64).collect(), LevelSource::Synthetic).unwrap()
    }

    #[test]
    fn weyl_exact_sequence_unfolds_to_integers() {
        let (n, l) = (2.5, 10.0);
        let k: Vec<f64> = (1..50).map(|p| p as f64 * PI / (n * l)).collect();
        let u = unfold(&k, n, l).unwrap();
        for (p, x) in u.levels.iter().enumerate() {
            assert!((x - (p + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn unsorted_or_duplicate_levels_rejected() {
        assert!(unfold(&[1.0, 1.0, 2.0], 1.0, 1.0).is_err());
        assert!(unfold(&[2.0, 1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn reference_cdfs_are_distributions() {
        for cdf in [wigner_goe_cdf, gue_cdf, poisson_cdf] {
            assert!(cdf(0.0).abs() < 1e-15);
            assert!((cdf(60.0) - 1.0).abs() < 1e-12);
        }
        // The pdfs integrate to one and match the cdfs.
        for (pdf, cdf) in [
            (
                wigner_goe_pdf as fn(f64) -> f64,
                wigner_goe_cdf as fn(f64) -> f64,
            ),
            (gue_pdf, gue_cdf),
            (poisson_pdf, poisson_cdf),
        ] {
            let h = 1e-4;
            let mut acc = 0.0;
            let mut s = 0.0;
            while s < 3.0 {
                acc += 0.5 * h * (pdf(s) + pdf(s + h));
                s += h;
            }
            assert!((acc - cdf(s)).abs() < 1e-6);
        }
    }

    #[test]
    fn picket_fence_statistics() {
        let u = picket(2000);
        let st = nnsd(&u, None);
        assert!(st.ks.poisson > st.ks.goe && st.ks.poisson > st.ks.gue);
        assert!((st.ks.poisson - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let nv = number_variance(&u, &[0.5, 2.3, 7.7]);
        for p in &nv.points {
            assert!(p.value <= 0.25 + 1e-12);
        }
        let d3 = rigidity_delta3(&u, &[50.0, 150.0]);
        for p in &d3.points {
            assert!((p.value - 1.0 / 12.0).abs() < 0.01, "{p:?}");
        }
    }

    #[test]
    fn histogram_is_normalized_and_small_samples_skip_it() {
        let u = poisson_levels(1000, 3);
        let st = nnsd(&u, None);
        let h = st.histogram.unwrap();
        let total: f64 = h.density.iter().map(|d| d * h.bin_width()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(h.bin_width() >= 0.1);
        let small = nnsd(&poisson_levels(20, 3), None);
        assert!(small.histogram.is_none());
        assert_eq!(small.cumulative.last().unwrap().1, 1.0);
    }

    #[test]
    fn large_windows_are_dropped() {
        let c = number_variance(&poisson_levels(100, 1), &[1.0, 50.0]);
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.dropped, vec![50.0]);
    }

    #[test]
    fn exponential_spacings_fit_poisson() {
        let st = nnsd(&poisson_levels(100_000, 11), None);
        assert!(st.ks.poisson <= 0.01, "{:?}", st.ks);
    }

    #[test]
    fn calibration_reproduces_target_count() {
        let n = calibrate_index(502, 4.0, 4.25, 1597.07);
        let count = n * 1597.07 * (4.25 - 4.0) / PI;
        assert!((count - 502.0).abs() < 1e-9);
    }
}
