//! Length spectra: the Fourier transform of `|T(k)|^2` against optical length,
//! and periodic orbits of the bond network for peak assignment.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::interp::CubicSpline;
use crate::operator::assemble_scattering;

pub const MIN_SAMPLES: usize = 4096;
pub const ZERO_PAD: usize = 4;
pub const ORBIT_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LengthSpectrum {
    pub optical_length_um: Vec<f64>,
    /// Magnitude scaled to unit maximum.
    pub magnitude: Vec<f64>,
    /// `2 pi / (k_max - k_min)`.
    pub resolution_um: f64,
    pub window: Window,
    /// `sum |y|^2` of the windowed, mean-removed series.
    pub signal_energy: f64,
    /// `(1/M) sum |Y|^2` over the full padded transform.
    pub spectral_energy: f64,
}

fn check_uniform(k: &[f64]) -> Result<f64> {
    if k.len() < 2 {
        return Err(Error::Validation("need at least two k samples".into()));
    }
    let dk = (k[k.len() - 1] - k[0]) / (k.len() - 1) as f64;
    if !(dk > 0.0) || k.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(
            "k axis must be strictly increasing".into(),
        ));
    }
    if k.windows(2).any(|w| ((w[1] - w[0]) - dk).abs() > 1e-6 * dk) {
        return Err(Error::Validation(
            "k axis is not uniform; resample first".into(),
        ));
    }
    Ok(dk)
}

/// Resamples a wavelength-uniform sweep onto `n` uniform wavenumbers with a
/// natural cubic spline. Returns `(k, values)` with `k` ascending.
pub fn resample_uniform_k(
    lambda_nm: &[f64],
    values: &[f64],
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if lambda_nm.len() != values.len() {
        return Err(Error::Validation(
            "wavelength and value lengths differ".into(),
        ));
    }
    let mut pairs: Vec<(f64, f64)> = lambda_nm
        .iter()
        .zip(values)
        .map(|(&l, &v)| (crate::measured::lambda_nm_to_k(l), v))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (kx, vy): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let spline = CubicSpline::natural(&kx, &vy)?;
    let (a, b) = spline.domain();
    let k: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    let v = k.iter().map(|&x| spline.eval(x)).collect();
    Ok((k, v))
}

/// Windowed, mean-removed, zero-padded FFT magnitude of `t2(k)` against
/// optical length `2 pi j / (M dk)`, up to the Nyquist bin.
pub fn length_spectrum(k: &[f64], t2: &[f64], window: Window) -> Result<LengthSpectrum> {
    if k.len() != t2.len() {
        return Err(Error::Validation("k and |T|^2 lengths differ".into()));
    }
    if k.len() < MIN_SAMPLES {
        return Err(Error::Validation(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            k.len()
        )));
    }
    let dk = check_uniform(k)?;
    let n = k.len();
    let mean = t2.iter().sum::<f64>() / n as f64;
    let w = window.weights(n);
    let m = ZERO_PAD * n;
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..n {
        buf[i] = Complex64::new((t2[i] - mean) * w[i], 0.0);
    }
    let signal_energy = buf.iter().map(|z| z.norm_sqr()).sum();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let spectral_energy = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
    let half = m / 2 + 1;
    let raw: Vec<f64> = buf[..half].iter().map(|z| z.norm()).collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    let magnitude = raw
        .iter()
        .map(|&v| if max > 0.0 { v / max } else { 0.0 })
        .collect();
    Ok(LengthSpectrum {
        optical_length_um: (0..half)
            .map(|j| TAU * j as f64 / (m as f64 * dk))
            .collect(),
        magnitude,
        resolution_um: TAU / (k[n - 1] - k[0]),
        window,
        signal_energy,
        spectral_energy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub optical_length_um: f64,
    pub magnitude: f64,
}

/// Local maxima above `threshold` (excluding the DC bin), strongest first.
/// Positions are refined by a parabola through the three top samples.
pub fn find_peaks(spec: &LengthSpectrum, threshold: f64) -> Vec<Peak> {
    let y = &spec.magnitude;
    let x = &spec.optical_length_um;
    let step = x[1] - x[0];
    let mut peaks: Vec<Peak> = (2..y.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > threshold)
        .map(|i| {
            let denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
            let off = if denom < 0.0 {
                0.5 * (y[i - 1] - y[i + 1]) / denom
            } else {
                0.0
            };
            Peak {
                optical_length_um: x[i] + off * step,
                magnitude: y[i],
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    peaks
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    /// Directed bonds in canonical (lexicographically least) rotation.
    pub bonds: Vec<usize>,
    pub length_um: f64,
    pub optical_length_um: f64,
    /// `prod |Sigma_{b', b}|` around the cycle.
    pub weight: f64,
    /// How many times a primitive cycle is repeated.
    pub repetition: usize,
}

impl PeriodicOrbit {
    pub fn contains_bond(&self, bond: usize) -> bool {
        self.bonds.iter().any(|&d| d / 2 == bond)
    }

    /// The same cycle traversed backwards, in canonical form.
    pub fn reversed(&self) -> Vec<usize> {
        canonical(&self.bonds.iter().rev().map(|&d| d ^ 1).collect::<Vec<_>>())
    }
}

fn canonical(seq: &[usize]) -> Vec<usize> {
    (0..seq.len())
        .map(|r| {
            seq[r..]
                .iter()
                .chain(&seq[..r])
                .copied()
                .collect::<Vec<_>>()
        })
        .min()
        .unwrap_or_default()
}

fn repetition(seq: &[usize]) -> usize {
    let n = seq.len();
    (1..=n)
        .find(|&p| n.is_multiple_of(p) && (0..n).all(|i| seq[i] == seq[i % p]))
        .map_or(1, |p| n / p)
}

/// All closed walks over directed bonds with nonzero scattering at every
/// step and total length at most `l_max_um`, one per cyclic rotation class,
/// sorted by length.
pub fn enumerate_orbits(graph: &Graph, l_max_um: f64) -> Result<Vec<PeriodicOrbit>> {
    enumerate_orbits_with_budget(graph, l_max_um, ORBIT_BUDGET)
}

pub fn enumerate_orbits_with_budget(
    graph: &Graph,
    l_max_um: f64,
    budget: usize,
) -> Result<Vec<PeriodicOrbit>> {
    let sigma: DMatrix<Complex64> = assemble_scattering(graph).sigma;
    let n = sigma.nrows();
    let len: Vec<f64> = graph
        .basis()
        .iter()
        .map(|d| graph.bonds()[d.bond].length_um)
        .collect();
    let min_len = len.iter().copied().fold(f64::INFINITY, f64::min);
    if !(l_max_um > min_len) {
        return Err(Error::Domain(format!(
            "orbit cutoff {l_max_um} um must exceed the shortest bond {min_len} um"
        )));
    }
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|c| (0..n).filter(|&r| sigma[(r, c)].norm() > 0.0).collect())
        .collect();
    let used = AtomicUsize::new(0);
    let per_start: Vec<Vec<Vec<usize>>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut found = Vec::new();
            let mut stack: Vec<(Vec<usize>, f64)> = vec![(vec![s], len[s])];
            while let Some((path, l)) = stack.pop() {
                let cur = *path.last().unwrap();
                for &nx in &succ[cur] {
                    if nx == s {
                        found.push(canonical(&path));
                    }
                    if nx >= s && l + len[nx] <= l_max_um {
                        if used.fetch_add(1, Ordering::Relaxed) >= budget {
                            return Err(Error::OrbitBudget {
                                budget,
                                cutoff_um: l_max_um,
                            });
                        }
                        let mut p = path.clone();
                        p.push(nx);
                        stack.push((p, l + len[nx]));
                    }
                }
            }
            Ok(found)
        })
        .collect::<Result<_>>()?;
    let unique: BTreeSet<Vec<usize>> = per_start.into_iter().flatten().collect();
    let n_g = graph.index.density_index();
    let mut orbits: Vec<PeriodicOrbit> = unique
        .into_iter()
        .map(|bonds| {
            let length_um: f64 = bonds.iter().map(|&d| len[d]).sum();
            let weight = (0..bonds.len())
                .map(|i| sigma[(bonds[(i + 1) % bonds.len()], bonds[i])].norm())
                .product();
            PeriodicOrbit {
                repetition: repetition(&bonds),
                optical_length_um: n_g * length_um,
                length_um,
                weight,
                bonds,
            }
        })
        .collect();
    orbits.sort_by(|a, b| {
        a.length_um
            .total_cmp(&b.length_um)
            .then(a.bonds.cmp(&b.bonds))
    });
    Ok(orbits)
}

#[derive(Clone, Debug, Serialize)]
pub struct PeakMatch {
    pub peak: Peak,
    /// Index into the orbit list of the nearest orbit within one resolution bin.
    pub orbit: Option<usize>,
    pub offset_um: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchReport {
    pub matches: Vec<PeakMatch>,
    /// Peaks beyond the longest optical length the orbit list can cover.
    pub out_of_range: Vec<Peak>,
    pub resolution_um: f64,
}

impl MatchReport {
    pub fn matched_fraction(&self) -> f64 {
        if self.matches.is_empty() {
            return 1.0;
        }
        self.matches.iter().filter(|m| m.orbit.is_some()).count() as f64 / self.matches.len() as f64
    }

    pub fn unmatched(&self) -> impl Iterator<Item = &PeakMatch> {
        self.matches.iter().filter(|m| m.orbit.is_none())
    }
}

/// Pairs every peak above `threshold` with the nearest orbit optical length
/// within one resolution bin. Peaks beyond `max_optical_um` are reported
/// separately.
pub fn match_peaks(
    spec: &LengthSpectrum,
    orbits: &[PeriodicOrbit],
    threshold: f64,
    max_optical_um: f64,
) -> MatchReport {
    let tol = spec.resolution_um;
    let mut matches = Vec::new();
    let mut out_of_range = Vec::new();
    for peak in find_peaks(spec, threshold) {
        if peak.optical_length_um > max_optical_um {
            out_of_range.push(peak);
            continue;
        }
        let nearest = orbits
            .iter()
            .enumerate()
            .map(|(i, o)| (i, o.optical_length_um - peak.optical_length_um))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
        let (orbit, offset_um) = match nearest {
            Some((i, d)) if d.abs() <= tol => (Some(i), d),
            Some((_, d)) => (None, d),
            None => (None, f64::INFINITY),
        };
        matches.push(PeakMatch {
            peak,
            orbit,
            offset_um,
        });
    }
    MatchReport {
        matches,
        out_of_range,
        resolution_um: tol,
    }
}

/// Uniform k grid over a wavelength window in micrometres.
pub fn k_grid(lambda_min_um: f64, lambda_max_um: f64, n: usize) -> Vec<f64> {
    let (a, b) = (TAU / lambda_max_um, TAU / lambda_min_um);
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `2 pi / (k window)`: smallest resolvable optical-length difference.
pub fn resolution_for(lambda_min_um: f64, lambda_max_um: f64) -> f64 {
    let (a, b) = (TAU / lambda_max_um, TAU / lambda_min_um);
    2.0 * PI / (b - a)
}
