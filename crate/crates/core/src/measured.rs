//! Measured transmission sweeps: normalization, resonance dips, Q and finesse.

use std::f64::consts::TAU;

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp;

/// Normalized values above this are reported as noise.
pub const CLIP_LEVEL: f64 = 1.2;
pub const DEFAULT_PROMINENCE: f64 = 0.05;
pub const DEFAULT_MIN_DEPTH: f64 = 0.1;
/// Fewer samples than this inside one FWHM marks a dip as undersampled.
pub const MIN_SAMPLES_PER_FWHM: usize = 7;
/// Half-width of the fit window in units of the estimated FWHM.
const FIT_HALF_WINDOW: f64 = 1.5;

/// Vacuum wavenumber in 1/um from a wavelength in nm.
pub fn lambda_nm_to_k(lambda_nm: f64) -> f64 {
    TAU * 1000.0 / lambda_nm
}

pub fn k_to_lambda_nm(k: f64) -> f64 {
    TAU * 1000.0 / k
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasuredSpectrum {
    pub lambda_nm: Vec<f64>,
    pub transmission: Vec<f64>,
    /// Indices of samples above the clip level. The data are left unchanged.
    pub clipped: Vec<usize>,
}

impl MeasuredSpectrum {
    pub fn new(lambda_nm: Vec<f64>, transmission: Vec<f64>) -> Result<Self> {
        if lambda_nm.len() != transmission.len() {
            return Err(Error::Validation(
                "wavelength and transmission lengths differ".into(),
            ));
        }
        if lambda_nm.len() < 3 {
            return Err(Error::Validation(
                "spectrum needs at least three samples".into(),
            ));
        }
        let up = lambda_nm.windows(2).all(|w| w[1] > w[0]);
        let down = lambda_nm.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::Validation(
                "wavelengths must be strictly monotonic".into(),
            ));
        }
        let (mut lambda_nm, mut transmission) = (lambda_nm, transmission);
        if down {
            lambda_nm.reverse();
            transmission.reverse();
        }
        let clipped = transmission
            .iter()
            .enumerate()
            .filter(|(_, t)| **t > CLIP_LEVEL)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            lambda_nm,
            transmission,
            clipped,
        })
    }

    pub fn len(&self) -> usize {
        self.lambda_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_nm.is_empty()
    }

    pub fn k(&self) -> Vec<f64> {
        self.lambda_nm.iter().map(|&l| lambda_nm_to_k(l)).collect()
    }
}

/// Ratio of a raw sweep to a reference sweep. A reference on a different
/// grid is linearly interpolated onto the raw wavelengths.
pub fn normalize(
    raw_lambda_nm: &[f64],
    raw: &[f64],
    ref_lambda_nm: &[f64],
    reference: &[f64],
) -> Result<MeasuredSpectrum> {
    let raw_spec = MeasuredSpectrum::new(raw_lambda_nm.to_vec(), raw.to_vec())?;
    let ref_spec = MeasuredSpectrum::new(ref_lambda_nm.to_vec(), reference.to_vec())?;
    let same_grid = raw_spec.lambda_nm == ref_spec.lambda_nm;
    let (lo, hi) = (
        ref_spec.lambda_nm[0],
        ref_spec.lambda_nm[ref_spec.len() - 1],
    );
    let span_tol = 1e-9 * (hi - lo);
    let mut zeros = Vec::new();
    let mut ratio = Vec::with_capacity(raw_spec.len());
    for (i, (&l, &r)) in raw_spec
        .lambda_nm
        .iter()
        .zip(&raw_spec.transmission)
        .enumerate()
    {
        let denom = if same_grid {
            ref_spec.transmission[i]
        } else {
            if l < lo - span_tol || l > hi + span_tol {
                return Err(Error::Validation(format!(
                    "reference sweep does not cover {l} nm"
                )));
            }
            interp::linear(&ref_spec.lambda_nm, &ref_spec.transmission, l)
        };
        if denom == 0.0 {
            zeros.push(l);
        }
        ratio.push(r / denom);
    }
    if !zeros.is_empty() {
        let list: Vec<String> = zeros.iter().map(|l| format!("{l}")).collect();
        return Err(Error::Validation(format!(
            "reference is zero at {} nm",
            list.join(", ")
        )));
    }
    MeasuredSpectrum::new(raw_spec.lambda_nm, ratio)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResonanceFit {
    pub lambda0_nm: f64,
    pub k0: f64,
    pub fwhm_nm: f64,
    pub fwhm_k: f64,
    /// Fractional dip depth relative to the local baseline.
    pub depth: f64,
    pub baseline: f64,
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UndersampledDip {
    pub lambda_nm: f64,
    pub samples_in_fwhm: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DipReport {
    /// Fitted dips sorted by wavelength.
    pub fits: Vec<ResonanceFit>,
    pub undersampled: Vec<UndersampledDip>,
}

impl DipReport {
    pub fn detected(&self) -> usize {
        self.fits.len() + self.undersampled.len()
    }

    /// Mean dip spacing over mean FWHM, both in nm.
    pub fn finesse(&self) -> Option<f64> {
        if self.fits.len() < 2 {
            return None;
        }
        let n = self.fits.len();
        let spacing = (self.fits[n - 1].lambda0_nm - self.fits[0].lambda0_nm) / (n - 1) as f64;
        let width = self.fits.iter().map(|f| f.fwhm_nm).sum::<f64>() / n as f64;
        Some(spacing / width)
    }

    pub fn max_q(&self) -> Option<f64> {
        self.fits.iter().map(|f| f.q).reduce(f64::max)
    }
}

struct Candidate {
    index: usize,
    baseline: f64,
    left: usize,
    right: usize,
}

/// Local minima whose prominence exceeds `prominence`, with the enclosing
/// maxima on each side.
fn candidates(t: &[f64], prominence: f64) -> Vec<Candidate> {
    let n = t.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if !(t[i] < t[i - 1]) {
            i += 1;
            continue;
        }
        // Plateau minima are placed at their centre.
        let mut j = i;
        while j + 1 < n && t[j + 1] == t[i] {
            j += 1;
        }
        if j + 1 >= n || !(t[j + 1] > t[i]) {
            i = j + 1;
            continue;
        }
        let centre = (i + j) / 2;
        let (mut lmax, mut l) = (t[i], i);
        let mut left = i;
        while l > 0 {
            l -= 1;
            if t[l] < t[i] {
                break;
            }
            if t[l] > lmax {
                lmax = t[l];
                left = l;
            }
        }
        let (mut rmax, mut r) = (t[j], j);
        let mut right = j;
        while r + 1 < n {
            r += 1;
            if t[r] < t[i] {
                break;
            }
            if t[r] > rmax {
                rmax = t[r];
                right = r;
            }
        }
        let baseline = lmax.min(rmax);
        if baseline - t[i] >= prominence {
            out.push(Candidate {
                index: centre,
                baseline,
                left,
                right,
            });
        }
        i = j + 1;
    }
    out
}

/// `B - A / (1 + (2 (k - k0) / w)^2)` with parameters `[B, A, k0, w]`.
fn lorentzian(p: &Vector4<f64>, k: f64) -> f64 {
    let u = 2.0 * (k - p[2]) / p[3];
    p[0] - p[1] / (1.0 + u * u)
}

fn lorentzian_grad(p: &Vector4<f64>, k: f64) -> Vector4<f64> {
    let u = 2.0 * (k - p[2]) / p[3];
    let d = 1.0 + u * u;
    let dl_du = p[1] * 2.0 * u / (d * d);
    Vector4::new(1.0, -1.0 / d, dl_du * (-2.0 / p[3]), dl_du * (-u / p[3]))
}

/// Levenberg-Marquardt refinement of a Lorentzian dip.
fn fit_lorentzian(k: &[f64], t: &[f64], mut p: Vector4<f64>) -> Vector4<f64> {
    let cost = |p: &Vector4<f64>| -> f64 {
        k.iter()
            .zip(t)
            .map(|(&x, &y)| (lorentzian(p, x) - y).powi(2))
            .sum()
    };
    let mut c = cost(&p);
    let mut mu = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&x, &y) in k.iter().zip(t) {
            let g = lorentzian_grad(&p, x);
            jtj += g * g.transpose();
            jtr += g * (y - lorentzian(&p, x));
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for d in 0..4 {
                a[(d, d)] *= 1.0 + mu;
            }
            let Some(step) = a.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let trial = p + step;
            if trial[3] <= 0.0 {
                mu *= 10.0;
                continue;
            }
            let ct = cost(&trial);
            if ct <= c {
                let rel = (c - ct) / c.max(f64::MIN_POSITIVE);
                p = trial;
                c = ct;
                mu = (mu / 10.0).max(1e-12);
                improved = rel > 1e-14 && step.norm() > 1e-15 * p.norm();
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Half-maximum crossing on each side of a dip, interpolated linearly in k.
fn half_width_k(k: &[f64], t: &[f64], c: &Candidate) -> Option<(f64, f64)> {
    let half = 0.5 * (c.baseline + t[c.index]);
    let mut l = c.index;
    while l > c.left && t[l] < half {
        l -= 1;
    }
    let mut r = c.index;
    while r < c.right && t[r] < half {
        r += 1;
    }
    if t[l] < half || t[r] < half {
        return None;
    }
    let cross = |a: usize, b: usize| k[a] + (half - t[a]) * (k[b] - k[a]) / (t[b] - t[a]);
    Some((cross(l, l + 1), cross(r, r - 1)))
}

/// Finds resonance dips and fits each with a Lorentzian in k over
/// +-1.5 estimated FWHM. Dips with fewer than seven samples across the FWHM
/// are reported as undersampled and not fitted.
pub fn find_dips(spec: &MeasuredSpectrum, prominence: f64, min_depth: f64) -> DipReport {
    let t = &spec.transmission;
    let k = spec.k();
    let mut fits = Vec::new();
    let mut undersampled = Vec::new();
    for c in candidates(t, prominence) {
        let depth = (c.baseline - t[c.index]) / c.baseline;
        if !(depth >= min_depth) {
            continue;
        }
        let Some((ka, kb)) = half_width_k(&k, t, &c) else {
            continue;
        };
        let (lo, hi) = (ka.min(kb), ka.max(kb));
        let inside = k.iter().filter(|&&x| x >= lo && x <= hi).count();
        if inside < MIN_SAMPLES_PER_FWHM {
            undersampled.push(UndersampledDip {
                lambda_nm: spec.lambda_nm[c.index],
                samples_in_fwhm: inside,
            });
            continue;
        }
        let w0 = hi - lo;
        let k0 = k[c.index];
        let (wl, wr) = (k0 - FIT_HALF_WINDOW * w0, k0 + FIT_HALF_WINDOW * w0);
        let (wk, wt): (Vec<f64>, Vec<f64>) = k
            .iter()
            .zip(t)
            .filter(|(x, _)| **x >= wl && **x <= wr)
            .map(|(x, y)| (*x, *y))
            .unzip();
        let p0 = Vector4::new(c.baseline, c.baseline - t[c.index], k0, w0);
        let p = fit_lorentzian(&wk, &wt, p0);
        let (b, a, kc, w) = (p[0], p[1], p[2], p[3].abs());
        let lambda0 = k_to_lambda_nm(kc);
        fits.push(ResonanceFit {
            lambda0_nm: lambda0,
            k0: kc,
            fwhm_nm: k_to_lambda_nm(kc - w / 2.0) - k_to_lambda_nm(kc + w / 2.0),
            fwhm_k: w,
            depth: (a / b).clamp(0.0, 1.0),
            baseline: b,
            q: kc / w,
        });
    }
    fits.sort_by(|a, b| a.lambda0_nm.total_cmp(&b.lambda0_nm));
    undersampled.sort_by(|a, b| a.lambda_nm.total_cmp(&b.lambda_nm));
    DipReport { fits, undersampled }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndexEstimate {
    pub n_eff: f64,
    pub sigma: f64,
}

/// `n_eff = r0 lambda / 2` from the fringe spatial frequency `r0` (1/um),
/// with its uncertainty propagated linearly.
pub fn neff_from_fringe(r0: f64, sigma_r0: f64, lambda_um: f64) -> Result<IndexEstimate> {
    if !(r0 > 0.0) || !(lambda_um > 0.0) {
        return Err(Error::Domain(format!(
            "fringe frequency and wavelength must be positive, got {r0} and {lambda_um}"
        )));
    }
    Ok(IndexEstimate {
        n_eff: r0 * lambda_um / 2.0,
        sigma: sigma_r0.abs() * lambda_um / 2.0,
    })
}
