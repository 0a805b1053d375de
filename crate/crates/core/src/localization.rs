//! Localization of modes over bonds: normalized Shannon entropy and inverse
//! participation ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Eigenmode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensitySource {
    #[default]
    Model,
    /// Third-harmonic signal, proportional to the cube of the intensity.
    Thg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondIntensityProfile {
    pub intensities: Vec<f64>,
    pub source: IntensitySource,
}

impl BondIntensityProfile {
    pub fn model(intensities: Vec<f64>) -> Self {
        Self {
            intensities,
            source: IntensitySource::Model,
        }
    }

    pub fn thg(intensities: Vec<f64>) -> Self {
        Self {
            intensities,
            source: IntensitySource::Thg,
        }
    }
}

/// `p_b = I_b / sum I`, after a cube root for third-harmonic data.
pub fn bond_probabilities(profile: &BondIntensityProfile) -> Result<Vec<f64>> {
    if profile.intensities.is_empty() {
        return Err(Error::Validation("empty intensity profile".into()));
    }
    if let Some(bad) = profile
        .intensities
        .iter()
        .find(|x| !(**x >= 0.0) || !x.is_finite())
    {
        return Err(Error::Validation(format!("invalid bond intensity {bad}")));
    }
    let fundamental: Vec<f64> = match profile.source {
        IntensitySource::Model => profile.intensities.clone(),
        IntensitySource::Thg => profile.intensities.iter().map(|x| x.cbrt()).collect(),
    };
    let total: f64 = fundamental.iter().sum();
    if total <= 0.0 {
        return Err(Error::Validation("all bond intensities are zero".into()));
    }
    Ok(fundamental.iter().map(|x| x / total).collect())
}

/// `(S, S / ln B)` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> (f64, f64) {
    let s: f64 = -p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>();
    let s = s.max(0.0);
    let norm = if p.len() > 1 {
        (s / (p.len() as f64).ln()).min(1.0)
    } else {
        0.0
    };
    (s, norm)
}

pub fn ipr(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub p: Vec<f64>,
    pub entropy: f64,
    pub entropy_norm: f64,
    pub ipr: f64,
}

pub fn localization(profile: &BondIntensityProfile) -> Result<LocalizationReport> {
    let p = bond_probabilities(profile)?;
    let (entropy, entropy_norm) = entropy(&p);
    Ok(LocalizationReport {
        ipr: ipr(&p),
        p,
        entropy,
        entropy_norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub modes: usize,
    pub entropy_norm_mean: f64,
    pub entropy_norm_std: f64,
    pub ipr_mean: f64,
    pub ipr_std: f64,
}

fn mean_std(x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = x.clone().count() as f64;
    let m = x.clone().sum::<f64>() / n;
    let v = x.map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Sample mean and standard deviation over at least two reports.
pub fn ensemble_summary(reports: &[LocalizationReport]) -> Result<EnsembleSummary> {
    if reports.len() < 2 {
        return Err(Error::Validation(
            "ensemble needs at least two modes".into(),
        ));
    }
    let (sm, ss) = mean_std(reports.iter().map(|r| r.entropy_norm));
    let (im, is) = mean_std(reports.iter().map(|r| r.ipr));
    Ok(EnsembleSummary {
        modes: reports.len(),
        entropy_norm_mean: sm,
        entropy_norm_std: ss,
        ipr_mean: im,
        ipr_std: is,
    })
}

pub fn ensemble_localization(modes: &[Eigenmode]) -> Result<EnsembleSummary> {
    let reports = modes
        .iter()
        .map(|m| localization(&BondIntensityProfile::model(m.bond_intensity.clone())))
        .collect::<Result<Vec<_>>>()?;
    ensemble_summary(&reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thg_cube_root() {
        let p = bond_probabilities(&BondIntensityProfile::thg(vec![8.0, 1.0])).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_and_single_bond_limits() {
        let b = 10;
        let u = localization(&BondIntensityProfile::model(vec![3.0; b])).unwrap();
        assert!((u.entropy_norm - 1.0).abs() < 1e-15);
        assert!((u.ipr - 1.0 / b as f64).abs() < 1e-15);
        let mut one = vec![0.0; b];
        one[4] = 2.0;
        let s = localization(&BondIntensityProfile::model(one)).unwrap();
        assert_eq!(s.entropy_norm, 0.0);
        assert_eq!(s.ipr, 1.0);
    }

    #[test]
    fn half_split_over_four_bonds() {
        let r = localization(&BondIntensityProfile::model(vec![0.5, 0.5, 0.0, 0.0])).unwrap();
        assert!((r.entropy_norm - 0.5).abs() < 1e-15);
        assert!((r.ipr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_profile_rejected() {
        assert!(bond_probabilities(&BondIntensityProfile::model(vec![0.0, 0.0])).is_err());
        assert!(bond_probabilities(&BondIntensityProfile::model(vec![1.0, -1.0])).is_err());
    }

    #[test]
    fn identical_modes_have_zero_spread() {
        let r = localization(&BondIntensityProfile::model(vec![1.0, 2.0, 3.0])).unwrap();
        let e = ensemble_summary(&[r.clone(), r.clone(), r]).unwrap();
        assert!(e.entropy_norm_std < 1e-15);
        assert!(e.ipr_std < 1e-15);
    }
}
