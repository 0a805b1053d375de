//! Classical bond dynamics: the Perron-Frobenius matrix `F = |Sigma|^2`, its
//! Markov evolution and the ergodic / mixing classification.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `|lambda| >= 1 - UNIMODULAR_TOL` counts as lying on the unit circle.
pub const UNIMODULAR_TOL: f64 = 1e-9;
/// Allowed deviation of row and column sums from 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct FrobeniusOperator {
    pub f: DMatrix<f64>,
}

pub fn frobenius(sigma: &DMatrix<Complex64>) -> Result<FrobeniusOperator> {
    let f = sigma.map(|z| z.norm_sqr());
    let n = f.nrows();
    if n != f.ncols() {
        return Err(Error::Validation("Sigma must be square".into()));
    }
    for i in 0..n {
        let r = f.row(i).sum();
        let c = f.column(i).sum();
        if (r - 1.0).abs() > STOCHASTIC_TOL || (c - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Validation(format!(
                "|Sigma|^2 is not bistochastic at index {i}: row sum {r}, column sum {c}"
            )));
        }
    }
    Ok(FrobeniusOperator { f })
}

impl FrobeniusOperator {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn stochastic_defect(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                (self.f.row(i).sum() - 1.0)
                    .abs()
                    .max((self.f.column(i).sum() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    /// `F^m v0`.
    pub fn evolve(&self, v0: &DVector<f64>, m: i64) -> Result<DVector<f64>> {
        if m < 0 {
            return Err(Error::Domain(format!("step count must be >= 0, got {m}")));
        }
        if v0.len() != self.dim() {
            return Err(Error::Domain(format!(
                "distribution has length {} but F is {}x{}",
                v0.len(),
                self.dim(),
                self.dim()
            )));
        }
        if v0.iter().any(|&x| x < 0.0) {
            return Err(Error::Domain("distribution has negative entries".into()));
        }
        let mut v = v0.clone();
        for _ in 0..m {
            v = &self.f * v;
        }
        Ok(v)
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut ev = crate::operator::eigenvalues(self.f.map(|x| Complex64::new(x, 0.0)))
            .expect("eigenvalues of a stochastic matrix");
        ev.sort_by(|a, b| {
            b.norm()
                .total_cmp(&a.norm())
                .then(b.re.total_cmp(&a.re))
                .then(a.im.total_cmp(&b.im))
        });
        ev
    }

    /// Connectivity of the transition support, ignoring direction.
    pub fn is_connected(&self) -> bool {
        let n = self.dim();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && (self.f[(i, j)] > 0.0 || self.f[(j, i)] > 0.0) {
                    *s = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

pub fn evolve(f: &FrobeniusOperator, v0: &DVector<f64>, m: i64) -> Result<DVector<f64>> {
    f.evolve(v0, m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalClassification {
    /// All eigenvalues, sorted by decreasing modulus.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues with `|lambda| >= 1 - 1e-9`, with multiplicity.
    pub unimodular: Vec<Complex64>,
    pub is_ergodic: bool,
    pub is_mixing: bool,
    /// `1 - max |lambda|` over the non-unit eigenvalues; only set when mixing.
    pub gap: Option<f64>,
}

impl ClassicalClassification {
    pub fn has_minus_one(&self, tol: f64) -> bool {
        self.unimodular
            .iter()
            .any(|z| (z - Complex64::new(-1.0, 0.0)).norm() <= tol)
    }

    pub fn summary(&self) -> String {
        match (self.is_mixing, self.is_ergodic, self.gap) {
            (true, _, Some(g)) => format!("mixing, gap {g:.4}"),
            (_, true, _) => format!(
                "ergodic, not mixing ({} unimodular eigenvalues)",
                self.unimodular.len()
            ),
            _ => "not ergodic".to_string(),
        }
    }
}

pub fn classify(f: &FrobeniusOperator) -> ClassicalClassification {
    let eigenvalues = f.eigenvalues();
    let unimodular: Vec<Complex64> = eigenvalues
        .iter()
        .copied()
        .filter(|z| z.norm() >= 1.0 - UNIMODULAR_TOL)
        .collect();
    let is_ergodic = f.is_connected();
    let is_mixing = is_ergodic && unimodular.len() == 1;
    let gap = is_mixing.then(|| {
        // The unit eigenvalue sorts first; the gap uses the next largest modulus.
        1.0 - eigenvalues.get(1).map_or(0.0, |z| z.norm())
    });
    ClassicalClassification {
        eigenvalues,
        unimodular,
        is_ergodic,
        is_mixing,
        gap,
    }
}

/// Gap as a function of wavelength when every coupler follows `coupling(lambda)`.
pub fn gap_sweep(
    graph: &crate::graph::Graph,
    lambdas_um: &[f64],
    coupling: impl Fn(f64) -> f64,
) -> Result<Vec<(f64, ClassicalClassification)>> {
    lambdas_um
        .iter()
        .map(|&lam| {
            let g = graph.clone().with_uniform_coupling(coupling(lam))?;
            let f = frobenius(&crate::operator::assemble_sigma(&g)?)?;
            Ok((lam, classify(&f)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{catalog, operator::assemble_sigma};

    fn f_of(g: &crate::graph::Graph) -> FrobeniusOperator {
        frobenius(&assemble_sigma(g).unwrap()).unwrap()
    }

    #[test]
    fn interval_is_swap_and_not_mixing() {
        let f = f_of(&catalog::interval(1.0, 1.0));
        assert_eq!(f.f[(0, 1)], 1.0);
        let v = f.evolve(&DVector::from_vec(vec![1.0, 0.0]), 1).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 1.0]);
        let c = classify(&f);
        assert!(c.is_ergodic && !c.is_mixing);
        assert!(c.has_minus_one(1e-12));
        assert_eq!(c.gap, None);
    }

    #[test]
    fn balanced_coupler_rows_split_evenly() {
        let f = f_of(&catalog::btg());
        for i in 0..f.dim() {
            let nz: Vec<f64> = f.f.row(i).iter().copied().filter(|&x| x > 0.0).collect();
            assert_eq!(nz.len(), 2);
            for x in nz {
                assert!((x - 0.5).abs() < 1e-15);
            }
        }
        assert!(f.stochastic_defect() < 1e-12);
    }

    #[test]
    fn uniform_is_fixed_point() {
        let f = f_of(&catalog::fg());
        let n = f.dim();
        let u = DVector::from_element(n, 1.0 / n as f64);
        let v = f.evolve(&u, 37).unwrap();
        assert!((v - &u).amax() < 1e-14);
    }

    #[test]
    fn negative_steps_rejected() {
        let f = f_of(&catalog::ring(1.0, 1.0));
        assert!(f.evolve(&DVector::from_vec(vec![0.5, 0.5]), -1).is_err());
    }

    #[test]
    fn btg_mixes_with_gap_and_fg_has_minus_one() {
        let b = classify(&f_of(&catalog::btg()));
        assert!(b.is_mixing);
        assert!((b.gap.unwrap() - 0.29).abs() < 0.02);
        let f = classify(&f_of(&catalog::fg()));
        assert!(f.is_ergodic && !f.is_mixing);
        assert!(f.has_minus_one(1e-9));
    }

    #[test]
    fn mixing_relaxes_at_gap_rate() {
        let f = f_of(&catalog::btg());
        let gap = classify(&f).gap.unwrap();
        let n = f.dim();
        let mut v0 = DVector::zeros(n);
        v0[3] = 1.0;
        let m = (40.0 / gap).ceil() as i64;
        let v = f.evolve(&v0, m).unwrap();
        assert!((v.add_scalar(-1.0 / n as f64)).amax() < 1e-6);
    }

    #[test]
    fn non_unitary_sigma_rejected() {
        let s = DMatrix::from_element(2, 2, Complex64::new(0.9, 0.0));
        assert!(frobenius(&s).is_err());
    }

    #[test]
    fn sweep_reports_each_wavelength() {
        let out = gap_sweep(&catalog::btg(), &[1.5, 1.55], |l| 0.5 + (l - 1.55)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[1].1.is_mixing);
    }
}
