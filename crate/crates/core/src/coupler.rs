//! Coupled-mode model of the 2x2 directional coupler.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::CubicSpline;

/// Below this `|dn_g|` the splitting is flat to first order in wavelength.
pub const NEAR_ZERO_DNG: f64 = 0.05;
const DERIV_STEP_UM: f64 = 1e-4;

/// Tabulated supermode index difference `dn(lambda)`, wavelength in um.
#[derive(Clone, Debug)]
pub struct DeltaNTable {
    lambda_um: Vec<f64>,
    delta_n: Vec<f64>,
    spline: CubicSpline,
}

impl DeltaNTable {
    pub fn new(lambda_um: Vec<f64>, delta_n: Vec<f64>) -> Result<Self> {
        let spline = CubicSpline::natural(&lambda_um, &delta_n)?;
        Ok(Self {
            lambda_um,
            delta_n,
            spline,
        })
    }

    /// Rows of `(lambda_nm, delta_neff)`.
    pub fn from_nm_rows(rows: &[(f64, f64)]) -> Result<Self> {
        let mut rows = rows.to_vec();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::new(
            rows.iter().map(|r| r.0 / 1000.0).collect(),
            rows.iter().map(|r| r.1).collect(),
        )
    }

    /// Linear table through `dn0` at `lambda0` with the slope that gives
    /// differential group index `dng` there.
    pub fn linear_design(
        lambda0_um: f64,
        dn0: f64,
        dng: f64,
        band_um: (f64, f64),
        step_um: f64,
    ) -> Result<Self> {
        let slope = (dn0 - dng) / lambda0_um;
        let n = ((band_um.1 - band_um.0) / step_um).round() as usize + 1;
        let lambda: Vec<f64> = (0..n).map(|i| band_um.0 + step_um * i as f64).collect();
        let dn = lambda
            .iter()
            .map(|l| dn0 + slope * (l - lambda0_um))
            .collect();
        Self::new(lambda, dn)
    }

    pub fn band(&self) -> (f64, f64) {
        self.spline.domain()
    }

    pub fn len(&self) -> usize {
        self.lambda_um.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_um.is_empty()
    }

    pub fn eval(&self, lambda_um: f64) -> f64 {
        self.spline.eval(lambda_um)
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lambda_um
            .iter()
            .copied()
            .zip(self.delta_n.iter().copied())
    }
}

/// Design point: 50:50 at 1.55 um with `l_50 = 8.3 um` and `dn_g = -0.22`,
/// tabulated over 1.40-1.70 um.
pub fn design_point_table() -> DeltaNTable {
    let lambda0 = 1.55;
    let dn0 = lambda0 / (4.0 * 8.3);
    DeltaNTable::linear_design(lambda0, dn0, -0.22, (1.40, 1.70), 0.01).expect("static table")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Splitting {
    pub bar: f64,
    pub cross: f64,
}

#[derive(Clone, Debug)]
pub struct CouplerDesign {
    pub table: DeltaNTable,
    pub l_dc_um: f64,
    /// Permit evaluation outside the tabulated band.
    pub allow_extrapolation: bool,
}

impl CouplerDesign {
    pub fn new(table: DeltaNTable, l_dc_um: f64) -> Self {
        Self {
            table,
            l_dc_um,
            allow_extrapolation: false,
        }
    }

    /// Design-point table with `l_DC` set to the 50:50 length at 1.55 um.
    pub fn design_point() -> Self {
        Self::new(design_point_table(), 8.3)
    }

    pub fn with_l_dc(mut self, l_dc_um: f64) -> Self {
        self.l_dc_um = l_dc_um;
        self
    }

    fn check_band(&self, lambda_um: f64) -> Result<()> {
        let (a, b) = self.table.band();
        if !self.allow_extrapolation && !(lambda_um >= a && lambda_um <= b) {
            return Err(Error::Domain(format!(
                "wavelength {lambda_um} um outside tabulated band [{a}, {b}] um"
            )));
        }
        Ok(())
    }

    pub fn delta_n(&self, lambda_um: f64) -> Result<f64> {
        self.check_band(lambda_um)?;
        Ok(self.table.eval(lambda_um))
    }

    /// `cos^2` / `sin^2` of `pi dn l_DC / lambda`.
    pub fn splitting(&self, lambda_um: f64) -> Result<Splitting> {
        let phi = PI * self.delta_n(lambda_um)? * self.l_dc_um / lambda_um;
        Ok(splitting_from_phase(phi))
    }

    pub fn coupling(&self, lambda_um: f64) -> Result<f64> {
        Ok(self.splitting(lambda_um)?.cross)
    }

    pub fn l50(&self, lambda_um: f64) -> Result<f64> {
        l50(self.delta_n(lambda_um)?, lambda_um)
    }

    pub fn delta_ng(&self, lambda_um: f64) -> Result<GroupIndex> {
        if self.table.len() < 3 {
            return Err(Error::Validation(
                "index table needs at least three points for a derivative".into(),
            ));
        }
        self.check_band(lambda_um)?;
        let (a, b) = self.table.band();
        let h = if self.allow_extrapolation {
            DERIV_STEP_UM
        } else {
            DERIV_STEP_UM.min(lambda_um - a).min(b - lambda_um)
        };
        let derivative = if h > 1e-9 {
            (self.table.eval(lambda_um + h) - self.table.eval(lambda_um - h)) / (2.0 * h)
        } else {
            self.table.spline.derivative(lambda_um)
        };
        let value = self.table.eval(lambda_um) - lambda_um * derivative;
        Ok(GroupIndex {
            value,
            near_zero: value.abs() < NEAR_ZERO_DNG,
        })
    }

    /// Rows of `(lambda_nm, C, l_50 um, dn_g)` on the given wavelengths.
    pub fn coupling_table(&self, lambda_nm: &[f64]) -> Result<Vec<[f64; 4]>> {
        lambda_nm
            .iter()
            .map(|&nm| {
                let l = nm / 1000.0;
                Ok([nm, self.coupling(l)?, self.l50(l)?, self.delta_ng(l)?.value])
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroupIndex {
    pub value: f64,
    pub near_zero: bool,
}

pub fn splitting_from_phase(phi: f64) -> Splitting {
    let cross = phi.sin().powi(2);
    Splitting {
        bar: 1.0 - cross,
        cross,
    }
}

/// `lambda / (4 dn)`.
pub fn l50(delta_n: f64, lambda_um: f64) -> Result<f64> {
    if !(delta_n > 0.0) {
        return Err(Error::Domain(format!(
            "index difference must be positive, got {delta_n}"
        )));
    }
    Ok(lambda_um / (4.0 * delta_n))
}

/// Smoothing-spline fit of the cross-coupling `C = P14 / (P13 + P14)`
/// measured at the two output ports.
#[derive(Clone, Debug)]
pub struct MeasuredCoupling {
    pub lambda_nm: Vec<f64>,
    pub raw: Vec<f64>,
    pub smoothing: f64,
    spline: CubicSpline,
}

impl MeasuredCoupling {
    /// Fitted `C(lambda)`, clamped to `[0, 1]`.
    pub fn eval(&self, lambda_nm: f64) -> f64 {
        self.spline.eval(lambda_nm).clamp(0.0, 1.0)
    }

    pub fn rms_residual(&self) -> f64 {
        let ss: f64 = self
            .lambda_nm
            .iter()
            .zip(&self.raw)
            .map(|(l, c)| (self.eval(*l) - c).powi(2))
            .sum();
        (ss / self.raw.len() as f64).sqrt()
    }
}

/// Fits the measured port powers with a cubic smoothing spline. `smoothing`
/// is the curvature penalty; `None` selects it by generalized cross-validation.
pub fn fit_measured_coupling(
    lambda_nm: &[f64],
    p13: &[f64],
    p14: &[f64],
    smoothing: Option<f64>,
) -> Result<MeasuredCoupling> {
    if lambda_nm.len() != p13.len() || lambda_nm.len() != p14.len() {
        return Err(Error::Validation("coupler columns differ in length".into()));
    }
    if lambda_nm.len() < 4 {
        return Err(Error::Validation(
            "coupler fit needs at least four samples".into(),
        ));
    }
    let mut rows: Vec<(f64, f64)> = Vec::with_capacity(lambda_nm.len());
    for i in 0..lambda_nm.len() {
        let total = p13[i] + p14[i];
        if !(total > 0.0) || p13[i] < 0.0 || p14[i] < 0.0 {
            return Err(Error::Validation(format!(
                "invalid port powers at {} nm",
                lambda_nm[i]
            )));
        }
        rows.push((lambda_nm[i], p14[i] / total));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let k = curvature_penalty(&x)?;
    let yv = DVector::from_vec(y.clone());
    let smoothing = match smoothing {
        Some(s) if s >= 0.0 => s,
        Some(s) => return Err(Error::Domain(format!("negative smoothing {s}"))),
        None => gcv_smoothing(&k, &yv),
    };
    let fitted = smooth(&k, &yv, smoothing)?;
    let spline = CubicSpline::natural(&x, fitted.as_slice())?;
    Ok(MeasuredCoupling {
        lambda_nm: x,
        raw: y,
        smoothing,
        spline,
    })
}

/// `K = Q R^-1 Q^T`, the roughness matrix of a natural cubic spline on knots `x`.
fn curvature_penalty(x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(
            "coupler wavelengths must be distinct".into(),
        ));
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut q = DMatrix::<f64>::zeros(n, n - 2);
    let mut r = DMatrix::<f64>::zeros(n - 2, n - 2);
    for j in 0..n - 2 {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < n - 2 {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    let rinv_qt = r
        .cholesky()
        .ok_or_else(|| Error::Validation("degenerate coupler wavelength grid".into()))?
        .solve(&q.transpose());
    Ok(&q * rinv_qt)
}

fn smooth(k: &DMatrix<f64>, y: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
    let n = y.len();
    let a = DMatrix::<f64>::identity(n, n) + k * s;
    a.cholesky()
        .map(|c| c.solve(y))
        .ok_or_else(|| Error::Validation("smoothing system is singular".into()))
}

fn gcv_smoothing(k: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len();
    let scale = k.diagonal().abs().max().max(f64::MIN_POSITIVE);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=60 {
        let s = 10f64.powf(-8.0 + 0.2 * i as f64) / scale;
        let a = DMatrix::<f64>::identity(n, n) + k * s;
        let Some(inv) = a.cholesky().map(|c| c.inverse()) else {
            continue;
        };
        let resid = y - &inv * y;
        let dof = n as f64 - inv.trace();
        if dof <= 1e-9 {
            continue;
        }
        let score = n as f64 * resid.norm_squared() / (dof * dof);
        if score < best.0 {
            best = (score, s);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_table(dn: f64) -> DeltaNTable {
        DeltaNTable::new(vec![1.4, 1.5, 1.6, 1.7], vec![dn; 4]).unwrap()
    }

    #[test]
    fn design_point_values() {
        let d = CouplerDesign::design_point();
        assert_relative_eq!(d.l50(1.55).unwrap(), 8.3, epsilon = 1e-12);
        assert_relative_eq!(d.delta_ng(1.55).unwrap().value, -0.22, epsilon = 1e-8);
        let s = d.splitting(1.55).unwrap();
        assert_relative_eq!(s.cross, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn splitting_limits() {
        let t = constant_table(0.05);
        let l50 = l50(0.05, 1.5).unwrap();
        assert_relative_eq!(l50, 7.5, epsilon = 1e-12);
        let d = CouplerDesign::new(t, l50);
        assert_relative_eq!(d.splitting(1.5).unwrap().cross, 0.5, epsilon = 1e-12);
        let full = d.clone().with_l_dc(2.0 * l50).splitting(1.5).unwrap();
        assert_relative_eq!(full.cross, 1.0, epsilon = 1e-12);
        let none = d.with_l_dc(0.0).splitting(1.5).unwrap();
        assert_eq!(none.bar, 1.0);
    }

    #[test]
    fn l50_rejects_nonpositive_index() {
        assert!(l50(0.0, 1.5).is_err());
        assert_relative_eq!(l50(0.1, 1.5).unwrap(), l50(0.05, 1.5).unwrap() / 2.0);
    }

    #[test]
    fn group_index_limits() {
        let c = CouplerDesign::new(constant_table(0.07), 5.0);
        assert_relative_eq!(c.delta_ng(1.55).unwrap().value, 0.07, epsilon = 1e-9);
        let lam = vec![1.4, 1.5, 1.6, 1.7];
        let prop = DeltaNTable::new(lam.clone(), lam.iter().map(|l| 0.03 * l).collect()).unwrap();
        let g = CouplerDesign::new(prop, 5.0).delta_ng(1.55).unwrap();
        assert!(g.value.abs() < 1e-9);
        assert!(g.near_zero);
    }

    #[test]
    fn sparse_table_rejected() {
        let t = DeltaNTable::new(vec![1.5, 1.6], vec![0.05, 0.05]).unwrap();
        assert!(CouplerDesign::new(t, 5.0).delta_ng(1.55).is_err());
    }

    #[test]
    fn out_of_band_needs_flag() {
        let mut d = CouplerDesign::design_point();
        assert!(d.splitting(1.8).is_err());
        d.allow_extrapolation = true;
        assert!(d.splitting(1.8).is_ok());
    }

    #[test]
    fn flat_splitting_at_zero_group_index() {
        let lam: Vec<f64> = (0..31).map(|i| 1.4 + 0.01 * i as f64).collect();
        let t = DeltaNTable::new(lam.clone(), lam.iter().map(|l| 0.03 * l).collect()).unwrap();
        let d = CouplerDesign::new(t, 11.0);
        let h = 1e-4;
        let slope = (d.coupling(1.55 + h).unwrap() - d.coupling(1.55 - h).unwrap()) / (2.0 * h);
        assert!(slope.abs() < 1e-9);
    }

    #[test]
    fn measured_fit_tracks_smooth_coupling() {
        let lam: Vec<f64> = (0..60).map(|i| 1480.0 + 2.0 * i as f64).collect();
        let truth = |l: f64| 0.5 + 0.1 * ((l - 1540.0) / 40.0).tanh();
        let p14: Vec<f64> = lam
            .iter()
            .enumerate()
            .map(|(i, &l)| truth(l) + 0.005 * ((i * 7919) % 13) as f64 / 13.0 - 0.0025)
            .collect();
        let p13: Vec<f64> = p14.iter().map(|c| 1.0 - c).collect();
        let fit = fit_measured_coupling(&lam, &p13, &p14, None).unwrap();
        for &l in &[1500.0, 1540.0, 1580.0] {
            assert!((fit.eval(l) - truth(l)).abs() < 0.005);
        }
        let exact = fit_measured_coupling(&lam, &p13, &p14, Some(0.0)).unwrap();
        assert!(exact.rms_residual() < 1e-12);
    }
}
