//! Vertex scattering matrices.
//!
//! A vertex of degree `d` maps the `d` incoming amplitudes on its ports to the
//! `d` outgoing amplitudes through a `d x d` matrix `sigma`, with
//! `sigma[(out, in)]` the amplitude sent to port `out` by a unit wave arriving
//! on port `in`.
//!
//! The 2:2 directional coupler uses the port order `(1, 2 | 3, 4)`: light
//! entering on one pair leaves on the other pair, never backscatters, and the
//! cross-coupled amplitude carries a factor `+i` relative to the bar amplitude:
//!
//! ```text
//!        | 0        0        sqrt(1-C)  i sqrt(C) |
//! sigma =| 0        0        i sqrt(C)  sqrt(1-C) |
//!        | sqrt(1-C) i sqrt(C) 0        0         |
//!        | i sqrt(C) sqrt(1-C) 0        0         |
//! ```

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance on `sigma^dagger sigma = I` for a lossless vertex.
pub const UNITARITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum ScattererKind {
    /// 2:2 bidirectional directional coupler with power coupling `C`.
    Coupler { c: f64 },
    /// Transparent degree-2 vertex.
    Passthrough,
    /// Degree-1 end with reflection coefficient `r`, `|r| = 1`.
    Reflector { r: Complex64 },
    /// Any unitary matrix, e.g. for randomized property tests.
    Custom,
}

#[derive(Clone, Debug)]
pub struct VertexScatterer {
    pub kind: ScattererKind,
    pub matrix: DMatrix<Complex64>,
}

impl VertexScatterer {
    pub fn coupler(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) || !c.is_finite() {
            return Err(Error::Validation(format!(
                "coupler coupling C = {c} outside [0, 1]"
            )));
        }
        Ok(Self {
            kind: ScattererKind::Coupler { c },
            matrix: coupler_matrix(c),
        })
    }

    pub fn passthrough() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        Self {
            kind: ScattererKind::Passthrough,
            matrix: DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]),
        }
    }

    pub fn reflector(r: Complex64) -> Result<Self> {
        if (r.norm() - 1.0).abs() > UNITARITY_TOL {
            return Err(Error::Validation(format!(
                "reflector coefficient |r| = {} must be 1",
                r.norm()
            )));
        }
        Ok(Self {
            kind: ScattererKind::Reflector { r },
            matrix: DMatrix::from_element(1, 1, r),
        })
    }

    pub fn custom(matrix: DMatrix<Complex64>) -> Result<Self> {
        let s = Self {
            kind: ScattererKind::Custom,
            matrix,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn degree(&self) -> usize {
        self.matrix.nrows()
    }

    /// Checks squareness, unitarity and, for couplers, symmetry.
    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Validation(format!(
                "vertex matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = unitarity_defect(m);
        if defect > UNITARITY_TOL * m.nrows() as f64 {
            return Err(Error::Validation(format!(
                "vertex matrix is not unitary: ||s^H s - I||_F = {defect:.3e}"
            )));
        }
        if let ScattererKind::Coupler { .. } = self.kind {
            if m.nrows() != 4 {
                return Err(Error::Validation("a coupler must have 4 ports".into()));
            }
            if (m - m.transpose()).norm() > UNITARITY_TOL {
                return Err(Error::Validation("coupler matrix must be symmetric".into()));
            }
        }
        Ok(())
    }

    /// Copy of this scatterer with every cross-coupling phase `+i` replaced by `-i`.
    /// Leaves `|sigma|` untouched.
    pub fn conjugate_cross_phase(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            matrix: self.matrix.map(|z| if z.re == 0.0 { z.conj() } else { z }),
        }
    }
}

pub fn coupler_matrix(c: f64) -> DMatrix<Complex64> {
    let bar = Complex64::new((1.0 - c).sqrt(), 0.0);
    let cross = Complex64::new(0.0, c.sqrt());
    let z = Complex64::new(0.0, 0.0);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            z, z, bar, cross, //
            z, z, cross, bar, //
            bar, cross, z, z, //
            cross, bar, z, z,
        ],
    )
}

/// Frobenius norm of `M^H M - I`.
pub fn unitarity_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.ncols();
    (m.adjoint() * m - DMatrix::<Complex64>::identity(n, n)).norm()
}
