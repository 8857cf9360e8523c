//! Guidance frame construction and navigation/guidance transforms.
//!
//! The guidance frame is built from the current position vector and the
//! target position vector, both expressed from a common reference point.
//! Its x axis points along the current position vector, z is normal to
//! the plane spanned by the two vectors, and y completes the right-handed
//! triad. In-plane motion carries the polynomial guidance law; the
//! out-of-plane axis is regulated to zero.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Normalized-cross-product floor below which the two defining vectors
/// are treated as parallel.
pub const PARALLEL_TOL: f64 = 1e-9;

/// Orthonormal right-handed frame with origin at the target site.
#[derive(Debug, Clone)]
pub struct GuidanceFrame {
    basis: Matrix3<f64>,
    origin: Vec3,
}

impl GuidanceFrame {
    /// Builds the frame from the current position `r0` and target position
    /// `rf`, both expressed from the same reference point.
    ///
    /// e_x = r0/|r0|, e_z = (e_x x rf)/|e_x x rf|, e_y = e_z x e_x.
    pub fn build(r0: Vec3, rf: Vec3) -> Result<Self> {
        let n0 = r0.norm();
        let nf = rf.norm();
        if n0 <= 0.0 || !n0.is_finite() {
            return Err(Error::DegenerateFrame("zero or non-finite r0".into()));
        }
        let ex = r0 / n0;
        let cross = ex.cross(&rf);
        if nf <= 0.0 || cross.norm() / nf <= PARALLEL_TOL {
            return Err(Error::DegenerateFrame(
                "r0 and rf are parallel or rf is zero".into(),
            ));
        }
        let ez = cross / cross.norm();
        let ey = ez.cross(&ex);
        Ok(Self {
            basis: Matrix3::from_columns(&[ex, ey, ez]),
            origin: rf,
        })
    }

    /// Frame built from explicit basis columns. Used in tests; the caller
    /// is responsible for orthonormality.
    pub fn from_basis(basis: Matrix3<f64>, origin: Vec3) -> Self {
        Self { basis, origin }
    }

    pub fn e_x(&self) -> Vec3 {
        self.basis.column(0).into()
    }

    pub fn e_y(&self) -> Vec3 {
        self.basis.column(1).into()
    }

    pub fn e_z(&self) -> Vec3 {
        self.basis.column(2).into()
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Components of a free vector along the frame axes (T_G^T v).
    pub fn to_guidance(&self, v: Vec3) -> Vec3 {
        self.basis.tr_mul(&v)
    }

    /// Inverse transform back to the navigation frame.
    pub fn to_navigation(&self, v: Vec3) -> Vec3 {
        self.basis * v
    }
}
