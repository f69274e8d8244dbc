//! Bilinear geometry map, its Jacobian, and the covariant Piola transform
//! for rotation fields.
//!
//! The geometry map of an element is `F(p) = sum_i c_i psi_i(p)` with the
//! four bilinear corner functions. A scalar field transported as
//! `u = u_hat o F^{-1}` has physical gradient `DF^{-T} grad_hat u_hat`, and
//! the covariant map transports rotation fields the same way:
//! `theta = DF^{-T} theta_hat o F^{-1}`. This preserves tangential edge
//! traces and maps reference gradients onto physical gradients, which is
//! the mechanism that removes shear locking. The plain parametric variant
//! (`theta = theta_hat o F^{-1}` componentwise) is kept for comparison; on
//! non-affine elements it cannot represent the gradients of the parametric
//! displacement space.
//!
//! The inverse map `F^{-1}` is never evaluated: everything flows from
//! reference points to physical points at quadrature time.

use nalgebra::Matrix2;
use thiserror::Error;

use crate::mesh::{QuadMesh, Vec2};
use crate::reference::geometry_basis;

pub type Mat2 = Matrix2<f64>;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("element map has non-positive Jacobian determinant {det} at corner {corner}")]
    NonPositiveJacobian { corner: usize, det: f64 },
    #[error("singular Jacobian at reference point ({0}, {1})")]
    SingularJacobian(f64, f64),
}

/// How rotation fields are transported from the reference square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationVariant {
    /// `theta = DF^{-T} theta_hat`: preserves tangential traces and the
    /// gradient inclusion; locking-free.
    Covariant,
    /// `theta = theta_hat` componentwise; locks on non-affine meshes as the
    /// thickness tends to zero.
    PlainParametric,
}

impl RotationVariant {
    pub fn label(self) -> &'static str {
        match self {
            RotationVariant::Covariant => "covariant",
            RotationVariant::PlainParametric => "parametric",
        }
    }
}

/// Bilinear map of one element, with the constant part of the Jacobian
/// derivative precomputed from the corner coordinates.
#[derive(Clone, Debug)]
pub struct ElementMap {
    corners: [Vec2; 4],
    /// Coefficients of `x(p) = ax[0] + ax[1] p.x + ax[2] p.y + ax[3] p.x p.y`.
    ax: [f64; 4],
    ay: [f64; 4],
    /// `d/dx_hat DF^T` and `d/dy_hat DF^T`; both constant for bilinear maps.
    ddx_dft: Mat2,
    ddy_dft: Mat2,
}

impl ElementMap {
    pub fn new(corners: [Vec2; 4]) -> Result<Self, MappingError> {
        let c = corners;
        let ax = [
            c[0].x,
            c[1].x - c[0].x,
            c[3].x - c[0].x,
            c[0].x - c[1].x + c[2].x - c[3].x,
        ];
        let ay = [
            c[0].y,
            c[1].y - c[0].y,
            c[3].y - c[0].y,
            c[0].y - c[1].y + c[2].y - c[3].y,
        ];
        let map = Self {
            corners,
            ax,
            ay,
            // DF^T = [[ax1 + ax3 y, ay1 + ay3 y], [ax2 + ax3 x, ay2 + ay3 x]]
            ddx_dft: Mat2::new(0.0, 0.0, ax[3], ay[3]),
            ddy_dft: Mat2::new(ax[3], ay[3], 0.0, 0.0),
        };
        for (k, corner) in [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ]
        .into_iter()
        .enumerate()
        {
            let det = map.jacobian(corner).determinant();
            if det <= 0.0 {
                return Err(MappingError::NonPositiveJacobian { corner: k, det });
            }
        }
        Ok(map)
    }

    pub fn for_element(mesh: &QuadMesh, k: usize) -> Result<Self, MappingError> {
        Self::new(mesh.corners(k))
    }

    pub fn corners(&self) -> &[Vec2; 4] {
        &self.corners
    }

    /// Map a reference point to the physical plane.
    pub fn map_point(&self, p: Vec2) -> Vec2 {
        let psi = geometry_basis(p);
        (0..4).map(|i| psi[i] * self.corners[i]).sum()
    }

    /// Jacobian `DF` with entries `DF[i][j] = d x_i / d p_j`.
    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        Mat2::new(
            self.ax[1] + self.ax[3] * p.y,
            self.ax[2] + self.ax[3] * p.x,
            self.ay[1] + self.ay[3] * p.y,
            self.ay[2] + self.ay[3] * p.x,
        )
    }

    pub fn jacobian_det(&self, p: Vec2) -> f64 {
        self.jacobian(p).determinant()
    }

    fn inverse_jacobian(&self, p: Vec2) -> Result<Mat2, MappingError> {
        self.jacobian(p)
            .try_inverse()
            .ok_or(MappingError::SingularJacobian(p.x, p.y))
    }

    /// Transport a rotation value from the reference square.
    pub fn push_rotation(
        &self,
        variant: RotationVariant,
        p: Vec2,
        theta_hat: Vec2,
    ) -> Result<Vec2, MappingError> {
        match variant {
            RotationVariant::Covariant => Ok(self.inverse_jacobian(p)?.transpose() * theta_hat),
            RotationVariant::PlainParametric => Ok(theta_hat),
        }
    }

    /// Physical gradient of a mapped scalar: `DF^{-T} grad_hat`. This is
    /// the same linear map as the covariant rotation push.
    pub fn physical_gradient_scalar(
        &self,
        p: Vec2,
        reference_gradient: Vec2,
    ) -> Result<Vec2, MappingError> {
        Ok(self.inverse_jacobian(p)?.transpose() * reference_gradient)
    }

    /// Full physical gradient `G[i][j] = d theta_i / d x_j` of a transported
    /// rotation basis function, given its reference value and the two
    /// reference partial derivatives.
    ///
    /// For the covariant variant the parametric derivative of the pushed
    /// field picks up the correction `(d/dp DF^T) theta` before the final
    /// chain rule; for the plain variant that term is absent.
    pub fn physical_rotation_gradient(
        &self,
        variant: RotationVariant,
        p: Vec2,
        theta_hat: Vec2,
        d_dx_hat: Vec2,
        d_dy_hat: Vec2,
    ) -> Result<Mat2, MappingError> {
        let inv = self.inverse_jacobian(p)?;
        let inv_t = inv.transpose();
        let (col_x, col_y) = match variant {
            RotationVariant::Covariant => {
                let theta = inv_t * theta_hat;
                (
                    inv_t * (d_dx_hat - self.ddx_dft * theta),
                    inv_t * (d_dy_hat - self.ddy_dft * theta),
                )
            }
            RotationVariant::PlainParametric => (d_dx_hat, d_dy_hat),
        };
        // Columns hold d theta / d p_alpha; the chain rule contracts with
        // DF^{-1} to produce derivatives in physical coordinates.
        let parametric = Mat2::from_columns(&[col_x, col_y]);
        Ok(parametric * inv)
    }
}
