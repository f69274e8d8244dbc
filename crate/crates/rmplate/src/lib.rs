//! Locking-free quadrilateral finite elements for the clamped
//! Reissner-Mindlin plate.
//!
//! The discretization pairs continuous biquadratic (Q2) displacements with
//! element-local discontinuous rotations in `Q(1,2) x Q(2,1)` on the
//! reference square. Pushed to the physical element through the covariant
//! Piola transform, the rotation space contains the gradient of every
//! discrete displacement, so the shear constraint `grad u - theta = 0` can
//! be satisfied exactly and the method stays accurate uniformly in the
//! plate thickness. Inter-element and boundary continuity of the rotations
//! is enforced weakly by a symmetric interior-penalty (Nitsche) form.
//!
//! The crate is organized along the pipeline:
//!
//! * [`mesh`] - convex quadrilateral meshes, structured trapezoid and
//!   perturbed generators, edge topology with fixed normals.
//! * [`reference`](mod@reference) - reference-square bases and Gauss quadrature.
//! * [`mapping`] - bilinear geometry map, its Jacobian, and the covariant
//!   Piola transform for rotations (plus the plain parametric variant used
//!   for locking comparisons).
//! * [`spaces`] - global numbering of displacement/rotation unknowns,
//!   clamped-boundary constraints, interpolation operators.
//! * [`assembly`] - element and edge matrices of the penalized bilinear
//!   form and the coupled sparse symmetric system.
//! * [`solver`] - deterministic sparse direct factorization with a
//!   conjugate-gradient fallback.
//! * [`analysis`] - manufactured solution, error norms, convergence rates,
//!   and the locking-ratio diagnostic.
//! * [`driver`] - experiment configurations and CSV emission used by the
//!   command-line front end.
//!
//! A quick single solve on a small mesh:
//!
//! ```
//! use rmplate::analysis::{exact_fields, l2_error_displacement};
//! use rmplate::assembly::{assemble, MaterialParams};
//! use rmplate::mapping::RotationVariant;
//! use rmplate::mesh::generate_trapezoid_sequence;
//! use rmplate::solver::solve_spd;
//! use rmplate::spaces::build_dof_map;
//!
//! let mesh = generate_trapezoid_sequence(2, 0.25).unwrap().pop().unwrap();
//! let dofs = build_dof_map(&mesh);
//! let params = MaterialParams::standard(1e-2).unwrap();
//! let exact = exact_fields(params.e, params.nu, params.t);
//!
//! let system = assemble(&mesh, &dofs, &params, RotationVariant::Covariant, |p| {
//!     exact.load(p)
//! })
//! .unwrap();
//! let solution = solve_spd(&system).unwrap();
//!
//! assert!(solution.relative_residual < 1e-10);
//! assert!(l2_error_displacement(&mesh, &dofs, &solution, &exact) > 0.0);
//! ```

pub mod analysis;
pub mod assembly;
mod dd;
pub mod driver;
pub mod mapping;
pub mod mesh;
pub mod reference;
pub mod rng;
pub mod solver;
pub mod spaces;

pub use mesh::{Vec2};

// The guide chapters double as doc tests so their snippets cannot drift
// away from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/plate-model.md")]
    pub struct PlateModel;
    #[doc = include_str!("../../../book/src/meshes.md")]
    pub struct Meshes;
    #[doc = include_str!("../../../book/src/reference-and-mapping.md")]
    pub struct ReferenceAndMapping;
    #[doc = include_str!("../../../book/src/method.md")]
    pub struct Method;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
