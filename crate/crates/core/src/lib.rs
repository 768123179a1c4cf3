//! Gaussian mixture models fitted directly to geometric primitives.
//!
//! A triangle, a point, or an uncertainty rectangle is summarized by its
//! centroid, its second central moment and its size. Expectation-maximization
//! over those summaries integrates the component log-densities over each
//! primitive in closed form, so a mesh can be fitted without sampling its
//! surface first. The fitted mixtures drive rigid registration: point-to-mixture
//! likelihood maximization, an L2 mixture-to-mixture distance, and an ICP
//! baseline.
//!
//! ```
//! use meshgmm::em::{fit, FitConfig};
//! use meshgmm::geometry::{mesh_to_primitives, TriangleMesh, Vec3};
//!
//! let mesh = TriangleMesh::new(
//!     vec![
//!         Vec3::new(0.0, 0.0, 0.0),
//!         Vec3::new(1.0, 0.0, 0.0),
//!         Vec3::new(0.0, 1.0, 0.0),
//!         Vec3::new(0.0, 0.0, 1.0),
//!     ],
//!     vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
//! )?;
//! let primitives = mesh_to_primitives(&mesh);
//! let report = fit(&primitives, &FitConfig::new(2))?;
//! assert_eq!(report.model.len(), 2);
//! # Ok::<(), meshgmm::Error>(())
//! ```

pub mod cli;
pub mod em;
mod error;
pub mod geometry;
pub mod harness;
pub mod mixture;
pub mod registration;

pub use error::{Error, Location, Result};

// Book chapters are compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/primitives.md")]
    mod primitives {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/registration.md")]
    mod registration {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
