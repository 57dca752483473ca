//! Equivariant normal forms for scalar delay equations at a saddle-node/multiple-Hopf
//! point, and the realizability of radial normal-form jets by delayed polynomial
//! nonlinearities.

pub mod error;
pub mod homological;
pub mod linalg;
pub mod normal_form;
pub mod poly;
pub mod realize;
pub mod spectral;
pub mod symmetry;

pub use error::{Error, ErrorKind, Result};
pub use poly::{C64, Flavor, Layout, Monomial, Poly, SpaceDesc, VarKind, VectorPoly};
