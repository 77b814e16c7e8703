//! Dislocated bodies as cone-metric meshes, their smooth Weitzenböck limits,
//! and hyperelastic energies on both.

pub mod cone_mesh;
pub mod constitutive;
pub mod dislocation_builder;
pub mod elastic_energy;
pub mod geom;
pub mod homogenize;
pub mod lbfgs;
pub mod mesher;
pub mod ode;
pub mod weitzenbock_field;
