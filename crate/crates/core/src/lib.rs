//! Exact verification engine for elliptic current algebras: truncated series
//! arithmetic, theta and Pochhammer products, the level-one free-field
//! realization, a truncated Fock-space oracle, relation checks with convention
//! calibration, and the symbolic calculus of the infinite Hopf family.

pub mod cartan_data;
pub mod fock_oracle;
pub mod free_field;
pub mod hopf_family;
pub mod lattice_series;
pub mod relation_checker;
pub mod theta_products;
