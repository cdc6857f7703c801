//! Special functions, quadrature, root finding, ODE integration and banded
//! linear solvers shared by the physics modules.

pub mod linalg;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod special;

pub use ode::{dopri5, OdeOptions, Trajectory};
pub use quad::{periodic_mean, quad_adaptive, quad_hermite, GaussRule};
pub use roots::{find_all_roots, find_root, roots_on_nodes, try_find_root, BracketedRoot, ROOT_TOL};
pub use special::{bessel_i0, bessel_i0e, bessel_i1, bessel_i1e, elliptic_k};
