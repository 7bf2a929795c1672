//! Controlled nonlocal dynamics on particle clouds.
//!
//! Every particle moves with `ẋᵢ = Σ_u ξ(u|t) f(xᵢ, m(t), u)` where `m(t)` is
//! the current cloud itself, so the particle system solves the continuity
//! equation exactly on finite supports.

mod bounds;
mod control;
mod field;
mod integrate;

pub use bounds::{check_apriori_bounds, AprioriConstants, BoundReport, BoundStep};
pub use control::{ControlGrid, RelaxedControl, ROW_SUM_TOL};
pub use field::{check_field_constants, eval_field, AffineMeanField, FieldCheck, FnField, VectorField};
pub use integrate::{averaged_velocity, flow_map, integrate, integrate_with, Trajectory, BLOW_UP_LIMIT};

pub(crate) use integrate::step_count;
