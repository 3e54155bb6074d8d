//! Interval enclosures of nonsmooth maps via mixed-monotone remainder-form decomposition
//! functions, with reachability, set inversion and interval observers built on top.
//!
//! Module map:
//! - [`interval`]: intervals, boxes, the Hausdorff tightness metric.
//! - [`expr`]: expression trees, parsing, interval evaluation, Clarke Jacobian bounds.
//! - [`decomp`]: remainder-form decomposition functions (`T_R`, `T_L`, `T_O`).
//! - [`inclusion`]: natural / centered / mixed-centered forms, best-of, error bounds,
//!   subdivision and the sampled range oracle.
//! - [`reach`]: embedding systems and reach tubes.
//! - [`setinv`]: decomposition-based set inversion.
//! - [`observer`]: measurement constraints and the predict/update loop.
//! - [`model`]: model files, bundled benchmarks and tube serialization.

pub mod decomp;
pub mod error;
pub mod expr;
pub mod inclusion;
pub mod interval;
pub mod model;
pub mod observer;
pub mod reach;
pub mod setinv;

pub use decomp::TimeSemantics;
pub use error::{Error, Result};
pub use expr::{ClarkeInterval, Expr, JacobianBounds};
pub use inclusion::{MethodId, VectorFunction};
pub use interval::{hausdorff_q, ExtendedBound, Interval, IntervalBox};
pub use model::SystemModel;
pub use reach::ReachTube;
pub use setinv::InversionConfig;
