//! Dual-control solver for long-horizon expected-utility maximisation.
//!
//! The dual value `v(τ, y) = E[V(y Ỹ_τ)]` is a lognormal expectation and is
//! evaluated by quadrature; the primal value, the optimal allocation and the
//! distance to the Merton allocation follow by inverting `v_y = -x`.

pub mod closed_forms;
pub mod dual_solver;
pub mod error;
pub mod format;
pub mod market;
pub mod normal;
pub mod optimize;
pub mod oracle;
pub mod primal_solver;
pub mod quadrature;
pub mod simulate;

pub mod turnpike;
pub mod utility;

pub use dual_solver::{DualSurface, QuadratureConfig, Route};
pub use error::{Error, Result};
pub use market::{derived_constants, ConeSpec, DerivedConstants, MarketParams};
pub use primal_solver::{PrimalPoint, Region};
pub use turnpike::{BoundConstants, TurnpikeReport};
pub use utility::{AsymptoticClass, AsymptoticKind, DualUtilitySpec, ExtendedReal, UtilitySpec};
