//! Periodic orbits, resonance tongues and shrinking points of continuous
//! piecewise-smooth maps.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod cyclealg;
pub mod error;
pub mod linalg;
pub mod mapmodel;
pub mod shrinkfind;
pub mod symbolic;
pub mod tonguescan;
pub mod unfold;
pub mod verify;

pub use continuation::ContinuationSettings;
pub use cyclealg::{Cycle, CycleMatrices, Stability};
pub use error::{Error, Result};
pub use mapmodel::{build_example, ExampleParams, MapSpec, ParamName, ParamPlane, PolyTerm, PwsMap};
pub use shrinkfind::{SearchBox, ShrinkSettings, ShrinkingPointReport};
pub use symbolic::{RotationalParams, Symbol, SymbolWord};
pub use tonguescan::{GridSpec, ScanSettings, TongueGrid};
pub use unfold::{UnfoldSettings, UnfoldingReport};
pub use verify::{SuiteResult, VerifySettings};
