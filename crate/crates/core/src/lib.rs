//! Relative-arbitrage bookkeeping on the unit simplex: free-energy and
//! entropy ledgers, entropy-driven rebalancing rules, sector hierarchies, the
//! two-asset matching model, its variational problem and a diffusion
//! laboratory for local times.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod format;
pub mod hierarchy;
pub mod io;
pub mod ledger;
pub mod quadrature;
pub mod simplex;
pub mod strategies;
pub mod synthetic;
pub mod two_asset;
pub mod variational;

pub use error::{Error, Result};
pub use ledger::{build_ledger, free_energy, DecompositionLedger, LedgerRow, MarketPath};
pub use simplex::{generating_function_value, relative_entropy, shannon_entropy, EntropyValue, SimplexVector};
