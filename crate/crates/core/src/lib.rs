//! Algorithmic-pricing laboratory: repeated Bertrand price competition between
//! reinforcement-learning agents.
//!
//! The crate is organized bottom-up:
//!
//! * [`market`] - demand and profit for the three market models (standard
//!   Bertrand, Bertrand-Edgeworth, logit).
//! * [`equilibrium`] - one-shot Nash and joint-monopoly benchmark prices, used
//!   to normalize learned outcomes.
//! * [`env`] - discrete price grid, memory-based state encoding, and the
//!   simultaneous-move pricing environment.
//! * [`neural`] - small hand-rolled MLP with analytic backprop and Adam, the
//!   substrate for the deep agents.
//! * [`agents`] - tabular Q-learning, deep Q-learning, and PPO, plus frozen
//!   (greedy, non-learning) wrappers.
//! * [`metrics`] - relative-price and relative-profit collusion indices and
//!   windowed aggregation.
//! * [`harness`] - seeded single runs, multi-seed experiment scenarios, and
//!   CSV/manifest output.

pub mod agents;
pub mod config;
pub mod env;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod market;
pub mod metrics;
pub mod neural;
pub mod seeding;

pub use error::{Error, Result};
