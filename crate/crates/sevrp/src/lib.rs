//! Solver toolkit for the stochastic electric vehicle routing problem with a
//! threshold recharging policy.
//!
//! An electric vehicle serves a fixed customer sequence; energy consumption on
//! each arc is uncertain. Whenever the state of charge drops to a threshold
//! `Q^T` mid-arc, the vehicle detours to a charging station and recharges so
//! that it reaches the next customer with exactly `Q^G`. The toolkit provides:
//!
//! - [`instance`]: network loading (canonical files and benchmark imports),
//!   validation, distance/time/energy matrices;
//! - [`charging`]: piecewise-linear concave charging curves and their exact
//!   inverses;
//! - [`scenario`]: Monte Carlo energy-consumption scenarios, mean scenario,
//!   fast-forward-selection reduction;
//! - [`fixed_route`]: exact expected-duration evaluation of a fixed route
//!   under the threshold policy, lower bounds, non-dominated station tables;
//! - [`search`]: iterated local search with variable neighborhood descent that
//!   populates a route pool;
//! - [`set_partition`]: exact branch-and-bound assembly of the final solution
//!   from the pool;
//! - [`measures`]: wait-and-see / expected-value analysis (EVPI, VSS).

pub mod charging;
pub mod fixed_route;
pub mod geometry;
pub mod import;
pub mod instance;
pub mod measures;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod search;
pub mod set_partition;

/// Absolute tolerance for objective and probability comparisons.
pub const EPS: f64 = 1e-9;

/// Errors reported by the toolkit.
#[derive(Debug)]
pub enum Error {
    Io(std::io::Error),
    /// Malformed input file; the message names the offending construct.
    Parse(String),
    /// A precondition on an operation's arguments was violated.
    Invalid(String),
    /// An instance was rejected at load time; one message per violated invariant.
    Validation(Vec<String>),
    /// No feasible route exists that serves this customer alone.
    Unservable(usize),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Invalid(msg) => write!(f, "invalid argument: {msg}"),
            Error::Validation(msgs) => {
                write!(f, "instance validation failed: {}", msgs.join("; "))
            }
            Error::Unservable(c) => {
                write!(
                    f,
                    "customer {c} cannot be served by a single-customer route in every scenario"
                )
            }
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
