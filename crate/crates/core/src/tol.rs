//! Numeric tolerances shared across modules.

/// Probability rows must sum to one within this.
pub const PROB_SUM: f64 = 1e-9;
/// Argmax/argmin ties and strict-inequality margins.
pub const TIE: f64 = 1e-9;
/// Population shares must sum to one within this.
pub const SHARE_SUM: f64 = 1e-12;
/// Two consequence distributions count as different beyond this.
pub const DIST_EQ: f64 = 1e-12;
/// Pivot threshold for the simplex solver.
pub const PIVOT: f64 = 1e-11;
