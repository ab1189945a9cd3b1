use serde::{Deserialize, Serialize};

/// Tolerances shared by every numerical routine.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct NumericPolicy {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Interval budget for one adaptive quadrature call.
    pub max_subdivisions: usize,
    /// Number of dyadic shells examined by the divergence tests.
    pub shell_cap: usize,
    /// Largest upper bracket tried by root searches.
    pub bracket_max: f64,
    /// Relative spread allowed in the last quarter of a sequence before it counts as stable.
    pub stabilization_tol: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 4000,
            shell_cap: 60,
            bracket_max: 1e12,
            stabilization_tol: 1e-2,
        }
    }
}
