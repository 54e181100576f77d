//! Numerical tolerances shared by all stages.
//!
//! Every tolerance is a named, positive number that can be overridden from
//! the command line with `--set key=value`. Unknown keys are rejected.

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown tolerance key `{0}`")]
    UnknownKey(String),
    #[error("tolerance `{key}` must be a positive finite number, got `{value}`")]
    NotPositive { key: String, value: String },
    #[error("malformed override `{0}` (expected key=value)")]
    Malformed(String),
}

macro_rules! tolerances {
    ($( $(#[$doc:meta])* $name:ident = $default:expr ),* $(,)?) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct Tolerances {
            $( $(#[$doc])* pub $name: f64, )*
        }

        impl Default for Tolerances {
            fn default() -> Self {
                Tolerances { $( $name: $default, )* }
            }
        }

        impl Tolerances {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($name) ),*];

            pub fn set(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
                if !(value.is_finite() && value > 0.0) {
                    return Err(ConfigError::NotPositive { key: key.into(), value: value.to_string() });
                }
                match key {
                    $( stringify!($name) => self.$name = value, )*
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<f64> {
                match key {
                    $( stringify!($name) => Some(self.$name), )*
                    _ => None,
                }
            }
        }
    };
}

tolerances! {
    /// Residual scale multiplying the gradient tolerances.
    scale = 1.0,
    /// Newton stopping threshold on `|∇f|` for critical points (times `scale`).
    newton_tol = 1e-10,
    /// Eigenvalues with `|λ| ≤ degeneracy_tol · max(‖H‖, scale)` count as zero.
    degeneracy_tol = 1e-6,
    /// Residual threshold of the bordered fold system.
    fold_tol = 1e-10,
    /// Transversality scalars must exceed this in magnitude.
    trans_tol = 1e-8,
    /// Critical points closer than this are merged.
    dedup_tol = 1e-6,
    /// Slack on the critical-point ball radius.
    ball_slack = 1e-3,
    /// Fold times must be separated by more than `time_sep · T`.
    time_sep = 1e-6,
    /// Residual threshold for branch points (times `scale`).
    branch_tol = 1e-9,
    /// Continuation hands over to the fold solver when `λ_min` drops below
    /// `fold_trigger` times its initial value.
    fold_trigger = 1e-4,
    /// Largest continuation step as a fraction of `T`.
    branch_max_step = 0.01,
    /// Tolerance for landing consistency of the assembled evolution.
    landing_tol = 1e-6,
    /// Relative local error tolerance of the fast (frozen-time) integrator.
    fast_ode_tol = 1e-10,
    /// Longest fast-time integration before giving up.
    s_budget = 1e6,
    /// Landing is declared when `|∇f| < land_grad_tol` (times `scale`).
    land_grad_tol = 1e-9,
    /// Distance to the fold at the start of the reported heteroclinic window.
    depart_tol = 1e-7,
    /// Heteroclinic seed offset along the kernel direction, as a fraction of
    /// the distance to the nearest other critical point.
    seed_offset = 1e-4,
    /// Relative local error tolerance of the stiff flow integrator.
    ode_tol = 1e-8,
    /// Slack on the a-priori bound of the flow.
    bound_slack = 1e-6,
    /// Smallest admissible flow step as a fraction of `T`.
    min_step = 1e-15,
    /// Event location tolerance as a fraction of `T`.
    event_tol = 1e-12,
    /// Exclusion half-width around jump times, as a fraction of `T`.
    eta = 0.05,
    /// Phase anchor radius as a fraction of `min(Λ, |y_i − x_i|)`.
    delta_anchor = 0.45,
    /// Number of time samples in the fold census.
    census_points = 200.0,
    /// Cap on the number of branches of an evolution.
    max_branches = 64.0,
}

impl Tolerances {
    /// Applies `key=value` overrides in order.
    pub fn with_overrides<I, S>(mut self, overrides: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for item in overrides {
            let item = item.as_ref();
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed(item.to_string()))?;
            let (k, v) = (k.trim(), v.trim());
            if self.get(k).is_none() {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            let value: f64 = v.parse().map_err(|_| ConfigError::NotPositive {
                key: k.to_string(),
                value: v.to_string(),
            })?;
            self.set(k, value)?;
        }
        Ok(self)
    }
}
