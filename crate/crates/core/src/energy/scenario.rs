//! Scenarios: an energy together with its horizon, coercivity constants,
//! initial point and ε ladder.
//!
//! File format, one `key = value` per line, `#` starts a comment:
//!
//! ```text
//! name = dwell
//! n    = 1
//! T    = 0.6
//! f    = x1^4/4 - x1^2/2 - t*x1
//! c0   = 0.5
//! a0   = 2
//! y0   = -1
//! eps  = 1e-2, 1e-3, 1e-4
//! ```

use super::parse::{parse_energy_at, ParseError};
use super::Energy;
use crate::linalg::jacobi_eigen;
use nalgebra::DVector;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const BUILTIN_NAMES: &[&str] = &[
    "quadratic",
    "tracking",
    "dwell",
    "dwell2d",
    "oscillating",
    "degenerate",
    "saddle_landing",
];

const KEYS: &[&str] = &["name", "n", "T", "f", "c0", "a0", "y0", "eps"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("energy expression at {0}")]
    Expression(#[from] ParseError),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: invalid `{key}`: {message}")]
    Invalid { line: usize, key: String, message: String },
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
}

/// Stationarity and stability of `y0` at `t = 0`, measured at load time.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialPointCheck {
    pub grad_norm: f64,
    pub lambda_min: f64,
}

impl InitialPointCheck {
    pub fn passes(&self, grad_tol: f64, lambda_tol: f64) -> bool {
        self.grad_norm <= grad_tol && self.lambda_min > lambda_tol
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
    /// Source text of the energy.
    pub source: String,
    pub c0: f64,
    pub a0: f64,
    pub y0: DVector<f64>,
    pub eps_ladder: Vec<f64>,
    pub initial: InitialPointCheck,
    energy: Arc<Energy>,
}

struct Raw<'a> {
    name: Option<(usize, &'a str)>,
    n: Option<(usize, &'a str)>,
    horizon: Option<(usize, &'a str)>,
    f: Option<(usize, usize, &'a str)>,
    c0: Option<(usize, &'a str)>,
    a0: Option<(usize, &'a str)>,
    y0: Option<(usize, &'a str)>,
    eps: Option<(usize, &'a str)>,
}

fn number(line: usize, key: &str, s: &str) -> Result<f64, ScenarioError> {
    let v: f64 = s.trim().parse().map_err(|_| ScenarioError::Invalid {
        line,
        key: key.into(),
        message: format!("`{}` is not a number", s.trim()),
    })?;
    if !v.is_finite() {
        return Err(ScenarioError::Invalid { line, key: key.into(), message: "not finite".into() });
    }
    Ok(v)
}

fn list(line: usize, key: &str, s: &str) -> Result<Vec<f64>, ScenarioError> {
    s.split(',').map(|p| number(line, key, p)).collect()
}

impl Scenario {
    /// Parses scenario text.
    pub fn from_text(text: &str) -> Result<Scenario, ScenarioError> {
        let mut raw = Raw { name: None, n: None, horizon: None, f: None, c0: None, a0: None, y0: None, eps: None };
        for (idx, full) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match full.find('#') {
                Some(p) => &full[..p],
                None => full,
            };
            if content.trim().is_empty() {
                continue;
            }
            let eq = content.find('=').ok_or_else(|| ScenarioError::Syntax {
                line,
                message: "expected `key = value`".into(),
            })?;
            let key = content[..eq].trim();
            let value_start = eq + 1;
            let value = &content[value_start..];
            let dup = || ScenarioError::DuplicateKey { line, key: key.to_string() };
            macro_rules! put {
                ($slot:expr) => {{
                    if $slot.is_some() {
                        return Err(dup());
                    }
                    $slot = Some((line, value.trim()));
                }};
            }
            match key {
                "name" => put!(raw.name),
                "n" => put!(raw.n),
                "T" => put!(raw.horizon),
                "c0" => put!(raw.c0),
                "a0" => put!(raw.a0),
                "y0" => put!(raw.y0),
                "eps" => put!(raw.eps),
                "f" => {
                    if raw.f.is_some() {
                        return Err(dup());
                    }
                    // column of the first character of `value` (1-based) minus one
                    let col = full[..value_start].chars().count();
                    raw.f = Some((line, col, value));
                }
                _ => {
                    debug_assert!(!KEYS.contains(&key));
                    return Err(ScenarioError::UnknownKey { line, key: key.to_string() });
                }
            }
        }

        let (_, name) = raw.name.ok_or(ScenarioError::MissingKey("name"))?;
        let (nl, n) = raw.n.ok_or(ScenarioError::MissingKey("n"))?;
        let dim: usize = n.parse().map_err(|_| ScenarioError::Invalid {
            line: nl,
            key: "n".into(),
            message: format!("`{n}` is not a positive integer"),
        })?;
        if !(1..=8).contains(&dim) {
            return Err(ScenarioError::Invalid { line: nl, key: "n".into(), message: "must lie in 1..=8".into() });
        }
        let (tl, tv) = raw.horizon.ok_or(ScenarioError::MissingKey("T"))?;
        let horizon = number(tl, "T", tv)?;
        if horizon <= 0.0 {
            return Err(ScenarioError::Invalid { line: tl, key: "T".into(), message: "must be positive".into() });
        }
        let (fl, fc, ftext) = raw.f.ok_or(ScenarioError::MissingKey("f"))?;
        let expr = parse_energy_at(ftext, dim, fl, fc)?;
        let (cl, cv) = raw.c0.ok_or(ScenarioError::MissingKey("c0"))?;
        let c0 = number(cl, "c0", cv)?;
        if c0 <= 0.0 {
            return Err(ScenarioError::Invalid { line: cl, key: "c0".into(), message: "must be positive".into() });
        }
        let (al, av) = raw.a0.ok_or(ScenarioError::MissingKey("a0"))?;
        let a0 = number(al, "a0", av)?;
        if a0 < 0.0 {
            return Err(ScenarioError::Invalid { line: al, key: "a0".into(), message: "must be nonnegative".into() });
        }
        let (yl, yv) = raw.y0.ok_or(ScenarioError::MissingKey("y0"))?;
        let y0 = list(yl, "y0", yv)?;
        if y0.len() != dim {
            return Err(ScenarioError::Invalid {
                line: yl,
                key: "y0".into(),
                message: format!("has {} components, expected {dim}", y0.len()),
            });
        }
        let (el, ev) = raw.eps.ok_or(ScenarioError::MissingKey("eps"))?;
        let eps_ladder = list(el, "eps", ev)?;
        if eps_ladder.iter().any(|&e| e <= 0.0) {
            return Err(ScenarioError::Invalid { line: el, key: "eps".into(), message: "values must be positive".into() });
        }
        if eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ScenarioError::Invalid { line: el, key: "eps".into(), message: "must be strictly decreasing".into() });
        }

        Ok(Scenario::assemble(
            name.to_string(),
            dim,
            horizon,
            ftext.trim().to_string(),
            Energy::new(expr, dim),
            c0,
            a0,
            DVector::from_vec(y0),
            eps_ladder,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        name: String,
        dim: usize,
        horizon: f64,
        source: String,
        energy: Energy,
        c0: f64,
        a0: f64,
        y0: DVector<f64>,
        eps_ladder: Vec<f64>,
    ) -> Scenario {
        let grad_norm = energy.gradient(0.0, &y0).norm();
        let lambda_min = jacobi_eigen(&energy.hessian(0.0, &y0)).min();
        Scenario {
            name,
            dim,
            horizon,
            source,
            c0,
            a0,
            y0,
            eps_ladder,
            initial: InitialPointCheck { grad_norm, lambda_min },
            energy: Arc::new(energy),
        }
    }

    pub fn from_file(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::from_text(&text)
    }

    /// `builtin:NAME` selects a builtin, anything else is a file path.
    pub fn load(spec: &str) -> Result<Scenario, ScenarioError> {
        match spec.strip_prefix("builtin:") {
            Some(name) => Scenario::builtin(name),
            None => Scenario::from_file(Path::new(spec)),
        }
    }

    pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
        let dim = match name {
            "quadratic" => 1,
            "tracking" => 2,
            _ => 0,
        };
        Scenario::builtin_with_dim(name, dim)
    }

    /// Builtins; `dim` is honoured by `quadratic` and `tracking` and ignored
    /// by the others.
    pub fn builtin_with_dim(name: &str, dim: usize) -> Result<Scenario, ScenarioError> {
        let text = builtin_text(name, dim).ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_string()))?;
        Scenario::from_text(&text)
    }

    pub fn energy(&self) -> &Energy {
        &self.energy
    }

    /// Radius of the ball that contains every critical point.
    pub fn critical_ball_radius(&self) -> f64 {
        (self.a0 / self.c0).sqrt()
    }

    /// Bound on `|u_ε(t)|²` along any ε-flow started at `x0`.
    pub fn a_priori_bound_sq(&self, x0: &DVector<f64>) -> f64 {
        (self.a0 / self.c0).max(x0.norm_squared())
    }

    /// Serialises back to the file format.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        format!(
            "name = {}\nn = {}\nT = {:e}\nf = {}\nc0 = {:e}\na0 = {:e}\ny0 = {}\neps = {}\n",
            self.name,
            self.dim,
            self.horizon,
            self.source,
            self.c0,
            self.a0,
            join(self.y0.as_slice()),
            join(&self.eps_ladder)
        )
    }
}

fn builtin_text(name: &str, dim: usize) -> Option<String> {
    let zeros = |n: usize| vec!["0"; n].join(", ");
    Some(match name {
        "quadratic" => {
            let n = dim.clamp(1, 8);
            let f = (1..=n).map(|i| format!("x{i}^2")).collect::<Vec<_>>().join(" + ");
            format!("name = quadratic\nn = {n}\nT = 1\nf = ({f})/2\nc0 = 1\na0 = 0\ny0 = {}\neps = 0.1, 0.01, 0.001\n", zeros(n))
        }
        "tracking" => {
            let n = dim.clamp(2, 8);
            let rest: String = (2..=n).map(|i| format!(" + x{i}^2")).collect();
            format!(
                "name = tracking\nn = {n}\nT = 1\nf = ((x1 - t)^2{rest})/2\nc0 = 0.5\na0 = 0.5\ny0 = {}\neps = 0.1, 0.01, 0.001\n",
                zeros(n)
            )
        }
        "dwell" => "name = dwell\nn = 1\nT = 0.6\nf = x1^4/4 - x1^2/2 - t*x1\nc0 = 0.5\na0 = 2\ny0 = -1\neps = 1e-2, 1e-3, 1e-4\n".into(),
        "dwell2d" => "name = dwell2d\nn = 2\nT = 0.6\nf = x1^4/4 - x1^2/2 - t*x1 + x2^2/2\nc0 = 0.5\na0 = 2\ny0 = -1, 0\neps = 1e-2, 1e-3, 1e-4\n".into(),
        "oscillating" => "name = oscillating\nn = 1\nT = 7.853981633974483\nf = x1^4/4 - x1^2/2 - 0.6*sin(t)*x1\nc0 = 0.5\na0 = 2\ny0 = -1\neps = 1e-2, 1e-3\n".into(),
        "degenerate" => "name = degenerate\nn = 1\nT = 1\nf = x1^4/4 - t*x1\nc0 = 0.5\na0 = 2\ny0 = 0\neps = 1e-2\n".into(),
        "saddle_landing" => "name = saddle_landing\nn = 2\nT = 0.6\nf = x1^4/4 - x1^2/2 - t*x1 + (0.5 - x1)*x2^2/2 + x2^4/4\nc0 = 0.5\na0 = 4\ny0 = -1, 0\neps = 1e-2\n".into(),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_load() {
        for name in BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap();
            assert_eq!(&s.name, name);
            let again = Scenario::from_text(&s.to_text()).unwrap();
            assert_eq!(again.source, s.source);
            assert_eq!(again.y0, s.y0);
            assert_eq!(again.eps_ladder, s.eps_ladder);
        }
    }

    #[test]
    fn initial_point_report() {
        let s = Scenario::builtin("dwell").unwrap();
        assert!(s.initial.passes(1e-10, 1e-6));
        assert_eq!(s.initial.lambda_min, 2.0);
        let d = Scenario::builtin("degenerate").unwrap();
        assert!(!d.initial.passes(1e-10, 1e-6));
    }

    #[test]
    fn errors_carry_positions() {
        let text = "name = bad\nn = 1\nT = 1\nf =  x1^2 + x2\nc0 = 1\na0 = 0\ny0 = 0\neps = 0.1\n";
        match Scenario::from_text(text) {
            Err(ScenarioError::Expression(e)) => {
                assert_eq!(e.line, 4);
                assert_eq!(e.column, 13);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Scenario::from_text("name = a\nN = 1\n"),
            Err(ScenarioError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            Scenario::from_text("name = a\nn = 1\nT = 1\nf = x1^2\nc0 = 1\na0 = 0\ny0 = 0, 1\neps = 0.1\n"),
            Err(ScenarioError::Invalid { line: 7, .. })
        ));
        assert!(matches!(
            Scenario::from_text("name = a\nn = 1\nT = 1\nf = x1^2\nc0 = 1\na0 = 0\ny0 = 0\neps = 0.1, 0.2\n"),
            Err(ScenarioError::Invalid { line: 8, .. })
        ));
        assert!(matches!(Scenario::from_text("name = a\n"), Err(ScenarioError::MissingKey("n"))));
    }

    #[test]
    fn comments_and_blank_lines() {
        let s = Scenario::from_text(
            "# header\nname = q # trailing\n\nn = 2\nT = 2\nf = x1^2/2 + x2^2/2\nc0 = 1\na0 = 0\ny0 = 0, 0\neps = 0.1, 0.05\n",
        )
        .unwrap();
        assert_eq!(s.name, "q");
        assert_eq!(s.dim, 2);
        assert_eq!(s.eps_ladder, vec![0.1, 0.05]);
    }
}
