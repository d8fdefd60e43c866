use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::TangentSpec;
use crate::model::{Slack, DEFAULT_MARGIN};
use crate::solver::SolverConfig;

/// Scoring methods compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Plain squared Euclidean distance.
    L2,
    /// Linear exemplar-SVM score.
    Esvm,
    /// Exemplar-SVM with transformed copies of the exemplar as positives.
    EsvmShifts,
    /// Local Mahalanobis metric.
    LocalMahal,
    /// Local metric invariant to the declared transformations.
    InvMahal,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::L2,
        Method::Esvm,
        Method::EsvmShifts,
        Method::LocalMahal,
        Method::InvMahal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::L2 => "l2",
            Method::Esvm => "esvm",
            Method::EsvmShifts => "esvm_shifts",
            Method::LocalMahal => "local_mahal",
            Method::InvMahal => "inv_mahal",
        }
    }

    /// Whether the method needs image geometry to generate transformations.
    pub fn uses_tangents(self) -> bool {
        matches!(self, Method::EsvmShifts | Method::InvMahal)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method '{s}' (expected one of l2, esvm, esvm_shifts, local_mahal, inv_mahal)"
                ))
            })
    }
}

/// Parses a comma-separated method list, keeping order and dropping repeats.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let m: Method = item.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// How many other-class data each exemplar is solved against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeBudget {
    All,
    Count(usize),
}

impl fmt::Display for NegativeBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegativeBudget::All => f.write_str("all"),
            NegativeBudget::Count(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for NegativeBudget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-other-classes" => Ok(NegativeBudget::All),
            n => n
                .parse()
                .ok()
                .filter(|&n: &usize| n >= 1)
                .map(NegativeBudget::Count)
                .ok_or_else(|| Error::InvalidConfig(format!("bad negative budget '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train_limit: usize,
    pub test_limit: usize,
    pub k_neighbors: usize,
    pub negatives_per_exemplar: NegativeBudget,
    pub tangent_spec: TangentSpec,
    /// `(width, height)` of the images behind the feature vectors, required
    /// by methods that transform exemplars.
    pub image_shape: Option<(usize, usize)>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub workers: usize,
    pub margin: f64,
    /// Slack of the metric solves.
    pub metric_slack: Slack,
    /// Soft-margin penalty of the exemplar-SVM baselines.
    pub esvm_c: f64,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train_limit: 2000,
            test_limit: 1000,
            k_neighbors: 3,
            negatives_per_exemplar: NegativeBudget::Count(1000),
            tangent_spec: TangentSpec::unit_shifts(),
            image_shape: None,
            methods: vec![Method::L2, Method::LocalMahal],
            seed: 0,
            workers: 1,
            margin: DEFAULT_MARGIN,
            metric_slack: Slack::Hard,
            esvm_c: Slack::DEFAULT_C,
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k_neighbors == 0 || self.k_neighbors.is_multiple_of(2) {
            return bad(format!("k must be odd and >= 1, got {}", self.k_neighbors));
        }
        if self.train_limit == 0 || self.test_limit == 0 {
            return bad("train and test limits must be >= 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.esvm_c.is_finite() && self.esvm_c > 0.0) {
            return bad(format!("esvm C must be positive, got {}", self.esvm_c));
        }
        if let Slack::Soft(c) = self.metric_slack {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("soft-margin C must be positive, got {c}"));
            }
        }
        if let Some(m) = self.methods.iter().find(|m| m.uses_tangents()) {
            if self.image_shape.is_none() {
                return bad(format!("method {m} needs an image shape"));
            }
            if self.tangent_spec.is_empty() {
                return bad(format!("method {m} needs a non-empty tangent spec"));
            }
        }
        self.solver.validate()
    }

    /// Every setting as `key, value` text, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let shape = self
            .image_shape
            .map(|(w, h)| format!("{w}x{h}"))
            .unwrap_or_else(|| "none".into());
        let s = &self.solver;
        [
            ("train_limit", self.train_limit.to_string()),
            ("test_limit", self.test_limit.to_string()),
            ("k", self.k_neighbors.to_string()),
            (
                "negatives_per_exemplar",
                self.negatives_per_exemplar.to_string(),
            ),
            ("tangents", self.tangent_spec.to_string()),
            ("image_shape", shape),
            ("methods", methods.join(",")),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("margin", format!("{:?}", self.margin)),
            ("metric_slack", self.metric_slack.to_string()),
            ("esvm_c", format!("{:?}", self.esvm_c)),
            ("solver.tolerance", format!("{:?}", s.tolerance)),
            (
                "solver.max_iterations",
                s.max_iterations
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "auto".into()),
            ),
            (
                "solver.kernel_cache_limit",
                s.kernel_cache_limit.to_string(),
            ),
            ("solver.shuffle_seed", s.shuffle_seed.to_string()),
            (
                "solver.support_threshold",
                format!("{:?}", s.support_threshold),
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_k_rejected() {
        let cfg = ExperimentConfig {
            k_neighbors: 2,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn tangent_methods_need_shape() {
        let cfg = ExperimentConfig {
            methods: vec![Method::InvMahal],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            image_shape: Some((28, 28)),
            ..cfg
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(
            parse_methods("l2, local_mahal,l2").unwrap(),
            vec![Method::L2, Method::LocalMahal]
        );
        assert!(parse_methods("l3").is_err());
    }

    #[test]
    fn budget_parsing() {
        assert_eq!(
            "all".parse::<NegativeBudget>().unwrap(),
            NegativeBudget::All
        );
        assert_eq!(
            "250".parse::<NegativeBudget>().unwrap(),
            NegativeBudget::Count(250)
        );
        assert!("0".parse::<NegativeBudget>().is_err());
    }
}
