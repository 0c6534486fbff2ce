//! Experiment configuration, shared by command-line flags and `run --config`
//! TOML files.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use wasserstat::{AffineParamsF64, ShapeF64, SpdMatrixF64, StatisticFnF64, SymMatrixF64};

use crate::error::{config, CliError};

pub const MAX_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    VerifyScore,
    Estimate,
    CompareEstimators,
    Robustness,
    Bounds,
    Distance,
    VerifyShapes,
}

impl Subcommand {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::VerifyScore => "verify-score",
            Subcommand::Estimate => "estimate",
            Subcommand::CompareEstimators => "compare-estimators",
            Subcommand::Robustness => "robustness",
            Subcommand::Bounds => "bounds",
            Subcommand::Distance => "distance",
            Subcommand::VerifyShapes => "verify-shapes",
        }
    }

    pub fn default_format(&self) -> Format {
        match self {
            Subcommand::Estimate | Subcommand::Distance => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Every experiment parameter. Which fields apply depends on the subcommand;
/// [`ExperimentConfig::validate`] rejects the others.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,

    /// Shape: gaussian, student-t, uniform-ball (verify-shapes: also "all").
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,

    /// Degrees of freedom of the student-t shape (> 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,

    /// Dimension d.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,

    /// Location, comma separated ("0,0").
    #[arg(long, visible_alias = "mu1", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none", alias = "mu1")]
    pub mu: Option<String>,

    /// Deformation Λ: "I", "diag:a,b,..", or d² row-major entries.
    #[arg(long, visible_alias = "lam1", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none", alias = "lam1")]
    pub lam: Option<String>,

    /// "random(SEED)" instead of --mu/--lam.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<String>,

    /// Second location (distance).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu2: Option<String>,

    /// Second deformation (distance).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lam2: Option<String>,

    /// Estimator: w, mle or wp1d.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,

    /// Headerless numeric CSV, one observation per row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,

    /// Statistic: x, x^2, x^3, <c>x^<p>, or w-scores.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,

    /// Sample size (Monte Carlo draws or data set size).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,

    /// Number of replicated data sets.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,

    /// Noise variances, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<Vec<f64>>,

    /// Convergence tolerance of the likelihood ascent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,

    /// Iteration cap of the likelihood ascent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,

    /// Master seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Output file; defaults to <subcommand>.<format>.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

/// Field names accepted by each subcommand, besides `subcommand`, `seed`,
/// `out` and `format`.
fn allowed_fields(cmd: Subcommand) -> &'static [&'static str] {
    match cmd {
        Subcommand::VerifyScore => &["shape", "nu", "dim", "mu", "lam", "theta", "n"],
        Subcommand::Estimate => &["shape", "nu", "method", "data", "tol", "max-iter"],
        Subcommand::CompareEstimators => &[
            "shape",
            "nu",
            "dim",
            "mu",
            "lam",
            "theta",
            "method",
            "n",
            "replications",
        ],
        Subcommand::Robustness => &[
            "shape",
            "nu",
            "dim",
            "mu",
            "lam",
            "theta",
            "statistic",
            "n",
            "sigma2",
        ],
        Subcommand::Bounds => &["shape", "nu", "dim", "mu", "lam", "theta", "statistic", "n"],
        Subcommand::Distance => &["mu", "lam", "mu2", "lam2"],
        Subcommand::VerifyShapes => &["shape", "nu", "dim", "n"],
    }
}

impl ExperimentConfig {
    /// Reads a TOML file; `subcommand` must be set in the file.
    pub fn from_toml_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(m) => config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| config(e.to_string().trim_end().to_string()))?;
        if cfg.subcommand.is_none() {
            return Err(config("missing field `subcommand`"));
        }
        Ok(cfg)
    }

    /// Fields set on `overrides` replace those of `self`.
    pub fn merge(mut self, overrides: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if overrides.$f.is_some() { self.$f = overrides.$f; } )* };
        }
        take!(
            subcommand,
            shape,
            nu,
            dim,
            mu,
            lam,
            theta,
            mu2,
            lam2,
            method,
            data,
            statistic,
            n,
            replications,
            sigma2,
            tol,
            max_iter,
            seed,
            out,
            format
        );
        self
    }

    fn present_fields(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! check {
            ($($f:ident => $name:literal),*) => { $( if self.$f.is_some() { v.push($name); } )* };
        }
        check!(shape => "shape", nu => "nu", dim => "dim", mu => "mu", lam => "lam", theta => "theta",
               mu2 => "mu2", lam2 => "lam2", method => "method", data => "data", statistic => "statistic",
               n => "n", replications => "replications", sigma2 => "sigma2", tol => "tol",
               max_iter => "max-iter");
        v
    }

    pub fn command(&self) -> Result<Subcommand, CliError> {
        self.subcommand
            .ok_or_else(|| config("missing field `subcommand`"))
    }

    /// Field-level checks that do not depend on data files.
    pub fn validate(&self) -> Result<(), CliError> {
        let cmd = self.command()?;
        let allowed = allowed_fields(cmd);
        if let Some(bad) = self
            .present_fields()
            .into_iter()
            .find(|f| !allowed.contains(f))
        {
            return Err(config(format!("field `{bad}` is not used by {cmd}")));
        }
        if let Some(d) = self.dim {
            if d == 0 || d > MAX_DIM {
                return Err(config(format!(
                    "field `dim`: must be in 1..={MAX_DIM}, got {d}"
                )));
            }
        }
        if self.theta.is_some() && (self.mu.is_some() || self.lam.is_some()) {
            return Err(config(
                "field `theta`: give either theta or mu/lam, not both",
            ));
        }
        if let Some(n) = self.n {
            if n == 0 {
                return Err(config("field `n`: must be positive"));
            }
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(config(format!("field `tol`: must be positive, got {tol}")));
            }
        }
        if let Some(0) = self.max_iter {
            return Err(config("field `max-iter`: must be positive"));
        }
        if cmd == Subcommand::Estimate && self.data.is_none() {
            return Err(config("field `data`: required by estimate"));
        }
        if cmd == Subcommand::Distance {
            for (f, v) in [
                ("mu", &self.mu),
                ("lam", &self.lam),
                ("mu2", &self.mu2),
                ("lam2", &self.lam2),
            ] {
                if v.is_none() {
                    return Err(config(format!("field `{f}`: required by distance")));
                }
            }
        }
        // parse everything once so that errors surface before any work starts
        match cmd {
            Subcommand::VerifyShapes => {
                self.shape_list()?;
            }
            Subcommand::Distance => {
                self.theta_pair()?;
            }
            Subcommand::Estimate => {
                self.method()?;
                self.shape_for(1)?;
            }
            _ => {
                self.theta_value()?;
                self.shape_for(self.dimension())?;
                if let Some(m) = &self.method {
                    parse_method(m)?;
                }
                if let Some(s) = &self.statistic {
                    parse_statistic(s, 1, None)?;
                }
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn format(&self) -> Result<Format, CliError> {
        Ok(self.format.unwrap_or(self.command()?.default_format()))
    }

    pub fn output_path(&self) -> Result<PathBuf, CliError> {
        let cmd = self.command()?;
        Ok(self.out.clone().unwrap_or_else(|| {
            PathBuf::from(format!("{cmd}.{}", self.format().unwrap().extension()))
        }))
    }

    /// Dimension from `dim`, else from `mu`, else 1.
    pub fn dimension(&self) -> usize {
        self.dim
            .or_else(|| {
                self.mu
                    .as_deref()
                    .and_then(|m| parse_vector("mu", m).ok())
                    .map(|v| v.len())
            })
            .unwrap_or(1)
    }

    pub fn shape_for(&self, d: usize) -> Result<ShapeF64, CliError> {
        parse_shape(self.shape.as_deref().unwrap_or("gaussian"), self.nu, d)
    }

    /// `(0, I)` unless `theta`, `mu` or `lam` say otherwise.
    pub fn theta_value(&self) -> Result<AffineParamsF64, CliError> {
        let d = self.dimension();
        if let Some(t) = &self.theta {
            let seed = parse_random(t)?;
            return AffineParamsF64::random_seeded(d, seed)
                .map_err(|e| config(format!("field `theta`: {e}")));
        }
        build_theta("mu", self.mu.as_deref(), "lam", self.lam.as_deref(), d)
    }

    pub fn theta_pair(&self) -> Result<(AffineParamsF64, AffineParamsF64), CliError> {
        let d = parse_vector("mu", self.mu.as_deref().unwrap_or("0"))?.len();
        let first = build_theta("mu", self.mu.as_deref(), "lam", self.lam.as_deref(), d)?;
        let second = build_theta("mu2", self.mu2.as_deref(), "lam2", self.lam2.as_deref(), d)?;
        Ok((first, second))
    }

    pub fn method(&self) -> Result<wasserstat::Method, CliError> {
        parse_method(self.method.as_deref().unwrap_or("w"))
    }

    /// Shapes and dimensions checked by verify-shapes.
    pub fn shape_list(&self) -> Result<Vec<ShapeF64>, CliError> {
        let dims: Vec<usize> = match self.dim {
            Some(d) => vec![d],
            None => vec![1, 2, 3, 5],
        };
        let all = matches!(self.shape.as_deref(), None | Some("all"));
        let names: Vec<&str> = match self.shape.as_deref() {
            None | Some("all") => vec!["gaussian", "uniform-ball", "student-t"],
            Some(s) => vec![s],
        };
        let mut out = Vec::new();
        for name in names {
            // with every shape selected, `nu` applies to the t shape only
            let nu = match (all, name) {
                (true, "student-t") => self.nu.or(Some(5.0)),
                (true, _) => None,
                (false, _) => self.nu,
            };
            for &d in &dims {
                out.push(parse_shape(name, nu, d)?);
            }
        }
        Ok(out)
    }
}

fn build_theta(
    mu_field: &str,
    mu: Option<&str>,
    lam_field: &str,
    lam: Option<&str>,
    d: usize,
) -> Result<AffineParamsF64, CliError> {
    let mu = match mu {
        Some(m) => parse_vector(mu_field, m)?,
        None => Array1::zeros(d),
    };
    if mu.len() != d {
        return Err(config(format!(
            "field `{mu_field}`: expected {d} entries, got {}",
            mu.len()
        )));
    }
    let lam = parse_lambda(lam_field, lam.unwrap_or("I"), d)?;
    AffineParamsF64::new(mu, lam).map_err(|e| config(format!("field `{lam_field}`: {e}")))
}

pub fn parse_vector(field: &str, s: &str) -> Result<Array1<f64>, CliError> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(Array1::from(v)),
        _ => Err(config(format!(
            "field `{field}`: expected comma-separated finite numbers, got {s:?}"
        ))),
    }
}

/// `"I"`, `"diag:a,b,.."`, or `d²` row-major entries.
pub fn parse_lambda(field: &str, s: &str, d: usize) -> Result<SpdMatrixF64, CliError> {
    let s = s.trim();
    let bad = |e: wasserstat::Error| config(format!("field `{field}`: {e}"));
    if s == "I" {
        return Ok(SpdMatrixF64::identity(d));
    }
    if let Some(rest) = s.strip_prefix("diag:") {
        let v = parse_vector(field, rest)?;
        if v.len() != d {
            return Err(config(format!(
                "field `{field}`: expected {d} diagonal entries, got {}",
                v.len()
            )));
        }
        return SpdMatrixF64::from_diag(v.as_slice().unwrap()).map_err(bad);
    }
    let v = parse_vector(field, s)?;
    if v.len() != d * d {
        return Err(config(format!(
            "field `{field}`: expected {} row-major entries, got {}",
            d * d,
            v.len()
        )));
    }
    let m = Array2::from_shape_vec((d, d), v.to_vec()).expect("length checked");
    SpdMatrixF64::new(SymMatrixF64::new(m).map_err(bad)?).map_err(bad)
}

fn parse_random(s: &str) -> Result<u64, CliError> {
    s.trim()
        .strip_prefix("random(")
        .and_then(|r| r.strip_suffix(')'))
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| {
            config(format!(
                "field `theta`: expected \"random(SEED)\", got {s:?}"
            ))
        })
}

pub fn parse_shape(name: &str, nu: Option<f64>, d: usize) -> Result<ShapeF64, CliError> {
    let shape = match name {
        "gaussian" | "normal" => {
            reject_nu(nu, name)?;
            ShapeF64::gaussian(d)
        }
        "uniform-ball" | "uniform" => {
            reject_nu(nu, name)?;
            ShapeF64::uniform_ball(d)
        }
        "student-t" | "t" => {
            let nu = nu.ok_or_else(|| config("field `nu`: required by the student-t shape"))?;
            if !(nu > 2.0 && nu.is_finite()) {
                return Err(config(format!(
                    "field `nu`: must be finite and > 2, got {nu}"
                )));
            }
            ShapeF64::student_t(d, nu)
        }
        other => {
            return Err(config(format!(
                "field `shape`: unknown shape {other:?} (gaussian, student-t, uniform-ball)"
            )))
        }
    };
    shape.map_err(|e| config(format!("field `shape`: {e}")))
}

fn reject_nu(nu: Option<f64>, name: &str) -> Result<(), CliError> {
    match nu {
        Some(_) => Err(config(format!("field `nu`: not used by the {name} shape"))),
        None => Ok(()),
    }
}

pub fn parse_method(s: &str) -> Result<wasserstat::Method, CliError> {
    match s {
        "w" => Ok(wasserstat::Method::WMoment),
        "mle" => Ok(wasserstat::Method::Mle),
        "wp1d" => Ok(wasserstat::Method::Wp1D),
        other => Err(config(format!(
            "field `method`: unknown method {other:?} (w, mle, wp1d)"
        ))),
    }
}

/// `w-scores` (needs `theta`) or `[c]x[^p]`.
pub fn parse_statistic(
    s: &str,
    d: usize,
    theta: Option<&AffineParamsF64>,
) -> Result<StatisticFnF64, CliError> {
    let bad = || {
        config(format!(
            "field `statistic`: expected x, x^p, <c>x^<p> or w-scores, got {s:?}"
        ))
    };
    let s = s.trim();
    if s == "w-scores" {
        return match theta {
            Some(t) => {
                StatisticFnF64::wscores(t).map_err(|e| config(format!("field `statistic`: {e}")))
            }
            None => StatisticFnF64::wscores(&AffineParamsF64::standard(d)).map_err(|_| bad()),
        };
    }
    let (scale, power) = s.split_once('x').ok_or_else(bad)?;
    let scale = match scale.trim_end_matches('*') {
        "" => 1.0,
        c => c.parse::<f64>().map_err(|_| bad())?,
    };
    let power = match power {
        "" => 1,
        p => p
            .strip_prefix('^')
            .and_then(|p| p.parse::<i32>().ok())
            .ok_or_else(bad)?,
    };
    if !(scale.is_finite() && scale != 0.0) || !(1..=8).contains(&power) {
        return Err(bad());
    }
    StatisticFnF64::power(d, power, scale).map_err(|_| bad())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_forms() {
        assert_eq!(
            parse_lambda("lam", "I", 2).unwrap(),
            SpdMatrixF64::identity(2)
        );
        let d = parse_lambda("lam", "diag:2,0.5", 2).unwrap();
        assert_eq!(d.as_array()[[1, 1]], 0.5);
        let full = parse_lambda("lam", "2,0.5,0.5,1", 2).unwrap();
        assert_eq!(full.as_array()[[0, 1]], 0.5);
        assert!(parse_lambda("lam", "1,2,2,1", 2).is_err());
        assert!(parse_lambda("lam", "diag:1", 2).is_err());
    }

    #[test]
    fn statistics() {
        assert_eq!(parse_statistic("x", 1, None).unwrap().name(), "x");
        assert_eq!(parse_statistic("x^3", 1, None).unwrap().name(), "x^3");
        assert_eq!(parse_statistic("2x", 1, None).unwrap().name(), "2x");
        assert_eq!(
            parse_statistic("w-scores", 2, None).unwrap().output_dim(),
            5
        );
        assert!(parse_statistic("y^2", 1, None).is_err());
        assert!(parse_statistic("x^0", 1, None).is_err());
    }

    #[test]
    fn toml_rejects_unknown_keys() {
        let err =
            ExperimentConfig::from_toml_str("subcommand = \"bounds\"\nsede = 3\n").unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
        let cfg = ExperimentConfig::from_toml_str(
            "subcommand = \"robustness\"\nsigma2 = [0.001, 0.002, 0.004]\n",
        )
        .unwrap();
        assert_eq!(cfg.sigma2.as_deref(), Some(&[0.001, 0.002, 0.004][..]));
        assert!(ExperimentConfig::from_toml_str("seed = 1\n").is_err());
    }

    #[test]
    fn fields_are_checked_per_subcommand() {
        let cfg = ExperimentConfig {
            subcommand: Some(Subcommand::Distance),
            mu: Some("0".into()),
            lam: Some("I".into()),
            mu2: Some("1".into()),
            lam2: Some("I".into()),
            n: Some(3),
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("`n`"));
        let cfg = ExperimentConfig {
            subcommand: Some(Subcommand::Bounds),
            shape: Some("student-t".into()),
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("`nu`"));
        let cfg = ExperimentConfig {
            subcommand: Some(Subcommand::Bounds),
            theta: Some("random(3)".into()),
            dim: Some(2),
            ..Default::default()
        };
        assert_eq!(
            cfg.theta_value().unwrap(),
            AffineParamsF64::random_seeded(2, 3).unwrap()
        );
    }
}
