//! One function per subcommand. Each returns the artifact to write; none of
//! them touch the file system except `estimate`, which reads its data file.

use serde::Serialize;
use serde_json::Value;

use wasserstat::efficiency::fisher_bound;
use wasserstat::model::sample_model;
use wasserstat::rng::derive_seed;
use wasserstat::wscore::{poisson_residual, wscore};
use wasserstat::{
    estimator_sampling_covariance, fisher_info_mc, gelbrich_w2, mle_estimate, noise_robustness,
    w_estimate, wcr_bound_check, wp_estimate_1d, AffineParamsF64, McMatrix, Method, MleOptions,
    ParamIndex, StatisticFnF64,
};

use crate::config::{parse_statistic, ExperimentConfig, Subcommand};
use crate::error::{config, CliError};
use crate::io::{read_data_csv, Cell, Table};

/// Residual tolerance reported by verify-score.
pub const RESIDUAL_TOL: f64 = 1e-8;

pub enum Artifact {
    Table(Table),
    Report(Value),
}

pub fn run(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    cfg.validate()?;
    match cfg.command()? {
        Subcommand::VerifyScore => verify_score(cfg).map(Artifact::Table),
        Subcommand::Estimate => estimate(cfg).map(Artifact::Report),
        Subcommand::CompareEstimators => compare_estimators(cfg).map(Artifact::Table),
        Subcommand::Robustness => robustness(cfg).map(Artifact::Table),
        Subcommand::Bounds => bounds(cfg).map(Artifact::Table),
        Subcommand::Distance => distance(cfg).map(Artifact::Report),
        Subcommand::VerifyShapes => verify_shapes(cfg).map(Artifact::Table),
    }
}

fn report<S: Serialize>(value: &S) -> Result<Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Io(e.to_string()))
}

fn matrix_rows(m: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Columns: `param,points,max_abs_residual,passed`.
///
/// With no `theta`, `mu` or `lam`, θ is drawn from the master seed.
fn verify_score(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let d = cfg.dimension();
    let seed = cfg.seed();
    let theta = if cfg.theta.is_none() && cfg.mu.is_none() && cfg.lam.is_none() {
        AffineParamsF64::random_seeded(d, derive_seed(seed, 0))?
    } else {
        cfg.theta_value()?
    };
    let shape = cfg.shape_for(d)?;
    let n = cfg.n.unwrap_or(100);
    let points = sample_model(&theta, &shape, n, derive_seed(seed, 1))?;
    let mut table = Table::new(&["param", "points", "max_abs_residual", "passed"]);
    for param in ParamIndex::all(d) {
        let score = wscore(&theta, param)?;
        let mut worst = 0.0f64;
        for x in points.rows() {
            let r = poisson_residual(
                &theta,
                &shape,
                &score,
                param,
                x.as_slice().expect("contiguous"),
            )?;
            worst = worst.max(r.abs());
        }
        table.push(vec![
            param.to_string().into(),
            n.into(),
            worst.into(),
            (worst <= RESIDUAL_TOL).into(),
        ]);
    }
    Ok(table)
}

#[derive(Serialize)]
struct EstimateReport {
    method: Method,
    shape: Option<String>,
    n: usize,
    dim: usize,
    mu: Vec<f64>,
    lambda: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    iterations: usize,
    converged: bool,
    final_gradient_norm: f64,
}

fn estimate(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let path = cfg.data.as_ref().expect("validated");
    let data = read_data_csv(path)?;
    let (n, d) = data.dim();
    let method = cfg.method()?;
    let shape = cfg.shape_for(d)?;
    let r = match method {
        Method::WMoment => w_estimate(&data.view())?,
        Method::Mle => {
            let init = w_estimate(&data.view())?.estimate;
            let mut opts = MleOptions::default();
            opts.tol = cfg.tol.unwrap_or(opts.tol);
            opts.max_iter = cfg.max_iter.unwrap_or(opts.max_iter);
            mle_estimate(&data.view(), &shape, &init, opts)?
        }
        Method::Wp1D => {
            if d != 1 {
                return Err(CliError::InvalidInput(format!(
                    "wp1d needs one data column, found {d}"
                )));
            }
            wp_estimate_1d(&data.column(0).to_vec(), &shape)?
        }
    };
    report(&EstimateReport {
        method,
        shape: (method != Method::WMoment).then(|| shape.name()),
        n,
        dim: d,
        mu: r.estimate.mu().to_vec(),
        lambda: matrix_rows(r.estimate.lambda().as_array()),
        sigma: matrix_rows(r.estimate.sigma().as_array()),
        iterations: r.iterations,
        converged: r.converged,
        final_gradient_norm: r.final_gradient_norm,
    })
}

/// Columns: `method,row,col,param_row,param_col,covariance,fisher_bound,replications_used,failures`.
fn compare_estimators(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let d = cfg.dimension();
    let theta = cfg.theta_value()?;
    let shape = cfg.shape_for(d)?;
    let n = cfg.n.unwrap_or(1000);
    let reps = cfg.replications.unwrap_or(200);
    let seed = cfg.seed();
    let methods = match &cfg.method {
        Some(_) => vec![cfg.method()?],
        None => {
            let mut m = vec![Method::WMoment];
            if shape.is_smooth() {
                m.push(Method::Mle);
            }
            if d == 1 {
                m.push(Method::Wp1D);
            }
            m
        }
    };
    let bound = if shape.is_smooth() {
        Some(fisher_bound(
            &fisher_info_mc(&theta, &shape, 100_000, derive_seed(seed, u64::MAX))?,
            n,
        )?)
    } else {
        None
    };
    let params = ParamIndex::all(d);
    let mut table = Table::new(&[
        "method",
        "row",
        "col",
        "param_row",
        "param_col",
        "covariance",
        "fisher_bound",
        "replications_used",
        "failures",
    ]);
    for method in methods {
        // every method sees the same replicated data sets
        let cov = estimator_sampling_covariance(method, &theta, &shape, n, reps, seed)?;
        for (a, pa) in params.iter().enumerate() {
            for (b, pb) in params.iter().enumerate() {
                table.push(vec![
                    method.as_str().into(),
                    a.into(),
                    b.into(),
                    pa.to_string().into(),
                    pb.to_string().into(),
                    cov.covariance[[a, b]].into(),
                    bound.as_ref().map_or(Cell::Empty, |m| m[[a, b]].into()),
                    cov.replications_used.into(),
                    cov.failures.into(),
                ]);
            }
        }
    }
    Ok(table)
}

fn statistic(cfg: &ExperimentConfig, theta: &AffineParamsF64) -> Result<StatisticFnF64, CliError> {
    parse_statistic(
        cfg.statistic.as_deref().unwrap_or("x"),
        theta.dim(),
        Some(theta),
    )
}

fn push_matrix(table: &mut Table, quantity: &str, sigma2: Cell, m: &McMatrix) {
    for ((i, j), v) in m.value.indexed_iter() {
        table.push(vec![
            quantity.into(),
            sigma2.clone(),
            i.into(),
            j.into(),
            (*v).into(),
            m.std_error[[i, j]].into(),
        ]);
    }
}

/// Columns: `quantity,sigma2,row,col,value,std_error`, quantities
/// `var_increase` (one block per noise level), `slope`, `correction`,
/// `noise_limit`, `w_covariance`, `discrepancy`.
fn robustness(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let d = cfg.dimension();
    let theta = cfg.theta_value()?;
    let shape = cfg.shape_for(d)?;
    let stat = statistic(cfg, &theta)?;
    let scale = theta.sigma().as_sym().trace() / d as f64;
    let grid = cfg
        .sigma2
        .clone()
        .unwrap_or_else(|| vec![1e-3 * scale, 2e-3 * scale, 4e-3 * scale]);
    let r = noise_robustness(
        &stat,
        &theta,
        &shape,
        &grid,
        cfg.n.unwrap_or(100_000),
        cfg.seed(),
    )?;
    let mut table = Table::new(&["quantity", "sigma2", "row", "col", "value", "std_error"]);
    for (s, m) in r.sigma2.iter().zip(&r.var_increase) {
        push_matrix(&mut table, "var_increase", Cell::Num(*s), m);
    }
    for (name, m) in [
        ("slope", &r.slope),
        ("correction", &r.correction),
        ("noise_limit", &r.noise_limit),
        ("w_covariance", &r.w_covariance),
        ("discrepancy", &r.discrepancy),
    ] {
        push_matrix(&mut table, name, Cell::Empty, m);
    }
    Ok(table)
}

/// Columns: `quantity,row,col,value,std_error`, quantities `lhs`, `rhs`,
/// `jacobian`, `min_eig_gap` (with the delta-method standard error).
fn bounds(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let d = cfg.dimension();
    let theta = cfg.theta_value()?;
    let shape = cfg.shape_for(d)?;
    let stat = statistic(cfg, &theta)?;
    let b = wcr_bound_check(&stat, &theta, &shape, cfg.n.unwrap_or(100_000), cfg.seed())?;
    let mut table = Table::new(&["quantity", "row", "col", "value", "std_error"]);
    for (name, m) in [("lhs", &b.lhs), ("rhs", &b.rhs)] {
        for ((i, j), v) in m.indexed_iter() {
            table.push(vec![
                name.into(),
                i.into(),
                j.into(),
                (*v).into(),
                Cell::Empty,
            ]);
        }
    }
    for ((i, j), v) in b.jacobian.value.indexed_iter() {
        table.push(vec![
            "jacobian".into(),
            i.into(),
            j.into(),
            (*v).into(),
            b.jacobian.std_error[[i, j]].into(),
        ]);
    }
    table.push(vec![
        "min_eig_gap".into(),
        Cell::Empty,
        Cell::Empty,
        b.min_eig_gap.into(),
        b.gap_std_error.into(),
    ]);
    Ok(table)
}

#[derive(Serialize)]
struct DistanceReport {
    dim: usize,
    value: f64,
    location: f64,
    scatter: f64,
}

fn distance(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let (a, b) = cfg.theta_pair()?;
    let v = gelbrich_w2(&a, &b)?;
    let (location, scatter) = v
        .decomposition
        .ok_or_else(|| config("distance has no decomposition"))?;
    report(&DistanceReport {
        dim: a.dim(),
        value: v.value,
        location,
        scatter,
    })
}

/// Columns: `shape,dim,n,max_mean_deviation,max_cov_deviation,max_z_score,passed`.
fn verify_shapes(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    use rayon::prelude::*;
    let shapes = cfg.shape_list()?;
    let n = cfg.n.unwrap_or(100_000);
    let seed = cfg.seed();
    let reports: Vec<_> = shapes
        .par_iter()
        .enumerate()
        .map(|(k, s)| s.verify_standardization(n, derive_seed(seed, k as u64)))
        .collect::<Result<_, _>>()?;
    let mut table = Table::new(&[
        "shape",
        "dim",
        "n",
        "max_mean_deviation",
        "max_cov_deviation",
        "max_z_score",
        "passed",
    ]);
    for (s, r) in shapes.iter().zip(reports) {
        table.push(vec![
            s.name().into(),
            s.dim().into(),
            r.n.into(),
            r.max_mean_deviation.into(),
            r.max_cov_deviation.into(),
            r.max_z_score.into(),
            r.passed.into(),
        ]);
    }
    Ok(table)
}
