//! Bayesian optimisation with a Gaussian-process surrogate and expected
//! improvement, minimising an objective over a box of hyperparameters.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Dimension {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidArgument(format!("{name}: lower bound {lower} is not below upper bound {upper}")));
        }
        if scale == Scale::Log && lower <= 0.0 {
            return Err(Error::InvalidArgument(format!("{name}: log scale needs a positive lower bound")));
        }
        Ok(Dimension { name: name.to_string(), lower, upper, scale })
    }

    /// Map `u ∈ [0, 1]` to the dimension's range.
    pub fn from_unit(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log => (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp(),
        }
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => (x - self.lower) / (self.upper - self.lower),
            Scale::Log => (x.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("search space has no dimensions".into()));
        }
        Ok(SearchSpace { dims })
    }

    /// Learning rate in `[1e-5, 1e-1]` and weight decay in `[1e-12, 1e-2]`,
    /// both log-scaled.
    pub fn learning_rate_and_decay() -> Self {
        SearchSpace {
            dims: vec![
                Dimension::new("lr", 1e-5, 1e-1, Scale::Log).expect("valid bounds"),
                Dimension::new("weight_decay", 1e-12, 1e-2, Scale::Log).expect("valid bounds"),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(u).map(|(d, &v)| d.from_unit(v)).collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(x).map(|(d, &v)| d.to_unit(v)).collect()
    }
}

pub const JITTER: f64 = 1e-8;
/// Lengthscale candidates (in unit-cube coordinates) tried per dimension.
pub const LENGTHSCALE_GRID: [f64; 7] = [0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0];

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 {
                    return Err(Error::Numerical("kernel matrix is not positive definite".into()));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ x = b`.
fn cho_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i][k] * z[k];
        }
        z[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[k][i] * z[k];
        }
        z[i] /= l[i][i];
    }
    z
}

fn correlation(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    (-0.5 * r2).exp()
}

/// Exact GP regression with a squared-exponential kernel. Targets are
/// standardised; the signal variance takes its maximum-likelihood value for
/// each lengthscale choice.
#[derive(Clone, Debug)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    lengthscales: Vec<f64>,
    /// Signal variance in standardised units.
    variance: f64,
    y_mean: f64,
    y_scale: f64,
    chol: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

struct Fit {
    chol: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    variance: f64,
    log_lik: f64,
}

fn fit_with(x: &[Vec<f64>], y: &[f64], lengthscales: &[f64]) -> Result<Fit> {
    let n = x.len();
    let r: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| correlation(&x[i], &x[j], lengthscales) + if i == j { JITTER } else { 0.0 }).collect())
        .collect();
    let chol = cholesky(&r)?;
    let alpha = cho_solve(&chol, y);
    let variance = (y.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() / n as f64).max(0.0);
    let log_det: f64 = chol.iter().enumerate().map(|(i, row)| 2.0 * row[i].ln()).sum();
    let log_lik = if variance > 0.0 { -0.5 * n as f64 * variance.ln() - 0.5 * log_det } else { f64::NEG_INFINITY };
    Ok(Fit { chol, alpha, variance, log_lik })
}

impl GpSurrogate {
    /// Fit to points in `[0, 1]^D`, choosing lengthscales from
    /// [`LENGTHSCALE_GRID`] by marginal likelihood.
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("GP needs at least one observation".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Shape(format!("{} points for {} values", x.len(), y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("GP targets must be finite".into()));
        }
        let d = x[0].len();
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let std = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        let y_scale = if std > 0.0 { std } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

        let combos = LENGTHSCALE_GRID.len().pow(d as u32);
        let mut best: Option<(Vec<f64>, Fit)> = None;
        for mut c in 0..combos {
            let ls: Vec<f64> = (0..d)
                .map(|_| {
                    let l = LENGTHSCALE_GRID[c % LENGTHSCALE_GRID.len()];
                    c /= LENGTHSCALE_GRID.len();
                    l
                })
                .collect();
            let Ok(fit) = fit_with(x, &ys, &ls) else { continue };
            if best.as_ref().is_none_or(|(_, b)| fit.log_lik > b.log_lik) {
                best = Some((ls, fit));
            }
        }
        let (lengthscales, fit) = best.ok_or_else(|| Error::Numerical("no lengthscale gave a positive-definite kernel".into()))?;
        Ok(GpSurrogate {
            x: x.to_vec(),
            lengthscales,
            variance: fit.variance,
            y_mean,
            y_scale,
            chol: fit.chol,
            alpha: fit.alpha,
        })
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    /// Prior variance in the units of the observations.
    pub fn prior_variance(&self) -> f64 {
        self.variance * self.y_scale * self.y_scale
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    /// Kernel `k(a, b)` in the units of the observations, without jitter.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.prior_variance() * correlation(a, b, &self.lengthscales)
    }

    /// Posterior `(mean, variance)` at `x`; the variance is clamped at 0.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let r: Vec<f64> = self.x.iter().map(|xi| correlation(x, xi, &self.lengthscales)).collect();
        let mean = r.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = cho_solve(&self.chol, &r);
        let explained: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
        let var = (self.variance * (1.0 - explained)).max(0.0);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }
}

/// Expected improvement below `best` for a Gaussian with the given mean and
/// variance.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let gain = best - mean;
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let std = Normal::standard();
    (gain * std.cdf(z) + sigma * std.pdf(z)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_iter: usize,
    pub candidates: usize,
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig { n_init: 3, n_iter: 10, candidates: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    /// 1-based; the first `n_init` rows are the initial design.
    pub iteration: usize,
    pub point: Vec<f64>,
    /// `+∞` when the evaluation failed.
    pub objective: f64,
    pub incumbent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub trace: Vec<TraceRow>,
}

/// `n` Latin-hypercube points in `[0, 1]^d`.
pub fn latin_hypercube(n: usize, d: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Minimise `objective` over `space`: a Latin-hypercube initial design, then
/// `n_iter` rounds of GP fit and EI maximisation over uniform candidates.
/// Failed or non-finite evaluations are recorded as `+∞` and left out of
/// the surrogate.
pub fn bo_loop<F>(mut objective: F, space: &SearchSpace, config: &BoConfig) -> Result<BoResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if config.n_init == 0 || config.candidates == 0 {
        return Err(Error::InvalidArgument("n_init and candidates must be at least 1".into()));
    }
    let d = space.len();
    let mut rng = rng::seeded(config.seed);
    let mut units: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut incumbent = f64::INFINITY;
    let mut best_point: Option<Vec<f64>> = None;

    let mut evaluate = |u: Vec<f64>, units: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let point = space.from_unit(&u);
        let value = match objective(&point) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                log::warn!("objective returned {v} at {point:?}; recording +inf");
                f64::INFINITY
            }
            Err(e) => {
                log::warn!("objective failed at {point:?}: {e}; recording +inf");
                f64::INFINITY
            }
        };
        if value < incumbent {
            incumbent = value;
            best_point = Some(point.clone());
        }
        trace.push(TraceRow { iteration: trace.len() + 1, point, objective: value, incumbent });
        units.push(u);
        values.push(value);
    };

    for u in latin_hypercube(config.n_init, d, &mut rng) {
        evaluate(u, &mut units, &mut values);
    }
    for _ in 0..config.n_iter {
        let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = units
            .iter()
            .zip(&values)
            .filter(|(_, v)| v.is_finite())
            .map(|(u, &v)| (u.clone(), v))
            .unzip();
        let candidates: Vec<Vec<f64>> = (0..config.candidates).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let next = if xs.is_empty() {
            candidates[0].clone()
        } else {
            let gp = GpSurrogate::fit(&xs, &ys)?;
            let best_y = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let mut pick = 0;
            let mut pick_ei = f64::NEG_INFINITY;
            for (i, c) in candidates.iter().enumerate() {
                let (m, v) = gp.posterior(c);
                let ei = expected_improvement(m, v, best_y);
                if ei > pick_ei {
                    pick = i;
                    pick_ei = ei;
                }
            }
            candidates[pick].clone()
        };
        evaluate(next, &mut units, &mut values);
    }
    let best_point = best_point.ok_or_else(|| Error::Numerical("every objective evaluation failed".into()))?;
    Ok(BoResult { best_point, best_value: incumbent, trace })
}

/// CSV `iteration,<dimension names>,objective,incumbent`.
pub fn write_trace_csv<W: Write>(space: &SearchSpace, trace: &[TraceRow], mut w: W) -> Result<()> {
    let names: Vec<&str> = space.dims.iter().map(|d| d.name.as_str()).collect();
    writeln!(w, "iteration,{},objective,incumbent", names.join(","))?;
    for r in trace {
        let pt: Vec<String> = r.point.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{},{},{},{}", r.iteration, pt.join(","), r.objective, r.incumbent)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_round_trip() {
        let d = Dimension::new("lr", 1e-5, 1e-1, Scale::Log).unwrap();
        assert!((d.from_unit(0.5) - 1e-3).abs() < 1e-15);
        assert!((d.to_unit(1e-3) - 0.5).abs() < 1e-12);
        assert!(Dimension::new("x", 1.0, 1.0, Scale::Linear).is_err());
        assert!(Dimension::new("x", 0.0, 1.0, Scale::Log).is_err());
    }

    #[test]
    fn interpolates_observations() {
        let x = vec![vec![0.1], vec![0.4], vec![0.9]];
        let y = vec![1.0, -0.5, 2.0];
        let gp = GpSurrogate::fit(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, v) = gp.posterior(xi);
            assert!((m - yi).abs() <= 1e-6, "{m} vs {yi}");
            assert!(v <= 1e-6);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x = vec![vec![0.0], vec![0.05], vec![0.1]];
        let y = vec![1.0, 2.0, 0.5];
        let gp = GpSurrogate::fit(&x, &y).unwrap();
        let far = [gp.lengthscales()[0] * 40.0];
        let (m, v) = gp.posterior(&far);
        assert!((m - gp.prior_mean()).abs() < 1e-9);
        assert!((v - gp.prior_variance()).abs() < 1e-9);
    }

    #[test]
    fn ei_cases() {
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.0, 0.0, 1.0), 1.0);
        assert!((expected_improvement(1.0, 1.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn constant_objective() {
        let space = SearchSpace::new(vec![Dimension::new("x", 0.0, 1.0, Scale::Linear).unwrap()]).unwrap();
        let r = bo_loop(|_| Ok(4.0), &space, &BoConfig { n_iter: 3, ..Default::default() }).unwrap();
        assert_eq!(r.best_point, r.trace[0].point);
        let gp = GpSurrogate::fit(&[vec![0.2], vec![0.7]], &[4.0, 4.0]).unwrap();
        for u in [0.0, 0.3, 0.5, 1.0] {
            let (m, v) = gp.posterior(&[u]);
            assert!(expected_improvement(m, v, 4.0) < 1e-12);
        }
    }

    #[test]
    fn failures_become_infinite() {
        let space = SearchSpace::new(vec![Dimension::new("x", 0.0, 1.0, Scale::Linear).unwrap()]).unwrap();
        let mut calls = 0;
        let r = bo_loop(
            |x| {
                calls += 1;
                if calls == 2 {
                    Err(Error::Numerical("diverged".into()))
                } else {
                    Ok(x[0])
                }
            },
            &space,
            &BoConfig { n_iter: 2, ..Default::default() },
        )
        .unwrap();
        assert_eq!(r.trace[1].objective, f64::INFINITY);
        assert!(r.best_value.is_finite());
        for w in r.trace.windows(2) {
            assert!(w[1].incumbent <= w[0].incumbent);
        }
    }

    #[test]
    fn trace_csv_header() {
        let space = SearchSpace::learning_rate_and_decay();
        let mut buf = Vec::new();
        write_trace_csv(&space, &[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,lr,weight_decay,objective,incumbent\n");
    }
}
