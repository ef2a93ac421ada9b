//! Gaussian-process Bayesian optimisation: a 1-D toy objective, then the
//! learning-rate / weight-decay space with a synthetic objective.

use offlang::hpo::{self, BoConfig, Dimension, Scale, SearchSpace};

fn main() -> offlang::Result<()> {
    let line = SearchSpace::new(vec![Dimension::new("x", 0.0, 1.0, Scale::Linear)?])?;
    let r = hpo::bo_loop(|x| Ok((x[0] - 0.3).powi(2)), &line, &BoConfig { seed: 3, ..Default::default() })?;
    println!("(x - 0.3)^2: best x = {:.4}, f = {:.2e}", r.best_point[0], r.best_value);

    let space = SearchSpace::learning_rate_and_decay();
    // A bowl in log space centred on lr = 1e-3, decay = 1e-9.
    let bowl = |x: &[f64]| Ok((x[0].log10() + 3.0).powi(2) + 0.1 * (x[1].log10() + 9.0).powi(2));
    let r = hpo::bo_loop(bowl, &space, &BoConfig { n_iter: 15, seed: 3, ..Default::default() })?;
    hpo::write_trace_csv(&space, &r.trace, std::io::stdout())?;
    println!("best lr = {:.2e}, weight decay = {:.2e}", r.best_point[0], r.best_point[1]);
    Ok(())
}
