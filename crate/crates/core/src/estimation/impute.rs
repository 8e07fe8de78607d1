//! Conditional-mean imputation of censored log values.
//!
//! Each censored value is replaced by its expectation under the current
//! model, conditioned on the side of its bound, and the model is refitted
//! until both the parameters and the imputed values stop moving.

use crate::error::{Error, Result};
use crate::normal;

use super::FitOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    /// True value lies below the bound.
    Below,
    /// True value lies above the bound.
    Above,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Censored {
    /// Position in the working value vector.
    pub pos: usize,
    pub side: Side,
    pub log_bound: f64,
}

/// Expected value of `N(location, sigma)` restricted to the censored side of `log_bound`.
pub(crate) fn conditional_mean(location: f64, sigma: f64, side: Side, log_bound: f64) -> f64 {
    let a = (log_bound - location) / sigma;
    match side {
        Side::Above => location + sigma * normal::upper_tail_mean(a),
        Side::Below => location + sigma * normal::lower_tail_mean(a),
    }
}

/// A model refitted from the working values.
pub(crate) trait Model {
    fn params(&self) -> Vec<f64>;
    fn location(&self, pos: usize) -> f64;
    fn sigma(&self) -> f64;
}

/// Runs the imputation to a fixed point.
///
/// `values` must hold starting values for the censored positions (their
/// bounds). Returns the final model and the number of update rounds.
pub(crate) fn iterate<M, F>(
    values: &mut [f64],
    censored: &[Censored],
    opts: &FitOptions,
    fit: F,
) -> Result<(M, usize)>
where
    M: Model,
    F: Fn(&[f64]) -> Result<M>,
{
    let mut model = fit(values)?;
    if censored.is_empty() {
        return Ok((model, 0));
    }
    let mut change = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        let sigma = model.sigma();
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::param(
                "sigma",
                sigma,
                "degenerate spread during imputation",
            ));
        }
        change = 0.0;
        for c in censored {
            let next = conditional_mean(model.location(c.pos), sigma, c.side, c.log_bound);
            change = f64::max(change, (next - values[c.pos]).abs());
            values[c.pos] = next;
        }
        let refit = fit(values)?;
        for (a, b) in refit.params().iter().zip(model.params()) {
            change = change.max((a - b).abs());
        }
        model = refit;
        if change < opts.tolerance {
            return Ok((model, iteration));
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        last_change: change,
    })
}
