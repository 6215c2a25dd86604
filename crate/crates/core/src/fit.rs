//! Least-squares fitting in log-log space: straight-line fits for
//! benchmark scaling slopes and power laws `L(N) = a * N^(-alpha)` over
//! (parameter count, loss) points.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Ordinary least squares line through (ln x, ln y) points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// One (model size, loss) observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub param_count: u64,
    pub loss: f64,
}

/// Fitted power law `loss = coefficient * N^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    pub r_squared: f64,
}

/// OLS of ln(y) on ln(x). Requires at least two points with distinct,
/// strictly positive abscissae and positive ordinates. Two points give an
/// exactly determined line with r^2 = 1.
pub fn log_log_least_squares(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidConfig {
            what: "x and y series must have the same length",
        });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            what: "points",
            needed: 2,
            got: xs.len(),
        });
    }
    for &x in xs {
        if !(x > 0.0) {
            return Err(Error::NonPositive {
                what: "abscissa",
                value: x,
            });
        }
    }
    for &y in ys {
        if !(y > 0.0) {
            return Err(Error::NonPositive {
                what: "ordinate",
                value: y,
            });
        }
    }
    let distinct = count_distinct(xs);
    if distinct != xs.len() {
        return Err(Error::InsufficientData {
            what: "distinct abscissae",
            needed: xs.len(),
            got: distinct,
        });
    }

    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|&x| libm::log(x)).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| libm::log(y)).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in lx.iter().zip(&ly) {
        let resid = y - (intercept + slope * x);
        ss_res += resid * resid;
        ss_tot += (y - my) * (y - my);
    }
    let r_squared = if ss_tot > 0.0 {
        clamp01(1.0 - ss_res / ss_tot)
    } else {
        // all ordinates equal: the horizontal line fits exactly
        1.0
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Fits `loss = a * N^(-alpha)` by least squares of ln(loss) on
/// ln(param_count).
pub fn fit_power_law(points: &[ScalingPoint]) -> Result<PowerLawFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            what: "scaling points",
            needed: 2,
            got: points.len(),
        });
    }
    for p in points {
        if p.param_count < 1 {
            return Err(Error::NonPositive {
                what: "param_count",
                value: p.param_count as f64,
            });
        }
        if !(p.loss > 0.0) {
            return Err(Error::NonPositive {
                what: "loss",
                value: p.loss,
            });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.param_count as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.loss).collect();
    let line = log_log_least_squares(&xs, &ys)?;
    Ok(PowerLawFit {
        coefficient: libm::exp(line.intercept),
        exponent: -line.slope,
        r_squared: line.r_squared,
    })
}

/// Evaluates a fitted power law at the given parameter count.
pub fn evaluate_power_law(fit: &PowerLawFit, param_count: u64) -> f64 {
    fit.coefficient * libm::pow(param_count as f64, -fit.exponent)
}

fn count_distinct(xs: &[f64]) -> usize {
    let mut distinct = 0;
    for (i, &x) in xs.iter().enumerate() {
        if xs[..i].iter().all(|&p| p != x) {
            distinct += 1;
        }
    }
    distinct
}

fn clamp01(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x > 1.0 {
        1.0
    } else {
        x
    }
}
