//! Tail probabilities and quantiles of the reference distributions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Reference distribution of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    Normal,
    /// Student's t with the given degrees of freedom; infinite df is the normal.
    StudentT(f64),
    ChiSquare(f64),
}

impl Distribution {
    /// t reference when `df` is known, normal otherwise.
    pub fn t_or_normal(df: Option<f64>) -> Self {
        match df {
            Some(df) if df.is_finite() => Distribution::StudentT(df),
            _ => Distribution::Normal,
        }
    }

    fn check(self) -> Result<Self> {
        match self {
            Distribution::StudentT(df) | Distribution::ChiSquare(df) if !(df > 0.0) => Err(
                Error::invalid(format!("degrees of freedom must be positive, got {df}")),
            ),
            Distribution::StudentT(df) if df.is_infinite() => Ok(Distribution::Normal),
            d => Ok(d),
        }
    }

    fn cdf(self, x: f64) -> f64 {
        match self {
            Distribution::Normal => std_normal().cdf(x),
            Distribution::StudentT(df) => students_t(df).cdf(x),
            Distribution::ChiSquare(df) => chi_squared(df).cdf(x),
        }
    }

    fn sf(self, x: f64) -> f64 {
        match self {
            Distribution::Normal => std_normal().sf(x),
            Distribution::StudentT(df) => students_t(df).sf(x),
            Distribution::ChiSquare(df) => chi_squared(df).sf(x),
        }
    }

    fn pdf(self, x: f64) -> f64 {
        match self {
            Distribution::Normal => std_normal().pdf(x),
            Distribution::StudentT(df) => students_t(df).pdf(x),
            Distribution::ChiSquare(df) => chi_squared(df).pdf(x),
        }
    }

    fn inverse_cdf_start(self, p: f64) -> f64 {
        match self {
            Distribution::Normal => std_normal().inverse_cdf(p),
            Distribution::StudentT(df) => students_t(df).inverse_cdf(p),
            Distribution::ChiSquare(df) => chi_squared(df).inverse_cdf(p),
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn students_t(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("validated df")
}

fn chi_squared(df: f64) -> ChiSquared {
    ChiSquared::new(df).expect("validated df")
}

/// Upper-tail probability of `stat`, doubled (and capped at 1) when
/// `two_sided` is set. For the chi-square the upper tail is always used.
pub fn tail_prob(dist: Distribution, stat: f64, two_sided: bool) -> Result<f64> {
    if !stat.is_finite() {
        return Err(Error::numerical(format!("non-finite test statistic {stat}")));
    }
    let dist = dist.check()?;
    let p = match dist {
        Distribution::ChiSquare(_) => dist.sf(stat),
        _ if two_sided => (2.0 * dist.sf(stat.abs())).min(1.0),
        _ => dist.sf(stat),
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Lower-tail quantile: the `x` with `P(X ≤ x) = prob`.
pub fn quantile(dist: Distribution, prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!(
            "quantile probability must lie in (0, 1), got {prob}"
        )));
    }
    let dist = dist.check()?;
    // Solve tail(x) = target on whichever tail is small, to keep relative accuracy.
    let upper = prob > 0.5;
    let target = if upper { 1.0 - prob } else { prob };
    let tail = |x: f64| if upper { dist.sf(x) } else { dist.cdf(x) };
    // g(x) = tail(x) − target is increasing in x for the lower tail, decreasing for the upper.
    let g = |x: f64| if upper { target - tail(x) } else { tail(x) - target };
    let positive_support = matches!(dist, Distribution::ChiSquare(_));
    let mut x = dist.inverse_cdf_start(prob);
    if !x.is_finite() || (positive_support && x <= 0.0) {
        x = if positive_support { 1.0 } else { 0.0 };
    }
    // bracket the root
    let (mut lo, mut hi) = (x, x);
    let mut width = x.abs().max(1.0);
    while g(lo) > 0.0 {
        lo = if positive_support { lo / 16.0 } else { lo - width };
        width *= 2.0;
        if positive_support && lo < f64::MIN_POSITIVE {
            return Ok(0.0);
        }
    }
    width = x.abs().max(1.0);
    while g(hi) < 0.0 {
        hi += width;
        width *= 2.0;
        if !hi.is_finite() {
            return Err(Error::numerical("quantile bracketing overflowed"));
        }
    }
    for _ in 0..300 {
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = dist.pdf(x);
        let newton = x - gx / dens;
        let next = if dens > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if positive_support && lo > 0.0 && hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Two-sided critical value `t_{cl,df}`: the `1 − (1 − cl)/2` quantile.
pub fn two_sided_critical(level: f64, df: Option<f64>) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    quantile(Distribution::t_or_normal(df), 1.0 - (1.0 - level) / 2.0)
}
