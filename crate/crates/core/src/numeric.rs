//! Small numerical helpers shared by the checks: sample ladders, deterministic
//! parallel sup/inf sweeps and log-log power-law fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `count` equispaced points on `[lo, hi]` (both ends included).
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Geometric ladder `start, start*ratio, ...` up to and including `end`.
pub fn geometric(start: f64, ratio: f64, end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = start;
    while v <= end * (1.0 + 1e-12) {
        out.push(v);
        v *= ratio;
    }
    out
}

/// Symmetric ladder `{0} U {+-v : v in geometric(start, ratio, end)}`, sorted.
pub fn signed_ladder(start: f64, ratio: f64, end: f64) -> Vec<f64> {
    let pos = geometric(start, ratio, end);
    let mut out: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
    out.push(0.0);
    out.extend(pos);
    out
}

/// `<x> = sqrt(1 + x^2)`.
pub fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Largest value with the index attaining it; ties resolve to the lowest
/// index, so the result does not depend on scheduling. NaN counts as larger
/// than every number.
pub fn par_argmax<F>(count: usize, f: F) -> (f64, usize)
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| (f(i), i))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), pick_max)
}

fn pick_max(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let (ka, kb) = (key(a.0), key(b.0));
    if ka > kb || (ka == kb && a.1 < b.1) {
        a
    } else {
        b
    }
}

/// Smallest value with its index, ties to the lowest index.
pub fn par_argmin<F>(count: usize, f: F) -> (f64, usize)
where
    F: Fn(usize) -> f64 + Sync,
{
    let (v, i) = par_argmax(count, |i| -f(i));
    (-v, i)
}

/// Least-squares fit of `log y = slope * log x + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    /// `None` when every sample vanishes, or when the samples vanish beyond
    /// some abscissa (decay faster than any power).
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual of the fit in log space.
    pub rms_residual: f64,
    /// Number of samples used in the fit.
    pub used: usize,
}

/// Values below this are treated as exact zeros by [`loglog_fit`].
pub const ZERO_FLOOR: f64 = 1e-300;

/// Fits a power law to positive samples. Vanishing samples are dropped; if
/// all samples vanish, or too few survive but every vanishing sample lies
/// beyond every surviving one, the fit reports no slope. Otherwise fewer than
/// `min_points` usable samples is an error.
pub fn loglog_fit(xs: &[f64], ys: &[f64], min_points: usize) -> Result<PowerFit> {
    if xs.len() != ys.len() {
        return Err(Error::Validation("fit abscissae and ordinates differ in length".into()));
    }
    if xs.len() < min_points {
        return Err(Error::RegressionIllConditioned(format!("{} samples, need at least {min_points}", xs.len())));
    }
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(_, y)| y.abs() > ZERO_FLOOR).map(|(x, y)| (x.ln(), y.abs().ln())).collect();
    if pts.is_empty() {
        return Ok(PowerFit { slope: None, intercept: None, rms_residual: 0.0, used: 0 });
    }
    if pts.len() < min_points {
        let last_alive = xs.iter().zip(ys).filter(|(_, y)| y.abs() > ZERO_FLOOR).map(|(x, _)| *x).fold(f64::MIN, f64::max);
        let first_dead = xs.iter().zip(ys).filter(|(_, y)| y.abs() <= ZERO_FLOOR).map(|(x, _)| *x).fold(f64::MAX, f64::min);
        if first_dead > last_alive {
            return Ok(PowerFit { slope: None, intercept: None, rms_residual: 0.0, used: pts.len() });
        }
        return Err(Error::RegressionIllConditioned(format!(
            "{} non-vanishing samples, need at least {min_points}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-12 {
        return Err(Error::RegressionIllConditioned("abscissae do not spread".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    Ok(PowerFit { slope: Some(slope), intercept: Some(intercept), rms_residual: (rss / n).sqrt(), used: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladders() {
        assert_eq!(geometric(1.0, 2.0, 256.0).len(), 9);
        let s = signed_ladder(0.25, 2.0, 50.0);
        assert_eq!(s.len(), 17);
        assert_eq!(s[8], 0.0);
        assert_eq!(linspace(-1.0, 1.0, 21)[10], 0.0);
    }

    #[test]
    fn argmax_is_deterministic_on_ties() {
        let v = [1.0, 3.0, 3.0, 2.0];
        assert_eq!(par_argmax(4, |i| v[i]), (3.0, 1));
        assert_eq!(par_argmin(4, |i| v[i]), (1.0, 0));
        let w = [1.0, f64::NAN];
        assert_eq!(par_argmax(2, |i| w[i]).1, 1);
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let xs = geometric(1.0, 2.0, 256.0);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        let f = loglog_fit(&xs, &ys, 4).unwrap();
        assert!((f.slope.unwrap() + 1.5).abs() < 1e-12);
        assert!(f.rms_residual < 1e-12);
    }

    #[test]
    fn vanishing_and_short_samples() {
        let xs = geometric(1.0, 2.0, 256.0);
        let f = loglog_fit(&xs, &vec![0.0; xs.len()], 4).unwrap();
        assert_eq!(f.slope, None);
        assert!(matches!(loglog_fit(&xs[..3], &[1.0, 2.0, 3.0], 4), Err(Error::RegressionIllConditioned(_))));
        let mut tail = vec![0.0; xs.len()];
        tail[0] = 1.0;
        tail[1] = 0.5;
        assert_eq!(loglog_fit(&xs, &tail, 4).unwrap().slope, None);
        tail.reverse();
        assert!(loglog_fit(&xs, &tail, 4).is_err());
    }
}
