use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Tuning knobs for the univariate slice sampler (Neal 2003, stepping-out
/// with shrinkage).
#[derive(Debug, Clone, Copy)]
pub struct SliceOptions {
    /// Initial bracket width. For positive-support targets this width lives
    /// on the log axis.
    pub width: f64,
    pub max_expand: u32,
    pub max_shrink: u32,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            width: 1.0,
            max_expand: 100,
            max_shrink: 100,
        }
    }
}

/// One slice-sampling transition for a target on the whole real line.
pub fn slice_sample_real(
    log_density: impl Fn(f64) -> f64,
    x0: f64,
    opts: &SliceOptions,
    rng: &mut RandomStream,
) -> Result<f64> {
    slice_transition(log_density, x0, opts, rng).map(|(x, _)| x)
}

/// One slice-sampling transition for a target on (0, inf).
///
/// The walk happens on u = ln x; the Jacobian term keeps the original
/// density invariant.
pub fn slice_sample_positive(
    log_density: impl Fn(f64) -> f64,
    x0: f64,
    opts: &SliceOptions,
    rng: &mut RandomStream,
) -> Result<f64> {
    if !(x0 > 0.0) {
        return Err(Error::fault(format!("slice start {x0} not positive")));
    }
    let g = |u: f64| log_density(u.exp()) + u;
    slice_transition(g, x0.ln(), opts, rng).map(|(u, _)| u.exp())
}

/// Returns the accepted point together with the slice level it cleared.
pub(crate) fn slice_transition(
    g: impl Fn(f64) -> f64,
    x0: f64,
    opts: &SliceOptions,
    rng: &mut RandomStream,
) -> Result<(f64, f64)> {
    let g0 = g(x0);
    if !g0.is_finite() {
        return Err(Error::fault(format!(
            "slice target not finite at start point {x0}: {g0}"
        )));
    }
    let level = g0 + rng.uniform_open().ln();

    let mut left = x0 - opts.width * rng.uniform();
    let mut right = left + opts.width;
    let mut expansions = 0;
    while g(left) > level {
        left -= opts.width;
        expansions += 1;
        if expansions > opts.max_expand {
            return Err(Error::fault("slice bracket expansion exceeded limit (left)"));
        }
    }
    expansions = 0;
    while g(right) > level {
        right += opts.width;
        expansions += 1;
        if expansions > opts.max_expand {
            return Err(Error::fault("slice bracket expansion exceeded limit (right)"));
        }
    }

    for _ in 0..opts.max_shrink {
        let candidate = left + rng.uniform() * (right - left);
        if g(candidate) >= level {
            return Ok((candidate, level));
        }
        if candidate < x0 {
            left = candidate;
        } else {
            right = candidate;
        }
    }
    Err(Error::fault("slice shrinkage exceeded limit"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = sorted.len() as f64;
        let mut d = 0.0f64;
        for (i, &x) in sorted.iter().enumerate() {
            let f = cdf(x);
            d = d.max((f - i as f64 / n).abs());
            d = d.max(((i + 1) as f64 / n - f).abs());
        }
        d
    }

    #[test]
    fn stays_inside_bounded_support() {
        // Target proportional to 1 on (0,1), zero elsewhere.
        let target = |x: f64| if x > 0.0 && x < 1.0 { 0.0 } else { f64::NEG_INFINITY };
        let mut rng = RandomStream::new(11);
        let opts = SliceOptions::default();
        let mut x = 0.5;
        for _ in 0..2_000 {
            x = slice_sample_positive(target, x, &opts, &mut rng).unwrap();
            assert!(x > 0.0 && x < 1.0, "escaped support: {x}");
        }
    }

    #[test]
    fn accepted_point_clears_the_level() {
        let target = |x: f64| -0.5 * x * x;
        let mut rng = RandomStream::new(12);
        let opts = SliceOptions::default();
        let mut x = 0.3;
        for _ in 0..500 {
            let (y, level) = slice_transition(target, x, &opts, &mut rng).unwrap();
            assert!(target(y) >= level);
            x = y;
        }
    }

    #[test]
    fn gamma_2_1_passes_ks() {
        // Gamma(2,1) on the positive axis; CDF 1 - e^{-x}(1+x).
        let target = |x: f64| x.ln() - x;
        let cdf = |x: f64| 1.0 - (-x).exp() * (1.0 + x);
        let mut rng = RandomStream::new(13);
        let opts = SliceOptions::default();
        let mut x = 1.0;
        let mut draws = Vec::with_capacity(5_000);
        for i in 0..50_000 {
            x = slice_sample_positive(target, x, &opts, &mut rng).unwrap();
            if i % 10 == 9 {
                draws.push(x);
            }
        }
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_statistic(&draws, cdf);
        // Asymptotic one-sample KS critical value at significance 0.01.
        let crit = 1.62762 / (draws.len() as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn pathologically_flat_target_faults() {
        let target = |_x: f64| 0.0; // improper: constant over all of (0, inf)
        let mut rng = RandomStream::new(14);
        let opts = SliceOptions {
            width: 1.0,
            max_expand: 20,
            max_shrink: 20,
        };
        assert!(slice_sample_positive(target, 1.0, &opts, &mut rng).is_err());
    }

    #[test]
    fn non_finite_start_faults() {
        let target = |_x: f64| f64::NAN;
        let mut rng = RandomStream::new(15);
        assert!(slice_sample_positive(target, 1.0, &SliceOptions::default(), &mut rng).is_err());
    }
}
