//! Discrete power-law fitting of degree data.
//!
//! The exponent is the discrete maximum-likelihood estimate for a tail
//! starting at `x_min`; `x_min` is the candidate that minimizes the
//! Kolmogorov-Smirnov distance between the empirical and fitted tail CDFs.
//! The fit is compared against a discrete exponential on the same tail with
//! a normalized log-likelihood ratio and its two-sided normal p-value.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::scalar::Scalar;

use super::StatsError;

/// Fewest observations accepted by [`fit_power_law`].
pub const MIN_OBSERVATIONS: usize = 50;
/// Smallest tail considered when scanning `x_min` candidates.
pub const MIN_TAIL: usize = 10;

/// Terms summed explicitly before the Euler-Maclaurin tail takes over.
const DIRECT_TERMS: u64 = 200;
/// Gap beyond which a CDF point is evaluated from the zeta tail instead of
/// by extending the running sum.
const MAX_WALK: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<T> {
    pub alpha: T,
    pub sigma_alpha: T,
    pub x_min: u64,
    pub n_tail: usize,
    pub ks_distance: T,
    /// Normalized log-likelihood ratio; positive favors the power law.
    pub loglik_ratio_r: T,
    pub p_value: T,
    /// Rate of the competing discrete exponential.
    pub exponential_lambda: T,
}

/// `(sum k^-a, sum ln(k) k^-a)` over `k >= start`.
///
/// Explicit summation of the first terms, then the Euler-Maclaurin tail with
/// corrections through the third derivative.
pub fn zeta_sums<T: Scalar>(alpha: T, start: u64) -> (T, T) {
    let one = T::one();
    let two = T::lit(2.0);
    let mut s0 = T::zero();
    let mut s1 = T::zero();
    for k in start..start + DIRECT_TERMS {
        let lk = T::from_u64(k).expect("k fits").ln();
        let term = (-alpha * lk).exp();
        s0 = s0 + term;
        s1 = s1 + lk * term;
    }
    let m = T::from_u64(start + DIRECT_TERMS).expect("m fits");
    let lm = m.ln();
    let fm = (-alpha * lm).exp();
    let am1 = alpha - one;

    // k^-a
    let integral0 = m * fm / am1;
    let d1 = -alpha * fm / m;
    let d3 = -alpha * (alpha + one) * (alpha + two) * fm / (m * m * m);
    s0 = s0 + integral0 + fm / two - d1 / T::lit(12.0) + d3 / T::lit(720.0);

    // ln(k) k^-a
    let gm = lm * fm;
    let integral1 = m * fm * (lm / am1 + one / (am1 * am1));
    let g1 = fm / m * (one - alpha * lm);
    let inner = alpha * (alpha + one) * lm - two * alpha - one;
    let g3 = fm / (m * m * m) * (alpha * (alpha + one) - (alpha + two) * inner);
    s1 = s1 + integral1 + gm / two - g1 / T::lit(12.0) + g3 / T::lit(720.0);
    (s0, s1)
}

/// Hurwitz zeta `sum_{k >= start} k^-alpha`.
pub fn hurwitz_zeta<T: Scalar>(alpha: T, start: u64) -> T {
    zeta_sums(alpha, start).0
}

/// Solves `E[ln x] = mean_ln` for the discrete power law starting at `x_min`.
fn mle_alpha<T: Scalar>(mean_ln: T, x_min: u64) -> T {
    let residual = |a: T| {
        let (s0, s1) = zeta_sums(a, x_min);
        s1 / s0 - mean_ln
    };
    let mut lo = T::lit(1.0 + 1e-4);
    let mut hi = T::lit(8.0);
    while residual(hi) > T::zero() && hi < T::lit(1000.0) {
        lo = hi;
        hi = hi * T::lit(2.0);
    }
    if residual(lo) <= T::zero() {
        return lo;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// `sum_{k = x_min}^{p} k^-alpha` for each (sorted, >= x_min - 1) point `p`.
fn partial_sums<T: Scalar>(alpha: T, x_min: u64, s0: T, points: &[u64]) -> Vec<T> {
    let mut out = Vec::with_capacity(points.len());
    let mut running = T::zero();
    let mut next = x_min;
    for &p in points {
        if p < next {
            out.push(if p < x_min { T::zero() } else { running });
            continue;
        }
        if p - next > MAX_WALK {
            running = s0 - hurwitz_zeta(alpha, p + 1);
            next = p + 1;
        } else {
            while next <= p {
                let term = (-alpha * T::from_u64(next).expect("fits").ln()).exp();
                running = running + term;
                next += 1;
            }
        }
        out.push(running);
    }
    out
}

struct TailFit<T> {
    alpha: T,
    s0: T,
    ks: T,
}

fn fit_tail<T: Scalar>(tail: &[u64], x_min: u64) -> TailFit<T> {
    let n = T::from_count(tail.len());
    let mean_ln = tail
        .iter()
        .map(|&x| T::from_u64(x).expect("fits").ln())
        .sum::<T>()
        / n;
    let alpha = mle_alpha(mean_ln, x_min);
    let s0 = hurwitz_zeta(alpha, x_min);

    // distinct values with cumulative counts
    let mut distinct: Vec<(u64, usize)> = Vec::new();
    for (i, &x) in tail.iter().enumerate() {
        match distinct.last_mut() {
            Some((v, c)) if *v == x => *c = i + 1,
            _ => distinct.push((x, i + 1)),
        }
    }
    let mut points = Vec::with_capacity(2 * distinct.len());
    for &(v, _) in &distinct {
        if v > x_min {
            points.push(v - 1);
        }
        points.push(v);
    }
    let sums = partial_sums(alpha, x_min, s0, &points);
    let mut ks = T::zero();
    let mut idx = 0;
    let mut below = 0usize;
    for &(v, count) in &distinct {
        if v > x_min {
            let model = sums[idx] / s0;
            ks = ks.max((T::from_count(below) / n - model).abs());
            idx += 1;
        }
        let model = sums[idx] / s0;
        ks = ks.max((T::from_count(count) / n - model).abs());
        idx += 1;
        below = count;
    }
    TailFit { alpha, s0, ks }
}

/// Fits a discrete power law to positive integer observations.
pub fn fit_power_law<T: Scalar>(observations: &[u64]) -> Result<PowerLawFit<T>, StatsError> {
    if observations.len() < MIN_OBSERVATIONS {
        return Err(StatsError::TooFewObservations {
            got: observations.len(),
            need: MIN_OBSERVATIONS,
        });
    }
    if observations.contains(&0) {
        return Err(StatsError::InvalidArgument(
            "observations must be positive integers".into(),
        ));
    }
    let mut sorted = observations.to_vec();
    sorted.sort_unstable();
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(StatsError::Degenerate(
            "all observations are equal; the exponent diverges".into(),
        ));
    }

    let mut best: Option<(u64, usize, TailFit<T>)> = None;
    let mut start = 0;
    while start < sorted.len() {
        let x_min = sorted[start];
        let tail = &sorted[start..];
        if tail.len() < MIN_TAIL || tail[0] == tail[tail.len() - 1] {
            break;
        }
        let fit = fit_tail::<T>(tail, x_min);
        if best.as_ref().is_none_or(|(_, _, b)| fit.ks < b.ks) {
            best = Some((x_min, start, fit));
        }
        start += sorted[start..].partition_point(|&x| x == x_min);
    }
    let (x_min, start, fit) = best.ok_or_else(|| {
        StatsError::Degenerate("no tail with two distinct values and enough samples".into())
    })?;
    let tail = &sorted[start..];
    let n_tail = tail.len();
    let n = T::from_count(n_tail);
    let sigma_alpha = (fit.alpha - T::one()) / n.sqrt();

    let xm = T::from_u64(x_min).expect("fits");
    let mean = tail
        .iter()
        .map(|&x| T::from_u64(x).expect("fits"))
        .sum::<T>()
        / n;
    let lambda = (T::one() + T::one() / (mean - xm)).ln();
    let log_norm_exp = (T::one() - (-lambda).exp()).ln();
    let ln_s0 = fit.s0.ln();
    let ratios: Vec<T> = tail
        .iter()
        .map(|&x| {
            let xv = T::from_u64(x).expect("fits");
            let pl = -fit.alpha * xv.ln() - ln_s0;
            let ex = log_norm_exp - lambda * (xv - xm);
            pl - ex
        })
        .collect();
    let total: T = ratios.iter().copied().sum();
    let mean_ratio = total / n;
    let variance = ratios
        .iter()
        .map(|&r| (r - mean_ratio) * (r - mean_ratio))
        .sum::<T>()
        / n;
    let (r_norm, p_value) = if variance > T::zero() {
        let r = total / (variance.sqrt() * n.sqrt());
        let p = erfc(r.abs().as_f64() / std::f64::consts::SQRT_2);
        (r, T::lit(p.clamp(0.0, 1.0)))
    } else {
        (T::zero(), T::one())
    };

    Ok(PowerLawFit {
        alpha: fit.alpha,
        sigma_alpha,
        x_min,
        n_tail,
        ks_distance: fit.ks,
        loglik_ratio_r: r_norm,
        p_value,
        exponential_lambda: lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcdfRow<T> {
    pub degree: u64,
    pub empirical_ccdf: T,
    pub fitted_ccdf: T,
}

/// Empirical and fitted `P(X >= d)` over the fitted tail, one row per
/// distinct observed value.
pub fn ccdf_rows<T: Scalar>(observations: &[u64], fit: &PowerLawFit<T>) -> Vec<CcdfRow<T>> {
    let mut tail: Vec<u64> = observations
        .iter()
        .copied()
        .filter(|&x| x >= fit.x_min)
        .collect();
    tail.sort_unstable();
    tail.dedup();
    let all: Vec<u64> = {
        let mut v: Vec<u64> = observations.iter().copied().filter(|&x| x >= fit.x_min).collect();
        v.sort_unstable();
        v
    };
    let n = T::from_count(all.len());
    let s0 = hurwitz_zeta(fit.alpha, fit.x_min);
    let points: Vec<u64> = tail.iter().map(|&d| d - 1).collect();
    let sums = partial_sums(fit.alpha, fit.x_min, s0, &points);
    tail.iter()
        .zip(sums)
        .map(|(&d, below)| {
            let at_least = all.len() - all.partition_point(|&x| x < d);
            CcdfRow {
                degree: d,
                empirical_ccdf: T::from_count(at_least) / n,
                fitted_ccdf: T::one() - below / s0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force sum with a continuous-integral tail far out.
    fn brute_zeta(alpha: f64, start: u64) -> (f64, f64) {
        let end = start + 2_000_000;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for k in (start..end).rev() {
            let lk = (k as f64).ln();
            let t = (-alpha * lk).exp();
            s0 += t;
            s1 += lk * t;
        }
        let m = end as f64 - 0.5;
        let a1 = alpha - 1.0;
        s0 += m.powf(-a1) / a1;
        s1 += m.powf(-a1) * (m.ln() / a1 + 1.0 / (a1 * a1));
        (s0, s1)
    }

    #[test]
    fn zeta_matches_brute_force() {
        for &(alpha, start) in &[(2.5, 1u64), (2.0, 1), (3.1, 4), (1.7, 10)] {
            let (s0, s1) = zeta_sums::<f64>(alpha, start);
            let (b0, b1) = brute_zeta(alpha, start);
            assert!(((s0 - b0) / b0).abs() < 1e-9, "s0 alpha={alpha}: {s0} vs {b0}");
            assert!(((s1 - b1) / b1).abs() < 1e-8, "s1 alpha={alpha}: {s1} vs {b1}");
        }
        // zeta(2) = pi^2 / 6
        let z2 = hurwitz_zeta::<f64>(2.0, 1);
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            fit_power_law::<f64>(&[1, 2, 3]),
            Err(StatsError::TooFewObservations { got: 3, .. })
        ));
        assert!(matches!(fit_power_law::<f64>(&[4; 60]), Err(StatsError::Degenerate(_))));
        let mut zeros = vec![1u64; 60];
        zeros[0] = 0;
        zeros[1] = 3;
        assert!(fit_power_law::<f64>(&zeros).is_err());
    }

    #[test]
    fn fit_invariants_hold() {
        let data: Vec<u64> = (1..=200u64).map(|i| 1 + (1000 / (i * i)).min(60)).collect();
        let fit = fit_power_law::<f64>(&data).unwrap();
        assert!(fit.alpha > 1.0);
        assert!(fit.sigma_alpha >= 0.0);
        assert!((0.0..=1.0).contains(&fit.p_value));
        let rows = ccdf_rows(&data, &fit);
        assert_eq!(rows[0].degree, fit.x_min);
        assert!((rows[0].empirical_ccdf - 1.0).abs() < 1e-12);
        assert!((rows[0].fitted_ccdf - 1.0).abs() < 1e-12);
        assert!(rows.windows(2).all(|w| w[1].fitted_ccdf <= w[0].fitted_ccdf));
    }

    #[test]
    fn p_value_matches_normal_tail() {
        // two-sided normal tail at the reference ratio 4.1526
        let p = erfc(4.1526 / std::f64::consts::SQRT_2);
        assert!((p - 3.29e-5).abs() < 0.01e-5);
    }
}
