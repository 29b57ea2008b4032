//! Estimators and tests used by the experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::seeds::stream_rng;

/// A nonempty sample of finite values with optional per-value weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample contains non-finite values".into()));
        }
        Ok(Sample { values, weights: None })
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != values.len() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite, nonnegative and one per value".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("total weight must be positive".into()));
        }
        let mut s = Sample::new(values)?;
        s.weights = Some(weights);
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        match &self.weights {
            None => mean(&self.values),
            Some(w) => {
                let tw: f64 = w.iter().sum();
                self.values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / tw
            }
        }
    }

    /// Unbiased variance (unweighted samples) or the weighted second
    /// central moment with frequency weights.
    pub fn variance(&self) -> f64 {
        match &self.weights {
            None => variance(&self.values),
            Some(w) => {
                let m = self.mean();
                let tw: f64 = w.iter().sum();
                let ss: f64 = self.values.iter().zip(w).map(|(v, w)| w * (v - m).powi(2)).sum();
                if tw > 1.0 {
                    ss / (tw - 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        quantile(&self.values, p)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Linear-interpolation quantile (the usual "type 7" definition).
pub fn quantile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(v: &[f64]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let m = mean(v);
    let den: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    if den == 0.0 {
        return 0.0;
    }
    v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / den
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Per-component statistics where the test combines several.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<f64>,
}

impl TestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Kolmogorov survival function `P[K > x]`, to absolute error below 1e-10.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // theta-function form, fast for small x
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=100).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against `N(mean, sd^2)` with the
/// asymptotic p-value (Stephens' finite-n correction of the argument).
pub fn ks_normal(s: &Sample, mean: f64, sd: f64) -> Result<TestReport> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::InvalidArgument(format!("sd must be positive, got {sd}")));
    }
    let n = s.len();
    if n < 100 {
        return Err(Error::InsufficientData(format!("KS test needs n >= 100, got {n}")));
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut v = s.values().to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    let p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    Ok(TestReport { method: "ks_normal".into(), statistic: d, p_value: p, n, components: Vec::new() })
}

/// Percentile bootstrap interval for a statistic of resampled indices.
/// Deterministic given `seed`.
pub fn bootstrap_ci_by<F>(n: usize, statistic: F, level: f64, resamples: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[usize]) -> f64,
{
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0,1), got {level}")));
    }
    if resamples < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 resamples, got {resamples}")));
    }
    if n == 0 {
        return Err(Error::InsufficientData("cannot bootstrap an empty sample".into()));
    }
    let mut rng = stream_rng(seed, 0xB007);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        stats.push(statistic(&idx));
    }
    stats.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, a), quantile_sorted(&stats, 1.0 - a)))
}

pub fn bootstrap_ci<F>(s: &Sample, statistic: F, level: f64, resamples: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let v = s.values();
    let mut buf = vec![0.0; v.len()];
    let buf = std::cell::RefCell::new(&mut buf);
    bootstrap_ci_by(
        v.len(),
        |idx| {
            let mut b = buf.borrow_mut();
            for (slot, &i) in b.iter_mut().zip(idx) {
                *slot = v[i];
            }
            statistic(&b)
        },
        level,
        resamples,
        seed,
    )
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Least-squares slope of `log(value)` against `log(t)` with its standard
/// error.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(t, v)| !(t > 0.0) || !(v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive coordinates".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    linear_fit(&xs, &ys)
}

/// Ordinary least squares `y = a + b x`; returns `(b, se(b))`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return Err(Error::InsufficientData("need at least 3 paired points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all abscissae are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    Ok((b, (rss / (n - 2) as f64 / sxx).sqrt()))
}

/// Correlations between successive increments.
///
/// `rows[r][j]` is the `j`-th increment of replication `r`. Reports the
/// largest `|rho|` over successive pairs and a Bonferroni-combined p-value;
/// under independence each `rho * sqrt(n - 1)` is asymptotically standard
/// normal (the permutation distribution of the correlation has mean 0 and
/// variance `1 / (n - 1)`). With a single increment there is nothing to
/// test and the report has no components.
pub fn increment_independence(rows: &[Vec<f64>]) -> Result<TestReport> {
    let n = rows.len();
    if n < 500 {
        return Err(Error::InsufficientData(format!("need at least 500 replications, got {n}")));
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("ragged increment rows".into()));
    }
    let method = "increment_independence".to_string();
    if k < 2 {
        return Ok(TestReport { method, statistic: 0.0, p_value: 1.0, n, components: Vec::new() });
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let rhos: Vec<f64> = cols.windows(2).map(|w| pearson(&w[0], &w[1])).collect();
    let max_abs = rhos.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let p_min = 2.0 * (1.0 - normal_cdf(max_abs * ((n - 1) as f64).sqrt()));
    let p = (p_min * rhos.len() as f64).min(1.0);
    Ok(TestReport { method, statistic: max_abs, p_value: p, n, components: rhos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, 1);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn kolmogorov_series_branches_agree() {
        // the two series coincide where both converge
        for &x in &[0.6, 0.8, 1.0, 1.2] {
            let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
            let theta: f64 = 1.0
                - (2.0 * std::f64::consts::PI).sqrt() / x
                    * (1..=100).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum::<f64>();
            let alt: f64 = 2.0
                * (1..=100)
                    .map(|k| if k % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * (k * k) as f64 * x * x).exp())
                    .sum::<f64>();
            assert!((theta - alt).abs() < 1e-10, "{x}: {theta} vs {alt}");
        }
        // tabulated critical values
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_on_exact_quantiles() {
        let n = 1000;
        let v: Vec<f64> = (0..n).map(|i| normal_quantile((i as f64 + 0.5) / n as f64)).collect();
        let r = ks_normal(&Sample::new(v).unwrap(), 0.0, 1.0).unwrap();
        assert!(r.statistic <= 1.0 / n as f64);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn ks_rejects_constant_and_bad_sd() {
        let s = Sample::new(vec![0.3; 1000]).unwrap();
        assert!(ks_normal(&s, 0.0, 1.0).unwrap().p_value < 1e-6);
        assert!(ks_normal(&s, 0.0, 0.0).is_err());
        assert!(ks_normal(&Sample::new(vec![0.0; 10]).unwrap(), 0.0, 1.0).is_err());
    }

    #[test]
    fn ks_self_calibration() {
        let passes = (0..100)
            .filter(|&seed| ks_normal(&Sample::new(normals(seed, 10_000)).unwrap(), 0.0, 1.0).unwrap().p_value > 0.01)
            .count();
        assert!(passes >= 95, "{passes}/100");
    }

    #[test]
    fn ks_affine_invariance() {
        let v = normals(3, 500);
        let a = ks_normal(&Sample::new(v.clone()).unwrap(), 0.1, 1.2).unwrap();
        let w: Vec<f64> = v.iter().map(|x| 3.0 * x - 7.0).collect();
        let b = ks_normal(&Sample::new(w).unwrap(), 3.0 * 0.1 - 7.0, 3.0 * 1.2).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_basics() {
        let s = Sample::new(vec![2.5; 50]).unwrap();
        assert_eq!(bootstrap_ci(&s, mean, 0.95, 1000, 1).unwrap(), (2.5, 2.5));
        let s = Sample::new((0..10_000).map(|i| (i % 2) as f64).collect()).unwrap();
        let (lo, hi) = bootstrap_ci(&s, mean, 0.95, 1000, 2).unwrap();
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(bootstrap_ci(&s, mean, 1.0, 1000, 2).is_err());
        assert!(bootstrap_ci(&s, mean, 0.95, 10, 2).is_err());
        assert_eq!(bootstrap_ci(&s, mean, 0.95, 1000, 9).unwrap(), bootstrap_ci(&s, mean, 0.95, 1000, 9).unwrap());
    }

    #[test]
    fn bootstrap_coverage() {
        let exp = Exp::new(1.0).unwrap();
        let covered = (0..1000u64)
            .filter(|&trial| {
                let mut rng = stream_rng(trial, 7);
                let v: Vec<f64> = (0..200).map(|_| exp.sample(&mut rng)).collect();
                let (lo, hi) = bootstrap_ci(&Sample::new(v).unwrap(), mean, 0.95, 1000, trial).unwrap();
                lo <= 1.0 && 1.0 <= hi
            })
            .count();
        assert!((930..=970).contains(&covered), "coverage {covered}/1000");
    }

    #[test]
    fn loglog_fits() {
        let pts: Vec<(f64, f64)> = [1.0, 4.0, 16.0, 64.0].iter().map(|&t| (t, 3.0 / f64::sqrt(t))).collect();
        let (b, _) = loglog_slope(&pts).unwrap();
        assert!((b + 0.5).abs() < 1e-12);
        let (b, _) = loglog_slope(&[(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]).unwrap();
        assert_eq!(b, 0.0);
        assert!(loglog_slope(&[(1.0, 2.0), (2.0, 0.0), (3.0, 2.0)]).is_err());
        let mut rng = stream_rng(11, 0);
        let pts: Vec<(f64, f64)> = (1..=20)
            .map(|i| {
                let t = 10.0 * i as f64;
                let z: f64 = StandardNormal.sample(&mut rng);
                (t, (1.0 + 0.1 * z) / t.sqrt())
            })
            .collect();
        let (b, _) = loglog_slope(&pts).unwrap();
        assert!((b + 0.5).abs() < 0.05, "{b}");
    }

    #[test]
    fn independence_reports() {
        let mut rng = stream_rng(4, 0);
        let rows: Vec<Vec<f64>> = (0..5000)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let r = increment_independence(&rows).unwrap();
        assert!(r.statistic < 0.05, "{r:?}");
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[0]]).collect();
        let r = increment_independence(&rows).unwrap();
        assert!(r.statistic > 0.999 && r.p_value < 1e-6);
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0]]).collect();
        let r = increment_independence(&rows).unwrap();
        assert!(r.components.is_empty());
        assert!(increment_independence(&rows[..100]).is_err());
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(0, 2000, 0.95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.003);
        let (lo, hi) = wilson_interval(500, 1000, 0.95);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn report_json() {
        let r = TestReport { method: "m".into(), statistic: 0.5, p_value: 0.25, n: 3, components: vec![] };
        assert_eq!(r.to_json().unwrap(), r#"{"method":"m","statistic":0.5,"p_value":0.25,"n":3}"#);
    }
}
