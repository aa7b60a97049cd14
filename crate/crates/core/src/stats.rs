//! Dataset characterization: Gaussian density, skewness, summary statistics
//! and empirical PDF/CDF/joint histograms.
//!
//! Moments are population-form (divide by n). Histograms use equal-width bins
//! over [min, max] with every bin half-open except the last, which is closed.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_MODE_BINS: usize = 50;

pub fn gaussian_pdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
}

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Population central moments (m2, m3) after checking the sample is usable.
fn central_moments(samples: &[f64]) -> Result<(f64, f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let mu = mean(samples);
    let n = samples.len() as f64;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &x in samples {
        let d = x - mu;
        m2 += d * d;
        m3 += d * d * d;
    }
    let (m2, m3) = (m2 / n, m3 / n);
    if !(m2 > 0.0) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((mu, m2, m3))
}

pub fn skewness(samples: &[f64]) -> Result<f64> {
    let (_, m2, m3) = central_moments(samples)?;
    Ok(m3 / m2.powf(1.5))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub skew: f64,
    pub median: f64,
    /// Center of the fullest equal-width bin.
    pub mode: f64,
}

impl SummaryStats {
    pub fn to_csv(&self) -> String {
        format!(
            "statistic,value\nmean,{}\nstd,{}\nskew,{}\nmedian,{}\nmode,{}\n",
            self.mean, self.std, self.skew, self.median, self.mode
        )
    }
}

pub fn summary(samples: &[f64], mode_bins: usize) -> Result<SummaryStats> {
    if mode_bins == 0 {
        return Err(Error::Domain("mode_bins must be at least 1".into()));
    }
    let (mu, m2, m3) = central_moments(samples)?;

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };

    let h = empirical_histogram(samples, mode_bins, false)?;
    let mut fullest = 0;
    for (k, &c) in h.counts.iter().enumerate() {
        if c > h.counts[fullest] {
            fullest = k;
        }
    }
    let mode = 0.5 * (h.bin_edges[fullest] + h.bin_edges[fullest + 1]);

    Ok(SummaryStats {
        mean: mu,
        std: m2.sqrt(),
        skew: m3 / m2.powf(1.5),
        median,
        mode,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    /// Counts divided by n·bin_width (a density).
    pub normalized: bool,
    /// Running sums (a CDF) rather than per-bin values.
    pub cumulative: bool,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    /// Σ counts·width for densities, Σ counts otherwise.
    pub fn total(&self) -> f64 {
        let s: f64 = self.counts.iter().sum();
        if self.normalized {
            s * self.bin_width()
        } else {
            s
        }
    }

    /// Columns `bin_lo,bin_hi,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,value\n");
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{}", self.bin_edges[k], self.bin_edges[k + 1], c).expect("String write");
        }
        out
    }
}

/// Range spanned by the samples, widened by ±0.5 when all samples coincide.
pub fn sample_range(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Domain("histogram needs at least one sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("histogram samples must be finite".into()));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        Ok((lo - 0.5, hi + 0.5))
    } else {
        Ok((lo, hi))
    }
}

fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|k| if k == bins { hi } else { lo + k as f64 * width })
        .collect()
}

/// Bin index for `x` in [lo, hi]; `None` outside. The last bin is closed.
fn bin_index(x: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(x >= lo && x <= hi) {
        return None;
    }
    let k = ((x - lo) / (hi - lo) * bins as f64).floor() as usize;
    Some(k.min(bins - 1))
}

pub fn empirical_histogram(samples: &[f64], bins: usize, normalized: bool) -> Result<Histogram> {
    let (lo, hi) = sample_range(samples)?;
    histogram_over(samples, lo, hi, bins, normalized)
}

/// Histogram over an explicit range; samples outside [lo, hi] are dropped.
pub fn histogram_over(samples: &[f64], lo: f64, hi: f64, bins: usize, normalized: bool) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Domain("bins must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::Domain("histogram needs at least one sample".into()));
    }
    if !(lo < hi) {
        return Err(Error::Domain(format!("histogram range must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    let mut counts = vec![0.0; bins];
    for &x in samples {
        if let Some(k) = bin_index(x, lo, hi, bins) {
            counts[k] += 1.0;
        }
    }
    let bin_edges = edges(lo, hi, bins);
    if normalized {
        let scale = samples.len() as f64 * (bin_edges[1] - bin_edges[0]);
        counts.iter_mut().for_each(|c| *c /= scale);
    }
    Ok(Histogram {
        bin_edges,
        counts,
        normalized,
        cumulative: false,
    })
}

/// Running sum of per-bin mass; ends at 1 for densities and n for counts.
pub fn cdf_from_histogram(h: &Histogram) -> Histogram {
    let weight = if h.normalized { h.bin_width() } else { 1.0 };
    let mut acc = 0.0;
    let counts = h
        .counts
        .iter()
        .map(|&c| {
            acc += c * weight;
            acc
        })
        .collect();
    Histogram {
        bin_edges: h.bin_edges.clone(),
        counts,
        normalized: h.normalized,
        cumulative: true,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointHistogram {
    pub f_edges: Vec<f64>,
    pub s_edges: Vec<f64>,
    /// `counts[f_bin][s_bin]`.
    pub counts: Vec<Vec<u64>>,
}

impl JointHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Counts per frequency bin (summed over |S21| bins).
    pub fn f_marginal(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    /// Columns `f_lo,f_hi,s_lo,s_hi,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f_lo,f_hi,s_lo,s_hi,count\n");
        for (i, row) in self.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    self.f_edges[i],
                    self.f_edges[i + 1],
                    self.s_edges[j],
                    self.s_edges[j + 1],
                    c
                )
                .expect("String write");
            }
        }
        out
    }
}

/// 2-D equal-width binning of (frequency, |S21|) pairs over their ranges.
pub fn joint_histogram(points: &[(f64, f64)], f_bins: usize, s_bins: usize) -> Result<JointHistogram> {
    if f_bins == 0 || s_bins == 0 {
        return Err(Error::Domain("bins must be at least 1".into()));
    }
    let fs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ss: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (f_lo, f_hi) = sample_range(&fs)?;
    let (s_lo, s_hi) = sample_range(&ss)?;
    let mut counts = vec![vec![0u64; s_bins]; f_bins];
    for &(f, s) in points {
        let i = bin_index(f, f_lo, f_hi, f_bins).expect("inside sample range");
        let j = bin_index(s, s_lo, s_hi, s_bins).expect("inside sample range");
        counts[i][j] += 1;
    }
    Ok(JointHistogram {
        f_edges: edges(f_lo, f_hi, f_bins),
        s_edges: edges(s_lo, s_hi, s_bins),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson's rule.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn gaussian_values() {
        assert_relative_eq!(gaussian_pdf(0.0, 0.0, 1.0).unwrap(), 0.398_942_3, epsilon = 1e-7);
        for &(mu, sigma) in &[(0.0, 1.0), (2.82, 1.17), (-9.4, 2.5)] {
            let v = gaussian_pdf(mu + sigma, mu, sigma).unwrap();
            assert_relative_eq!(v * sigma, 0.241_970_7, epsilon = 1e-7);
        }
        assert!(matches!(gaussian_pdf(0.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(gaussian_pdf(0.0, 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_integrates_to_one() {
        for &(mu, sigma) in &[(0.0, 1.0), (2.82, 1.17), (-9.4, 2.5)] {
            let integral = simpson(|x| gaussian_pdf(x, mu, sigma).unwrap(), mu - 8.0 * sigma, mu + 8.0 * sigma, 2000);
            assert!((integral - 1.0).abs() < 1e-6, "{integral}");
        }
    }

    #[test]
    fn skewness_values() {
        assert_eq!(skewness(&[-1.0, 0.0, 1.0]).unwrap(), 0.0);
        // m2 = 3/16, m3 = 3/32 → (3/32)/(3/16)^1.5 = 2/√3
        assert_relative_eq!(skewness(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 2.0 / 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(skewness(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 1.1547, epsilon = 1e-4);
        assert!(matches!(skewness(&[1.0]), Err(Error::Degenerate(_))));
        assert!(matches!(skewness(&[2.0, 2.0, 2.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn summary_values() {
        let s = summary(&[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert_relative_eq!(s.mean, 2.5);
        assert_relative_eq!(s.median, 2.5);
        assert_relative_eq!(s.std, 1.25f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(s.skew, 0.0, epsilon = 1e-12);

        let odd = summary(&[5.0, 1.0, 3.0], 2).unwrap();
        assert_eq!(odd.median, 3.0);

        // [0,4] in 2 bins → [0,2) holds {0,1,1}, [2,4] holds {4}
        let m = summary(&[0.0, 1.0, 1.0, 4.0], 2).unwrap();
        assert_eq!(m.mode, 1.0);
        // tie goes to the lowest bin
        let tie = summary(&[0.0, 4.0], 2).unwrap();
        assert_eq!(tie.mode, 1.0);

        assert!(summary(&[1.0, 2.0], 0).is_err());
        assert!(summary(&[1.0, 1.0], 3).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = empirical_histogram(&[0.0, 1.0, 2.0, 3.0], 2, false).unwrap();
        assert_eq!(h.counts, vec![2.0, 2.0]);
        assert_eq!(h.bin_edges, vec![0.0, 1.5, 3.0]);
        let d = empirical_histogram(&[0.0, 1.0, 2.0, 3.0, 3.0], 3, true).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-9);
        // single value still yields a valid histogram
        let one = empirical_histogram(&[2.0], 4, true).unwrap();
        assert!((one.total() - 1.0).abs() < 1e-9);
        assert!(empirical_histogram(&[], 2, false).is_err());
        assert!(empirical_histogram(&[1.0], 0, false).is_err());
    }

    #[test]
    fn uniform_density_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random_range(1.0..5.0)).collect();
        let h = empirical_histogram(&xs, 20, true).unwrap();
        for &c in &h.counts {
            assert!((c - 0.25).abs() <= 0.2 * 0.25, "{c}");
        }
    }

    #[test]
    fn cdf_examples() {
        let h = empirical_histogram(&[0.0, 1.0, 2.0, 3.0], 2, false).unwrap();
        let c = cdf_from_histogram(&h);
        assert_eq!(c.counts, vec![2.0, 4.0]);
        assert!(c.cumulative);
        let d = empirical_histogram(&[0.0, 0.3, 1.0, 2.0, 3.0, 2.2], 5, true).unwrap();
        let cd = cdf_from_histogram(&d);
        assert!((cd.counts.last().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn joint_examples() {
        let j = joint_histogram(&[(2.0, -5.0)], 3, 3).unwrap();
        assert_eq!(j.total(), 1);
        assert_eq!(j.counts.iter().flatten().filter(|&&c| c > 0).count(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<(f64, f64)> = (0..500)
            .map(|_| (rng.random_range(1.0..5.0), rng.random_range(-15.0..-2.0)))
            .collect();
        let j = joint_histogram(&pts, 10, 7).unwrap();
        assert_eq!(j.total(), 500);
        let fs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let h = histogram_over(&fs, j.f_edges[0], *j.f_edges.last().unwrap(), 10, false).unwrap();
        let marginal: Vec<f64> = j.f_marginal().into_iter().map(|c| c as f64).collect();
        assert_eq!(marginal, h.counts);
    }

    #[test]
    fn csv_shapes() {
        let h = empirical_histogram(&[0.0, 1.0, 2.0, 3.0], 2, false).unwrap();
        assert_eq!(h.to_csv(), "bin_lo,bin_hi,value\n0,1.5,2\n1.5,3,2\n");
        let s = summary(&[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert!(s.to_csv().starts_with("statistic,value\nmean,2.5\n"));
        let j = joint_histogram(&[(1.0, 1.0), (2.0, 2.0)], 2, 2).unwrap();
        assert_eq!(j.to_csv().lines().count(), 5);
    }

    fn sample_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, 3..60)
            .prop_filter("needs spread", |v| {
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                hi - lo > 1e-3
            })
    }

    proptest! {
        #[test]
        fn skewness_is_affine_invariant(xs in sample_vec(), a in 0.01f64..50.0, b in -100.0f64..100.0) {
            let s = skewness(&xs).unwrap();
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((skewness(&ys).unwrap() - s).abs() < 1e-6 * (1.0 + s.abs()));
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            prop_assert!((skewness(&neg).unwrap() + s).abs() < 1e-9 * (1.0 + s.abs()));
        }

        #[test]
        fn symmetric_samples_have_zero_skew(xs in proptest::collection::vec(0.1f64..100.0, 1..40), c in -50.0f64..50.0) {
            let sym: Vec<f64> = xs.iter().flat_map(|x| [c + x, c - x]).collect();
            prop_assert!(skewness(&sym).unwrap().abs() < 1e-9);
        }

        #[test]
        fn summary_translation(xs in sample_vec(), c in -100.0f64..100.0) {
            let a = summary(&xs, DEFAULT_MODE_BINS).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let b = summary(&shifted, DEFAULT_MODE_BINS).unwrap();
            prop_assert!((b.mean - (a.mean + c)).abs() < 1e-9);
            prop_assert!((b.skew - a.skew).abs() < 1e-6 * (1.0 + a.skew.abs()));
            prop_assert!(a.std >= 0.0);
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a.median >= lo && a.median <= hi);
        }

        #[test]
        fn gaussian_is_symmetric(mu in -10.0f64..10.0, sigma in 0.1f64..5.0, t in 0.0f64..20.0) {
            let l = gaussian_pdf(mu - t, mu, sigma).unwrap();
            let r = gaussian_pdf(mu + t, mu, sigma).unwrap();
            prop_assert!((l - r).abs() <= 1e-10 * l.max(r));
        }

        #[test]
        fn histograms_conserve_counts(xs in proptest::collection::vec(-1e3f64..1e3, 1..200), bins in 1usize..40) {
            let h = empirical_histogram(&xs, bins, false).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<f64>(), xs.len() as f64);
            let d = empirical_histogram(&xs, bins, true).unwrap();
            prop_assert!((d.total() - 1.0).abs() < 1e-9);
            let c = cdf_from_histogram(&h);
            prop_assert!(c.counts.windows(2).all(|w| w[1] >= w[0]));
            prop_assert_eq!(*c.counts.last().unwrap(), xs.len() as f64);
        }
    }
}
