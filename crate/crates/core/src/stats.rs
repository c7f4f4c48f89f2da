//! Small descriptive-statistics helpers shared by the Monte Carlo layers.

use serde::{Deserialize, Serialize};

/// Closed interval `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Arithmetic mean accumulated as offsets from the first value, so a
/// constant sample returns that constant exactly.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&shift) = values.first() else { return f64::NAN };
    let offset: f64 = values.iter().map(|v| v - shift).sum::<f64>() / values.len() as f64;
    shift + offset
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Percentile by linear interpolation between order statistics
/// (`p` in `[0, 100]`). `sorted` must be ascending and non-empty.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * (p / 100.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Central 95% percentile interval.
pub fn ci95(values: &[f64]) -> Interval {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Interval {
        low: percentile_sorted(&sorted, 2.5),
        high: percentile_sorted(&sorted, 97.5),
    }
}

/// One histogram bin `[low, high)`; the last bin is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Equal-width histogram spanning the sample range. A constant sample
/// produces a single zero-width bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<Bin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![Bin { low: lo, high: hi, count: values.len() }];
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|k| Bin {
            low: lo + k as f64 * width,
            high: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_are_exact() {
        let v = vec![1.234e-6; 1001];
        assert_eq!(mean(&v), 1.234e-6);
        assert_eq!(sample_sd(&v), 0.0);
        let ci = ci95(&v);
        assert_eq!((ci.low, ci.high), (1.234e-6, 1.234e-6));
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile_sorted(&v, 2.5), 2.5);
        assert_eq!(percentile_sorted(&v, 97.5), 97.5);
        assert_eq!(percentile_sorted(&[3.0], 97.5), 3.0);
        assert_eq!(percentile_sorted(&[1.0, 2.0], 50.0), 1.5);
    }

    #[test]
    fn sd_matches_hand_value() {
        // sd([1, 2, 3, 4]) = sqrt(5/3)
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(sample_sd(&[2.0]), 0.0);
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let h = histogram(&v, 10);
        assert_eq!(h.len(), 10);
        assert!(h.iter().all(|b| b.count == 10));
        assert_eq!(h[9].high, 99.0);
        assert_eq!(histogram(&[2.0, 2.0], 5), vec![Bin { low: 2.0, high: 2.0, count: 2 }]);
    }
}
