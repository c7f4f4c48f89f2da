//! Measurement statistics and Monte Carlo loss extraction.
//!
//! Each Monte Carlo trial draws one inverse TLS quality factor per device
//! from the estimated distribution of its mean, solves the nonnegative
//! least-squares system and keeps the solution. Confidence intervals are the
//! 2.5th/97.5th percentiles of the resulting ensemble.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{q_tls_forward, q_tls_from_power_sweep, LossVector, ParticipationMatrix, QtlsDistribution, RegionSpec};
use crate::rng::Substream;
use crate::solver::{nnls_solve, LinearSystem};
use crate::stats::{self, Interval};

/// Maximum number of redraws when a Gaussian sample falls at or below zero.
pub const MAX_RESAMPLES: usize = 100;

/// Low- and high-power Q samples for one device geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub device_id: String,
    pub q_low_samples: Vec<f64>,
    pub q_high_samples: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(device_id: impl Into<String>, q_low_samples: Vec<f64>, q_high_samples: Vec<f64>) -> Self {
        MeasurementSet {
            device_id: device_id.into(),
            q_low_samples,
            q_high_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, list) in [("q_low_samples", &self.q_low_samples), ("q_high_samples", &self.q_high_samples)] {
            if list.is_empty() {
                return Err(Error::InvalidInput(format!("device `{}`: {label} is empty", self.device_id)));
            }
            if let Some(v) = list.iter().find(|v| v.is_nan() || **v <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "device `{}`: {label} contains non-positive value {v}",
                    self.device_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOutcome {
    pub distribution: QtlsDistribution,
    /// Indices of low-power samples dropped for non-positive TLS loss.
    pub excluded: Vec<usize>,
    /// True when the lists had different lengths and high-power loss was pooled.
    pub pooled: bool,
}

/// Mean and standard error of `1/Q_TLS` for one device.
pub fn summarize(set: &MeasurementSet) -> Result<QtlsDistribution> {
    summarize_detailed(set).map(|o| o.distribution)
}

/// As [`summarize`], also reporting which samples were excluded.
///
/// Equal-length lists are paired by index. Otherwise every low-power sample
/// is paired with the mean high-power loss.
pub fn summarize_detailed(set: &MeasurementSet) -> Result<SummaryOutcome> {
    set.validate()?;
    let pooled = set.q_low_samples.len() != set.q_high_samples.len();
    let pooled_q_high = if pooled {
        warn!(
            "device `{}`: {} low-power vs {} high-power samples; pooling high-power loss",
            set.device_id,
            set.q_low_samples.len(),
            set.q_high_samples.len()
        );
        let inv: Vec<f64> = set.q_high_samples.iter().map(|q| 1.0 / q).collect();
        Some(1.0 / stats::mean(&inv))
    } else {
        None
    };

    let mut inv_q = Vec::with_capacity(set.q_low_samples.len());
    let mut excluded = Vec::new();
    for (k, &q_low) in set.q_low_samples.iter().enumerate() {
        let q_high = pooled_q_high.unwrap_or_else(|| set.q_high_samples[k]);
        match q_tls_from_power_sweep(q_low, q_high) {
            Ok(q) => inv_q.push(1.0 / q),
            Err(Error::NonPositiveTlsLoss { .. }) => {
                warn!(
                    "device `{}`: sample {k} excluded (q_low = {q_low} >= q_high = {q_high})",
                    set.device_id
                );
                excluded.push(k);
            }
            Err(e) => return Err(e),
        }
    }
    if inv_q.is_empty() {
        return Err(Error::NoUsableSamples(format!(
            "device `{}`: every sample has non-positive TLS loss",
            set.device_id
        )));
    }
    if inv_q.len() == 1 {
        warn!("device `{}`: single usable sample, standard error set to 0", set.device_id);
    }
    let n = inv_q.len();
    let distribution = QtlsDistribution::new(
        set.device_id.clone(),
        stats::mean(&inv_q),
        stats::sample_sd(&inv_q) / (n as f64).sqrt(),
        n,
    )?;
    Ok(SummaryOutcome {
        distribution,
        excluded,
        pooled,
    })
}

/// Quantity that is drawn from a Gaussian in each Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSpace {
    /// `1/Q_TLS ~ Normal(inv_q_mean, inv_q_stderr)`.
    #[default]
    InverseQ,
    /// `Q_TLS ~ Normal(1/inv_q_mean, inv_q_stderr/inv_q_mean²)`, then inverted.
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub sampling: SamplingSpace,
    /// Run trials on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            sampling: SamplingSpace::InverseQ,
            parallel: true,
        }
    }
}

/// Draws from `Normal(mean, sd)` until the value is positive.
pub(crate) fn positive_normal<R: Rng>(mean: f64, sd: f64, rng: &mut R) -> Result<f64> {
    if sd == 0.0 {
        return Ok(mean);
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidInput(format!("normal({mean}, {sd}): {e}")))?;
    for _ in 0..=MAX_RESAMPLES {
        let v = normal.sample(rng);
        if v > 0.0 {
            return Ok(v);
        }
    }
    Err(Error::RejectionLimit {
        attempts: MAX_RESAMPLES + 1,
        mean,
        sd,
    })
}

fn draw_inverse_q(dist: &QtlsDistribution, sampling: SamplingSpace, stream: Substream) -> Result<f64> {
    if dist.inv_q_stderr == 0.0 {
        return Ok(dist.inv_q_mean);
    }
    let mut rng = stream.rng();
    match sampling {
        SamplingSpace::InverseQ => positive_normal(dist.inv_q_mean, dist.inv_q_stderr, &mut rng),
        SamplingSpace::Q => {
            let q_sd = dist.inv_q_stderr / (dist.inv_q_mean * dist.inv_q_mean);
            positive_normal(1.0 / dist.inv_q_mean, q_sd, &mut rng).map(|q| 1.0 / q)
        }
    }
}

/// Output of [`extract_mc`]. Values are loss factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    /// NNLS solution on the mean inverse Q values.
    pub point: LossVector,
    pub mean: Vec<f64>,
    pub ci95: Vec<Interval>,
    /// `n_trials` rows of per-region solutions.
    pub ensemble: Vec<Vec<f64>>,
    pub seed: u64,
    pub n_trials: usize,
    #[serde(default)]
    pub sampling: SamplingSpace,
}

impl ExtractionResult {
    pub fn regions(&self) -> &[String] {
        &self.point.regions
    }

    /// Column `i` of the ensemble.
    pub fn region_samples(&self, i: usize) -> Vec<f64> {
        self.ensemble.iter().map(|row| row[i]).collect()
    }

    /// The same summary expressed as loss tangents.
    pub fn to_tangents(&self, regions: &[RegionSpec]) -> Result<TangentSummary> {
        self.point.check_regions(regions)?;
        let scales = regions
            .iter()
            .map(RegionSpec::tangent_to_factor_scale)
            .collect::<Result<Vec<_>>>()?;
        Ok(TangentSummary {
            regions: self.point.regions.clone(),
            point: self.point.to_tangents(regions)?.values,
            mean: self.mean.iter().zip(&scales).map(|(m, s)| m / s).collect(),
            ci95: self
                .ci95
                .iter()
                .zip(&scales)
                .map(|(ci, s)| Interval {
                    low: ci.low / s,
                    high: ci.high / s,
                })
                .collect(),
        })
    }
}

/// Extraction summary converted to loss tangents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentSummary {
    pub regions: Vec<String>,
    pub point: Vec<f64>,
    pub mean: Vec<f64>,
    pub ci95: Vec<Interval>,
}

/// Orders `dists` to match the matrix rows by device id.
fn align_distributions<'a>(p: &ParticipationMatrix, dists: &'a [QtlsDistribution]) -> Result<Vec<&'a QtlsDistribution>> {
    if dists.len() != p.n_devices() {
        return Err(Error::mismatch("distributions", p.n_devices(), dists.len()));
    }
    p.devices()
        .iter()
        .map(|dev| {
            let d = dists
                .iter()
                .find(|d| d.device_id == dev.id)
                .ok_or_else(|| Error::InvalidInput(format!("no Q_TLS distribution for device `{}`", dev.id)))?;
            d.validate()?;
            Ok(d)
        })
        .collect()
}

pub fn extract_mc(p: &ParticipationMatrix, dists: &[QtlsDistribution], n_trials: usize, seed: u64) -> Result<ExtractionResult> {
    extract_mc_with(p, dists, n_trials, seed, &McOptions::default())
}

/// Monte Carlo extraction. Trial `t` draws device `j` from substream
/// `seed → t → j`, so the result is bit-identical for any thread count.
pub fn extract_mc_with(
    p: &ParticipationMatrix,
    dists: &[QtlsDistribution],
    n_trials: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<ExtractionResult> {
    if n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be at least 1".into()));
    }
    let dists = align_distributions(p, dists)?;
    let a = p.to_matrix();

    let means: Vec<f64> = dists.iter().map(|d| d.inv_q_mean).collect();
    let point = nnls_solve(&LinearSystem::new(a.clone(), means.into())?)?;
    let point = LossVector::factors(p.regions(), point.x.iter().cloned().collect())?;

    let root = Substream::root(seed);
    let trial = |t: usize| -> Result<Vec<f64>> {
        let stream = root.child(t as u64);
        let b = dists
            .iter()
            .enumerate()
            .map(|(j, d)| draw_inverse_q(d, opts.sampling, stream.child(j as u64)))
            .collect::<Result<Vec<f64>>>()?;
        let sol = nnls_solve(&LinearSystem::new(a.clone(), b.into())?)?;
        Ok(sol.x.iter().cloned().collect())
    };
    let ensemble: Vec<Vec<f64>> = if opts.parallel {
        (0..n_trials).into_par_iter().map(trial).collect::<Result<_>>()?
    } else {
        (0..n_trials).map(trial).collect::<Result<_>>()?
    };

    let n_regions = p.n_regions();
    let mut mean = Vec::with_capacity(n_regions);
    let mut ci95 = Vec::with_capacity(n_regions);
    for i in 0..n_regions {
        let column: Vec<f64> = ensemble.iter().map(|row| row[i]).collect();
        mean.push(stats::mean(&column));
        ci95.push(stats::ci95(&column));
    }

    Ok(ExtractionResult {
        point,
        mean,
        ci95,
        ensemble,
        seed,
        n_trials,
        sampling: opts.sampling,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub q_mean: f64,
    pub q_ci95: Interval,
    pub n_used: usize,
    pub n_skipped: usize,
}

/// Propagates an extraction ensemble through the forward model for one
/// participation row.
pub fn predict_q_mc(p_row: &[f64], result: &ExtractionResult) -> Result<Prediction> {
    if result.ensemble.is_empty() {
        return Err(Error::InvalidInput("extraction ensemble is empty".into()));
    }
    let regions = result.regions().to_vec();
    if p_row.len() != regions.len() {
        return Err(Error::mismatch("participation row", regions.len(), p_row.len()));
    }
    let mut qs = Vec::with_capacity(result.ensemble.len());
    let mut skipped = 0;
    for (t, row) in result.ensemble.iter().enumerate() {
        let x = LossVector::new(regions.clone(), row.clone(), crate::model::LossBasis::LossFactor)?;
        match q_tls_forward(p_row, &x) {
            Ok(q) => qs.push(q),
            Err(Error::LosslessModel) => {
                warn!("trial {t} predicts a lossless device; skipped");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if qs.is_empty() {
        return Err(Error::NoUsableSamples("every trial predicts a lossless device".into()));
    }
    Ok(Prediction {
        q_mean: stats::mean(&qs),
        q_ci95: stats::ci95(&qs),
        n_used: qs.len(),
        n_skipped: skipped,
    })
}
