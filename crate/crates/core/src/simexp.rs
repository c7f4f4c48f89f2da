//! Simulated loss-extraction campaigns.
//!
//! Given a device set and known loss factors, each repetition draws a finite
//! number of Q_TLS values per design, estimates their mean and standard
//! error, runs the Monte Carlo extraction and records the 95% intervals. The
//! worst case over repetitions (lowest lower bound, highest upper bound) shows
//! how many devices must be measured before each region's loss is resolved
//! away from zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{q_tls_forward, LossBasis, LossVector, ParticipationMatrix, QtlsDistribution};
use crate::rng::Substream;
use crate::stats::{self, Interval};
use crate::uncertainty::{extract_mc_with, positive_normal, McOptions, SamplingSpace};

pub const DEFAULT_RELATIVE_SD: f64 = 0.1;
pub const DEFAULT_REPETITIONS: usize = 20;
pub const DEFAULT_MC_TRIALS: usize = 1000;

// Substream labels below each (N, repetition) node.
const SAMPLING_STREAM: u64 = 0;
const EXTRACTION_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SimExpConfig {
    pub participation: ParticipationMatrix,
    /// Loss factors used to generate the ideal Q_TLS values.
    pub target: LossVector,
    pub n_devices_grid: Vec<usize>,
    /// Device-to-device spread of Q_TLS as a fraction of its mean.
    pub relative_sd: f64,
    pub n_repetitions: usize,
    pub mc_trials: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl SimExpConfig {
    pub fn new(participation: ParticipationMatrix, target: LossVector, n_devices_grid: Vec<usize>, seed: u64) -> Self {
        SimExpConfig {
            participation,
            target,
            n_devices_grid,
            relative_sd: DEFAULT_RELATIVE_SD,
            n_repetitions: DEFAULT_REPETITIONS,
            mc_trials: DEFAULT_MC_TRIALS,
            seed,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.basis != LossBasis::LossFactor {
            return Err(Error::InvalidInput("simulation target must be loss factors".into()));
        }
        self.target.check_regions(self.participation.regions())?;
        if !(self.relative_sd.is_finite() && self.relative_sd >= 0.0) {
            return Err(Error::InvalidInput(format!("relative_sd = {} must be >= 0", self.relative_sd)));
        }
        if self.n_devices_grid.is_empty() {
            return Err(Error::InvalidInput("n_devices_grid is empty".into()));
        }
        if self.n_repetitions == 0 || self.mc_trials == 0 {
            return Err(Error::InvalidInput("n_repetitions and mc_trials must be at least 1".into()));
        }
        let required = 2 * self.participation.n_devices();
        if let Some(&n) = self.n_devices_grid.iter().find(|&&n| n < required) {
            return Err(Error::InsufficientSamples { n, required });
        }
        Ok(())
    }
}

/// Worst-case bounds for one region at one device count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCasePoint {
    pub region: String,
    pub n_devices: usize,
    pub worst_low: f64,
    pub worst_high: f64,
}

impl WorstCasePoint {
    pub fn width(&self) -> f64 {
        self.worst_high - self.worst_low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub n_devices: usize,
    pub repetition: usize,
    pub distributions: Vec<QtlsDistribution>,
    pub mean: Vec<f64>,
    pub ci95: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseCurve {
    pub regions: Vec<String>,
    pub target: Vec<f64>,
    pub relative_sd: f64,
    pub n_repetitions: usize,
    pub mc_trials: usize,
    pub seed: u64,
    /// Grid order, regions within each N.
    pub points: Vec<WorstCasePoint>,
    pub repetitions: Vec<RepetitionRecord>,
}

impl WorstCaseCurve {
    pub fn point(&self, region: &str, n_devices: usize) -> Option<&WorstCasePoint> {
        self.points
            .iter()
            .find(|p| p.region == region && p.n_devices == n_devices)
    }
}

/// `n` draws of `Normal(mean_q, relative_sd·mean_q)`, redrawn until positive.
pub fn sample_device_qs(mean_q: f64, relative_sd: f64, n: usize, stream: Substream) -> Result<Vec<f64>> {
    if !(mean_q.is_finite() && mean_q > 0.0) {
        return Err(Error::InvalidInput(format!("mean Q = {mean_q} must be positive")));
    }
    if !(relative_sd.is_finite() && relative_sd >= 0.0) {
        return Err(Error::InvalidInput(format!("relative_sd = {relative_sd} must be >= 0")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let mut rng = stream.rng();
    (0..n)
        .map(|_| positive_normal(mean_q, relative_sd * mean_q, &mut rng))
        .collect()
}

/// Splits `total` devices evenly across designs; the remainder goes to the
/// designs whose ids sort first.
pub fn allocate_devices(ids: &[&str], total: usize) -> Vec<usize> {
    let rows = ids.len();
    let mut counts = vec![total / rows; rows];
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    for &j in order.iter().take(total % rows) {
        counts[j] += 1;
    }
    counts
}

pub fn run_simulated_experiment(config: &SimExpConfig) -> Result<WorstCaseCurve> {
    config.validate()?;
    let p = &config.participation;
    let ideal_q = p
        .devices()
        .iter()
        .map(|d| q_tls_forward(&d.participation, &config.target))
        .collect::<Result<Vec<f64>>>()?;
    let ids: Vec<&str> = p.devices().iter().map(|d| d.id.as_str()).collect();
    let root = Substream::root(config.seed);
    let mc = McOptions {
        sampling: SamplingSpace::InverseQ,
        parallel: config.parallel,
    };

    let jobs: Vec<(usize, usize)> = config
        .n_devices_grid
        .iter()
        .flat_map(|&n| (0..config.n_repetitions).map(move |r| (n, r)))
        .collect();

    let run = |&(n_devices, repetition): &(usize, usize)| -> Result<RepetitionRecord> {
        let node = root.child(n_devices as u64).child(repetition as u64);
        let counts = allocate_devices(&ids, n_devices);
        let distributions = p
            .devices()
            .iter()
            .enumerate()
            .map(|(j, dev)| {
                let stream = node.child(SAMPLING_STREAM).child(j as u64);
                let qs = sample_device_qs(ideal_q[j], config.relative_sd, counts[j], stream)?;
                let inv: Vec<f64> = qs.iter().map(|q| 1.0 / q).collect();
                QtlsDistribution::new(
                    dev.id.clone(),
                    stats::mean(&inv),
                    stats::sample_sd(&inv) / (inv.len() as f64).sqrt(),
                    inv.len(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let seed = node.child(EXTRACTION_STREAM).key();
        let result = extract_mc_with(p, &distributions, config.mc_trials, seed, &mc)?;
        Ok(RepetitionRecord {
            n_devices,
            repetition,
            distributions,
            mean: result.mean,
            ci95: result.ci95,
        })
    };
    let repetitions: Vec<RepetitionRecord> = if config.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let regions = p.region_names();
    let mut points = Vec::new();
    for &n in &config.n_devices_grid {
        let reps: Vec<&RepetitionRecord> = repetitions.iter().filter(|r| r.n_devices == n).collect();
        for (i, region) in regions.iter().enumerate() {
            let worst_low = reps.iter().map(|r| r.ci95[i].low).fold(f64::INFINITY, f64::min);
            let worst_high = reps.iter().map(|r| r.ci95[i].high).fold(f64::NEG_INFINITY, f64::max);
            points.push(WorstCasePoint {
                region: region.clone(),
                n_devices: n,
                worst_low,
                worst_high,
            });
        }
    }

    Ok(WorstCaseCurve {
        regions,
        target: config.target.values.clone(),
        relative_sd: config.relative_sd,
        n_repetitions: config.n_repetitions,
        mc_trials: config.mc_trials,
        seed: config.seed,
        points,
        repetitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RegionSpec;

    fn identity4() -> ParticipationMatrix {
        let rows: Vec<Vec<f64>> = (0..4).map(|j| (0..4).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        ParticipationMatrix::from_fractions(RegionSpec::default_set(), &["d1", "d2", "d3", "d4"], &rows).unwrap()
    }

    fn target() -> LossVector {
        LossVector::factors(&RegionSpec::default_set(), vec![1e-6, 2e-6, 3e-6, 4e-6]).unwrap()
    }

    #[test]
    fn sampling_examples() {
        let s = Substream::root(1);
        assert_eq!(sample_device_qs(1e6, 0.0, 5, s).unwrap(), vec![1e6; 5]);
        let one = sample_device_qs(1e6, 0.1, 1, s).unwrap();
        assert_eq!(one, sample_device_qs(1e6, 0.1, 1, s).unwrap());
        assert_eq!(one.len(), 1);

        let big = sample_device_qs(1e6, 0.1, 10_000, s.child(3)).unwrap();
        let ratio = stats::sample_sd(&big) / stats::mean(&big);
        assert!((0.097..=0.103).contains(&ratio), "{ratio}");
        assert!(sample_device_qs(1e6, 0.1, 0, s).is_err());
        assert!(sample_device_qs(-1.0, 0.1, 3, s).is_err());
    }

    #[test]
    fn allocation_gives_remainder_to_first_ids() {
        assert_eq!(allocate_devices(&["a", "b", "c", "d"], 120), vec![30; 4]);
        assert_eq!(allocate_devices(&["c", "a", "d", "b"], 10), vec![2, 3, 2, 3]);
    }

    #[test]
    fn zero_spread_collapses_intervals() {
        let mut cfg = SimExpConfig::new(identity4(), target(), vec![8, 16], 5);
        cfg.relative_sd = 0.0;
        cfg.n_repetitions = 3;
        cfg.mc_trials = 20;
        let curve = run_simulated_experiment(&cfg).unwrap();
        for pt in &curve.points {
            assert_eq!(pt.width(), 0.0);
            let i = curve.regions.iter().position(|r| *r == pt.region).unwrap();
            assert!((pt.worst_low - cfg.target.values[i]).abs() / cfg.target.values[i] < 1e-12);
        }
    }

    #[test]
    fn too_few_devices_is_rejected() {
        let cfg = SimExpConfig::new(identity4(), target(), vec![7], 5);
        assert!(matches!(
            run_simulated_experiment(&cfg),
            Err(Error::InsufficientSamples { n: 7, required: 8 })
        ));
    }

    #[test]
    fn results_do_not_depend_on_threading() {
        let mut cfg = SimExpConfig::new(identity4(), target(), vec![8, 20], 11);
        cfg.n_repetitions = 4;
        cfg.mc_trials = 50;
        let a = run_simulated_experiment(&cfg).unwrap();
        cfg.parallel = false;
        let b = run_simulated_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| p.worst_low <= p.worst_high && p.worst_low >= 0.0));
    }
}
