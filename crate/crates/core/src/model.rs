//! Participation-ratio loss model.
//!
//! The TLS-limited inverse quality factor of a device is linear in the
//! per-region loss factors:
//!
//! ```text
//! 1/Q_TLS = sum_i P_i * x_i
//! ```
//!
//! where `P_i` is the simulated participation of region `i` (computed at a
//! nominal thickness and permittivity) and `x_i` is the loss factor, i.e. the
//! loss tangent rescaled by the ratio of the assumed to the nominal
//! thickness/permittivity. The bulk substrate uses its loss tangent directly.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Participation entries may sum slightly above one from rounding in the
/// upstream field solver.
pub const PARTICIPATION_SUM_SLACK: f64 = 1e-6;

/// Orientation of the electric field relative to a dielectric region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    /// Thin interface with the field normal to the layer (MS, MA).
    InterfacePerpendicular,
    /// Thin interface with the field along the layer (SA).
    InterfaceParallel,
    /// Bulk substrate; loss factor equals loss tangent.
    Bulk,
}

impl RegionKind {
    pub fn is_interface(self) -> bool {
        !matches!(self, RegionKind::Bulk)
    }
}

/// A dielectric region together with the thickness/permittivity used to
/// simulate its participation (`*_nom`) and the values assumed when
/// converting loss factors to loss tangents (`*_assumed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub kind: RegionKind,
    /// Simulated thickness in nm (interface kinds only).
    #[serde(default, rename = "t_nom_nm", skip_serializing_if = "Option::is_none")]
    pub t_nom: Option<f64>,
    pub eps_nom: f64,
    /// Assumed physical thickness in nm (interface kinds only).
    #[serde(default, rename = "t_assumed_nm", skip_serializing_if = "Option::is_none")]
    pub t_assumed: Option<f64>,
    pub eps_assumed: f64,
}

impl RegionSpec {
    pub fn interface(
        name: impl Into<String>,
        kind: RegionKind,
        t_nom: f64,
        eps_nom: f64,
        t_assumed: f64,
        eps_assumed: f64,
    ) -> Self {
        RegionSpec {
            name: name.into(),
            kind,
            t_nom: Some(t_nom),
            eps_nom,
            t_assumed: Some(t_assumed),
            eps_assumed,
        }
    }

    pub fn bulk(name: impl Into<String>, eps_nom: f64, eps_assumed: f64) -> Self {
        RegionSpec {
            name: name.into(),
            kind: RegionKind::Bulk,
            t_nom: None,
            eps_nom,
            t_assumed: None,
            eps_assumed,
        }
    }

    /// MS, SA, MA interfaces simulated at 10 nm and analysed at 2 nm, plus
    /// the bulk silicon substrate.
    pub fn default_set() -> Vec<RegionSpec> {
        use RegionKind::*;
        vec![
            RegionSpec::interface("MS", InterfacePerpendicular, 10.0, 11.35, 2.0, 11.4),
            RegionSpec::interface("SA", InterfaceParallel, 10.0, 4.0, 2.0, 4.0),
            RegionSpec::interface("MA", InterfacePerpendicular, 10.0, 10.0, 2.0, 10.0),
            RegionSpec::bulk("Si", 11.35, 11.35),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("region `{}`: {msg}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::InvalidInput("region name is empty".into()));
        }
        for (label, eps) in [("eps_nom", self.eps_nom), ("eps_assumed", self.eps_assumed)] {
            if !eps.is_finite() || eps < 1.0 {
                return bad(format!("{label} = {eps} must be a finite value >= 1"));
            }
        }
        if self.kind.is_interface() {
            let (t_nom, t_assumed) = self.thicknesses()?;
            for (label, t) in [("t_nom", t_nom), ("t_assumed", t_assumed)] {
                if !t.is_finite() || t <= 0.0 {
                    return bad(format!("{label} = {t} must be positive"));
                }
            }
        }
        Ok(())
    }

    fn thicknesses(&self) -> Result<(f64, f64)> {
        let t_nom = self.t_nom.ok_or_else(|| Error::MissingThickness {
            region: self.name.clone(),
            field: "t_nom",
        })?;
        let t_assumed = self.t_assumed.ok_or_else(|| Error::MissingThickness {
            region: self.name.clone(),
            field: "t_assumed",
        })?;
        Ok((t_nom, t_assumed))
    }

    /// Multiplier taking a loss tangent to a loss factor.
    pub fn tangent_to_factor_scale(&self) -> Result<f64> {
        let scale = match self.kind {
            RegionKind::Bulk => 1.0,
            RegionKind::InterfaceParallel => {
                let (t_nom, t) = self.thicknesses()?;
                (t / t_nom) * (self.eps_assumed / self.eps_nom)
            }
            RegionKind::InterfacePerpendicular => {
                let (t_nom, t) = self.thicknesses()?;
                (t / t_nom) * (self.eps_nom / self.eps_assumed)
            }
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "region `{}` has a degenerate conversion scale {scale}",
                self.name
            )));
        }
        Ok(scale)
    }
}

/// Checks that region names are unique and each region is well formed.
pub fn validate_regions(regions: &[RegionSpec]) -> Result<()> {
    if regions.is_empty() {
        return Err(Error::InvalidInput("region set is empty".into()));
    }
    let mut seen = HashSet::new();
    for r in regions {
        r.validate()?;
        if !seen.insert(r.name.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate region name `{}`", r.name)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtchStyle {
    Isotropic,
    Anisotropic,
    Planar,
    Suspended,
}

/// One resonator geometry and its simulated participation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    pub id: String,
    /// Center trace width in µm.
    #[serde(default, rename = "w_um", skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    /// Gap to ground in µm.
    #[serde(default, rename = "g_um", skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    /// Trench depth in µm.
    #[serde(default, rename = "d_um", skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etch_style: Option<EtchStyle>,
    /// Energy fractions, one per region.
    pub participation: Vec<f64>,
}

impl DeviceGeometry {
    pub fn new(id: impl Into<String>, participation: Vec<f64>) -> Self {
        DeviceGeometry {
            id: id.into(),
            w: None,
            g: None,
            d: None,
            etch_style: None,
            participation,
        }
    }

    pub fn with_geometry(mut self, w: f64, g: f64, d: f64, etch_style: EtchStyle) -> Self {
        self.w = Some(w);
        self.g = Some(g);
        self.d = Some(d);
        self.etch_style = Some(etch_style);
        self
    }

    fn validate(&self, n_regions: usize) -> Result<()> {
        if self.participation.len() != n_regions {
            return Err(Error::mismatch(
                format!("participation of device `{}`", self.id),
                n_regions,
                self.participation.len(),
            ));
        }
        for (i, &p) in self.participation.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("participation[{i}] of device `{}`", self.id)));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "device `{}`: participation[{i}] = {p} outside [0, 1]",
                    self.id
                )));
            }
        }
        let sum: f64 = self.participation.iter().sum();
        if sum > 1.0 + PARTICIPATION_SUM_SLACK {
            return Err(Error::InvalidInput(format!(
                "device `{}`: participation sums to {sum} > 1",
                self.id
            )));
        }
        for (label, v) in [("w", self.w), ("g", self.g), ("d", self.d)] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "device `{}`: {label} = {v} must be finite and nonnegative",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rows are devices, columns are regions. Entry `[j][i]` is the participation
/// of region `i` in device `j`, stored as a fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationMatrix {
    regions: Vec<RegionSpec>,
    rows: Vec<DeviceGeometry>,
}

impl ParticipationMatrix {
    pub fn new(regions: Vec<RegionSpec>, rows: Vec<DeviceGeometry>) -> Result<Self> {
        validate_regions(&regions)?;
        if rows.is_empty() {
            return Err(Error::InvalidInput("participation matrix has no devices".into()));
        }
        let mut ids = HashSet::new();
        for row in &rows {
            row.validate(regions.len())?;
            if !ids.insert(row.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate device id `{}`", row.id)));
            }
        }
        Ok(ParticipationMatrix { regions, rows })
    }

    /// Builds a matrix from bare fraction rows, naming devices by `ids`.
    pub fn from_fractions<S: AsRef<str>>(
        regions: Vec<RegionSpec>,
        ids: &[S],
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::mismatch("device ids", rows.len(), ids.len()));
        }
        let devices = ids
            .iter()
            .zip(rows)
            .map(|(id, row)| DeviceGeometry::new(id.as_ref(), row.clone()))
            .collect();
        Self::new(regions, devices)
    }

    pub fn regions(&self) -> &[RegionSpec] {
        &self.regions
    }

    pub fn devices(&self) -> &[DeviceGeometry] {
        &self.rows
    }

    pub fn n_devices(&self) -> usize {
        self.rows.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.name.clone()).collect()
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    pub fn device(&self, id: &str) -> Option<&DeviceGeometry> {
        self.rows.iter().find(|d| d.id == id)
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j].participation
    }

    /// Dense copy of the participation entries.
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n_devices(), self.n_regions(), |j, i| {
            self.rows[j].participation[i]
        })
    }

    /// Matrix restricted to the listed device rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<ParticipationMatrix> {
        let rows = indices
            .iter()
            .map(|&j| {
                self.rows
                    .get(j)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("device index {j} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        ParticipationMatrix::new(self.regions.clone(), rows)
    }

    /// Uniformly rescales every participation entry. Used for diagnostics
    /// only; the result may violate the sum-to-one bound and is not validated.
    pub fn scaled(&self, factor: f64) -> ParticipationMatrix {
        let mut out = self.clone();
        for row in &mut out.rows {
            for p in &mut row.participation {
                *p *= factor;
            }
        }
        out
    }
}

/// Statistics of the TLS-limited inverse quality factor of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtlsDistribution {
    pub device_id: String,
    pub inv_q_mean: f64,
    pub inv_q_stderr: f64,
    pub n_samples: usize,
}

impl QtlsDistribution {
    pub fn new(device_id: impl Into<String>, inv_q_mean: f64, inv_q_stderr: f64, n_samples: usize) -> Result<Self> {
        let d = QtlsDistribution {
            device_id: device_id.into(),
            inv_q_mean,
            inv_q_stderr,
            n_samples,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inv_q_mean.is_finite() && self.inv_q_mean > 0.0) {
            return Err(Error::InvalidInput(format!(
                "device `{}`: inv_q_mean = {} must be positive",
                self.device_id, self.inv_q_mean
            )));
        }
        if !(self.inv_q_stderr.is_finite() && self.inv_q_stderr >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "device `{}`: inv_q_stderr = {} must be nonnegative",
                self.device_id, self.inv_q_stderr
            )));
        }
        Ok(())
    }

    pub fn q_mean(&self) -> f64 {
        1.0 / self.inv_q_mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossBasis {
    LossFactor,
    LossTangent,
}

impl fmt::Display for LossBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossBasis::LossFactor => f.write_str("loss factor"),
            LossBasis::LossTangent => f.write_str("loss tangent"),
        }
    }
}

/// Per-region loss values in either basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    pub regions: Vec<String>,
    pub values: Vec<f64>,
    pub basis: LossBasis,
}

impl LossVector {
    pub fn new(regions: Vec<String>, values: Vec<f64>, basis: LossBasis) -> Result<Self> {
        let v = LossVector { regions, values, basis };
        v.validate()?;
        Ok(v)
    }

    pub fn factors(regions: &[RegionSpec], values: Vec<f64>) -> Result<Self> {
        Self::new(regions.iter().map(|r| r.name.clone()).collect(), values, LossBasis::LossFactor)
    }

    pub fn tangents(regions: &[RegionSpec], values: Vec<f64>) -> Result<Self> {
        Self::new(regions.iter().map(|r| r.name.clone()).collect(), values, LossBasis::LossTangent)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != self.values.len() {
            return Err(Error::mismatch("loss vector values", self.regions.len(), self.values.len()));
        }
        for (name, &v) in self.regions.iter().zip(&self.values) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{} for region `{name}` = {v} must be finite and nonnegative",
                    self.basis
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Converts to loss factors, matching regions by position and name.
    pub fn to_factors(&self, regions: &[RegionSpec]) -> Result<LossVector> {
        self.convert(regions, LossBasis::LossFactor)
    }

    pub fn to_tangents(&self, regions: &[RegionSpec]) -> Result<LossVector> {
        self.convert(regions, LossBasis::LossTangent)
    }

    fn convert(&self, regions: &[RegionSpec], target: LossBasis) -> Result<LossVector> {
        self.check_regions(regions)?;
        if self.basis == target {
            return Ok(self.clone());
        }
        let values = regions
            .iter()
            .zip(&self.values)
            .map(|(r, &v)| match target {
                LossBasis::LossFactor => loss_factor_from_tangent(r, v),
                LossBasis::LossTangent => tangent_from_loss_factor(r, v),
            })
            .collect::<Result<Vec<_>>>()?;
        LossVector::new(self.regions.clone(), values, target)
    }

    pub(crate) fn check_regions(&self, regions: &[RegionSpec]) -> Result<()> {
        if regions.len() != self.regions.len() {
            return Err(Error::mismatch("loss vector regions", regions.len(), self.regions.len()));
        }
        for (r, name) in regions.iter().zip(&self.regions) {
            if &r.name != name {
                return Err(Error::InvalidInput(format!(
                    "loss vector region `{name}` does not match region `{}`",
                    r.name
                )));
            }
        }
        Ok(())
    }
}

/// TLS-limited quality factor from low- and high-power internal Q.
///
/// High-power loss is power independent and is subtracted from the
/// low-power loss.
pub fn q_tls_from_power_sweep(q_low: f64, q_high: f64) -> Result<f64> {
    if !(q_low.is_finite() && q_low > 0.0) || q_high.is_nan() || q_high <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "quality factors must be positive (q_low = {q_low}, q_high = {q_high})"
        )));
    }
    if q_low >= q_high {
        return Err(Error::NonPositiveTlsLoss { q_low, q_high });
    }
    Ok(1.0 / (1.0 / q_low - 1.0 / q_high))
}

fn check_forward_inputs(p_row: &[f64], x: &LossVector) -> Result<()> {
    if x.basis != LossBasis::LossFactor {
        return Err(Error::InvalidInput("forward model expects loss factors, got loss tangents".into()));
    }
    if p_row.len() != x.len() {
        return Err(Error::mismatch("participation row", x.len(), p_row.len()));
    }
    x.validate()?;
    if let Some(i) = p_row.iter().position(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidInput(format!("participation[{i}] = {} is invalid", p_row[i])));
    }
    Ok(())
}

/// Per-region inverse-Q contributions `P_i * x_i`.
pub fn decompose_losses(p_row: &[f64], x: &LossVector) -> Result<Vec<f64>> {
    check_forward_inputs(p_row, x)?;
    Ok(p_row.iter().zip(&x.values).map(|(p, x)| p * x).collect())
}

/// Total inverse Q, summed in region order. Equal bit-for-bit to the sum of
/// [`decompose_losses`].
pub fn inverse_q_forward(p_row: &[f64], x: &LossVector) -> Result<f64> {
    let total: f64 = decompose_losses(p_row, x)?.iter().sum();
    if total <= 0.0 {
        return Err(Error::LosslessModel);
    }
    Ok(total)
}

pub fn q_tls_forward(p_row: &[f64], x: &LossVector) -> Result<f64> {
    inverse_q_forward(p_row, x).map(|s| 1.0 / s)
}

pub fn loss_factor_from_tangent(region: &RegionSpec, tan_delta: f64) -> Result<f64> {
    check_nonnegative("loss tangent", tan_delta)?;
    Ok(region.tangent_to_factor_scale()? * tan_delta)
}

pub fn tangent_from_loss_factor(region: &RegionSpec, x: f64) -> Result<f64> {
    check_nonnegative("loss factor", x)?;
    Ok(x / region.tangent_to_factor_scale()?)
}

fn check_nonnegative(label: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{label} = {v} must be finite and nonnegative")))
    }
}
