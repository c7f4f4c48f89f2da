//! Reference datasets bundled with the crate.
//!
//! The JSON sources live in `fixtures/` and are embedded at compile time;
//! the same files are used by the command-line tool and the test suites.

use serde::Deserialize;

use crate::io::Dataset;
use crate::model::{LossVector, RegionSpec};

pub const P_IDEAL_JSON: &str = include_str!("../fixtures/p_ideal.json");
pub const P_ANI_JSON: &str = include_str!("../fixtures/p_ani.json");
pub const P_ISO_JSON: &str = include_str!("../fixtures/p_iso.json");
pub const REGIONS_DEFAULT_JSON: &str = include_str!("../fixtures/regions_default.json");
pub const PUBLISHED_TANGENTS_JSON: &str = include_str!("../fixtures/published_loss_tangents.json");
pub const MS_SA_RATIO_JSON: &str = include_str!("../fixtures/ms_sa_ratio_vs_depth.json");

fn embedded(text: &str) -> Dataset {
    Dataset::from_json_str(text, None).expect("bundled dataset is valid")
}

/// 4×4 identity participation matrix.
pub fn p_ideal() -> Dataset {
    embedded(P_IDEAL_JSON)
}

/// Anisotropically trenched reference set (κ ≈ 1.1e5).
pub fn p_ani() -> Dataset {
    embedded(P_ANI_JSON)
}

/// Isotropically trenched extraction set (κ ≈ 2.0e3).
pub fn p_iso() -> Dataset {
    embedded(P_ISO_JSON)
}

pub fn default_regions() -> Vec<RegionSpec> {
    p_iso().regions
}

#[derive(Debug, Clone, Deserialize)]
pub struct PublishedTangents {
    pub regions: Vec<String>,
    pub values: Vec<f64>,
    pub ci95_half_width: Vec<f64>,
}

impl PublishedTangents {
    pub fn loss_vector(&self) -> LossVector {
        LossVector::new(self.regions.clone(), self.values.clone(), crate::model::LossBasis::LossTangent)
            .expect("bundled tangents are valid")
    }
}

/// Extracted MS/SA/MA/Si loss tangents with their 95% half-widths.
pub fn published_tangents() -> PublishedTangents {
    serde_json::from_str(PUBLISHED_TANGENTS_JSON).expect("bundled tangents parse")
}

#[derive(Debug, Clone, Deserialize)]
pub struct RatioPoint {
    pub d_um: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RatioTable {
    pub w_um: f64,
    pub g_um: f64,
    pub rows: Vec<RatioPoint>,
}

/// MS/SA participation ratio against trench depth for a (6 µm, 3 µm) CPW.
pub fn ms_sa_ratio_table() -> RatioTable {
    serde_json::from_str(MS_SA_RATIO_JSON).expect("bundled ratio table parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse() {
        assert_eq!(p_ideal().devices.len(), 4);
        assert_eq!(p_ani().devices.len(), 4);
        assert_eq!(default_regions(), RegionSpec::default_set());
        let t = published_tangents();
        assert_eq!(t.values.len(), t.ci95_half_width.len());
        let table = ms_sa_ratio_table();
        assert_eq!(table.rows.len(), 5);
        assert!(table.rows.windows(2).all(|w| w[0].ratio > w[1].ratio));
    }
}
