use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eigensolve::SolverRegistry;
use crate::error::{Error, Result};
use crate::geometry::{build_periodic_flat_book, OpenBookStructure};
use crate::transfer::TransferRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureConfig {
    /// Number of pages E.
    pub edges: usize,
    /// Page length ℓ.
    pub ell: f64,
    /// Binding period L.
    pub binding_length: f64,
    /// Page angles in radians, sorted; equally spaced when absent.
    pub angles: Option<Vec<f64>>,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            edges: 3,
            ell: 1.0,
            binding_length: 1.0,
            angles: None,
        }
    }
}

impl StructureConfig {
    pub fn build(&self) -> Result<OpenBookStructure> {
        build_periodic_flat_book(self.edges, self.ell, self.binding_length, self.angles.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub structure: StructureConfig,
    /// Fattening radii, strictly decreasing.
    pub eps_list: Vec<f64>,
    /// Cross-section element sizes for the fattened runs, strictly decreasing;
    /// the binding direction uses n_z = ceil(L/h) layers.
    pub h_list: Vec<f64>,
    /// Element sizes for the surface runs, strictly decreasing.
    pub surface_h_list: Vec<f64>,
    /// Number of eigenpairs m.
    pub eigen_count: usize,
    /// Relative residual tolerance of the eigensolver.
    pub tol: f64,
    /// Spectral cutoff Λ for the transfer defects.
    pub cutoff: f64,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub solver: String,
    pub transfer: String,
    /// Boundary arcs are approximated within eps · arc_tol_ratio.
    pub arc_tol_ratio: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            structure: StructureConfig::default(),
            eps_list: vec![0.2, 0.1, 0.05],
            h_list: vec![0.08, 0.04],
            surface_h_list: vec![0.05, 0.025],
            eigen_count: 8,
            tol: 1e-7,
            cutoff: 15.0,
            output_dir: None,
            seed: 1,
            solver: "lobpcg".into(),
            transfer: "fiber-average".into(),
            arc_tol_ratio: 0.02,
        }
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn all_positive(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && *x > 0.0)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every field and returns the structure it describes.
    pub fn validate(&self) -> Result<OpenBookStructure> {
        let bad = |m: String| Err(Error::Config(m));
        let s = self.structure.build().map_err(|e| Error::Config(e.to_string()))?;
        if self.eps_list.is_empty() || !all_positive(&self.eps_list) || !strictly_decreasing(&self.eps_list) {
            return bad("eps_list must be non-empty, positive and strictly decreasing".into());
        }
        if let Some(&e) = self.eps_list.iter().find(|&&e| e >= s.epsilon0) {
            return bad(format!("eps {e} is not below the admissible bound {}", s.epsilon0));
        }
        for (name, list) in [("h_list", &self.h_list), ("surface_h_list", &self.surface_h_list)] {
            if list.len() < 2 || !all_positive(list) || !strictly_decreasing(list) {
                return bad(format!(
                    "{name} needs at least two positive, strictly decreasing sizes"
                ));
            }
        }
        if self.eigen_count == 0 {
            return bad("eigen_count must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return bad(format!("tol must lie in (0, 0.01), got {}", self.tol));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return bad(format!("cutoff must be positive, got {}", self.cutoff));
        }
        if !(self.arc_tol_ratio > 0.0 && self.arc_tol_ratio <= 0.1) {
            return bad(format!("arc_tol_ratio must lie in (0, 0.1], got {}", self.arc_tol_ratio));
        }
        SolverRegistry::default()
            .get(&self.solver)
            .map_err(|e| Error::Config(e.to_string()))?;
        TransferRegistry::default()
            .get(&self.transfer)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }

    /// Layers along the binding for cross-section size h (at least 4).
    pub fn n_z(&self, h: f64) -> usize {
        ((self.structure.binding_length / h - 1e-9).ceil() as usize).max(4)
    }

    pub fn arc_tol(&self, eps: f64) -> f64 {
        eps * self.arc_tol_ratio
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = ExperimentConfig::default();
        let s = c.validate().unwrap();
        assert_eq!(s.pages.len(), 3);
        assert_eq!(c.n_z(0.04), 25);
        assert_eq!(c.n_z(0.08), 13);
        assert_eq!(c.n_z(0.5), 4);
    }

    #[test]
    fn round_trip_and_partial_json() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        let p = ExperimentConfig::from_json(r#"{"eps_list": [0.1, 0.05], "seed": 9}"#).unwrap();
        assert_eq!(p.seed, 9);
        assert_eq!(p.h_list, c.h_list);
    }

    #[test]
    fn invalid_inputs() {
        let cases = [
            r#"{"eps_list": [0.05, 0.1]}"#,
            r#"{"eps_list": [0.9]}"#,
            r#"{"h_list": [0.1]}"#,
            r#"{"surface_h_list": [0.05, 0.05]}"#,
            r#"{"eigen_count": 0}"#,
            r#"{"solver": "arnoldi"}"#,
            r#"{"transfer": "nope"}"#,
            r#"{"structure": {"edges": 0}}"#,
        ];
        for text in cases {
            let c = ExperimentConfig::from_json(text).unwrap();
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(ExperimentConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Config(_))));
    }
}
