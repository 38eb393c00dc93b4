//! Run configuration: flat-sectioned TOML with every field validated
//! before any computation and unknown keys rejected.

use rbso::lattice::TorusLattice;
use rbso::models::{ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// One of `ba`, `ao`, `wo`, `gue`.
    pub kind: String,
    pub d: usize,
    pub w: i64,
    pub n: i64,
    /// Coupling; exactly one of `lambda`, `xi` (λ = W^{-ξ}).
    pub lambda: Option<f64>,
    pub xi: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub e: f64,
    pub eta: f64,
    /// Bulk window half-gap κ.
    pub kappa: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection { e: 0.0, eta: 0.5, kappa: 0.1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub n_samples: u64,
    /// 0 = all cores.
    pub workers: usize,
    /// Gate constant of the loop-sum comparison.
    pub gate_c: f64,
    /// ε₀ exponent of η = 𝖭^{-ε₀} in the loop-sum comparison.
    pub epsilon0: f64,
    /// Box scale of the flatness cover (blocks per box side).
    pub ell: i64,
    /// Fractional-moment exponent.
    pub s: f64,
    /// λ grid of the transition scan.
    pub lambda_grid: Vec<f64>,
    /// Index triple of the expansion check.
    pub index_a: usize,
    pub index_b1: usize,
    pub index_b2: usize,
    /// Spectral half-window of the trace-bound check.
    pub l_window: f64,
    /// Fourth cumulant κ₄.
    pub kappa4: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            n_samples: 100,
            workers: 0,
            gate_c: 5.0,
            epsilon0: 0.3,
            ell: 2,
            s: 0.5,
            lambda_grid: vec![],
            index_a: 0,
            index_b1: 0,
            index_b2: 0,
            l_window: 0.5,
            kappa4: 1.7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// `csv`, `jsonl`, or `both`.
    pub format: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), format: "both".into() }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| format!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        ModelKind::parse(&self.model.kind).map_err(|e| e.to_string())?;
        if self.model.lambda.is_some() == self.model.xi.is_some() {
            return Err("config: specify exactly one of model.lambda, model.xi".into());
        }
        TorusLattice::new(self.model.d, self.model.w, self.model.n)
            .map_err(|e| e.to_string())?;
        if self.spectral.eta < 0.0 {
            return Err("config: spectral.eta must be ≥ 0".into());
        }
        if !(self.spectral.kappa > 0.0 && self.spectral.kappa < 2.0) {
            return Err("config: spectral.kappa must lie in (0, 2)".into());
        }
        if !matches!(self.output.format.as_str(), "csv" | "jsonl" | "both") {
            return Err("config: output.format must be csv, jsonl, or both".into());
        }
        Ok(())
    }

    /// Build the model spec, applying a seed override when given.
    pub fn model_spec(&self, seed_override: Option<u64>) -> Result<ModelSpec, String> {
        let kind = ModelKind::parse(&self.model.kind).map_err(|e| e.to_string())?;
        let lat = TorusLattice::new(self.model.d, self.model.w, self.model.n)
            .map_err(|e| e.to_string())?;
        let seed = seed_override.unwrap_or(self.model.seed);
        let spec = match (self.model.lambda, self.model.xi) {
            (Some(l), None) => ModelSpec::new(kind, lat, l, seed),
            (None, Some(x)) => ModelSpec::with_xi(kind, lat, x, seed),
            _ => unreachable!("validated"),
        };
        spec.map_err(|e| e.to_string())
    }

    /// Canonical serialization used for the provenance hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// FNV-1a of the canonical config text; stable provenance tag.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
