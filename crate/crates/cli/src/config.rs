use serde::{Deserialize, Serialize};

use pilotctl::{GridSpec64, ModelParams64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "boundaries")]
    Boundaries,
    #[serde(rename = "rate-vs-snr")]
    RateVsSnr,
    #[serde(rename = "eps-vs-M", alias = "eps-vs-m")]
    EpsVsM,
    #[serde(rename = "pdf")]
    Pdf,
    #[serde(rename = "onoff")]
    OnOff,
    #[serde(rename = "overhead")]
    Overhead,
    #[serde(rename = "trace")]
    Trace,
    #[serde(rename = "growth")]
    Growth,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Boundaries => "boundaries",
            Scenario::RateVsSnr => "rate-vs-snr",
            Scenario::EpsVsM => "eps-vs-M",
            Scenario::Pdf => "pdf",
            Scenario::OnOff => "onoff",
            Scenario::Overhead => "overhead",
            Scenario::Trace => "trace",
            Scenario::Growth => "growth",
        }
    }

    fn needs_snr(self) -> bool {
        !matches!(self, Scenario::Growth)
    }
}

fn default_seeds() -> Vec<u64> {
    (1..=8).collect()
}

fn default_blocks() -> usize {
    1_000_000
}

fn default_grid_k() -> usize {
    500
}

/// One experiment. SNR values are in dB with SNR = P_av sigma_h^2 / sigma_z^2;
/// each SNR point overrides `params.p_av`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub params: ModelParams64,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub m_list: Vec<usize>,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_grid_k")]
    pub grid_k: usize,
    /// Largest estimate on the solver grid; defaults to 5 sigma_h^2.
    #[serde(default)]
    pub u_max: Option<f64>,
    /// Output directory, relative to the output root unless absolute.
    #[serde(default)]
    pub output: Option<String>,
}

impl ScenarioConfig {
    pub fn params_at(&self, snr_db: f64) -> ModelParams64 {
        let p = self.params;
        ModelParams64 { p_av: 10f64.powf(snr_db / 10.0) * p.sigma_z2 / p.sigma_h2, ..p }
    }

    pub fn grid(&self) -> GridSpec64 {
        GridSpec64 { k: self.grid_k, u_max: self.u_max.unwrap_or(5.0 * self.params.sigma_h2) }
    }

    pub fn output_dir(&self) -> String {
        self.output.clone().unwrap_or_else(|| self.scenario.name().to_string())
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = self.params.violations();
        if self.seeds.is_empty() {
            v.push("seed list must not be empty".into());
        }
        if self.blocks < 1000 {
            v.push("blocks must be at least 1000".into());
        }
        if self.grid_k < 2 {
            v.push("grid_k must be at least 2".into());
        }
        if let Some(u) = self.u_max {
            if !(u.is_finite() && u > 0.0) {
                v.push("u_max must be positive".into());
            }
        }
        if self.scenario.needs_snr() && self.snr_db.is_empty() {
            v.push(format!("scenario {} needs a nonempty snr_db list", self.scenario.name()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            v.push("snr_db values must be finite".into());
        }
        if self.scenario == Scenario::EpsVsM {
            if self.m_list.is_empty() {
                v.push("scenario eps-vs-M needs a nonempty m_list".into());
            }
            for &m in &self.m_list {
                let p = ModelParams64 { m_block: m, ..self.params };
                for e in p.violations() {
                    v.push(format!("M = {m}: {e}"));
                }
            }
        }
        if self.scenario == Scenario::Growth {
            if self.n_list.is_empty() {
                v.push("scenario growth needs a nonempty n_list".into());
            }
            if self.params.p_av.is_nan() || self.params.p_av <= 0.0 {
                v.push("growth needs positive average power".into());
            }
            for &n in &self.n_list {
                let p = ModelParams64 { n_scale: n, ..self.params };
                for e in p.violations() {
                    v.push(format!("N = {n}: {e}"));
                }
            }
        }
        if v.is_empty() {
            if let Err(e) = pilotctl::theta_star(&self.params) {
                v.push(e.to_string());
            }
        }
        v
    }
}
