use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use gridstrength::dynamics::Complex64;

#[derive(Serialize)]
pub struct RunReport<T: Serialize> {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub inputs: Vec<InputDigest>,
    pub result: T,
    pub wall_time_s: f64,
}

#[derive(Clone, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn new(role: &'static str, path: &Path, bytes: &[u8]) -> Self {
        Self {
            role,
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Serialize)]
pub struct ErrorReport {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub error: ErrorBody,
}

#[derive(Serialize)]
pub struct ErrorBody {
    pub exit_code: i32,
    pub message: String,
}

#[derive(Clone, Copy, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

pub fn complex_list(zs: &[Complex64]) -> Vec<ComplexValue> {
    zs.iter().copied().map(ComplexValue::from).collect()
}

#[derive(Serialize)]
pub struct GscrResult {
    pub s_global_mva: f64,
    pub farm_ids: Vec<String>,
    pub capacities_mva: Vec<f64>,
    pub n_interior: usize,
    pub n_infinite: usize,
    pub gscr: f64,
    pub lambdas: Vec<f64>,
    /// `participation[k][i]`: |eigenvector entry| of farm `i` in mode `k`.
    pub participation: Vec<Vec<f64>>,
}

#[derive(Serialize)]
pub struct SizeResult {
    pub farm_ids: Vec<String>,
    pub capacities_mva: Vec<f64>,
    pub gscr0: f64,
    pub target_gscr: f64,
    pub z_local: f64,
    pub gamma_required: f64,
    pub already_satisfied: bool,
    pub gfm_mva: Vec<f64>,
    pub verified_gscr: f64,
    pub units: Option<UnitsResult>,
}

#[derive(Serialize)]
pub struct UnitsResult {
    pub unit_mva: f64,
    pub counts: Vec<u64>,
    pub installed_mva: Vec<f64>,
    pub realized_gamma: Vec<f64>,
    pub min_realized_gamma: f64,
    pub predicted_gscr: f64,
    pub verified_gscr: f64,
}

#[derive(Serialize)]
pub struct CgscrReport {
    pub cgscr: f64,
    pub critical_eigenvalue: ComplexValue,
    pub critical_frequency_hz: f64,
    pub critical_eigenvector: Vec<ComplexValue>,
    pub state_labels: Vec<&'static str>,
    pub bracket: [f64; 2],
    pub iterations: usize,
    pub non_monotone: bool,
}

#[derive(Serialize)]
pub struct AssessResult {
    pub farm_ids: Vec<String>,
    pub gamma: GammaValue,
    pub z_local: f64,
    pub gscr0: f64,
    pub gscr: f64,
    pub cgscr: f64,
    pub margin: f64,
    /// Uniform ratio at which gSCR would equal CgSCR.
    pub critical_gamma: f64,
    pub verdict: &'static str,
    pub max_real: f64,
    pub dominant: ComplexValue,
    pub dominant_damping_ratio: f64,
    pub lambdas: Vec<f64>,
    pub eigenvalues: Vec<ComplexValue>,
    pub damping_ratios: Vec<f64>,
}

#[derive(Clone, Serialize)]
#[serde(untagged)]
pub enum GammaValue {
    Uniform(f64),
    PerFarm(Vec<f64>),
}

#[derive(Clone, Serialize)]
pub struct DampingResult {
    pub farm_id: String,
    pub zeta: Option<f64>,
    pub sigma: Option<f64>,
    pub omega: Option<f64>,
    pub growing: bool,
    pub note: Option<String>,
}

#[derive(Serialize)]
pub struct SimulationMetadata {
    pub farm_ids: Vec<String>,
    pub gamma: GammaValue,
    pub z_local: f64,
    pub gscr: f64,
    pub cgscr: f64,
    pub dt_s: f64,
    pub duration_s: f64,
    pub samples: usize,
    pub truncated: bool,
    pub disturbance: gridstrength::Disturbance,
    pub damping: Vec<DampingResult>,
}

#[derive(Serialize)]
pub struct SimulateResult {
    pub csv_path: String,
    pub csv_sha256: String,
    pub metadata_path: String,
    pub metadata: SimulationMetadata,
}
