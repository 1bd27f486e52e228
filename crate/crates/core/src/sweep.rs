//! Parameter sweeps over independent points.

use serde::Serialize;

use crate::dynamics::{
    compute_cgscr, direct_full_model, spectral_abscissa, CgscrResult, GflDeviceParams, Verdict,
};
use crate::error::Result;
use crate::exec::Execution;
use crate::network::{attach_gfm, GfmAttachment, KronReducedNetwork};
use crate::strength::{compute_modes, predict_gscr};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaPoint {
    pub gamma: f64,
    pub gscr: f64,
    pub predicted_gscr: f64,
    /// Spectral abscissa of the directly assembled full model.
    pub max_real: f64,
    pub verdict: Verdict,
}

fn gamma_point(
    reduced: &KronReducedNetwork,
    gscr0: f64,
    dev: &GflDeviceParams,
    gamma: f64,
    z_local: f64,
) -> Result<GammaPoint> {
    let augmented = attach_gfm(reduced, &GfmAttachment::uniform(gamma, z_local)?)?;
    let gscr = compute_modes(&augmented)?.gscr();
    let max_real = spectral_abscissa(&direct_full_model(dev, &augmented)?.eigenvalues()?);
    Ok(GammaPoint {
        gamma,
        gscr,
        predicted_gscr: predict_gscr(gscr0, gamma, z_local)?,
        max_real,
        verdict: Verdict::from_abscissa(max_real),
    })
}

/// gSCR and full-model stability at each uniform capacity ratio.
pub fn gamma_sweep(
    reduced: &KronReducedNetwork,
    dev: &GflDeviceParams,
    gammas: &[f64],
    z_local: f64,
    exec: Execution,
) -> Result<Vec<GammaPoint>> {
    let gscr0 = compute_modes(reduced)?.gscr();
    exec.map(gammas, |&g| gamma_point(reduced, gscr0, dev, g, z_local))
        .into_iter()
        .collect()
}

/// CgSCR of each device over a shared bracket.
pub fn cgscr_sweep(
    devices: &[GflDeviceParams],
    bracket: (f64, f64),
    exec: Execution,
) -> Vec<Result<CgscrResult>> {
    exec.map(devices, |d| compute_cgscr(d, bracket))
}
