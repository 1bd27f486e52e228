//! Generalized short-circuit ratio, the GFM sizing law and unit planning.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{attach_gfm, GfmAttachment, KronReducedNetwork};

/// Relative tolerance on the asymmetry of `b_r`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Eigenpairs of `S_B^-1 B_r`, ascending.
#[derive(Clone, Debug)]
pub struct ModalDecomposition {
    pub lambdas: Vec<f64>,
    /// Column `i` is the unit-length right eigenvector of `lambdas[i]`.
    pub vectors: DMatrix<f64>,
    pub farm_ids: Vec<String>,
}

impl ModalDecomposition {
    pub fn gscr(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Absolute eigenvector entries of mode `k`, one per farm.
    pub fn participation(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().map(|v| v.abs()).collect()
    }

    pub fn residual(&self, reduced: &KronReducedNetwork, k: usize) -> f64 {
        let v = self.vectors.column(k);
        let bv = reduced.b_r() * v;
        let sv = bv.component_div(reduced.s_b());
        (sv - v * self.lambdas[k]).norm()
    }
}

fn max_asymmetry(b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..b.nrows() {
        for j in (i + 1)..b.ncols() {
            worst = worst.max((b[(i, j)] - b[(j, i)]).abs());
        }
    }
    worst
}

pub fn compute_modes(reduced: &KronReducedNetwork) -> Result<ModalDecomposition> {
    let b = reduced.b_r();
    let scale = b.amax();
    let deviation = max_asymmetry(b);
    if deviation > SYMMETRY_TOLERANCE * scale {
        return Err(Error::Asymmetric { deviation });
    }

    let inv_sqrt: DVector<f64> = reduced.s_b().map(|s| 1.0 / s.sqrt());
    let n = reduced.n_farms();
    let mut sym = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let bij = 0.5 * (b[(i, j)] + b[(j, i)]);
            sym[(i, j)] = inv_sqrt[i] * bij * inv_sqrt[j];
        }
    }

    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut lambdas = Vec::with_capacity(n);
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).component_mul(&inv_sqrt);
        v /= v.norm();
        // Rayleigh quotient in the original coordinates.
        let num = v.dot(&(b * &v));
        let den = v.dot(&v.component_mul(reduced.s_b()));
        lambdas.push(num / den);
        let floor = 1e-12 * v.amax();
        if let Some(first) = v.iter().copied().find(|x| x.abs() > floor) {
            if first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.set_column(k, &v);
    }

    Ok(ModalDecomposition {
        lambdas,
        vectors,
        farm_ids: reduced.farm_ids().to_vec(),
    })
}

pub fn gscr(reduced: &KronReducedNetwork) -> Result<f64> {
    Ok(compute_modes(reduced)?.gscr())
}

fn check_z(z_local: f64) -> Result<()> {
    if z_local.is_finite() && z_local > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "z_local must be positive, got {z_local}"
        )))
    }
}

/// `gscr0 + gamma / z_local`.
pub fn predict_gscr(gscr0: f64, gamma: f64, z_local: f64) -> Result<f64> {
    check_z(z_local)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    Ok(gscr0 + gamma / z_local)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaSizing {
    pub gamma: f64,
    /// The target is already met without any GFM capacity.
    pub already_satisfied: bool,
}

/// Smallest uniform capacity ratio that lifts `gscr0` to `target_gscr`.
pub fn size_gamma(gscr0: f64, target_gscr: f64, z_local: f64) -> Result<GammaSizing> {
    check_z(z_local)?;
    if target_gscr <= gscr0 {
        return Ok(GammaSizing {
            gamma: 0.0,
            already_satisfied: true,
        });
    }
    Ok(GammaSizing {
        gamma: (target_gscr - gscr0) * z_local,
        already_satisfied: false,
    })
}

/// Strips a series reactance from a device-terminal SCR.
pub fn terminal_scr_to_gscr(scr_terminal: f64, z_series: f64) -> Result<f64> {
    if !(scr_terminal.is_finite() && scr_terminal > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "terminal SCR must be positive, got {scr_terminal}"
        )));
    }
    if !(z_series.is_finite() && z_series >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "series reactance must be non-negative, got {z_series}"
        )));
    }
    let residual = 1.0 / scr_terminal - z_series;
    if residual <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "series reactance {z_series} is not below 1/SCR = {}",
            1.0 / scr_terminal
        )));
    }
    Ok(1.0 / residual)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitPlan {
    pub unit_mva: f64,
    pub counts: Vec<u64>,
    pub realized_gamma: Vec<f64>,
    pub min_realized_gamma: f64,
}

impl UnitPlan {
    /// Closed-form gSCR after installation, driven by the smallest realized ratio.
    pub fn predicted_gscr(&self, gscr0: f64, z_local: f64) -> Result<f64> {
        predict_gscr(gscr0, self.min_realized_gamma, z_local)
    }

    pub fn installed_mva(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 * self.unit_mva).collect()
    }
}

/// Rounds GFM capacity up to whole units at every farm.
pub fn plan_gfm_units(capacities_mva: &[f64], gamma: f64, unit_mva: f64) -> Result<UnitPlan> {
    if !(unit_mva.is_finite() && unit_mva > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "unit size must be positive, got {unit_mva}"
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    let mut counts = Vec::with_capacity(capacities_mva.len());
    let mut realized = Vec::with_capacity(capacities_mva.len());
    for &s in capacities_mva {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "farm capacity must be positive, got {s}"
            )));
        }
        let ratio = |c: u64| c as f64 * unit_mva / s;
        let mut count = (gamma * s / unit_mva).ceil().max(0.0) as u64;
        // The ceil can land one off either way once the product is rounded.
        while count > 0 && ratio(count - 1) >= gamma {
            count -= 1;
        }
        while ratio(count) < gamma {
            count += 1;
        }
        counts.push(count);
        realized.push(ratio(count));
    }
    let min_realized_gamma = realized.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UnitPlan {
        unit_mva,
        counts,
        realized_gamma: realized,
        min_realized_gamma: if min_realized_gamma.is_finite() {
            min_realized_gamma
        } else {
            gamma
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizingResult {
    pub gscr0: f64,
    pub target_gscr: f64,
    pub z_local: f64,
    pub gamma_required: f64,
    pub already_satisfied: bool,
    pub farm_ids: Vec<String>,
    pub gfm_mva: Vec<f64>,
    /// Eigen-solve of the augmented network at `gamma_required`.
    pub verified_gscr: f64,
    pub units: Option<UnitPlan>,
    /// Closed form using the smallest realized ratio of the unit plan.
    pub planned_predicted_gscr: Option<f64>,
    /// Eigen-solve with the per-farm realized ratios of the unit plan.
    pub planned_verified_gscr: Option<f64>,
}

/// Sizes GFM capacity for a reduced network, checking every prediction numerically.
pub fn size_network(
    reduced: &KronReducedNetwork,
    s_global_mva: f64,
    target_gscr: f64,
    z_local: f64,
    unit_mva: Option<f64>,
) -> Result<SizingResult> {
    if !(target_gscr.is_finite() && target_gscr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target gSCR must be positive, got {target_gscr}"
        )));
    }
    let gscr0 = gscr(reduced)?;
    let sizing = size_gamma(gscr0, target_gscr, z_local)?;
    let capacities: Vec<f64> = reduced.s_b().iter().map(|s| s * s_global_mva).collect();
    let gfm_mva = capacities.iter().map(|c| c * sizing.gamma).collect();
    let verified_gscr = gscr(&attach_gfm(
        reduced,
        &GfmAttachment::uniform(sizing.gamma, z_local)?,
    )?)?;

    let (units, planned_predicted_gscr, planned_verified_gscr) = match unit_mva {
        Some(unit) => {
            let plan = plan_gfm_units(&capacities, sizing.gamma, unit)?;
            let predicted = plan.predicted_gscr(gscr0, z_local)?;
            let att = GfmAttachment::per_farm(plan.realized_gamma.clone(), z_local)?;
            let verified = gscr(&attach_gfm(reduced, &att)?)?;
            (Some(plan), Some(predicted), Some(verified))
        }
        None => (None, None, None),
    };

    Ok(SizingResult {
        gscr0,
        target_gscr,
        z_local,
        gamma_required: sizing.gamma,
        already_satisfied: sizing.already_satisfied,
        farm_ids: reduced.farm_ids().to_vec(),
        gfm_mva,
        verified_gscr,
        units,
        planned_predicted_gscr,
        planned_verified_gscr,
    })
}
