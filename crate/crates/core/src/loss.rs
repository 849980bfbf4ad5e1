//! Boundary-weighted hybrid Dice + cross-entropy loss with analytic gradients.
//!
//! Weights follow `w = 1 + alpha·exp(−d²/(2σ²))`, where `d` is the distance to
//! the two-sided 6-neighbour boundary of the ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{edt, DistanceError};
use crate::grid::{GridError, Mask, Volume, NEIGHBORS_6};

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid loss parameter: {0}")]
    BadParam(String),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    pub alpha: f64,
    /// Weight bandwidth as a multiple of the largest voxel spacing.
    pub sigma_factor: f64,
    pub dice_eps: f64,
    pub ce_clamp: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            sigma_factor: 2.0,
            dice_eps: 1e-5,
            ce_clamp: 1e-7,
        }
    }
}

impl LossParams {
    pub fn sigma_mm(&self, spacing: [f64; 3]) -> f64 {
        self.sigma_factor * spacing.iter().cloned().fold(0.0, f64::max)
    }
}

/// One loss component or the hybrid, with `∂L/∂p` per voxel.
#[derive(Clone, Debug)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Volume<f64>,
}

#[derive(Clone, Debug)]
pub struct HybridLoss {
    pub total: f64,
    pub dice_term: f64,
    pub ce_term: f64,
    pub gradient: Volume<f64>,
    pub dice_gradient: Volume<f64>,
    pub ce_gradient: Volume<f64>,
}

/// Foreground voxels with a background 6-neighbour and background voxels
/// with a foreground 6-neighbour. Neighbours outside the grid are ignored.
pub fn boundary_set(gt: &Mask) -> Mask {
    let g = *gt.geom();
    Volume::from_fn(g, |c| {
        let me = *gt.at(c);
        NEIGHBORS_6
            .iter()
            .any(|&o| g.offset(c, o).is_some_and(|n| *gt.at(n) != me))
    })
}

pub fn boundary_weights(gt: &Mask, alpha: f64, sigma: f64) -> Result<Volume<f64>, LossError> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(LossError::BadParam(format!("alpha {alpha}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(LossError::BadParam(format!("sigma {sigma}")));
    }
    let d = match edt(&boundary_set(gt)) {
        Ok(d) => d,
        Err(DistanceError::NoForeground) => return Ok(Volume::filled(*gt.geom(), 1.0)),
    };
    let s2 = 2.0 * sigma * sigma;
    Ok(d.map(|&d| 1.0 + alpha * (-d * d / s2).exp()))
}

fn check(p: &Volume<f64>, g: &Mask, w: &Volume<f64>) -> Result<(), LossError> {
    p.geom().ensure_matches(g.geom())?;
    p.geom().ensure_matches(w.geom())?;
    if let Some(&bad) = p.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(LossError::BadProbability(bad));
    }
    Ok(())
}

/// `L = 1 − (2Σwpg + ε)/(Σwp + Σwg + ε)`.
pub fn weighted_dice_loss(p: &Volume<f64>, g: &Mask, w: &Volume<f64>, eps: f64) -> Result<LossValue, LossError> {
    check(p, g, w)?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for ((&pv, &gv), &wv) in p.data().iter().zip(g.data()).zip(w.data()) {
        let gf = if gv { 1.0 } else { 0.0 };
        inter += wv * pv * gf;
        sp += wv * pv;
        sg += wv * gf;
    }
    let num = 2.0 * inter + eps;
    let den = sp + sg + eps;
    if den == 0.0 {
        return Err(LossError::BadParam("dice denominator is zero; use eps > 0".into()));
    }
    let mut grad = Volume::filled(*p.geom(), 0.0);
    for ((o, &gv), &wv) in grad.data_mut().iter_mut().zip(g.data()).zip(w.data()) {
        let gf = if gv { 1.0 } else { 0.0 };
        *o = -wv * (2.0 * gf * den - num) / (den * den);
    }
    Ok(LossValue {
        value: 1.0 - num / den,
        gradient: grad,
    })
}

/// `L = −Σw[g·ln p̃ + (1−g)·ln(1−p̃)] / Σw` with `p̃` clamped to `[c, 1−c]`.
/// The gradient is zero where the clamp is active.
pub fn weighted_ce_loss(p: &Volume<f64>, g: &Mask, w: &Volume<f64>, clamp: f64) -> Result<LossValue, LossError> {
    check(p, g, w)?;
    if !(0.0..0.5).contains(&clamp) {
        return Err(LossError::BadParam(format!("clamp {clamp}")));
    }
    let sw: f64 = w.data().iter().sum();
    if !(sw > 0.0) {
        return Err(LossError::BadParam("weights sum to zero".into()));
    }
    let mut total = 0.0;
    let mut grad = Volume::filled(*p.geom(), 0.0);
    for (((o, &pv), &gv), &wv) in grad.data_mut().iter_mut().zip(p.data()).zip(g.data()).zip(w.data()) {
        let pc = pv.clamp(clamp, 1.0 - clamp);
        let active = pv > clamp && pv < 1.0 - clamp;
        if gv {
            total += wv * pc.ln();
            *o = if active { -wv / (pc * sw) } else { 0.0 };
        } else {
            total += wv * (1.0 - pc).ln();
            *o = if active { wv / ((1.0 - pc) * sw) } else { 0.0 };
        }
    }
    Ok(LossValue {
        value: -total / sw,
        gradient: grad,
    })
}

/// Equal-weight combination of the Dice and cross-entropy terms.
pub fn hybrid_loss(p: &Volume<f64>, g: &Mask, w: &Volume<f64>, params: &LossParams) -> Result<HybridLoss, LossError> {
    let dice = weighted_dice_loss(p, g, w, params.dice_eps)?;
    let ce = weighted_ce_loss(p, g, w, params.ce_clamp)?;
    let mut gradient = dice.gradient.clone();
    for (o, &c) in gradient.data_mut().iter_mut().zip(ce.gradient.data()) {
        *o = 0.5 * *o + 0.5 * c;
    }
    Ok(HybridLoss {
        total: 0.5 * dice.value + 0.5 * ce.value,
        dice_term: dice.value,
        ce_term: ce.value,
        gradient,
        dice_gradient: dice.gradient,
        ce_gradient: ce.gradient,
    })
}

/// Worst disagreement between an analytic gradient and central differences
/// of `f` with step `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest error under the mixed criterion: absolute where |g| < `small`, relative elsewhere.
    pub max_mixed_error: f64,
    /// Largest absolute error among voxels with |g| < `small`.
    pub max_small_abs_error: f64,
    pub voxels: usize,
}

pub fn finite_difference_check(
    p: &Volume<f64>,
    analytic: &Volume<f64>,
    h: f64,
    small: f64,
    f: impl Fn(&Volume<f64>) -> f64,
) -> GradientCheck {
    finite_difference_check_at(p, analytic, h, small, 0..p.len(), f)
}

/// Central differences at the listed voxel indices only.
pub fn finite_difference_check_at(
    p: &Volume<f64>,
    analytic: &Volume<f64>,
    h: f64,
    small: f64,
    indices: impl IntoIterator<Item = usize>,
    f: impl Fn(&Volume<f64>) -> f64,
) -> GradientCheck {
    let mut out = GradientCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_mixed_error: 0.0,
        max_small_abs_error: 0.0,
        voxels: 0,
    };
    let mut q = p.clone();
    for i in indices {
        let v = p.data()[i];
        q.data_mut()[i] = v + h;
        let up = f(&q);
        q.data_mut()[i] = v - h;
        let down = f(&q);
        q.data_mut()[i] = v;
        let fd = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        let abs = (fd - a).abs();
        let rel = abs / a.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
        out.voxels += 1;
        out.max_abs_error = out.max_abs_error.max(abs);
        if a.abs() >= small {
            out.max_rel_error = out.max_rel_error.max(rel);
        } else {
            out.max_small_abs_error = out.max_small_abs_error.max(abs);
        }
        out.max_mixed_error = out.max_mixed_error.max(if a.abs() < small { abs } else { rel });
    }
    out
}
