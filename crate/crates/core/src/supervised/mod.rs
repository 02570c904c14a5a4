//! Supervised extension of the translation system: reference models that
//! map grids to object-occupancy masks, extrinsic evaluation losses for
//! both translation directions, advantage baselines, the lambda scenario
//! matrix, and the 3-phase alternating trainer.

mod trainer;

pub use trainer::{
    alternating_train, PhaseReport, Schedule, SupervisedDataset, SupervisedPoolSource,
    SupervisedTrainState,
};

use crate::cyclegan::{mse_grad, mse_loss};
use crate::error::{Error, Result};
use crate::projection::Grid;
use crate::tensor::{Adam, Layer, Network, Padding, Tensor};

/// Which domain a reference model judges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    X,
    Y,
}

/// A frozen-or-trainable network mapping a grid to a same-resolution
/// object-occupancy mask in [0, 1].
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    pub net: Network,
    pub domain: DomainTag,
}

impl ReferenceModel {
    pub fn new(net: Network, domain: DomainTag) -> Result<Self> {
        let (ic, ih, iw) = net.input_shape();
        let (oc, oh, ow) = net.output_shape();
        if oc != 1 || (oh, ow) != (ih, iw) || ic != 1 {
            return Err(Error::Config(format!(
                "reference model must map (1,{ih},{iw}) to (1,{ih},{iw}), got ({oc},{oh},{ow})"
            )));
        }
        Ok(Self { net, domain })
    }
}

/// Resolution-preserving mask head: three 3x3 convs with relu, sigmoid
/// output.
pub fn build_reference_net(grid_hw: (usize, usize), base: usize) -> Result<Network> {
    Network::new(
        (1, grid_hw.0, grid_hw.1),
        vec![
            Layer::conv(1, base, 3, 1, Padding::Zero)?,
            Layer::relu(),
            Layer::conv(base, base, 3, 1, Padding::Zero)?,
            Layer::relu(),
            Layer::conv(base, 1, 3, 1, Padding::Zero)?,
            Layer::sigmoid(),
        ],
    )
}

/// Weights of the supervised objective plus the advantage baselines
/// estimated after reference pretraining.
#[derive(Debug, Clone)]
pub struct SupervisedConfig {
    pub lambda_cyc: f64,
    pub lambda_ref: f64,
    pub lambda_ext: f64,
    pub lambda_aug: f64,
    pub t_x: f64,
    pub t_y: f64,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            lambda_cyc: 50.0,
            lambda_ref: 1.0,
            lambda_ext: 1.0,
            lambda_aug: 1.0,
            t_x: 0.0,
            t_y: 0.0,
        }
    }
}

impl SupervisedConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_ref", self.lambda_ref),
            ("lambda_ext", self.lambda_ext),
            ("lambda_aug", self.lambda_aug),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.t_x.is_finite() || !self.t_y.is_finite() {
            return Err(Error::Config("baselines must be finite".into()));
        }
        Ok(())
    }
}

/// One of the six lambda patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario(u8);

impl Scenario {
    pub fn new(id: u8) -> Result<Self> {
        if (1..=6).contains(&id) {
            Ok(Self(id))
        } else {
            Err(Error::Config(format!("scenario must be 1..=6, got {id}")))
        }
    }

    pub fn id(&self) -> u8 {
        self.0
    }
}

/// Applies the scenario's zero pattern to `base`, keeping the user's
/// magnitudes in the nonzero slots:
///
/// 1: ref=aug=ext=0 (plain unsupervised training)
/// 2: ref=0, ext=0, aug!=0
/// 3: ref=0, ext!=0, aug!=0
/// 4: ref!=0, aug=0, ext=0 (frozen reference models)
/// 5: ref!=0, aug!=0, ext=0 (reference models see generated data only)
/// 6: all nonzero
pub fn scenario_lambdas(scenario: Scenario, base: &SupervisedConfig) -> SupervisedConfig {
    let mut out = base.clone();
    let (keep_ref, keep_aug, keep_ext) = match scenario.id() {
        1 => (false, false, false),
        2 => (false, true, false),
        3 => (false, true, true),
        4 => (true, false, false),
        5 => (true, true, false),
        6 => (true, true, true),
        _ => unreachable!(),
    };
    if !keep_ref {
        out.lambda_ref = 0.0;
    }
    if !keep_aug {
        out.lambda_aug = 0.0;
    }
    if !keep_ext {
        out.lambda_ext = 0.0;
    }
    out
}

/// Mean squared distance between the reference model's output on `frames`
/// and the ground-truth masks, averaged over the batch.
pub fn reference_loss(h: &mut Network, frames: &Tensor, gts: &Tensor) -> Result<f64> {
    let out = h.forward(frames)?;
    mse_loss(&out, gts)
}

/// Extrinsic check of the sim2real mapping: how well the real-domain
/// reference model recovers X's ground truth from G(x). Identical by
/// definition to `reference_loss(h_y, G(x), x_gt)`.
pub fn eval_sim2real(g: &mut Network, h_y: &mut Network, x_batch: &Tensor, x_gt: &Tensor) -> Result<f64> {
    let translated = g.forward(x_batch)?;
    reference_loss(h_y, &translated, x_gt)
}

/// Mirror of [`eval_sim2real`] for the real2sim direction.
pub fn eval_real2sim(f: &mut Network, h_x: &mut Network, y_batch: &Tensor, y_gt: &Tensor) -> Result<f64> {
    let translated = f.forward(y_batch)?;
    reference_loss(h_x, &translated, y_gt)
}

/// Shifts a loss by its baseline; negative values mean the translation
/// beat the reference model's own training performance.
pub fn advantage_shift(loss: f64, baseline: f64) -> f64 {
    loss - baseline
}

/// Scalar components entering the supervised G/F objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisedLossComponents {
    pub adv_g: f64,
    pub adv_f: f64,
    pub cyc_y: f64,
    pub cyc_x: f64,
    pub r_hat_y: f64,
    pub r_hat_x: f64,
}

/// The decomposed G/F objective: adversarial terms, weighted cycle terms,
/// and weighted extrinsic terms. The lambda_ext reference-training terms
/// are deliberately absent; they belong to the reference-model update
/// only.
pub fn supervised_total_loss(c: &SupervisedLossComponents, config: &SupervisedConfig) -> f64 {
    c.adv_g
        + c.adv_f
        + config.lambda_cyc * (c.cyc_y + c.cyc_x)
        + config.lambda_ref * (c.r_hat_y + c.r_hat_x)
}

/// Outcome of one reference-model update step.
#[derive(Debug, Clone, Copy)]
pub struct HUpdateReport {
    pub l_h_x: f64,
    pub l_h_y: f64,
    pub r_hat_y: f64,
    pub r_hat_x: f64,
}

/// One optimizer step on the combined reference-model objective:
/// H_X descends lambda_ext L_HX + lambda_aug R_hat_X (its own terms of the
/// joint loss), H_Y descends lambda_ext L_HY + lambda_aug R_hat_Y. The
/// generated grids G(x), F(y) act as augmentation data with known ground
/// truth; G and F stay frozen. With both lambdas zero the call reports
/// losses and changes nothing.
#[allow(clippy::too_many_arguments)]
pub fn update_reference_models(
    h_x: &mut Network,
    h_y: &mut Network,
    x_batch: &Tensor,
    x_gt: &Tensor,
    y_batch: &Tensor,
    y_gt: &Tensor,
    g: &mut Network,
    f: &mut Network,
    config: &SupervisedConfig,
    opt_hx: &mut Adam,
    opt_hy: &mut Adam,
) -> Result<HUpdateReport> {
    let ext = config.lambda_ext;
    let aug = config.lambda_aug;
    let fake_y = g.forward(x_batch)?;
    let fake_x = f.forward(y_batch)?;

    // H_X: ground-truth term on real sim frames, augmentation term on
    // generated sim frames.
    let out = h_x.forward(x_batch)?;
    let l_h_x = mse_loss(&out, x_gt)?;
    if ext != 0.0 {
        h_x.backward(&mse_grad(&out, x_gt, ext)?)?;
    }
    let out = h_x.forward(&fake_x)?;
    let r_hat_x = mse_loss(&out, y_gt)?;
    if aug != 0.0 {
        h_x.backward(&mse_grad(&out, y_gt, aug)?)?;
    }

    let out = h_y.forward(y_batch)?;
    let l_h_y = mse_loss(&out, y_gt)?;
    if ext != 0.0 {
        h_y.backward(&mse_grad(&out, y_gt, ext)?)?;
    }
    let out = h_y.forward(&fake_y)?;
    let r_hat_y = mse_loss(&out, x_gt)?;
    if aug != 0.0 {
        h_y.backward(&mse_grad(&out, x_gt, aug)?)?;
    }

    if ext != 0.0 || aug != 0.0 {
        opt_hx.step(h_x.params_mut());
        opt_hy.step(h_y.params_mut());
    }
    Ok(HUpdateReport { l_h_x, l_h_y, r_hat_y, r_hat_x })
}

/// Stacks [0,1] mask grids into an [N,1,H,W] tensor without range
/// remapping (reference outputs are sigmoids).
pub fn masks_to_batch(grids: &[&Grid]) -> Result<Tensor> {
    let Some(first) = grids.first() else {
        return Err(Error::Config("empty mask batch".into()));
    };
    let (h, w) = (first.rows(), first.cols());
    let mut data = Vec::with_capacity(grids.len() * h * w);
    for g in grids {
        if g.rows() != h || g.cols() != w {
            return Err(Error::ShapeMismatch {
                expected: vec![h, w],
                got: vec![g.rows(), g.cols()],
            });
        }
        data.extend(g.data().iter().map(|&v| v as f64));
    }
    Tensor::from_vec(&[grids.len(), 1, h, w], data)
}
