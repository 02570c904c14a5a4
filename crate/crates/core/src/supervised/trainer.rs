//! The 3-phase alternating trainer: pretrain the reference models on
//! ground truth, then alternate between translation training with frozen
//! reference models and reference-model updates with frozen translators.

use super::{
    advantage_shift, build_reference_net, reference_loss, scenario_lambdas, masks_to_batch,
    update_reference_models, DomainTag, ReferenceModel, Scenario, SupervisedConfig,
    SupervisedLossComponents, supervised_total_loss,
};
use crate::cyclegan::{grids_to_batch, CycleGanConfig, RefBranch, TrainState};
use crate::dataio::UnpairedSampler;
use crate::error::Result;
use crate::projection::Grid;
use crate::rng::SplitMix64;
use crate::tensor::{Adam, Tensor};

/// Step counts for the phases. Phases 2 and 3 repeat `cycles` times.
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub pretrain_steps: usize,
    pub gan_steps: usize,
    pub h_steps: usize,
    pub cycles: usize,
}

/// Training state of the supervised system: the unsupervised core plus
/// the two reference models and their optimizers.
#[derive(Debug, Clone)]
pub struct SupervisedTrainState {
    pub gan: TrainState,
    pub h_x: ReferenceModel,
    pub h_y: ReferenceModel,
    pub opt_hx: Adam,
    pub opt_hy: Adam,
    pub config: SupervisedConfig,
}

impl SupervisedTrainState {
    /// Builds G, F, D_X, D_Y exactly as the unsupervised trainer would
    /// (identical init streams), then the two reference models from the
    /// following streams. The scenario's zero pattern is applied to the
    /// lambda set.
    pub fn new(
        mut gan_config: CycleGanConfig,
        base_lambdas: SupervisedConfig,
        scenario: Scenario,
        grid_hw: (usize, usize),
        base: usize,
    ) -> Result<Self> {
        let config = scenario_lambdas(scenario, &base_lambdas);
        config.validate()?;
        gan_config.lambda_cyc = config.lambda_cyc;
        let gan = TrainState::new(gan_config, grid_hw, base)?;

        // Streams 1-4 went to G, F, D_X, D_Y inside TrainState::new;
        // reproduce the derivation and take streams 5 and 6.
        let mut root = SplitMix64::new(gan.config.seed);
        for _ in 0..4 {
            root.split();
        }
        let mut h_x = build_reference_net(grid_hw, base)?;
        h_x.init(&mut root.split());
        let mut h_y = build_reference_net(grid_hw, base)?;
        h_y.init(&mut root.split());

        let adam = || Adam::new(gan.config.lr, gan.config.beta1, gan.config.beta2, 1e-8);
        Ok(Self {
            opt_hx: adam(),
            opt_hy: adam(),
            h_x: ReferenceModel::new(h_x, DomainTag::X)?,
            h_y: ReferenceModel::new(h_y, DomainTag::Y)?,
            gan,
            config,
        })
    }

    /// One phase-2 step: discriminator updates, then generator updates on
    /// the decomposed objective with frozen reference models. Numeric
    /// faults roll the whole state back.
    pub fn supervised_step(
        &mut self,
        x: &Tensor,
        x_gt: &Tensor,
        y: &Tensor,
        y_gt: &Tensor,
    ) -> Result<PhaseReport> {
        let checkpoint = self.clone();
        match self.supervised_step_inner(x, x_gt, y, y_gt) {
            Ok(report) => Ok(report),
            Err(e) => {
                *self = checkpoint;
                Err(e)
            }
        }
    }

    fn supervised_step_inner(
        &mut self,
        x: &Tensor,
        x_gt: &Tensor,
        y: &Tensor,
        y_gt: &Tensor,
    ) -> Result<PhaseReport> {
        let (d_x, d_y) = self.gan.discriminator_pass(x, y)?;
        let lambda_cyc = self.config.lambda_cyc;
        let branch = RefBranch {
            h_x: &mut self.h_x.net,
            h_y: &mut self.h_y.net,
            x_gt,
            y_gt,
            lambda_ref: self.config.lambda_ref,
        };
        let (g_adv, f_adv, cyc_x, cyc_y, r_hat_y, r_hat_x) =
            self.gan.generator_pass(x, y, lambda_cyc, Some(branch), |s| {
                s.opt_g.step(s.pair.g.params_mut());
                s.opt_f.step(s.pair.f.params_mut());
            })?;
        self.gan.critics.d_x.zero_grads();
        self.gan.critics.d_y.zero_grads();
        // The reference models transported gradients but stay frozen.
        self.h_x.net.zero_grads();
        self.h_y.net.zero_grads();
        self.gan.step += 1;

        let l_h_x = reference_loss(&mut self.h_x.net, x, x_gt)?;
        let l_h_y = reference_loss(&mut self.h_y.net, y, y_gt)?;
        let components = SupervisedLossComponents { adv_g: g_adv, adv_f: f_adv, cyc_y, cyc_x, r_hat_y, r_hat_x };
        Ok(PhaseReport {
            phase: 2,
            step: self.gan.step,
            d_x,
            d_y,
            g_adv,
            f_adv,
            cyc_x,
            cyc_y,
            r_hat_y,
            r_hat_x,
            l_h_x,
            l_h_y,
            r_hat_y_shifted: advantage_shift(r_hat_y, self.config.t_y),
            r_hat_x_shifted: advantage_shift(r_hat_x, self.config.t_x),
            total: supervised_total_loss(&components, &self.config),
        })
    }
}

/// One CSV row of the phase-tagged training log.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub phase: u8,
    pub step: u64,
    pub d_x: f64,
    pub d_y: f64,
    pub g_adv: f64,
    pub f_adv: f64,
    pub cyc_x: f64,
    pub cyc_y: f64,
    pub r_hat_y: f64,
    pub r_hat_x: f64,
    pub l_h_x: f64,
    pub l_h_y: f64,
    pub r_hat_y_shifted: f64,
    pub r_hat_x_shifted: f64,
    pub total: f64,
}

impl PhaseReport {
    pub const CSV_HEADER: &'static str = "phase,step,d_x,d_y,g_adv,f_adv,cyc_x,cyc_y,r_hat_y,r_hat_x,l_h_x,l_h_y,r_hat_y_shifted,r_hat_x_shifted,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.phase,
            self.step,
            self.d_x,
            self.d_y,
            self.g_adv,
            self.f_adv,
            self.cyc_x,
            self.cyc_y,
            self.r_hat_y,
            self.r_hat_x,
            self.l_h_x,
            self.l_h_y,
            self.r_hat_y_shifted,
            self.r_hat_x_shifted,
            self.total
        )
    }

    fn blank(phase: u8, step: u64) -> Self {
        Self {
            phase,
            step,
            d_x: 0.0,
            d_y: 0.0,
            g_adv: 0.0,
            f_adv: 0.0,
            cyc_x: 0.0,
            cyc_y: 0.0,
            r_hat_y: 0.0,
            r_hat_x: 0.0,
            l_h_x: 0.0,
            l_h_y: 0.0,
            r_hat_y_shifted: 0.0,
            r_hat_x_shifted: 0.0,
            total: 0.0,
        }
    }
}

/// Draws unpaired (frame, ground truth) batches from two pools.
#[derive(Debug, Clone)]
pub struct SupervisedPoolSource {
    pool_x: Vec<(Grid, Grid)>,
    pool_y: Vec<(Grid, Grid)>,
    sampler: UnpairedSampler<usize>,
}

impl SupervisedPoolSource {
    pub fn new(pool_x: Vec<(Grid, Grid)>, pool_y: Vec<(Grid, Grid)>, seed: u64, batch: usize) -> Result<Self> {
        let sampler = UnpairedSampler::new(
            (0..pool_x.len()).collect(),
            (0..pool_y.len()).collect(),
            seed,
            batch,
        )?;
        Ok(Self { pool_x, pool_y, sampler })
    }

    /// (x, x_gt, y, y_gt) batch tensors.
    pub fn next_batch(&mut self) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
        let (xs, ys) = self.sampler.sample_batch();
        let fx: Vec<&Grid> = xs.iter().map(|&i| &self.pool_x[i].0).collect();
        let gx: Vec<&Grid> = xs.iter().map(|&i| &self.pool_x[i].1).collect();
        let fy: Vec<&Grid> = ys.iter().map(|&i| &self.pool_y[i].0).collect();
        let gy: Vec<&Grid> = ys.iter().map(|&i| &self.pool_y[i].1).collect();
        Ok((
            grids_to_batch(&fx)?,
            masks_to_batch(&gx)?,
            grids_to_batch(&fy)?,
            masks_to_batch(&gy)?,
        ))
    }
}

/// Pools split into per-phase batch streams plus a held-out ground-truth
/// split for the advantage baselines.
#[derive(Debug, Clone)]
pub struct SupervisedDataset {
    pub pretrain: SupervisedPoolSource,
    pub gan: SupervisedPoolSource,
    pub h_update: SupervisedPoolSource,
    pub holdout_x: (Tensor, Tensor),
    pub holdout_y: (Tensor, Tensor),
    pub gan_seed: u64,
}

impl SupervisedDataset {
    /// Holds out the last quarter of each pool (at least one frame) for
    /// baseline estimation; the rest feeds the three phase streams, each
    /// with its own seed derived from `seed` (pretrain, gan, h-update, in
    /// that order).
    pub fn from_pools(
        pool_x: Vec<(Grid, Grid)>,
        pool_y: Vec<(Grid, Grid)>,
        seed: u64,
        batch: usize,
    ) -> Result<Self> {
        let mut root = SplitMix64::new(seed);
        let pretrain_seed = root.next_u64();
        let gan_seed = root.next_u64();
        let h_seed = root.next_u64();

        if pool_x.len() < 2 || pool_y.len() < 2 {
            return Err(crate::error::Error::Config(
                "supervised pools need at least 2 frames per domain".into(),
            ));
        }
        let split = |pool: &[(Grid, Grid)]| {
            let holdout = (pool.len() / 4).max(1);
            let cut = pool.len() - holdout;
            (pool[..cut].to_vec(), pool[cut..].to_vec())
        };
        let (train_x, hold_x) = split(&pool_x);
        let (train_y, hold_y) = split(&pool_y);

        let tensors = |pool: &[(Grid, Grid)]| -> Result<(Tensor, Tensor)> {
            let frames: Vec<&Grid> = pool.iter().map(|p| &p.0).collect();
            let gts: Vec<&Grid> = pool.iter().map(|p| &p.1).collect();
            Ok((grids_to_batch(&frames)?, masks_to_batch(&gts)?))
        };

        Ok(Self {
            pretrain: SupervisedPoolSource::new(train_x.clone(), train_y.clone(), pretrain_seed, batch)?,
            gan: SupervisedPoolSource::new(train_x.clone(), train_y.clone(), gan_seed, batch)?,
            h_update: SupervisedPoolSource::new(train_x, train_y, h_seed, batch)?,
            holdout_x: tensors(&hold_x)?,
            holdout_y: tensors(&hold_y)?,
            gan_seed,
        })
    }
}

/// Runs the 3-phase algorithm:
///
/// 1. Pretrain H_X and H_Y on ground truth, then freeze the advantage
///    baselines T_X, T_Y as their held-out losses.
/// 2. Freeze the reference models; train G, F, D_X, D_Y on the decomposed
///    objective.
/// 3. Freeze G and F; update the reference models.
///
/// Phases 2 and 3 repeat per the schedule. Any numeric fault aborts with
/// the last good state retained (each step rolls back internally).
pub fn alternating_train(
    state: &mut SupervisedTrainState,
    data: &mut SupervisedDataset,
    schedule: &Schedule,
    mut on_report: impl FnMut(&PhaseReport),
) -> Result<Vec<PhaseReport>> {
    let mut reports = Vec::new();

    for step in 0..schedule.pretrain_steps {
        let (x, x_gt, y, y_gt) = data.pretrain.next_batch()?;
        let out = state.h_x.net.forward(&x)?;
        let l_h_x = crate::cyclegan::mse_loss(&out, &x_gt)?;
        state.h_x.net.backward(&crate::cyclegan::mse_grad(&out, &x_gt, 1.0)?)?;
        state.opt_hx.step(state.h_x.net.params_mut());

        let out = state.h_y.net.forward(&y)?;
        let l_h_y = crate::cyclegan::mse_loss(&out, &y_gt)?;
        state.h_y.net.backward(&crate::cyclegan::mse_grad(&out, &y_gt, 1.0)?)?;
        state.opt_hy.step(state.h_y.net.params_mut());

        let report = PhaseReport { l_h_x, l_h_y, ..PhaseReport::blank(1, step as u64 + 1) };
        on_report(&report);
        reports.push(report);
    }

    // Baselines: the reference models' own held-out performance, frozen
    // for the rest of the run.
    state.config.t_x = reference_loss(&mut state.h_x.net, &data.holdout_x.0, &data.holdout_x.1)?;
    state.config.t_y = reference_loss(&mut state.h_y.net, &data.holdout_y.0, &data.holdout_y.1)?;

    for _ in 0..schedule.cycles {
        for _ in 0..schedule.gan_steps {
            let (x, x_gt, y, y_gt) = data.gan.next_batch()?;
            let report = state.supervised_step(&x, &x_gt, &y, &y_gt)?;
            on_report(&report);
            reports.push(report);
        }

        for step in 0..schedule.h_steps {
            let (x, x_gt, y, y_gt) = data.h_update.next_batch()?;
            let h_report = update_reference_models(
                &mut state.h_x.net,
                &mut state.h_y.net,
                &x,
                &x_gt,
                &y,
                &y_gt,
                &mut state.gan.pair.g,
                &mut state.gan.pair.f,
                &state.config,
                &mut state.opt_hx,
                &mut state.opt_hy,
            )?;
            let report = PhaseReport {
                l_h_x: h_report.l_h_x,
                l_h_y: h_report.l_h_y,
                r_hat_y: h_report.r_hat_y,
                r_hat_x: h_report.r_hat_x,
                r_hat_y_shifted: advantage_shift(h_report.r_hat_y, state.config.t_y),
                r_hat_x_shifted: advantage_shift(h_report.r_hat_x, state.config.t_x),
                ..PhaseReport::blank(3, step as u64 + 1)
            };
            on_report(&report);
            reports.push(report);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cyclegan::{train_loop, GridPoolSource};
    use crate::synthetic::{render_supervised_pools, SceneParams};

    fn small_setup(seed: u64, scenario: u8) -> (SupervisedTrainState, SupervisedDataset) {
        let params = SceneParams { h: 16, w: 16, ..SceneParams::default() };
        let (px, py) = render_supervised_pools(&params, 8, seed ^ 0xDA7A);
        let gan_config = CycleGanConfig { seed, batch: 2, lambda_cyc: 10.0, ..CycleGanConfig::default() };
        let lambdas = SupervisedConfig { lambda_cyc: 10.0, ..SupervisedConfig::default() };
        let state = SupervisedTrainState::new(
            gan_config,
            lambdas,
            Scenario::new(scenario).unwrap(),
            (16, 16),
            2,
        )
        .unwrap();
        let data = SupervisedDataset::from_pools(px, py, seed ^ 0x5EED2, 2).unwrap();
        (state, data)
    }

    #[test]
    fn scenario_one_matches_vanilla_trainer_bit_for_bit() {
        let seed = 1234;
        let (mut state, mut data) = small_setup(seed, 1);
        let schedule = Schedule { pretrain_steps: 2, gan_steps: 4, h_steps: 1, cycles: 1 };
        let reports = alternating_train(&mut state, &mut data, &schedule, |_| {}).unwrap();
        let phase2: Vec<&PhaseReport> = reports.iter().filter(|r| r.phase == 2).collect();
        assert_eq!(phase2.len(), 4);

        // The vanilla trainer over the same frame pools, with the same
        // sampler seed as the dataset's gan stream.
        let params = SceneParams { h: 16, w: 16, ..SceneParams::default() };
        let (px, py) = render_supervised_pools(&params, 8, seed ^ 0xDA7A);
        let train_frames = |pool: &[(crate::projection::Grid, crate::projection::Grid)]| {
            let cut = pool.len() - (pool.len() / 4).max(1);
            pool[..cut].iter().map(|p| p.0.clone()).collect::<Vec<_>>()
        };
        let gan_config = CycleGanConfig { seed, batch: 2, lambda_cyc: 10.0, ..CycleGanConfig::default() };
        let mut vanilla = crate::cyclegan::TrainState::new(gan_config, (16, 16), 2).unwrap();
        let mut source = GridPoolSource::new(train_frames(&px), train_frames(&py), data.gan_seed, 2).unwrap();
        let vanilla_reports = train_loop(&mut vanilla, &mut source, 4, |_| {}).unwrap();

        for (sup, van) in phase2.iter().zip(&vanilla_reports) {
            assert_eq!(sup.d_x.to_bits(), van.d_x.to_bits());
            assert_eq!(sup.d_y.to_bits(), van.d_y.to_bits());
            assert_eq!(sup.g_adv.to_bits(), van.g_adv.to_bits());
            assert_eq!(sup.f_adv.to_bits(), van.f_adv.to_bits());
            assert_eq!(sup.cyc_x.to_bits(), van.cyc_x.to_bits());
            assert_eq!(sup.cyc_y.to_bits(), van.cyc_y.to_bits());
            assert_eq!(sup.total.to_bits(), van.total.to_bits());
        }
        assert_eq!(
            state.gan.pair.g.snapshot_values(),
            vanilla.pair.g.snapshot_values()
        );
    }

    #[test]
    fn freeze_contracts_hold_across_phases() {
        let (mut state, mut data) = small_setup(7, 6);
        let schedule = Schedule { pretrain_steps: 1, gan_steps: 0, h_steps: 0, cycles: 0 };
        alternating_train(&mut state, &mut data, &schedule, |_| {}).unwrap();

        // Phase 2 must not move H parameters.
        let hx_before = state.h_x.net.snapshot_values();
        let hy_before = state.h_y.net.snapshot_values();
        let (x, x_gt, y, y_gt) = data.gan.next_batch().unwrap();
        state.supervised_step(&x, &x_gt, &y, &y_gt).unwrap();
        assert_eq!(state.h_x.net.snapshot_values(), hx_before);
        assert_eq!(state.h_y.net.snapshot_values(), hy_before);

        // Phase 3 must not move G/F parameters but must move the H's.
        let g_before = state.gan.pair.g.snapshot_values();
        let f_before = state.gan.pair.f.snapshot_values();
        let (x, x_gt, y, y_gt) = data.h_update.next_batch().unwrap();
        update_reference_models(
            &mut state.h_x.net,
            &mut state.h_y.net,
            &x,
            &x_gt,
            &y,
            &y_gt,
            &mut state.gan.pair.g,
            &mut state.gan.pair.f,
            &state.config,
            &mut state.opt_hx,
            &mut state.opt_hy,
        )
        .unwrap();
        assert_eq!(state.gan.pair.g.snapshot_values(), g_before);
        assert_eq!(state.gan.pair.f.snapshot_values(), f_before);
        assert_ne!(state.h_x.net.snapshot_values(), hx_before);
    }

    #[test]
    fn zero_h_steps_keep_reference_models_frozen_after_pretraining() {
        let (mut state, mut data) = small_setup(11, 6);
        let schedule = Schedule { pretrain_steps: 2, gan_steps: 3, h_steps: 0, cycles: 2 };
        alternating_train(&mut state, &mut data, &schedule, |_| {}).unwrap();

        let hx_after_run = state.h_x.net.snapshot_values();
        // Re-run phase 1 alone with a fresh copy: parameters must agree,
        // because phases 2-3 never touched the H's.
        let (mut fresh, mut fresh_data) = small_setup(11, 6);
        let phase1 = Schedule { pretrain_steps: 2, gan_steps: 0, h_steps: 0, cycles: 0 };
        alternating_train(&mut fresh, &mut fresh_data, &phase1, |_| {}).unwrap();
        assert_eq!(fresh.h_x.net.snapshot_values(), hx_after_run);
    }

    #[test]
    fn pretraining_reduces_reference_loss() {
        let (mut state, mut data) = small_setup(21, 4);
        let (x, x_gt, _, _) = data.pretrain.next_batch().unwrap();
        let before = reference_loss(&mut state.h_x.net, &x, &x_gt).unwrap();
        let schedule = Schedule { pretrain_steps: 60, gan_steps: 0, h_steps: 0, cycles: 0 };
        alternating_train(&mut state, &mut data, &schedule, |_| {}).unwrap();
        let after = reference_loss(&mut state.h_x.net, &x, &x_gt).unwrap();
        assert!(after < before, "pretraining did not improve: {before} -> {after}");
        // Baselines were estimated and are finite.
        assert!(state.config.t_x.is_finite() && state.config.t_x >= 0.0);
        assert!(state.config.t_y.is_finite() && state.config.t_y >= 0.0);
    }

    #[test]
    fn csv_rows_have_header_arity() {
        let report = PhaseReport::blank(1, 1);
        let header_cols = PhaseReport::CSV_HEADER.split(',').count();
        assert_eq!(report.csv_row().split(',').count(), header_cols);
    }
}
