//! Unpaired two-domain translation: the paired generators G (sim2real) and
//! F (real2sim), their discriminators, the loss system, and the
//! alternating minimax trainer.

mod losses;
mod trainer;

pub use losses::{
    adversarial_loss, clamp_probs, cycle_loss, cycle_loss_grad, d_loss_fake_grad,
    d_loss_real_grad, g_loss_fake_grad, mse_grad, mse_loss, total_loss, ClampedProbs,
    GenLossMode,
};
pub(crate) use trainer::RefBranch;
pub use trainer::{train_loop, BatchSource, GridPoolSource};

use crate::error::{Error, Result};
use crate::projection::Grid;
use crate::rng::SplitMix64;
use crate::tensor::{Adam, Layer, Network, Padding, Tensor};

/// Training hyperparameters. The cycle-consistency weight defaults to 50.
#[derive(Debug, Clone)]
pub struct CycleGanConfig {
    pub lambda_cyc: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub gen_loss_mode: GenLossMode,
    pub clamp_eps: f64,
}

impl Default for CycleGanConfig {
    fn default() -> Self {
        Self {
            lambda_cyc: 50.0,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            steps: 2000,
            batch: 4,
            seed: 0,
            gen_loss_mode: GenLossMode::NonSaturating,
            clamp_eps: 1e-7,
        }
    }
}

impl CycleGanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_cyc < 0.0 {
            return Err(Error::Config("lambda_cyc must be non-negative".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.1) {
            return Err(Error::Config(format!(
                "clamp_eps must lie in (0, 0.1), got {}",
                self.clamp_eps
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of the configuration for report metadata.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "lambda_cyc={};lr={};beta1={};beta2={};steps={};batch={};seed={};mode={:?};clamp={}",
            self.lambda_cyc,
            self.lr,
            self.beta1,
            self.beta2,
            self.steps,
            self.batch,
            self.seed,
            self.gen_loss_mode,
            self.clamp_eps
        );
        crate::metrics::fnv1a64(text.as_bytes())
    }
}

/// Desk-scale translator: 7x7 stem, two stride-2 downsamples, two residual
/// blocks, two nearest-upsample stages, 7x7 head with tanh. Reflection
/// padding throughout; convs feeding norms carry no bias.
pub fn build_generator(grid_hw: (usize, usize), base: usize) -> Result<Network> {
    let b2 = base * 2;
    let b4 = base * 4;
    let res_block = |ch: usize| -> Result<Layer> {
        Ok(Layer::residual(vec![
            Layer::conv_no_bias(ch, ch, 3, 1, Padding::Reflect)?,
            Layer::instance_norm(),
            Layer::relu(),
            Layer::conv_no_bias(ch, ch, 3, 1, Padding::Reflect)?,
            Layer::instance_norm(),
        ]))
    };
    Network::new(
        (1, grid_hw.0, grid_hw.1),
        vec![
            Layer::conv_no_bias(1, base, 7, 1, Padding::Reflect)?,
            Layer::instance_norm(),
            Layer::relu(),
            Layer::conv_no_bias(base, b2, 3, 2, Padding::Reflect)?,
            Layer::instance_norm(),
            Layer::relu(),
            Layer::conv_no_bias(b2, b4, 3, 2, Padding::Reflect)?,
            Layer::instance_norm(),
            Layer::relu(),
            res_block(b4)?,
            res_block(b4)?,
            Layer::upsample2x(),
            Layer::conv_no_bias(b4, b2, 3, 1, Padding::Reflect)?,
            Layer::instance_norm(),
            Layer::relu(),
            Layer::upsample2x(),
            Layer::conv_no_bias(b2, base, 3, 1, Padding::Reflect)?,
            Layer::instance_norm(),
            Layer::relu(),
            Layer::conv(base, 1, 7, 1, Padding::Reflect)?,
            Layer::tanh(),
        ],
    )
}

/// Patch discriminator: three stride-2 convs with leaky-relu(0.2), sigmoid
/// per-patch output. Zero padding.
pub fn build_discriminator(grid_hw: (usize, usize), base: usize) -> Result<Network> {
    Network::new(
        (1, grid_hw.0, grid_hw.1),
        vec![
            Layer::conv(1, base, 3, 2, Padding::Zero)?,
            Layer::leaky_relu(0.2),
            Layer::conv(base, base * 2, 3, 2, Padding::Zero)?,
            Layer::leaky_relu(0.2),
            Layer::conv(base * 2, 1, 3, 2, Padding::Zero)?,
            Layer::sigmoid(),
        ],
    )
}

/// G maps X (sim) to Y (real); F maps back.
#[derive(Debug, Clone)]
pub struct TranslatorPair {
    pub g: Network,
    pub f: Network,
}

/// Which composed mapping to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleDirection {
    /// F(G(x)): encode to the real domain and back.
    XCycle,
    /// G(F(y)): encode to the sim domain and back.
    YCycle,
}

impl TranslatorPair {
    pub fn new(g: Network, f: Network) -> Result<Self> {
        if g.input_shape() != f.output_shape() || f.input_shape() != g.output_shape() {
            return Err(Error::Config(
                "generator pair must map between identical grid shapes".into(),
            ));
        }
        Ok(Self { g, f })
    }

    /// The autoencoder view of the cycle: both generators applied in
    /// sequence.
    pub fn reconstruct(&mut self, input: &Tensor, direction: CycleDirection) -> Result<Tensor> {
        match direction {
            CycleDirection::XCycle => {
                let mid = self.g.forward(input)?;
                self.f.forward(&mid)
            }
            CycleDirection::YCycle => {
                let mid = self.f.forward(input)?;
                self.g.forward(&mid)
            }
        }
    }
}

/// D_X judges sim-domain grids, D_Y real-domain grids.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub d_x: Network,
    pub d_y: Network,
}

/// All mutable training state: the four networks, their optimizers, and
/// the step counter.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: CycleGanConfig,
    pub pair: TranslatorPair,
    pub critics: CriticPair,
    pub opt_g: Adam,
    pub opt_f: Adam,
    pub opt_dx: Adam,
    pub opt_dy: Adam,
    pub step: u64,
}

impl TrainState {
    /// Builds and initializes the four networks for `grid_hw` grids.
    /// Network init streams are derived from the seed in a fixed order
    /// (G, F, D_X, D_Y) so extended trainers can add more networks without
    /// disturbing these four.
    pub fn new(config: CycleGanConfig, grid_hw: (usize, usize), base: usize) -> Result<Self> {
        config.validate()?;
        let mut root = SplitMix64::new(config.seed);
        let mut g = build_generator(grid_hw, base)?;
        g.init(&mut root.split());
        let mut f = build_generator(grid_hw, base)?;
        f.init(&mut root.split());
        let mut d_x = build_discriminator(grid_hw, base)?;
        d_x.init(&mut root.split());
        let mut d_y = build_discriminator(grid_hw, base)?;
        d_y.init(&mut root.split());

        let adam = || Adam::new(config.lr, config.beta1, config.beta2, 1e-8);
        Ok(Self {
            pair: TranslatorPair::new(g, f)?,
            critics: CriticPair { d_x, d_y },
            opt_g: adam(),
            opt_f: adam(),
            opt_dx: adam(),
            opt_dy: adam(),
            step: 0,
            config,
        })
    }
}

/// Per-step loss components, one CSV row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub d_x: f64,
    pub d_y: f64,
    pub g_adv: f64,
    pub f_adv: f64,
    pub cyc_x: f64,
    pub cyc_y: f64,
    pub total: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,d_x,d_y,g_adv,f_adv,cyc_x,cyc_y,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step, self.d_x, self.d_y, self.g_adv, self.f_adv, self.cyc_x, self.cyc_y, self.total
        )
    }
}

/// Stacks [0,1] grids into an [N,1,H,W] tensor mapped to the generators'
/// [-1,1] range.
pub fn grids_to_batch(grids: &[&Grid]) -> Result<Tensor> {
    let Some(first) = grids.first() else {
        return Err(Error::Config("empty batch".into()));
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
        data.extend(g.data().iter().map(|&v| v as f64 * 2.0 - 1.0));
    }
    Tensor::from_vec(&[grids.len(), 1, h, w], data)
}

/// Splits an [N,1,H,W] tensor in [-1,1] back into [0,1] grids.
pub fn batch_to_grids(t: &Tensor) -> Result<Vec<Grid>> {
    let shape = t.shape();
    if shape.len() != 4 || shape[1] != 1 {
        return Err(Error::ShapeMismatch { expected: vec![0, 1, 0, 0], got: shape.to_vec() });
    }
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let slice = &t.data()[i * h * w..(i + 1) * h * w];
        let data = slice
            .iter()
            .map(|&v| (((v + 1.0) / 2.0).clamp(0.0, 1.0)) as f32)
            .collect();
        out.push(Grid::from_data(h, w, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Conv2d;

    #[test]
    fn generator_preserves_grid_shape() {
        let net = build_generator((32, 32), 4).unwrap();
        assert_eq!(net.input_shape(), (1, 32, 32));
        assert_eq!(net.output_shape(), (1, 32, 32));
    }

    #[test]
    fn discriminator_emits_patch_grid() {
        let net = build_discriminator((32, 32), 4).unwrap();
        assert_eq!(net.output_shape(), (1, 4, 4));
    }

    #[test]
    fn grid_batch_round_trip() {
        let mut g = Grid::zeros(4, 4);
        g.set(0, 0, 1.0);
        g.set(1, 2, 0.5);
        let batch = grids_to_batch(&[&g, &g]).unwrap();
        assert_eq!(batch.shape(), &[2, 1, 4, 4]);
        assert_eq!(batch.data()[0], 1.0);
        assert_eq!(batch.data()[16], 1.0);
        assert!((batch.data()[6] - 0.0).abs() < 1e-7); // 0.5 -> 0.0
        let grids = batch_to_grids(&batch).unwrap();
        assert_eq!(grids.len(), 2);
        assert_eq!(grids[0], g);
    }

    #[test]
    fn identity_generators_reconstruct_exactly() {
        // 1x1 identity kernels make G and F the identity map.
        let identity = || {
            let mut conv = Conv2d::new_no_bias(1, 1, 1, 1, Padding::Zero).unwrap();
            conv.weight.value.data_mut()[0] = 1.0;
            Network::new((1, 8, 8), vec![Layer::Conv(conv)]).unwrap()
        };
        let mut pair = TranslatorPair::new(identity(), identity()).unwrap();
        let x = Tensor::from_vec(&[1, 1, 8, 8], (0..64).map(|i| i as f64 / 64.0).collect()).unwrap();
        let rec = pair.reconstruct(&x, CycleDirection::XCycle).unwrap();
        assert_eq!(rec, x);
        let rec = pair.reconstruct(&x, CycleDirection::YCycle).unwrap();
        assert_eq!(rec, x);
    }

    #[test]
    fn x_cycle_equals_stepwise_composition() {
        let mut g = build_generator((16, 16), 2).unwrap();
        let mut f = build_generator((16, 16), 2).unwrap();
        let mut rng = SplitMix64::new(8);
        g.init(&mut rng);
        f.init(&mut rng);
        let x = Tensor::full(&[1, 1, 16, 16], 0.25);

        let mid = g.forward(&x).unwrap();
        let expected = f.forward(&mid).unwrap();

        let mut pair = TranslatorPair::new(g, f).unwrap();
        let rec = pair.reconstruct(&x, CycleDirection::XCycle).unwrap();
        assert_eq!(rec, expected);
    }

    #[test]
    fn config_validation() {
        let mut c = CycleGanConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.lambda_cyc, 50.0);
        c.lambda_cyc = -1.0;
        assert!(c.validate().is_err());
        let mut c = CycleGanConfig::default();
        c.clamp_eps = 0.5;
        assert!(c.validate().is_err());
    }
}
