//! Adversarial and cycle-consistency losses with hand-derived gradients.
//!
//! Discriminator outputs are probabilities; before any log they are
//! clamped into [eps, 1-eps]. Gradients treat the clamp as a real graph
//! node: clamped entries receive zero gradient.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which generator objective to minimize against a frozen discriminator:
/// the literal saturating form log(1 - D(fake)), or the non-saturating
/// -log D(fake) that trains better in practice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenLossMode {
    PaperSaturating,
    NonSaturating,
}

impl std::str::FromStr for GenLossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-saturating" | "paper_saturating" => Ok(GenLossMode::PaperSaturating),
            "non-saturating" | "non_saturating" => Ok(GenLossMode::NonSaturating),
            other => Err(Error::Config(format!("unknown generator loss mode '{other}'"))),
        }
    }
}

/// Probabilities clamped into [eps, 1-eps] with a mask of entries that
/// were left untouched (and therefore carry gradient).
#[derive(Debug, Clone)]
pub struct ClampedProbs {
    pub probs: Tensor,
    active: Vec<bool>,
}

pub fn clamp_probs(raw: &Tensor, eps: f64) -> ClampedProbs {
    let lo = eps;
    let hi = 1.0 - eps;
    let mut probs = raw.clone();
    let mut active = vec![true; raw.numel()];
    for (i, v) in probs.data_mut().iter_mut().enumerate() {
        if *v < lo {
            *v = lo;
            active[i] = false;
        } else if *v > hi {
            *v = hi;
            active[i] = false;
        }
    }
    ClampedProbs { probs, active }
}

fn ensure_open_unit_interval(t: &Tensor, what: &str) -> Result<()> {
    if t.data().iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::NumericFault(format!(
            "{what} probabilities must lie strictly inside (0, 1); clamp them first"
        )));
    }
    Ok(())
}

/// Discriminator and generator adversarial losses from already-clamped
/// probabilities. Means are taken over batch and patches.
///
/// d_loss = -mean(log D(real)) - mean(log(1 - D(fake))); at D = 0.5
/// everywhere this is 2 ln 2. g_loss follows `mode`.
pub fn adversarial_loss(d_out_real: &Tensor, d_out_fake: &Tensor, mode: GenLossMode) -> Result<(f64, f64)> {
    ensure_open_unit_interval(d_out_real, "real")?;
    ensure_open_unit_interval(d_out_fake, "fake")?;
    let mean_log_real = mean(d_out_real.data().iter().map(|&p| p.ln()));
    let mean_log_one_minus_fake = mean(d_out_fake.data().iter().map(|&q| (1.0 - q).ln()));
    let d_loss = -mean_log_real - mean_log_one_minus_fake;
    let g_loss = match mode {
        GenLossMode::PaperSaturating => mean_log_one_minus_fake,
        GenLossMode::NonSaturating => -mean(d_out_fake.data().iter().map(|&q| q.ln())),
    };
    Ok((d_loss, g_loss))
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in it {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

/// d(d_loss)/d(real probabilities): -1/(N p) on active entries.
pub fn d_loss_real_grad(real: &ClampedProbs) -> Tensor {
    let n = real.probs.numel() as f64;
    let mut g = Tensor::zeros(real.probs.shape());
    for i in 0..real.probs.numel() {
        if real.active[i] {
            g.data_mut()[i] = -1.0 / (n * real.probs.data()[i]);
        }
    }
    g
}

/// d(d_loss)/d(fake probabilities): 1/(M (1-q)) on active entries.
pub fn d_loss_fake_grad(fake: &ClampedProbs) -> Tensor {
    let m = fake.probs.numel() as f64;
    let mut g = Tensor::zeros(fake.probs.shape());
    for i in 0..fake.probs.numel() {
        if fake.active[i] {
            g.data_mut()[i] = 1.0 / (m * (1.0 - fake.probs.data()[i]));
        }
    }
    g
}

/// d(g_loss)/d(fake probabilities) for the chosen mode.
pub fn g_loss_fake_grad(fake: &ClampedProbs, mode: GenLossMode) -> Tensor {
    let m = fake.probs.numel() as f64;
    let mut g = Tensor::zeros(fake.probs.shape());
    for i in 0..fake.probs.numel() {
        if fake.active[i] {
            let q = fake.probs.data()[i];
            g.data_mut()[i] = match mode {
                GenLossMode::PaperSaturating => -1.0 / (m * (1.0 - q)),
                GenLossMode::NonSaturating => -1.0 / (m * q),
            };
        }
    }
    g
}

/// Mean absolute elementwise difference (the L1 cycle-consistency loss,
/// averaged over every element).
pub fn cycle_loss(original: &Tensor, reconstructed: &Tensor) -> Result<f64> {
    original.same_shape(reconstructed)?;
    Ok(crate::metrics::mean_abs_diff(original.data(), reconstructed.data()))
}

/// d(cycle_loss)/d(reconstructed), scaled by `weight`. The subgradient at
/// exact equality is zero.
pub fn cycle_loss_grad(reconstructed: &Tensor, original: &Tensor, weight: f64) -> Result<Tensor> {
    original.same_shape(reconstructed)?;
    let k = reconstructed.numel() as f64;
    let mut g = Tensor::zeros(reconstructed.shape());
    for i in 0..reconstructed.numel() {
        let d = reconstructed.data()[i] - original.data()[i];
        g.data_mut()[i] = weight * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 } / k;
    }
    Ok(g)
}

/// The overall objective: adv_G + adv_F + lambda_cyc (cyc_Y + cyc_X).
pub fn total_loss(adv_g: f64, adv_f: f64, cyc_y: f64, cyc_x: f64, lambda_cyc: f64) -> f64 {
    adv_g + adv_f + lambda_cyc * (cyc_y + cyc_x)
}

/// Mean squared elementwise difference, averaged over every element.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.same_shape(target)?;
    let k = pred.numel() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / k)
}

/// d(mse_loss)/d(pred), scaled by `weight`.
pub fn mse_grad(pred: &Tensor, target: &Tensor, weight: f64) -> Result<Tensor> {
    pred.same_shape(target)?;
    let k = pred.numel() as f64;
    let mut g = Tensor::zeros(pred.shape());
    for i in 0..pred.numel() {
        g.data_mut()[i] = weight * 2.0 * (pred.data()[i] - target.data()[i]) / k;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    const TWO_LN_2: f64 = 1.3862943611198906;

    fn tensor_of(shape: &[usize], v: f64) -> Tensor {
        Tensor::full(shape, v)
    }

    #[test]
    fn half_probabilities_give_two_ln_two() {
        let real = tensor_of(&[2, 1, 2, 2], 0.5);
        let fake = tensor_of(&[2, 1, 2, 2], 0.5);
        let (d, _) = adversarial_loss(&real, &fake, GenLossMode::NonSaturating).unwrap();
        assert!((d - TWO_LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_loss_near_zero() {
        let eps = 1e-7;
        let real = tensor_of(&[4], 1.0 - eps);
        let fake = tensor_of(&[4], eps);
        let (d, _) = adversarial_loss(&real, &fake, GenLossMode::NonSaturating).unwrap();
        assert!(d.abs() < 1e-6, "d_loss {d}");
    }

    #[test]
    fn saturating_generator_loss_at_half() {
        let real = tensor_of(&[4], 0.5);
        let fake = tensor_of(&[4], 0.5);
        let (_, g) = adversarial_loss(&real, &fake, GenLossMode::PaperSaturating).unwrap();
        assert!((g - (-0.6931471805599453)).abs() < 1e-12);
    }

    #[test]
    fn non_saturating_mode_changes_g_only() {
        let mut rng = SplitMix64::new(1);
        let data: Vec<f64> = (0..8).map(|_| rng.uniform(0.1, 0.9)).collect();
        let real = Tensor::from_vec(&[8], data.clone()).unwrap();
        let fake = Tensor::from_vec(&[8], data.iter().map(|v| 1.0 - v).collect()).unwrap();
        let (d1, g1) = adversarial_loss(&real, &fake, GenLossMode::PaperSaturating).unwrap();
        let (d2, g2) = adversarial_loss(&real, &fake, GenLossMode::NonSaturating).unwrap();
        assert_eq!(d1, d2);
        assert_ne!(g1, g2);
    }

    #[test]
    fn unclamped_probabilities_fault() {
        let ok = tensor_of(&[2], 0.5);
        let zero = tensor_of(&[2], 0.0);
        let one = tensor_of(&[2], 1.0);
        assert!(adversarial_loss(&zero, &ok, GenLossMode::NonSaturating).is_err());
        assert!(adversarial_loss(&ok, &one, GenLossMode::NonSaturating).is_err());
    }

    #[test]
    fn clamp_keeps_interior_and_masks_extremes() {
        let raw = Tensor::from_vec(&[4], vec![0.0, 0.5, 1.0, 1e-9]).unwrap();
        let cl = clamp_probs(&raw, 1e-7);
        assert_eq!(cl.probs.data()[0], 1e-7);
        assert_eq!(cl.probs.data()[1], 0.5);
        assert_eq!(cl.probs.data()[2], 1.0 - 1e-7);
        assert_eq!(cl.probs.data()[3], 1e-7);
        // Clamped entries carry no gradient.
        let g = d_loss_fake_grad(&cl);
        assert_eq!(g.data()[0], 0.0);
        assert_ne!(g.data()[1], 0.0);
        assert_eq!(g.data()[2], 0.0);
    }

    #[test]
    fn cycle_loss_basics() {
        let a = tensor_of(&[2, 3], 0.5);
        assert_eq!(cycle_loss(&a, &a).unwrap(), 0.0);
        let b = tensor_of(&[2, 3], 0.75);
        assert!((cycle_loss(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        let c = tensor_of(&[3, 2], 0.5);
        assert!(cycle_loss(&a, &c).is_err());
    }

    #[test]
    fn cycle_loss_matches_brute_force() {
        let mut rng = SplitMix64::new(9);
        let a: Vec<f64> = (0..100).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let ta = Tensor::from_vec(&[100], a.clone()).unwrap();
        let tb = Tensor::from_vec(&[100], b.clone()).unwrap();
        let brute: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 100.0;
        assert!((cycle_loss(&ta, &tb).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn cycle_loss_is_a_metric() {
        let mut rng = SplitMix64::new(33);
        for _ in 0..50 {
            let mk = |rng: &mut SplitMix64| {
                Tensor::from_vec(&[16], (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let c = mk(&mut rng);
            let dab = cycle_loss(&a, &b).unwrap();
            let dba = cycle_loss(&b, &a).unwrap();
            let dac = cycle_loss(&a, &c).unwrap();
            let dcb = cycle_loss(&c, &b).unwrap();
            assert!(dab >= 0.0);
            assert_eq!(dab, dba);
            assert!(dab <= dac + dcb + 1e-12);
            assert_eq!(cycle_loss(&a, &a).unwrap(), 0.0);
            if dab == 0.0 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn total_loss_composition() {
        assert_eq!(total_loss(0.3, 0.4, 0.0, 0.0, 0.0), 0.7);
        assert!((total_loss(0.0, 0.0, 0.1, 0.1, 50.0) - 10.0).abs() < 1e-12);
        // Exact recomposition on random parts.
        let mut rng = SplitMix64::new(5);
        for _ in 0..100 {
            let (a, b, cy, cx) = (
                rng.uniform(0.0, 2.0),
                rng.uniform(0.0, 2.0),
                rng.uniform(0.0, 1.0),
                rng.uniform(0.0, 1.0),
            );
            let l = total_loss(a, b, cy, cx, 50.0);
            assert_eq!(l, a + b + 50.0 * (cy + cx));
        }
    }
}
