//! Central finite-difference verification of analytic gradients.

use super::Network;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Flat, index-addressable view over a model's parameters and gradients.
/// Implemented by [`Network`] and by [`NetworkGroup`] for multi-network
/// objectives.
pub trait ParamSpace {
    fn param_count(&self) -> usize;
    fn param_dim(&self, p: usize) -> usize;
    fn param_get(&self, p: usize, i: usize) -> f64;
    fn param_set(&mut self, p: usize, i: usize, v: f64);
    fn grad_get(&self, p: usize, i: usize) -> f64;
    fn grad_add(&mut self, p: usize, i: usize, v: f64);
    fn clear_grads(&mut self);
}

impl ParamSpace for Network {
    fn param_count(&self) -> usize {
        self.params().len()
    }

    fn param_dim(&self, p: usize) -> usize {
        self.params()[p].value.numel()
    }

    fn param_get(&self, p: usize, i: usize) -> f64 {
        self.params()[p].value.data()[i]
    }

    fn param_set(&mut self, p: usize, i: usize, v: f64) {
        self.params_mut()[p].value.data_mut()[i] = v;
    }

    fn grad_get(&self, p: usize, i: usize) -> f64 {
        self.params()[p].grad.data()[i]
    }

    fn grad_add(&mut self, p: usize, i: usize, v: f64) {
        self.params_mut()[p].grad.data_mut()[i] += v;
    }

    fn clear_grads(&mut self) {
        self.zero_grads();
    }
}

/// Several networks checked as one parameter space, in list order.
pub struct NetworkGroup<'a> {
    pub nets: Vec<&'a mut Network>,
}

impl<'a> NetworkGroup<'a> {
    pub fn new(nets: Vec<&'a mut Network>) -> Self {
        Self { nets }
    }

    fn locate(&self, p: usize) -> (usize, usize) {
        let mut offset = p;
        for (ni, net) in self.nets.iter().enumerate() {
            let count = net.params().len();
            if offset < count {
                return (ni, offset);
            }
            offset -= count;
        }
        panic!("param index {p} out of range");
    }
}

impl ParamSpace for NetworkGroup<'_> {
    fn param_count(&self) -> usize {
        self.nets.iter().map(|n| n.params().len()).sum()
    }

    fn param_dim(&self, p: usize) -> usize {
        let (ni, pi) = self.locate(p);
        self.nets[ni].params()[pi].value.numel()
    }

    fn param_get(&self, p: usize, i: usize) -> f64 {
        let (ni, pi) = self.locate(p);
        self.nets[ni].params()[pi].value.data()[i]
    }

    fn param_set(&mut self, p: usize, i: usize, v: f64) {
        let (ni, pi) = self.locate(p);
        self.nets[ni].params_mut()[pi].value.data_mut()[i] = v;
    }

    fn grad_get(&self, p: usize, i: usize) -> f64 {
        let (ni, pi) = self.locate(p);
        self.nets[ni].params()[pi].grad.data()[i]
    }

    fn grad_add(&mut self, p: usize, i: usize, v: f64) {
        let (ni, pi) = self.locate(p);
        self.nets[ni].params_mut()[pi].grad.data_mut()[i] += v;
    }

    fn clear_grads(&mut self) {
        for net in &mut self.nets {
            net.zero_grads();
        }
    }
}

/// Number of coordinates sampled per parameter tensor.
const COORDS_PER_PARAM: usize = 64;

/// Compares the analytic gradient produced by `loss_fn` against central
/// finite differences and returns the maximum relative error, with
/// denominator max(|analytic|, |numeric|, 1e-8).
///
/// `loss_fn` must run the model's forward and backward passes, accumulate
/// gradients into the model's parameters (which arrive zeroed), and return
/// the scalar loss. It is evaluated twice at the starting point; a bitwise
/// mismatch of the two values reports a non-deterministic objective. Up to
/// 64 coordinates per parameter tensor are probed (all of them for small
/// tensors), chosen by a seeded deterministic stream.
pub fn gradient_check<M, F>(model: &mut M, mut loss_fn: F, epsilon: f64, seed: u64) -> Result<f64>
where
    M: ParamSpace,
    F: FnMut(&mut M) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Precondition(format!(
            "gradient-check epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }

    model.clear_grads();
    let loss_a = loss_fn(model)?;
    let analytic: Vec<Vec<f64>> = (0..model.param_count())
        .map(|p| (0..model.param_dim(p)).map(|i| model.grad_get(p, i)).collect())
        .collect();

    model.clear_grads();
    let loss_b = loss_fn(model)?;
    if loss_a.to_bits() != loss_b.to_bits() {
        return Err(Error::NumericFault(format!(
            "loss function is not deterministic: {loss_a} vs {loss_b}"
        )));
    }

    let mut rng = SplitMix64::new(seed);
    let mut max_rel_err: f64 = 0.0;

    for p in 0..model.param_count() {
        let dim = model.param_dim(p);
        let coords: Vec<usize> = if dim <= COORDS_PER_PARAM {
            (0..dim).collect()
        } else {
            // Floyd's sampling of distinct coordinates.
            let mut chosen = std::collections::BTreeSet::new();
            for j in dim - COORDS_PER_PARAM..dim {
                let t = rng.index_below(j + 1);
                if !chosen.insert(t) {
                    chosen.insert(j);
                }
            }
            chosen.into_iter().collect()
        };

        for i in coords {
            let original = model.param_get(p, i);
            model.param_set(p, i, original + epsilon);
            model.clear_grads();
            let loss_plus = loss_fn(model)?;
            model.param_set(p, i, original - epsilon);
            model.clear_grads();
            let loss_minus = loss_fn(model)?;
            model.param_set(p, i, original);

            let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
            let a = analytic[p][i];
            let rel = (numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-8);
            if rel > max_rel_err {
                max_rel_err = rel;
            }
        }
    }

    model.clear_grads();
    Ok(max_rel_err)
}
