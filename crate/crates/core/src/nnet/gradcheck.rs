use alloc::string::String;
use alloc::vec::Vec;
use libm::fabs;
use rand::Rng;

use super::exec::Sequential;
use super::network::{ModelParams, NetworkConfig};
use super::train::batch_gradient;
use crate::rng::{self, stream};
use crate::Result;

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradError {
    pub layer: String,
    pub max_rel_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layers: Vec<LayerGradError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| !l.flagged)
    }
}

fn rel_error(a: f64, b: f64) -> f64 {
    fabs(a - b) / fabs(a).max(fabs(b)).max(1e-6)
}

/// Seeded random batch of four samples with random labels.
fn random_batch(config: &NetworkConfig, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut r = rng::seeded(seed, stream::SAMPLES);
    let n = 4;
    let inputs = (0..n * config.input_len())
        .map(|_| r.random::<f64>())
        .collect();
    let labels = (0..n * config.num_labels)
        .map(|_| u8::from(r.random::<bool>()))
        .collect();
    (inputs, labels)
}

/// Compares the analytic gradient of the loss against central differences
/// for every parameter of a freshly initialized network.
pub fn grad_check(config: &NetworkConfig, seed: u64) -> Result<GradCheckReport> {
    let params = ModelParams::init(config, seed)?;
    let (inputs, labels) = random_batch(config, seed);
    let (_, grads) = batch_gradient(&params, &inputs, &labels, &Sequential)?;
    grad_check_params(&params, &inputs, &labels, &grads)
}

/// Checks a supplied gradient against central differences of the loss.
pub fn grad_check_params(
    params: &ModelParams,
    inputs: &[f64],
    labels: &[u8],
    grads: &[f64],
) -> Result<GradCheckReport> {
    let mut probe = params.clone();
    let mut layers = Vec::new();
    for slot in params.slots() {
        let mut worst: f64 = 0.0;
        for i in slot.weight.start..slot.bias.end {
            let orig = probe.values()[i];
            probe.values_mut()[i] = orig + GRAD_CHECK_STEP;
            let (up, _) = batch_gradient(&probe, inputs, labels, &Sequential)?;
            probe.values_mut()[i] = orig - GRAD_CHECK_STEP;
            let (down, _) = batch_gradient(&probe, inputs, labels, &Sequential)?;
            probe.values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
            worst = worst.max(rel_error(grads[i], numeric));
        }
        layers.push(LayerGradError {
            layer: slot.shape.name().into(),
            max_rel_error: worst,
            flagged: worst > GRAD_CHECK_TOLERANCE,
        });
    }
    Ok(GradCheckReport { layers })
}
