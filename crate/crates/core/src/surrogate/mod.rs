//! Latent networks, Sobolev training and the assembled reduced-basis neural operator.

mod activation;
mod network;
mod train;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use activation::{Activation, IdentityLayer};
pub use network::{Gradient, LatentData, LatentNetwork};
pub use train::{train, AdamParams, NetworkConfig, Normalization, TrainReport, TrainingSchedule};

use crate::error::{Error, Result};
use crate::io;
use crate::pde::SampleSet;
use crate::reduction::{reduce_jacobian, ReducedBasis};

/// Encodes a dataset into latent tuples: `s_k = V^+ x_k`, `q_k = U^+ (y_k - mean)`,
/// `G_k = U^+ J_k V`. Loss weights are left at one.
pub fn encode_dataset(samples: &SampleSet, input: &ReducedBasis, output: &ReducedBasis) -> Result<LatentData> {
    if !samples.has_jacobians() {
        return Err(Error::invalid("encoding requires Jacobians"));
    }
    let (ri, ro, n) = (input.rank(), output.rank(), samples.len());
    let mut s = DMatrix::zeros(ri, n);
    let mut q = DMatrix::zeros(ro, n);
    let mut g = DMatrix::zeros(ro, ri * n);
    for k in 0..n {
        s.set_column(k, &input.encode_input(&samples.inputs[k])?);
        q.set_column(k, &output.encode_output(&(&samples.outputs[k] - output.mean()))?);
        g.columns_mut(k * ri, ri).copy_from(&reduce_jacobian(&samples.jacobians[k], output, input)?);
    }
    LatentData::new(s, q, g)
}

/// `F~(x) = U phi(V^+ x) + mean`.
#[derive(Debug, Clone)]
pub struct Rbno {
    pub input: ReducedBasis,
    pub output: ReducedBasis,
    pub net: LatentNetwork,
}

impl Rbno {
    pub fn new(input: ReducedBasis, output: ReducedBasis, net: LatentNetwork) -> Result<Self> {
        if !input.kind().is_input() || output.kind().is_input() {
            return Err(Error::invalid("an RBNO needs an input basis and an output basis"));
        }
        if net.input_dim() != input.rank() || net.output_dim() != output.rank() {
            return Err(Error::dims(format!(
                "network {}->{} does not match ranks {}->{}",
                net.input_dim(),
                net.output_dim(),
                input.rank(),
                output.rank()
            )));
        }
        Ok(Self { input, output, net })
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let q = self.net.forward(&self.input.encode_input(x)?)?;
        Ok(self.output.decode_output(&q)? + self.output.mean())
    }

    /// Nodal Jacobian `U D phi(s) V^+` (`d x d`).
    pub fn predict_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let dphi = self.net.jacobian(&self.input.encode_input(x)?)?;
        Ok(self.output.cols() * dphi * self.input.encoder())
    }

    /// Jacobian with respect to whitened input coordinates, `U D phi(s) W^T`,
    /// comparable with `J C^{1/2}` of the true map.
    pub fn whitened_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let w = self.input.whitened_cols().ok_or_else(|| Error::invalid("input basis without whitened columns"))?;
        let dphi = self.net.jacobian(&self.input.encode_input(x)?)?;
        Ok(self.output.cols() * dphi * w.transpose())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkManifest {
    activation: Activation,
    shapes: Vec<(usize, usize)>,
    param_count: usize,
    schedule_digest: String,
    params_sha256: String,
}

impl LatentNetwork {
    /// Writes `manifest.json` and `params.bin` into `dir`.
    pub fn save(&self, dir: &Path, schedule_digest: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let params_sha256 = io::write_f64s(&dir.join("params.bin"), &self.params_flat())?;
        let manifest = NetworkManifest {
            activation: self.activation(),
            shapes: self.weights().iter().map(|w| w.shape()).collect(),
            param_count: self.param_count(),
            schedule_digest: schedule_digest.to_string(),
            params_sha256,
        };
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Loads a network and the schedule digest it was saved with.
    pub fn load(dir: &Path) -> Result<(LatentNetwork, String)> {
        let m: NetworkManifest = io::read_json(&dir.join("manifest.json"))?;
        let expected: usize = m.shapes.iter().map(|(r, c)| r * c + r).sum();
        if expected != m.param_count {
            return Err(Error::Integrity("network manifest shapes disagree with its parameter count".into()));
        }
        let flat = io::read_f64s(&dir.join("params.bin"), m.param_count, &m.params_sha256)?;
        let (weights, biases) = m.shapes.iter().map(|&(r, c)| (DMatrix::zeros(r, c), DVector::zeros(r))).unzip();
        let mut net = LatentNetwork::from_parts(m.activation, weights, biases)?;
        net.set_params_flat(&flat)?;
        Ok((net, m.schedule_digest))
    }
}
