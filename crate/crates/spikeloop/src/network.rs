//! Fully-connected two-layer SNN forward simulation.
//!
//! Hidden and output layers are distorted LIF neurons stepped over the
//! input spike train. Hidden spikes feed the output layer within the same
//! time step, all membrane states start at zero, and output spike counts
//! are reduced to per-neuron firing rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SpikeTrainBatch;
use crate::neuron::{lif_step, LifConfig, NeuronState};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("input has {found} features but the network expects {expected}")]
    InputShape { expected: usize, found: usize },
    #[error("weight vector has length {found}, expected {expected}")]
    WeightLength { expected: usize, found: usize },
}

/// Layer sizes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
}

impl Topology {
    pub fn new(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Topology {
            n_in,
            n_hidden,
            n_out,
        }
    }

    /// Total number of weights: hidden matrix plus output matrix.
    pub fn weight_count(&self) -> usize {
        self.n_hidden * self.n_in + self.n_out * self.n_hidden
    }
}

impl Default for Topology {
    fn default() -> Self {
        Topology::new(30, 3, 2)
    }
}

/// All network weights as one flat parameter vector with layer-shaped views.
///
/// Layout: the first `n_hidden * n_in` entries are the input-to-hidden
/// matrix in row-major order (one row per hidden neuron), followed by the
/// hidden-to-output matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    topology: Topology,
    flat: Vec<f64>,
}

impl WeightSet {
    pub fn zeros(topology: Topology) -> Self {
        WeightSet {
            flat: vec![0.0; topology.weight_count()],
            topology,
        }
    }

    pub fn from_flat(topology: Topology, flat: Vec<f64>) -> Result<Self, NetworkError> {
        if flat.len() != topology.weight_count() {
            return Err(NetworkError::WeightLength {
                expected: topology.weight_count(),
                found: flat.len(),
            });
        }
        Ok(WeightSet { topology, flat })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    /// Input-to-hidden weight row of hidden neuron `j`.
    pub fn w1_row(&self, j: usize) -> &[f64] {
        let n_in = self.topology.n_in;
        &self.flat[j * n_in..(j + 1) * n_in]
    }

    /// Hidden-to-output weight row of output neuron `o`.
    pub fn w2_row(&self, o: usize) -> &[f64] {
        let base = self.topology.n_hidden * self.topology.n_in;
        let n_hidden = self.topology.n_hidden;
        &self.flat[base + o * n_hidden..base + (o + 1) * n_hidden]
    }

    pub fn w1_row_mut(&mut self, j: usize) -> &mut [f64] {
        let n_in = self.topology.n_in;
        &mut self.flat[j * n_in..(j + 1) * n_in]
    }

    pub fn w2_row_mut(&mut self, o: usize) -> &mut [f64] {
        let base = self.topology.n_hidden * self.topology.n_in;
        let n_hidden = self.topology.n_hidden;
        &mut self.flat[base + o * n_hidden..base + (o + 1) * n_hidden]
    }
}

/// Output firing rates, one per output neuron, each a multiple of `1/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn rates(&self) -> &[f64] {
        &self.0
    }
}

/// Output spikes and rates of a single forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Output spikes, row-major `(neuron, time)`.
    pub out_spikes: Vec<u8>,
    pub rates: RateVector,
}

/// Simulate one sample through the network.
///
/// `input` is one sample block of a [`SpikeTrainBatch`]: `n_in * t_bins`
/// binary entries, bin-minor. Neuron states are zero-initialized, so
/// repeated calls with the same arguments give identical outputs.
pub fn forward(
    w: &WeightSet,
    input: &[u8],
    t_bins: usize,
    cfg: &LifConfig,
) -> Result<ForwardOutput, NetworkError> {
    let topo = w.topology;
    if input.len() != topo.n_in * t_bins {
        return Err(NetworkError::InputShape {
            expected: topo.n_in * t_bins,
            found: input.len() / t_bins.max(1),
        });
    }
    let mut hidden = vec![NeuronState::default(); topo.n_hidden];
    let mut output = vec![NeuronState::default(); topo.n_out];
    let mut hidden_spikes = vec![false; topo.n_hidden];
    let mut out_spikes = vec![0u8; topo.n_out * t_bins];
    let mut counts = vec![0u32; topo.n_out];

    for k in 0..t_bins {
        for j in 0..topo.n_hidden {
            let row = w.w1_row(j);
            let mut current = 0.0;
            for f in 0..topo.n_in {
                if input[f * t_bins + k] != 0 {
                    current += row[f];
                }
            }
            let (next, spike) = lif_step(hidden[j], current, cfg);
            hidden[j] = next;
            hidden_spikes[j] = spike;
        }
        for o in 0..topo.n_out {
            let row = w.w2_row(o);
            let mut current = 0.0;
            for (j, &spiked) in hidden_spikes.iter().enumerate() {
                if spiked {
                    current += row[j];
                }
            }
            let (next, spike) = lif_step(output[o], current, cfg);
            output[o] = next;
            if spike {
                out_spikes[o * t_bins + k] = 1;
                counts[o] += 1;
            }
        }
    }

    let rates = RateVector(
        counts
            .iter()
            .map(|&c| f64::from(c) / t_bins as f64)
            .collect(),
    );
    Ok(ForwardOutput { out_spikes, rates })
}

/// [`forward`] over every sample of a batch, order preserved.
pub fn batch_rates(
    w: &WeightSet,
    batch: &SpikeTrainBatch,
    cfg: &LifConfig,
) -> Result<Vec<RateVector>, NetworkError> {
    let mut rates = Vec::with_capacity(batch.n_samples());
    for i in 0..batch.n_samples() {
        rates.push(forward(w, batch.sample(i), batch.t_bins(), cfg)?.rates);
    }
    Ok(rates)
}

/// Predicted class: argmax over rates, ties broken by the lowest index.
pub fn predict(rates: &RateVector) -> usize {
    let mut best = 0;
    for (i, &r) in rates.0.iter().enumerate() {
        if r > rates.0[best] {
            best = i;
        }
    }
    best
}
