//! Chip-in-the-loop evaluation handle.
//!
//! Trainers treat the chip as a forward-only black box: weights and spike
//! trains in, output rates back. The simulated backend runs the network
//! in-process; the external backend speaks the wire protocol of
//! [`crate::protocol`] to a device on a TCP endpoint or on the stdio of a
//! child process.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use thiserror::Error;

use crate::data::SpikeTrainBatch;
use crate::network::{forward, NetworkError, RateVector, Topology, WeightSet};
use crate::neuron::LifConfig;
use crate::protocol::{EvalReply, EvalRequest};

const READ_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ChipError {
    #[error(transparent)]
    Shape(#[from] NetworkError),
    #[error("cannot reach chip endpoint {endpoint}: {message}")]
    Connect { endpoint: String, message: String },
    #[error("transport failure at sample {sample_index}: {message}")]
    Transport { sample_index: usize, message: String },
    #[error("invalid chip spec {0:?} (expected `simulated`, `external:<host:port>` or `external:stdio:<command>`)")]
    BadSpec(String),
}

/// How a [`ChipHandle`] should be constructed. Cloneable description used by
/// the experiment harness, which builds one handle per fold.
#[derive(Debug, Clone, PartialEq)]
pub enum ChipSpec {
    Simulated,
    External(String),
}

impl ChipSpec {
    /// Parse a `--chip` argument: `simulated` or `external:<endpoint>`.
    pub fn parse(spec: &str) -> Result<Self, ChipError> {
        if spec == "simulated" {
            Ok(ChipSpec::Simulated)
        } else if let Some(endpoint) = spec.strip_prefix("external:") {
            if endpoint.is_empty() {
                Err(ChipError::BadSpec(spec.to_string()))
            } else {
                Ok(ChipSpec::External(endpoint.to_string()))
            }
        } else {
            Err(ChipError::BadSpec(spec.to_string()))
        }
    }

    pub fn build(&self, cfg: LifConfig, topology: Topology) -> Result<ChipHandle, ChipError> {
        match self {
            ChipSpec::Simulated => Ok(ChipHandle::simulated(cfg, topology)),
            ChipSpec::External(endpoint) => ChipHandle::external(endpoint, topology),
        }
    }
}

impl std::fmt::Display for ChipSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChipSpec::Simulated => write!(f, "simulated"),
            ChipSpec::External(e) => write!(f, "external:{e}"),
        }
    }
}

enum Backend {
    Simulated { cfg: LifConfig },
    External { transport: Box<dyn Transport>, next_id: u64 },
}

/// Forward-evaluation device handle with a monotone per-sample counter.
pub struct ChipHandle {
    backend: Backend,
    topology: Topology,
    eval_count: u64,
}

impl ChipHandle {
    /// In-process simulated chip.
    pub fn simulated(cfg: LifConfig, topology: Topology) -> Self {
        ChipHandle {
            backend: Backend::Simulated { cfg },
            topology,
            eval_count: 0,
        }
    }

    /// External chip. `endpoint` is `<host:port>` for TCP or
    /// `stdio:<command and args>` for a child process speaking the protocol
    /// on its standard streams.
    pub fn external(endpoint: &str, topology: Topology) -> Result<Self, ChipError> {
        let transport: Box<dyn Transport> = if let Some(cmd) = endpoint.strip_prefix("stdio:") {
            Box::new(ChildTransport::spawn(cmd)?)
        } else {
            Box::new(TcpTransport::connect(endpoint)?)
        };
        Ok(ChipHandle {
            backend: Backend::External {
                transport,
                next_id: 0,
            },
            topology,
            eval_count: 0,
        })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Number of samples evaluated so far. Never decreases.
    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    /// Evaluate output rates for every sample of the batch.
    ///
    /// On a transport failure the error names the first sample that did not
    /// complete; `eval_count` reflects the samples that did.
    pub fn eval(
        &mut self,
        w: &WeightSet,
        batch: &SpikeTrainBatch,
    ) -> Result<Vec<RateVector>, ChipError> {
        let mut rates = Vec::with_capacity(batch.n_samples());
        for i in 0..batch.n_samples() {
            let r = match &mut self.backend {
                Backend::Simulated { cfg } => {
                    forward(w, batch.sample(i), batch.t_bins(), cfg)?.rates
                }
                Backend::External { transport, next_id } => {
                    let id = *next_id;
                    *next_id += 1;
                    eval_remote(transport.as_mut(), id, i, w, batch)?
                }
            };
            self.eval_count += 1;
            rates.push(r);
        }
        Ok(rates)
    }
}

fn eval_remote(
    transport: &mut dyn Transport,
    id: u64,
    sample_index: usize,
    w: &WeightSet,
    batch: &SpikeTrainBatch,
) -> Result<RateVector, ChipError> {
    let t = batch.t_bins();
    let sample = batch.sample(sample_index);
    let spikes: Vec<Vec<u8>> = (0..batch.n_features())
        .map(|f| sample[f * t..(f + 1) * t].to_vec())
        .collect();
    let request = EvalRequest {
        id,
        weights: w.flat().to_vec(),
        spikes,
        t_bins: t,
    };
    let line = serde_json::to_string(&request).expect("request serialization cannot fail");
    let transport_err = |message: String| ChipError::Transport {
        sample_index,
        message,
    };
    let reply_line = transport
        .roundtrip(&line)
        .map_err(|e| transport_err(e.to_string()))?;
    let reply: EvalReply = serde_json::from_str(&reply_line)
        .map_err(|e| transport_err(format!("malformed reply: {e}")))?;
    if let Some(error) = reply.error {
        return Err(transport_err(format!("device error: {error}")));
    }
    if reply.id != Some(id) {
        return Err(transport_err(format!(
            "reply id {:?} does not match request id {id}",
            reply.id
        )));
    }
    reply
        .rates
        .map(RateVector)
        .ok_or_else(|| transport_err("reply carries neither rates nor error".to_string()))
}

/// Line-oriented request/reply channel.
trait Transport {
    fn roundtrip(&mut self, line: &str) -> std::io::Result<String>;
}

struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    fn connect(endpoint: &str) -> Result<Self, ChipError> {
        let connect_err = |message: String| ChipError::Connect {
            endpoint: endpoint.to_string(),
            message,
        };
        let stream = TcpStream::connect(endpoint).map_err(|e| connect_err(e.to_string()))?;
        stream
            .set_read_timeout(Some(READ_TIMEOUT))
            .map_err(|e| connect_err(e.to_string()))?;
        let writer = stream.try_clone().map_err(|e| connect_err(e.to_string()))?;
        Ok(TcpTransport {
            reader: BufReader::new(stream),
            writer,
        })
    }
}

impl Transport for TcpTransport {
    fn roundtrip(&mut self, line: &str) -> std::io::Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        read_reply_line(&mut self.reader)
    }
}

struct ChildTransport {
    child: Child,
    stdout: BufReader<std::process::ChildStdout>,
}

impl ChildTransport {
    fn spawn(command_line: &str) -> Result<Self, ChipError> {
        let connect_err = |message: String| ChipError::Connect {
            endpoint: format!("stdio:{command_line}"),
            message,
        };
        let mut parts = command_line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| connect_err("empty command".to_string()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| connect_err(e.to_string()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| connect_err("child has no stdout".to_string()))?;
        Ok(ChildTransport {
            child,
            stdout: BufReader::new(stdout),
        })
    }
}

impl Transport for ChildTransport {
    fn roundtrip(&mut self, line: &str) -> std::io::Result<String> {
        let stdin = self
            .child
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::other("child stdin closed"))?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()?;
        read_reply_line(&mut self.stdout)
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved server exit on EOF.
        self.child.stdin.take();
        let _ = self.child.wait();
    }
}

fn read_reply_line<R: BufRead>(reader: &mut R) -> std::io::Result<String> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "connection closed before reply",
        ));
    }
    Ok(line.trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::batch_rates;
    use rand::{Rng, SeedableRng};

    fn random_case(seed: u64) -> (WeightSet, SpikeTrainBatch, LifConfig) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let topo = Topology::default();
        let flat: Vec<f64> = (0..topo.weight_count())
            .map(|_| rng.random_range(-4.0..4.0))
            .collect();
        let w = WeightSet::from_flat(topo, flat).unwrap();
        let spikes: Vec<u8> = (0..3 * 30 * 10).map(|_| u8::from(rng.random::<bool>())).collect();
        let batch = SpikeTrainBatch::from_raw(spikes, 3, 30, 10);
        let cfg = LifConfig::new(0.5, 1.0, rng.random_range(0.0..4.0)).unwrap();
        (w, batch, cfg)
    }

    #[test]
    fn simulated_backend_delegates_to_batch_rates() {
        for seed in 0..20 {
            let (w, batch, cfg) = random_case(seed);
            let mut chip = ChipHandle::simulated(cfg, w.topology());
            let via_chip = chip.eval(&w, &batch).unwrap();
            let direct = batch_rates(&w, &batch, &cfg).unwrap();
            assert_eq!(via_chip, direct);
            assert_eq!(chip.eval_count(), batch.n_samples() as u64);
        }
    }

    #[test]
    fn eval_count_accumulates() {
        let (w, batch, cfg) = random_case(3);
        let mut chip = ChipHandle::simulated(cfg, w.topology());
        chip.eval(&w, &batch).unwrap();
        chip.eval(&w, &batch).unwrap();
        assert_eq!(chip.eval_count(), 2 * batch.n_samples() as u64);
    }

    #[test]
    fn chip_spec_parsing() {
        assert_eq!(ChipSpec::parse("simulated").unwrap(), ChipSpec::Simulated);
        assert_eq!(
            ChipSpec::parse("external:127.0.0.1:9000").unwrap(),
            ChipSpec::External("127.0.0.1:9000".to_string())
        );
        assert!(matches!(
            ChipSpec::parse("quantum"),
            Err(ChipError::BadSpec(_))
        ));
        assert!(matches!(
            ChipSpec::parse("external:"),
            Err(ChipError::BadSpec(_))
        ));
    }
}
