//! Newline-delimited JSON wire protocol for forward evaluation, plus the
//! reference server that wraps the in-process simulator.
//!
//! One request per sample:
//! `{"id":<int>,"weights":[...],"spikes":[[<T ints>] x F],"T":<int>}`
//! answered by `{"id":<int>,"rates":[...]}`. Undecodable lines are answered
//! with `{"id":null,"error":"parse"}` and the connection stays open.

use std::io::{BufRead, Write};
use std::net::TcpListener;

use serde::{Deserialize, Serialize};

use crate::network::{forward, Topology, WeightSet};
use crate::neuron::LifConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRequest {
    pub id: u64,
    pub weights: Vec<f64>,
    /// Binary spike rows, one row of `T` entries per input feature.
    pub spikes: Vec<Vec<u8>>,
    #[serde(rename = "T")]
    pub t_bins: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReply {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalReply {
    fn parse_failure() -> Self {
        EvalReply {
            id: None,
            rates: None,
            error: Some("parse".to_string()),
        }
    }

    fn failure(id: u64, message: String) -> Self {
        EvalReply {
            id: Some(id),
            rates: None,
            error: Some(message),
        }
    }

    fn success(id: u64, rates: Vec<f64>) -> Self {
        EvalReply {
            id: Some(id),
            rates: Some(rates),
            error: None,
        }
    }
}

/// Reference chip server: evaluates requests with the in-process simulator.
#[derive(Debug, Clone)]
pub struct ChipServer {
    cfg: LifConfig,
    topology: Topology,
}

impl ChipServer {
    pub fn new(cfg: LifConfig, topology: Topology) -> Self {
        ChipServer { cfg, topology }
    }

    /// Evaluate one request line and render the reply line (no trailing newline).
    pub fn handle_line(&self, line: &str) -> String {
        let reply = match serde_json::from_str::<EvalRequest>(line) {
            Ok(req) => self.evaluate(req),
            Err(_) => EvalReply::parse_failure(),
        };
        serde_json::to_string(&reply).expect("reply serialization cannot fail")
    }

    fn evaluate(&self, req: EvalRequest) -> EvalReply {
        if req.weights.len() != self.topology.weight_count() {
            return EvalReply::failure(
                req.id,
                format!(
                    "expected {} weights, got {}",
                    self.topology.weight_count(),
                    req.weights.len()
                ),
            );
        }
        if req.spikes.len() != self.topology.n_in {
            return EvalReply::failure(
                req.id,
                format!(
                    "expected {} spike rows, got {}",
                    self.topology.n_in,
                    req.spikes.len()
                ),
            );
        }
        let mut input = Vec::with_capacity(self.topology.n_in * req.t_bins);
        for row in &req.spikes {
            if row.len() != req.t_bins {
                return EvalReply::failure(
                    req.id,
                    format!("spike row of length {}, expected T={}", row.len(), req.t_bins),
                );
            }
            input.extend_from_slice(row);
        }
        let w = match WeightSet::from_flat(self.topology, req.weights) {
            Ok(w) => w,
            Err(e) => return EvalReply::failure(req.id, e.to_string()),
        };
        match forward(&w, &input, req.t_bins, &self.cfg) {
            Ok(out) => EvalReply::success(req.id, out.rates.0),
            Err(e) => EvalReply::failure(req.id, e.to_string()),
        }
    }

    /// Serve one line-oriented connection until EOF. Returns the number of
    /// requests handled.
    pub fn serve_connection<R: BufRead, W: Write>(
        &self,
        reader: R,
        mut writer: W,
    ) -> std::io::Result<u64> {
        let mut handled = 0;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let reply = self.handle_line(&line);
            writeln!(writer, "{reply}")?;
            writer.flush()?;
            handled += 1;
        }
        Ok(handled)
    }

    /// Accept TCP connections sequentially, forever. Logs the per-connection
    /// request count to stderr.
    pub fn serve_tcp(&self, listener: TcpListener) -> std::io::Result<()> {
        let mut total = 0u64;
        for stream in listener.incoming() {
            let stream = stream?;
            let peer = stream.peer_addr()?;
            let reader = std::io::BufReader::new(stream.try_clone()?);
            match self.serve_connection(reader, stream) {
                Ok(n) => {
                    total += n;
                    eprintln!("served {n} requests from {peer} ({total} total)");
                }
                Err(e) => eprintln!("connection from {peer} ended with error: {e}"),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn server() -> ChipServer {
        ChipServer::new(LifConfig::default(), Topology::new(2, 1, 1))
    }

    #[test]
    fn malformed_line_gets_parse_error_reply() {
        let reply = server().handle_line("{not json");
        let parsed: EvalReply = serde_json::from_str(&reply).unwrap();
        assert_eq!(parsed.id, None);
        assert_eq!(parsed.error.as_deref(), Some("parse"));
    }

    #[test]
    fn id_is_echoed() {
        let req = EvalRequest {
            id: 77,
            weights: vec![0.0, 0.0, 0.0],
            spikes: vec![vec![1, 0], vec![0, 1]],
            t_bins: 2,
        };
        let reply = server().handle_line(&serde_json::to_string(&req).unwrap());
        let parsed: EvalReply = serde_json::from_str(&reply).unwrap();
        assert_eq!(parsed.id, Some(77));
        assert_eq!(parsed.rates, Some(vec![0.0]));
    }

    #[test]
    fn wrong_weight_count_is_an_error_reply() {
        let req = EvalRequest {
            id: 1,
            weights: vec![0.0; 5],
            spikes: vec![vec![1], vec![0]],
            t_bins: 1,
        };
        let reply = server().handle_line(&serde_json::to_string(&req).unwrap());
        let parsed: EvalReply = serde_json::from_str(&reply).unwrap();
        assert_eq!(parsed.id, Some(1));
        assert!(parsed.error.unwrap().contains("weights"));
    }

    #[test]
    fn connection_survives_bad_lines() {
        let input = b"garbage\n{\"id\":3,\"weights\":[0,0,0],\"spikes\":[[0],[0]],\"T\":1}\n";
        let mut out = Vec::new();
        let n = server().serve_connection(&input[..], &mut out).unwrap();
        assert_eq!(n, 2);
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().trim().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("parse"));
        assert!(lines[1].contains("\"id\":3"));
    }

    #[test]
    fn float_values_round_trip_exactly() {
        let w = vec![0.1 + 0.2, std::f64::consts::PI, -1.0 / 3.0];
        let req = EvalRequest {
            id: 9,
            weights: w.clone(),
            spikes: vec![vec![1], vec![1]],
            t_bins: 1,
        };
        let json = serde_json::to_string(&req).unwrap();
        let back: EvalRequest = serde_json::from_str(&json).unwrap();
        for (a, b) in w.iter().zip(back.weights.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
