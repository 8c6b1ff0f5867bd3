//! Pair-similarity oracles: the trait, in-process toy games and a
//! line-delimited JSON child-process transport.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::FeatureGrid;
use crate::error::{Error, Result};

pub const DEFAULT_ORACLE_TIMEOUT: Duration = Duration::from_secs(30);

/// Something that scores coalitions of a fixed image pair.
pub trait PairOracle {
    /// One similarity in `[0, 1]` per mask; `mask[f]` is true when feature `f` is present.
    fn evaluate(&mut self, masks: &[Vec<bool>]) -> Result<Vec<f64>>;
}

/// Wraps an oracle and rejects replies of the wrong length or outside `[0, 1]`,
/// counting every mask sent.
pub struct ValidatingOracle<'a, O: PairOracle + ?Sized> {
    inner: &'a mut O,
    pub calls: usize,
}

impl<'a, O: PairOracle + ?Sized> ValidatingOracle<'a, O> {
    pub fn new(inner: &'a mut O) -> Self {
        ValidatingOracle { inner, calls: 0 }
    }
}

impl<O: PairOracle + ?Sized> PairOracle for ValidatingOracle<'_, O> {
    fn evaluate(&mut self, masks: &[Vec<bool>]) -> Result<Vec<f64>> {
        self.calls += masks.len();
        let sims = self.inner.evaluate(masks)?;
        if sims.len() != masks.len() {
            return Err(Error::OracleProtocol(format!(
                "oracle returned {} values for {} masks",
                sims.len(),
                masks.len()
            )));
        }
        if let Some(bad) = sims.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::OracleProtocol(format!(
                "oracle value {bad} outside [0, 1]"
            )));
        }
        Ok(sims)
    }
}

/// In-process oracle backed by a value function over masks.
pub struct FnOracle<F: FnMut(&[bool]) -> f64> {
    f: F,
}

impl<F: FnMut(&[bool]) -> f64> FnOracle<F> {
    pub fn new(f: F) -> Self {
        FnOracle { f }
    }
}

impl<F: FnMut(&[bool]) -> f64> PairOracle for FnOracle<F> {
    fn evaluate(&mut self, masks: &[Vec<bool>]) -> Result<Vec<f64>> {
        Ok(masks.iter().map(|m| (self.f)(m)).collect())
    }
}

/// Toy games with known Shapley values, all valued in `[0, 1]`.
pub mod toy {
    use super::FnOracle;

    pub type Toy = FnOracle<Box<dyn FnMut(&[bool]) -> f64 + Send>>;

    fn boxed(f: impl FnMut(&[bool]) -> f64 + Send + 'static) -> Toy {
        FnOracle::new(Box::new(f))
    }

    fn dot(w: &[f64], m: &[bool]) -> f64 {
        w.iter().zip(m).filter(|(_, &b)| b).map(|(w, _)| w).sum()
    }

    /// `|S| / n`; every feature is worth `1/n`.
    pub fn additive(n: usize) -> Toy {
        boxed(move |m| m.iter().filter(|&&b| b).count() as f64 / n as f64)
    }

    /// `Σ_{f∈S} w_f`; weights should be nonnegative and sum to at most 1.
    /// A zero weight makes a dummy feature.
    pub fn weighted(weights: Vec<f64>) -> Toy {
        boxed(move |m| dot(&weights, m))
    }

    /// 1 when every feature is present.
    pub fn and() -> Toy {
        boxed(|m| if m.iter().all(|&b| b) { 1.0 } else { 0.0 })
    }

    /// The same value whatever the coalition, like a pair of identical images.
    pub fn constant(v: f64) -> Toy {
        boxed(move |_| v)
    }

    /// `(Σ_{f∈S} w_f)^2`: interactions between all pairs of features.
    pub fn quadratic(weights: Vec<f64>) -> Toy {
        boxed(move |m| dot(&weights, m).powi(2))
    }

    /// 1 when `Σ_{f∈S} w_f ≥ t`.
    pub fn threshold(weights: Vec<f64>, t: f64) -> Toy {
        boxed(move |m| if dot(&weights, m) >= t { 1.0 } else { 0.0 })
    }

    /// Weights `(f + 1) / Σ (k + 1)` for `n` features: all positive, summing
    /// to 1, later features weigh more.
    pub fn ramp_weights(n: usize) -> Vec<f64> {
        let total = (n * (n + 1) / 2) as f64;
        (0..n).map(|f| (f + 1) as f64 / total).collect()
    }

    /// The value function of a toy for exact enumeration.
    pub fn value_fn(toy: &mut Toy) -> impl FnMut(&[bool]) -> f64 + '_ {
        move |m| (toy.f)(m)
    }
}

// ---- wire protocol -------------------------------------------------------

/// Requests from the engine, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum EngineRequest {
    Init { pair_id: String },
    Eval { masks: Vec<Vec<u8>> },
    Close,
}

/// Handshake reply describing the grid of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAdvert {
    pub features_per_image: usize,
    pub width: u32,
    pub height: u32,
    pub cell: u32,
}

impl GridAdvert {
    pub fn from_grid(g: &FeatureGrid) -> Self {
        GridAdvert {
            features_per_image: g.features_per_image(),
            width: g.image_width,
            height: g.image_height,
            cell: g.cell,
        }
    }

    pub fn to_grid(self) -> Result<FeatureGrid> {
        let g = FeatureGrid::new(self.width, self.height, self.cell)
            .map_err(|e| Error::OracleProtocol(format!("bad grid advert: {e}")))?;
        if g.features_per_image() != self.features_per_image {
            return Err(Error::OracleProtocol(format!(
                "advertised {} features per image, but a {}x{} image with {}px cells has {}",
                self.features_per_image,
                self.width,
                self.height,
                self.cell,
                g.features_per_image()
            )));
        }
        Ok(g)
    }
}

/// Any reply from the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OracleReply {
    Error { error: String },
    Sims { sims: Vec<f64> },
    Grid(GridAdvert),
}

/// Oracle running as a child process speaking line-delimited JSON on stdio.
pub struct ProcessOracle {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    reader: Option<JoinHandle<()>>,
    timeout: Duration,
    closed: bool,
}

impl ProcessOracle {
    /// Spawns `command` (program then arguments), performs the handshake for
    /// `pair_id` and returns the advertised grid.
    pub fn spawn(command: &[String], pair_id: &str, timeout: Duration) -> Result<(Self, FeatureGrid)> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty oracle command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::OracleProtocol(format!("cannot start oracle `{program}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut oracle = ProcessOracle {
            child,
            stdin,
            lines: rx,
            reader: Some(reader),
            timeout,
            closed: false,
        };
        oracle.send(&EngineRequest::Init {
            pair_id: pair_id.to_string(),
        })?;
        let grid = match oracle.receive()? {
            OracleReply::Grid(advert) => advert.to_grid()?,
            other => {
                return Err(Error::OracleProtocol(format!(
                    "expected a grid advert after init, got {other:?}"
                )))
            }
        };
        Ok((oracle, grid))
    }

    fn send(&mut self, req: &EngineRequest) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::OracleProtocol("oracle input already closed".into()))?;
        let mut line = serde_json::to_string(req)?;
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::OracleProtocol(format!("writing to oracle: {e}")))
    }

    fn receive(&mut self) -> Result<OracleReply> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::OracleProtocol(format!("reading from oracle: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(Error::OracleTimeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.wait().ok();
                return Err(Error::OracleProtocol(format!(
                    "oracle closed its output (exit status {status:?})"
                )));
            }
        };
        let reply: OracleReply = serde_json::from_str(&line)
            .map_err(|e| Error::OracleProtocol(format!("malformed reply `{line}`: {e}")))?;
        if let OracleReply::Error { error } = &reply {
            return Err(Error::OracleProtocol(format!("oracle reported: {error}")));
        }
        Ok(reply)
    }

    /// Sends `close` and waits for the child to exit.
    pub fn close(mut self) -> Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let sent = self.send(&EngineRequest::Close);
        self.stdin = None; // EOF for oracles that ignore `close`
        let deadline = std::time::Instant::now() + self.timeout;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if std::time::Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(5))
                }
                _ => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    break;
                }
            }
        }
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
        sent
    }
}

impl PairOracle for ProcessOracle {
    fn evaluate(&mut self, masks: &[Vec<bool>]) -> Result<Vec<f64>> {
        let wire = masks
            .iter()
            .map(|m| m.iter().map(|&b| b as u8).collect())
            .collect();
        self.send(&EngineRequest::Eval { masks: wire })?;
        match self.receive()? {
            OracleReply::Sims { sims } => Ok(sims),
            other => Err(Error::OracleProtocol(format!(
                "expected sims after eval, got {other:?}"
            ))),
        }
    }
}

impl Drop for ProcessOracle {
    fn drop(&mut self) {
        if !self.closed {
            self.closed = true;
            self.stdin = None;
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Serves the protocol over `input`/`output` with the weighted toy game
/// [`toy::ramp_weights`] on `grid`.
///
/// Returns an error on the first malformed record, after writing an `error`
/// reply; `close` or end of input ends the session cleanly.
pub fn serve_toy_protocol<R: BufRead, W: Write>(grid: FeatureGrid, input: R, mut output: W) -> Result<()> {
    let n = grid.feature_count();
    let weights = toy::ramp_weights(n);
    let reply = |r: &OracleReply, out: &mut W| -> Result<()> {
        let mut line = serde_json::to_string(r)?;
        line.push('\n');
        out.write_all(line.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io("<stdout>", e))
    };
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let req: EngineRequest = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let msg = format!("malformed record: {e}");
                reply(&OracleReply::Error { error: msg.clone() }, &mut output)?;
                return Err(Error::OracleProtocol(msg));
            }
        };
        match req {
            EngineRequest::Init { .. } => reply(&OracleReply::Grid(GridAdvert::from_grid(&grid)), &mut output)?,
            EngineRequest::Eval { masks } => {
                if let Some(bad) = masks.iter().find(|m| m.len() != n || m.iter().any(|&b| b > 1)) {
                    let msg = format!("mask of length {} (expected {n} bits)", bad.len());
                    reply(&OracleReply::Error { error: msg.clone() }, &mut output)?;
                    return Err(Error::OracleProtocol(msg));
                }
                let sims = masks
                    .iter()
                    .map(|m| {
                        let s: f64 = m.iter().zip(&weights).filter(|(&b, _)| b == 1).map(|(_, w)| w).sum();
                        s.min(1.0)
                    })
                    .collect();
                reply(&OracleReply::Sims { sims }, &mut output)?;
            }
            EngineRequest::Close => return Ok(()),
        }
    }
    Ok(())
}
