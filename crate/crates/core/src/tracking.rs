//! The p-successive-update tracking code.
//!
//! Every `s` slots the encoder observes a new sample `X_{ks}`. The `n R s`
//! bits of a sampling period are split into `m = s / p` sub-fragments of
//! `n R p` bits. At the start of each sub-fragment (`t = ks + jp`) the encoder
//! quantizes the decoder's current error on the latest sample and streams
//! the code over the next `p` slots, `n R` bits per slot. Messages sent at
//! slot `t` arrive at `t + 1`. The decoder adds each completed update to its
//! estimate of `X_{ks}` and outputs `alpha^{t - ks}` times that estimate.
//! After a quantizer failure both sides latch: the decoder outputs zero.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::arprocess::Trajectory;
use crate::error::{Error, Result};
use crate::quantizer::{Bits, Quantizer, QuantizerOutput};
use crate::scalar::{dist_sq, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub n: usize,
    /// `n R`: payload bits carried by each slot.
    pub bits_per_slot: usize,
    /// Sampling period in slots.
    pub s: usize,
    /// Update period in slots; must divide `s`.
    pub p: usize,
    pub horizon: usize,
    #[serde(default)]
    pub record_trace: bool,
}

impl TrackingConfig {
    pub fn new(n: usize, bits_per_slot: usize, s: usize, p: usize, horizon: usize) -> Result<Self> {
        let cfg = TrackingConfig {
            n,
            bits_per_slot,
            s,
            p,
            horizon,
            record_trace: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a configuration from a per-dimension rate; `n * rate` must be
    /// a whole number of bits.
    pub fn from_rate(n: usize, rate: f64, s: usize, p: usize, horizon: usize) -> Result<Self> {
        Self::new(n, slot_bits(n, rate)?, s, p, horizon)
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("dimension n must be at least 1"));
        }
        if self.bits_per_slot == 0 {
            return Err(Error::invalid("each slot must carry at least one bit"));
        }
        if self.s == 0 || self.p == 0 || self.p > self.s || !self.s.is_multiple_of(self.p) {
            return Err(Error::invalid(format!(
                "update period p = {} must divide sampling period s = {}",
                self.p, self.s
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(())
    }

    /// Sub-fragments per sampling period.
    pub fn m(&self) -> usize {
        self.s / self.p
    }

    /// `n R p`: bits available to one quantizer update.
    pub fn update_bits(&self) -> usize {
        self.bits_per_slot * self.p
    }

    /// Bits per dimension per slot.
    pub fn rate(&self) -> f64 {
        self.bits_per_slot as f64 / self.n as f64
    }
}

/// `n * rate` as an integer bit count.
pub fn slot_bits(n: usize, rate: f64) -> Result<usize> {
    let bits = n as f64 * rate;
    let rounded = bits.round();
    if !(rate > 0.0) || !rate.is_finite() || (bits - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::invalid(format!(
            "n * rate = {n} * {rate} is not a positive whole number of bits"
        )));
    }
    Ok(rounded as usize)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotMessage {
    /// `n R` payload bits.
    Chunk(Bits),
    /// Encoder failure.
    Failure,
}

impl SlotMessage {
    pub fn is_failure(&self) -> bool {
        matches!(self, SlotMessage::Failure)
    }
}

/// Receiver state machine. Also run inside the encoder as its shadow copy.
pub struct Decoder<'q, S: Scalar> {
    quantizer: &'q dyn Quantizer<S>,
    alpha: S,
    s: usize,
    bits_per_slot: usize,
    update_bits: usize,
    next_t: usize,
    k: usize,
    latest: Vec<S>,
    buffer: Bits,
    failed: bool,
    output: Vec<S>,
}

impl<'q, S: Scalar> Decoder<'q, S> {
    pub fn new(cfg: &TrackingConfig, alpha: S, quantizer: &'q dyn Quantizer<S>) -> Result<Self> {
        check_quantizer(cfg, quantizer)?;
        Ok(Decoder {
            quantizer,
            alpha,
            s: cfg.s,
            bits_per_slot: cfg.bits_per_slot,
            update_bits: cfg.update_bits(),
            next_t: 0,
            k: 0,
            latest: vec![S::zero(); cfg.n],
            buffer: Bits::with_capacity(cfg.update_bits()),
            failed: false,
            output: vec![S::zero(); cfg.n],
        })
    }

    /// Processes the message that arrives at slot `t` (sent at `t - 1`;
    /// `None` at `t = 0`) and returns the estimate of `X_t`.
    pub fn tick(&mut self, t: usize, arrived: Option<&SlotMessage>) -> Result<&[S]> {
        if t != self.next_t {
            return Err(Error::contract(format!(
                "decoder expected slot {}, got {t}",
                self.next_t
            )));
        }
        self.next_t += 1;
        match (t, arrived) {
            (0, Some(_)) => return Err(Error::contract("no message can arrive at slot 0")),
            (t, None) if t > 0 => {
                return Err(Error::contract(format!("missing message at slot {t}")))
            }
            _ => {}
        }
        if self.failed {
            return Ok(&self.output);
        }
        match arrived {
            Some(SlotMessage::Failure) => {
                self.failed = true;
                self.latest.iter_mut().for_each(|v| *v = S::zero());
                self.output.iter_mut().for_each(|v| *v = S::zero());
                self.buffer.clear();
                return Ok(&self.output);
            }
            Some(SlotMessage::Chunk(chunk)) => {
                if chunk.len() != self.bits_per_slot {
                    return Err(Error::contract(format!(
                        "slot chunk has {} bits, expected {}",
                        chunk.len(),
                        self.bits_per_slot
                    )));
                }
                self.buffer.extend_from_bitslice(chunk);
                if self.buffer.len() == self.update_bits {
                    let update = self
                        .quantizer
                        .reconstruct(&self.buffer[..self.quantizer.bits()])?;
                    for (v, u) in self.latest.iter_mut().zip(update) {
                        *v += u;
                    }
                    self.buffer.clear();
                }
            }
            None => {}
        }
        if t > 0 && t.is_multiple_of(self.s) {
            if !self.buffer.is_empty() {
                return Err(Error::contract("sub-fragment straddles a sampling instant"));
            }
            let decay = self.alpha.powi(self.s as i32);
            self.latest.iter_mut().for_each(|v| *v *= decay);
            self.k = t / self.s;
        }
        let decay = self.alpha.powi((t - self.k * self.s) as i32);
        for (o, &v) in self.output.iter_mut().zip(&self.latest) {
            *o = decay * v;
        }
        Ok(&self.output)
    }

    /// Current estimate of the latest sample `X_{ks}`.
    pub fn sample_estimate(&self) -> &[S] {
        &self.latest
    }

    /// Last value returned by [`Decoder::tick`].
    pub fn output(&self) -> &[S] {
        &self.output
    }

    pub fn sample_index(&self) -> usize {
        self.k
    }

    pub fn failed(&self) -> bool {
        self.failed
    }
}

/// Transmitter state machine with an embedded shadow decoder.
pub struct Encoder<'q, S: Scalar> {
    shadow: Decoder<'q, S>,
    quantizer: &'q dyn Quantizer<S>,
    n: usize,
    p: usize,
    bits_per_slot: usize,
    update_bits: usize,
    pending: VecDeque<Bits>,
    last_sent: Option<SlotMessage>,
    last_error: Vec<S>,
    failed: bool,
    tau: Option<usize>,
}

impl<'q, S: Scalar> Encoder<'q, S> {
    pub fn new(cfg: &TrackingConfig, alpha: S, quantizer: &'q dyn Quantizer<S>) -> Result<Self> {
        Ok(Encoder {
            shadow: Decoder::new(cfg, alpha, quantizer)?,
            quantizer,
            n: cfg.n,
            p: cfg.p,
            bits_per_slot: cfg.bits_per_slot,
            update_bits: cfg.update_bits(),
            pending: VecDeque::with_capacity(cfg.p),
            last_sent: None,
            last_error: vec![S::zero(); cfg.n],
            failed: false,
            tau: None,
        })
    }

    /// Emits the message for slot `t`. `latest_sample` must be `X_{ks}` for
    /// `k = t / s`.
    pub fn tick(&mut self, t: usize, latest_sample: &[S]) -> Result<SlotMessage> {
        if latest_sample.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: latest_sample.len(),
            });
        }
        let arrived = self.last_sent.take();
        self.shadow.tick(t, arrived.as_ref())?;
        if self.failed {
            self.last_sent = Some(SlotMessage::Failure);
            return Ok(SlotMessage::Failure);
        }
        if t.is_multiple_of(self.p) {
            if !self.pending.is_empty() {
                return Err(Error::contract("previous sub-fragment not fully sent"));
            }
            for ((e, &x), &xh) in self
                .last_error
                .iter_mut()
                .zip(latest_sample)
                .zip(self.shadow.sample_estimate())
            {
                *e = x - xh;
            }
            match self.quantizer.quantize(&self.last_error)? {
                QuantizerOutput::Failure => {
                    self.failed = true;
                    self.tau = Some(t);
                    self.last_sent = Some(SlotMessage::Failure);
                    return Ok(SlotMessage::Failure);
                }
                QuantizerOutput::Code { mut bits, .. } => {
                    // Pad codes shorter than the budget.
                    bits.resize(self.update_bits, false);
                    for chunk in bits.chunks_exact(self.bits_per_slot) {
                        self.pending.push_back(chunk.to_bitvec());
                    }
                }
            }
        }
        let chunk = self
            .pending
            .pop_front()
            .ok_or_else(|| Error::contract("no pending chunk for this slot"))?;
        let msg = SlotMessage::Chunk(chunk);
        self.last_sent = Some(msg.clone());
        Ok(msg)
    }

    pub fn shadow(&self) -> &Decoder<'q, S> {
        &self.shadow
    }

    /// Most recent quantizer input `Y_{k,j}`.
    pub fn last_error(&self) -> &[S] {
        &self.last_error
    }

    pub fn failure_time(&self) -> Option<usize> {
        self.tau
    }
}

fn check_quantizer<S: Scalar>(cfg: &TrackingConfig, q: &dyn Quantizer<S>) -> Result<()> {
    cfg.validate()?;
    if q.dim() != cfg.n {
        return Err(Error::DimensionMismatch {
            expected: cfg.n,
            got: q.dim(),
        });
    }
    if q.bits() > cfg.update_bits() {
        return Err(Error::invalid(format!(
            "quantizer emits {} bits but an update carries only {}",
            q.bits(),
            cfg.update_bits()
        )));
    }
    Ok(())
}

/// Outcome of one tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    /// First slot at which the quantizer failed.
    pub tau: Option<usize>,
    /// Time-averaged per-dimension squared error.
    pub dbar: f64,
    /// `1 - dbar / sigma2`.
    pub delta_hat: f64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_t_error: Option<Vec<f64>>,
}

/// Runs encoder and decoder in lockstep over `cfg.horizon` slots.
///
/// Fails if the encoder's shadow decoder ever disagrees with the real one.
pub fn run_tracking<S: Scalar>(
    traj: &Trajectory<S>,
    cfg: &TrackingConfig,
    quantizer: &dyn Quantizer<S>,
) -> Result<TrialResult> {
    cfg.validate()?;
    if traj.horizon() < cfg.horizon {
        return Err(Error::invalid(format!(
            "trajectory has {} steps, horizon is {}",
            traj.horizon(),
            cfg.horizon
        )));
    }
    if traj.dim() != cfg.n {
        return Err(Error::DimensionMismatch {
            expected: cfg.n,
            got: traj.dim(),
        });
    }
    let alpha = traj.params.alpha;
    let mut encoder = Encoder::new(cfg, alpha, quantizer)?;
    let mut decoder = Decoder::new(cfg, alpha, quantizer)?;
    let nn = S::from_count(cfg.n);
    let mut in_flight: Option<SlotMessage> = None;
    let mut trace = Vec::with_capacity(if cfg.record_trace { cfg.horizon } else { 0 });
    let mut total = 0.0;

    for t in 0..cfg.horizon {
        let estimate = decoder.tick(t, in_flight.as_ref())?;
        let err = (dist_sq(traj.row(t), estimate) / nn).as_f64();
        let sample = traj.row((t / cfg.s) * cfg.s);
        let msg = encoder.tick(t, sample)?;
        if encoder.shadow().output() != decoder.output() {
            return Err(Error::contract(format!(
                "shadow decoder diverged at slot {t}"
            )));
        }
        total += err;
        if cfg.record_trace {
            trace.push(err);
        }
        in_flight = Some(msg);
    }

    let dbar = total / cfg.horizon as f64;
    let tau = encoder.failure_time();
    Ok(TrialResult {
        seed: traj.seed,
        tau,
        dbar,
        delta_hat: 1.0 - dbar / traj.params.sigma2.as_f64(),
        failed: tau.is_some(),
        per_t_error: cfg.record_trace.then_some(trace),
    })
}
