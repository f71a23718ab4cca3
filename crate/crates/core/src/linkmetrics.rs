//! Per-neighbour link-quality state: receive-ratio EMAs fed by Hello probes,
//! GPS-derived relative speed, and the plain and speed-weighted ETX.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, GeoPosition};
use crate::wire::{dequantize_ratio, HelloMessage, NodeAddr};

/// Cap on the exponent of the speed weight. A single corrupted position
/// sample must not push route sums to infinity.
pub const MAX_SPEED_EXPONENT: f64 = 20.0;

/// Neighbour entries are dropped after this many Hello intervals of silence.
pub const NEIGHBOR_HOLD_INTERVALS: f64 = 3.0;

/// Silence longer than this many Hello intervals starts injecting misses.
pub const SILENCE_THRESHOLD_INTERVALS: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("link-quality aging {0} outside [0, 1]")]
    Alpha(f64),
    #[error("speed weight {0} must be non-negative and finite")]
    Beta(f64),
    #[error("speed aging {0} outside [0, 1]")]
    Gamma(f64),
    #[error("hello interval {0} s must be positive")]
    HelloInterval(f64),
    #[error("sample at t={now} s does not follow the previous one at t={prev} s")]
    NonIncreasingTime { prev: f64, now: f64 },
    #[error("hello from {got} fed to the link state of {expected}")]
    WrongNeighbor { expected: NodeAddr, got: NodeAddr },
    #[error("hello from {0} carries no position in a speed-aware run")]
    MissingPosition(NodeAddr),
}

/// Protocol knobs shared by every node of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqParams {
    /// Link-quality aging (EMA weight of the newest Hello outcome).
    pub alpha: f64,
    /// Speed weight coefficient, s/m.
    pub beta: f64,
    /// Speed aging (EMA weight of the newest relative-speed sample).
    pub gamma: f64,
    /// Hello interval in seconds.
    pub hello_interval: f64,
}

impl Default for LqParams {
    fn default() -> Self {
        LqParams { alpha: 0.2, beta: 0.2, gamma: 0.04, hello_interval: 0.5 }
    }
}

impl LqParams {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LinkError::Alpha(self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(LinkError::Beta(self.beta));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(LinkError::Gamma(self.gamma));
        }
        if !(self.hello_interval > 0.0 && self.hello_interval.is_finite()) {
            return Err(LinkError::HelloInterval(self.hello_interval));
        }
        Ok(())
    }
}

/// ETX of one hop, weighted by `exp(v * beta)`.
///
/// Returns `f64::INFINITY` when `phi * rho` is zero; such hops are unusable.
pub fn hop_etx(phi: f64, rho: f64, v: f64, beta: f64) -> f64 {
    let p = phi * rho;
    if !(p > 0.0) {
        return f64::INFINITY;
    }
    if beta == 0.0 {
        return 1.0 / p;
    }
    (v * beta).min(MAX_SPEED_EXPONENT).exp() / p
}

/// Route ETX: the sum of its hop metrics.
pub fn route_etx(hops: &[f64]) -> f64 {
    hops.iter().sum()
}

/// Link state a node keeps for one neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub neighbor: NodeAddr,
    /// Locally measured receive ratio of the neighbour's Hellos.
    pub rho_ema: f64,
    /// Forward ratio as reported back by the neighbour.
    pub phi_reported: f64,
    pub last_seq: Option<u16>,
    pub last_distance: Option<f64>,
    pub last_hello_time: Option<f64>,
    /// Smoothed relative speed, m/s; positive when the pair separates.
    pub v_ema: f64,
    pub expires_at: f64,
    /// Set once the neighbour's Hellos list this node.
    pub symmetric: bool,
    /// Misses already charged by the silence timer since the last Hello.
    silent_misses: u32,
}

impl LinkState {
    pub fn new(neighbor: NodeAddr) -> Self {
        LinkState {
            neighbor,
            rho_ema: 0.0,
            phi_reported: 0.0,
            last_seq: None,
            last_distance: None,
            last_hello_time: None,
            v_ema: 0.0,
            expires_at: f64::NEG_INFINITY,
            symmetric: false,
            silent_misses: 0,
        }
    }

    pub fn update_ratio(&mut self, received: bool, p: &LqParams) {
        let h = if received { 1.0 } else { 0.0 };
        self.rho_ema = (p.alpha * h + (1.0 - p.alpha) * self.rho_ema).clamp(0.0, 1.0);
    }

    /// Folds one distance sample into the relative-speed EMA.
    pub fn update_speed(&mut self, d_now: f64, t_now: f64, p: &LqParams) -> Result<(), LinkError> {
        if let (Some(d_prev), Some(t_prev)) = (self.last_distance, self.last_hello_time) {
            if !(t_now > t_prev) {
                return Err(LinkError::NonIncreasingTime { prev: t_prev, now: t_now });
            }
            let instantaneous = (d_now - d_prev) / (t_now - t_prev);
            self.v_ema = p.gamma * instantaneous + (1.0 - p.gamma) * self.v_ema;
        }
        self.last_distance = Some(d_now);
        self.last_hello_time = Some(t_now);
        Ok(())
    }

    /// Processes a Hello received from this neighbour at time `t`.
    ///
    /// `my_pos` is required when `speed_aware` is set; the Hello must then
    /// carry the neighbour's position.
    pub fn on_hello(
        &mut self,
        hello: &HelloMessage,
        me: NodeAddr,
        my_pos: Option<&GeoPosition>,
        t: f64,
        p: &LqParams,
        speed_aware: bool,
    ) -> Result<(), LinkError> {
        if hello.originator != self.neighbor {
            return Err(LinkError::WrongNeighbor { expected: self.neighbor, got: hello.originator });
        }
        let their_pos = if speed_aware {
            Some(hello.position.as_ref().ok_or(LinkError::MissingPosition(hello.originator))?)
        } else {
            None
        };
        if let Some(last) = self.last_seq {
            let gap = hello.seq.wrapping_sub(last);
            if gap == 0 || gap >= 0x8000 {
                // duplicate or reordered
                return Ok(());
            }
            let missed = u32::from(gap - 1).saturating_sub(self.silent_misses);
            for _ in 0..missed {
                self.update_ratio(false, p);
            }
        }
        self.update_ratio(true, p);
        self.silent_misses = 0;
        self.last_seq = Some(hello.seq);

        match (their_pos, my_pos) {
            (Some(theirs), Some(mine)) => self.update_speed(geo::distance(mine, theirs), t, p)?,
            (Some(_), None) => return Err(LinkError::MissingPosition(me)),
            _ => self.last_hello_time = Some(t),
        }

        match hello.block_for(me) {
            Some(block) => {
                self.phi_reported = dequantize_ratio(block.lq);
                self.symmetric = true;
            }
            None => self.symmetric = false,
        }
        self.expires_at = t + NEIGHBOR_HOLD_INTERVALS * p.hello_interval;
        Ok(())
    }

    /// Charges one miss per elapsed Hello interval once the neighbour has
    /// been silent for more than 1.5 intervals. Returns the misses applied.
    pub fn on_silence_check(&mut self, t: f64, p: &LqParams) -> u32 {
        let Some(last) = self.last_hello_time else { return 0 };
        let silent = t - last;
        if silent <= SILENCE_THRESHOLD_INTERVALS * p.hello_interval {
            return 0;
        }
        let due = (silent / p.hello_interval - 0.5).floor().max(0.0) as u32;
        let fresh = due.saturating_sub(self.silent_misses);
        for _ in 0..fresh {
            self.update_ratio(false, p);
        }
        self.silent_misses += fresh;
        fresh
    }

    pub fn is_expired(&self, t: f64) -> bool {
        t >= self.expires_at
    }

    /// Whether this link may carry routes at time `t`.
    pub fn usable(&self, t: f64) -> bool {
        self.symmetric && !self.is_expired(t)
    }

    pub fn metric(&self, beta: f64) -> f64 {
        hop_etx(self.phi_reported, self.rho_ema, self.v_ema, beta)
    }
}
