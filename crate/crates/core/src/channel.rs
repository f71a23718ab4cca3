//! Distance-driven frame delivery: the fitted logistic datagram-loss curve and
//! a simplified two-slope pathloss alternative.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fitted logistic coefficients of the measured air-to-ground link.
pub const FIELD_P1: f64 = 8.9;
pub const FIELD_P2: f64 = 0.025;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("retry limit must be at least 1")]
    RetryLimit,
    #[error("channel parameter {0} is invalid")]
    Parameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    /// `loss(d) = 1 / (1 + exp(p1 - p2 d))`, applied once per hop delivery.
    LogisticDlr { p1: f64, p2: f64 },
    /// Pathloss with a breakpoint, mapped to a per-attempt error rate through
    /// a logistic SNR curve; attempts are retried up to the retry limit.
    TwoSlope {
        breakpoint_m: f64,
        exponent_near: f64,
        exponent_far: f64,
        /// Pathloss at 1 m, dB.
        ref_loss_db: f64,
        /// Transmit power including antenna gains, dBm.
        tx_power_dbm: f64,
        noise_floor_dbm: f64,
        /// SNR at which an attempt fails half the time, dB.
        per_snr_mid_db: f64,
        /// Width of the SNR transition, dB.
        per_snr_slope_db: f64,
    },
}

impl ChannelKind {
    pub fn logistic_field_fit() -> Self {
        ChannelKind::LogisticDlr { p1: FIELD_P1, p2: FIELD_P2 }
    }

    pub fn two_slope_default() -> Self {
        ChannelKind::TwoSlope {
            breakpoint_m: 10.0,
            exponent_near: 2.0,
            exponent_far: 3.5,
            ref_loss_db: 46.4,
            tx_power_dbm: 30.0,
            noise_floor_dbm: -95.0,
            per_snr_mid_db: 4.0,
            per_snr_slope_db: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    /// Log-normal shadowing standard deviation, dB (two-slope only).
    pub shadowing_std_db: f64,
    /// MAC attempts per frame.
    pub retry_limit: u32,
    /// Per-attempt channel access time, seconds.
    pub slot_time: f64,
    /// Serialisation rate, bit/s.
    pub rate_bps: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            kind: ChannelKind::logistic_field_fit(),
            shadowing_std_db: 3.0,
            retry_limit: 7,
            slot_time: 0.002,
            rate_bps: 13.0e6,
        }
    }
}

/// Outcome of one hop transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub delivered: bool,
    pub attempts: u32,
    pub latency: f64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.retry_limit < 1 {
            return Err(ChannelError::RetryLimit);
        }
        if !(self.slot_time >= 0.0) {
            return Err(ChannelError::Parameter("slot_time"));
        }
        if !(self.rate_bps > 0.0) {
            return Err(ChannelError::Parameter("rate_bps"));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(ChannelError::Parameter("shadowing_std_db"));
        }
        match self.kind {
            ChannelKind::LogisticDlr { p1, p2 } => {
                if !p1.is_finite() || !(p2 >= 0.0) {
                    return Err(ChannelError::Parameter("p2"));
                }
            }
            ChannelKind::TwoSlope { breakpoint_m, exponent_near, exponent_far, per_snr_slope_db, .. } => {
                if !(breakpoint_m > 0.0) || exponent_near < 0.0 || exponent_far < exponent_near {
                    return Err(ChannelError::Parameter("pathloss exponents"));
                }
                if !(per_snr_slope_db > 0.0) {
                    return Err(ChannelError::Parameter("per_snr_slope_db"));
                }
            }
        }
        Ok(())
    }

    /// Pathloss in dB at distance `d` (two-slope model only).
    pub fn pathloss_db(&self, d: f64) -> Option<f64> {
        match self.kind {
            ChannelKind::TwoSlope { breakpoint_m, exponent_near, exponent_far, ref_loss_db, .. } => {
                let d = d.max(1.0);
                Some(if d <= breakpoint_m {
                    ref_loss_db + 10.0 * exponent_near * d.log10()
                } else {
                    ref_loss_db
                        + 10.0 * exponent_near * breakpoint_m.log10()
                        + 10.0 * exponent_far * (d / breakpoint_m).log10()
                })
            }
            ChannelKind::LogisticDlr { .. } => None,
        }
    }

    /// Loss probability at distance `d` with a given shadowing sample (dB).
    ///
    /// For the logistic model this is the post-retry loss of one delivery and
    /// the shadowing sample is ignored; for the two-slope model it is the
    /// loss of a single attempt.
    pub fn frame_loss_prob(&self, d: f64, shadow_db: f64) -> f64 {
        match self.kind {
            ChannelKind::LogisticDlr { p1, p2 } => logistic(p2 * d - p1),
            ChannelKind::TwoSlope { tx_power_dbm, noise_floor_dbm, per_snr_mid_db, per_snr_slope_db, .. } => {
                let rx = tx_power_dbm - self.pathloss_db(d).unwrap_or(0.0) + shadow_db;
                let snr = rx - noise_floor_dbm;
                logistic((per_snr_mid_db - snr) / per_snr_slope_db)
            }
        }
    }

    /// Probability that one hop delivery ultimately succeeds (no shadowing).
    pub fn delivery_prob(&self, d: f64) -> f64 {
        let loss = self.frame_loss_prob(d, 0.0);
        match self.kind {
            ChannelKind::LogisticDlr { .. } => 1.0 - loss,
            ChannelKind::TwoSlope { .. } => 1.0 - loss.powi(self.retry_limit as i32),
        }
    }

    /// Serialisation time of a frame.
    pub fn airtime(&self, frame_bits: u32) -> f64 {
        f64::from(frame_bits) / self.rate_bps
    }

    /// Samples one hop transmission of `frame_bits` over distance `d`.
    pub fn attempt_delivery<R: Rng + ?Sized>(&self, d: f64, frame_bits: u32, rng: &mut R) -> Delivery {
        let (loss, max_attempts) = match self.kind {
            ChannelKind::LogisticDlr { .. } => (self.frame_loss_prob(d, 0.0), 1),
            ChannelKind::TwoSlope { .. } => {
                let shadow = if self.shadowing_std_db > 0.0 {
                    self.shadowing_std_db * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                (self.frame_loss_prob(d, shadow), self.retry_limit)
            }
        };
        let (delivered, attempts) = attempt_with_loss(loss, max_attempts, rng);
        Delivery { delivered, attempts, latency: f64::from(attempts) * self.slot_time + self.airtime(frame_bits) }
    }

    /// Samples one broadcast reception: a single attempt, no MAC retries.
    pub fn attempt_broadcast<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> bool {
        let loss = match self.kind {
            ChannelKind::LogisticDlr { .. } => self.frame_loss_prob(d, 0.0),
            ChannelKind::TwoSlope { .. } => {
                let shadow = if self.shadowing_std_db > 0.0 {
                    self.shadowing_std_db * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                self.frame_loss_prob(d, shadow)
            }
        };
        attempt_with_loss(loss, 1, rng).0
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Independent attempts with per-attempt loss `loss`, up to `max_attempts`.
/// Returns (delivered, attempts used).
pub fn attempt_with_loss<R: Rng + ?Sized>(loss: f64, max_attempts: u32, rng: &mut R) -> (bool, u32) {
    let loss = loss.clamp(0.0, 1.0);
    for attempt in 1..=max_attempts {
        if rng.gen::<f64>() >= loss {
            return (true, attempt);
        }
    }
    (false, max_attempts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field() -> ChannelModel {
        ChannelModel::default()
    }

    fn two_slope() -> ChannelModel {
        ChannelModel { kind: ChannelKind::two_slope_default(), shadowing_std_db: 0.0, ..Default::default() }
    }

    #[test]
    fn logistic_reference_points() {
        let c = field();
        assert!((c.frame_loss_prob(FIELD_P1 / FIELD_P2, 0.0) - 0.5).abs() < 1e-12);
        let oracle_150 = 1.0 / (1.0 + (8.9f64 - 0.025 * 150.0).exp());
        assert!((c.frame_loss_prob(150.0, 0.0) - oracle_150).abs() < 1e-15);
        assert!((oracle_150 - 0.0058).abs() < 1e-4);
        assert!((c.frame_loss_prob(0.0, 0.0) - 1.36e-4).abs() < 1e-5);
        for d in [0.0, 100.0, 200.0, 249.0] {
            assert!(c.frame_loss_prob(d, 0.0) < 0.2);
        }
    }

    #[test]
    fn loss_is_monotone_in_distance() {
        for c in [field(), two_slope()] {
            let mut prev = c.frame_loss_prob(0.0, 0.0);
            for k in 1..200 {
                let l = c.frame_loss_prob(f64::from(k) * 5.0, 0.0);
                assert!(l >= prev);
                prev = l;
            }
        }
    }

    #[test]
    fn two_slope_pathloss_is_continuous_at_breakpoint() {
        let c = two_slope();
        let a = c.pathloss_db(10.0 - 1e-9).unwrap();
        let b = c.pathloss_db(10.0 + 1e-9).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn attempt_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(attempt_with_loss(0.0, 7, &mut rng), (true, 1));
            assert_eq!(attempt_with_loss(1.0, 7, &mut rng), (false, 7));
        }
    }

    #[test]
    fn retries_follow_geometric_law() {
        let oracle = 1.0 - 0.5f64.powi(7);
        assert!((oracle - 0.9922).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let ok = (0..n).filter(|_| attempt_with_loss(0.5, 7, &mut rng).0).count();
        assert!((ok as f64 / n as f64 - oracle).abs() < 0.005);
    }

    #[test]
    fn latency_accounts_attempts_and_airtime() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = field();
        let d = c.attempt_delivery(10.0, 13_000, &mut rng);
        assert_eq!(d.attempts, 1);
        assert!((d.latency - (0.002 + 0.001)).abs() < 1e-12);
        let far = two_slope().attempt_delivery(5_000.0, 13_000, &mut rng);
        assert!(!far.delivered);
        assert_eq!(far.attempts, 7);
        assert!((far.latency - (7.0 * 0.002 + 0.001)).abs() < 1e-12);
    }

    #[test]
    fn seeded_draws_repeat() {
        let c = field();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..500).map(|k| c.attempt_delivery(f64::from(k), 1000, &mut rng).delivered).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn validation() {
        assert!(ChannelModel { retry_limit: 0, ..field() }.validate().is_err());
        assert!(field().validate().is_ok());
        assert!(two_slope().validate().is_ok());
    }
}
