//! Protocol-level simulation of the relay network.
//!
//! Every trial draws its own Rayleigh amplitudes, so the simulator does not
//! rely on the Gamma-law approximation of the RIS hop and can referee it.
//!
//! Randomness is counter-based: trials are grouped into fixed blocks of
//! [`BLOCK`] consecutive indices, and block `b` reads ChaCha8 stream `b`
//! under a key derived from the seed. Block boundaries depend only on the
//! trial index, so the outcome set is a pure function of
//! `(config, trials, seed)` and any assignment of blocks to workers yields
//! the same outage count.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::channel::{db_to_linear, SystemConfig};
use crate::error::{Error, Result};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Outage counts below this are flagged as too few for a reliable interval.
pub const LOW_EVENT_THRESHOLD: u64 = 10;

/// Trials sharing one random stream; also the unit of work distribution.
pub const BLOCK: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub config: SystemConfig,
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub outage_count: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci99_halfwidth: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub low_event_count: bool,
}

/// Wilson score interval `(low, high)` for `successes` out of `n` at normal
/// quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// `(Σᵢ aᵢ)²` for `n` i.i.d. Rayleigh amplitudes of mean power `mean_power`,
/// i.e. the co-phased RIS channel gain.
pub fn draw_ris_gain<R: Rng + ?Sized>(n_elements: u32, mean_power: f64, rng: &mut R) -> f64 {
    if n_elements == 1 {
        let e: f64 = rng.sample(Exp1);
        return mean_power * e;
    }
    let mut amp = 0.0;
    for _ in 0..n_elements {
        let e: f64 = rng.sample(Exp1);
        amp += e.sqrt();
    }
    mean_power * amp * amp
}

/// Aggregate power of `count` Rayleigh-faded interferers, each with mean
/// power `inr` (linear INR).
pub fn draw_interference<R: Rng + ?Sized>(count: u32, inr: f64, rng: &mut R) -> f64 {
    let mut sum = 0.0;
    for _ in 0..count {
        let e: f64 = rng.sample(Exp1);
        sum += e;
    }
    inr * sum
}

/// Linear-scale parameters of one trial.
#[derive(Debug, Clone, Copy)]
struct TrialModel {
    n1: u32,
    n2: u32,
    k_relays: u32,
    snr: f64,
    u: f64,
    i_relay: u32,
    i_dest: u32,
    inr_relay: f64,
    inr_dest: f64,
    mean_power: f64,
}

impl TrialModel {
    fn new(cfg: &SystemConfig) -> Self {
        TrialModel {
            n1: cfg.n1,
            n2: cfg.n2,
            k_relays: cfg.k_relays,
            snr: cfg.snr_linear(),
            u: cfg.threshold(),
            i_relay: cfg.i_relay,
            i_dest: cfg.i_dest,
            inr_relay: db_to_linear(cfg.rho_i_relay_db),
            inr_dest: db_to_linear(cfg.rho_i_dest_db),
            mean_power: cfg.mean_power,
        }
    }

    fn outage<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        // best second-hop gain among relays that decoded, lowest index on ties
        let mut best: Option<f64> = None;
        for _ in 0..self.k_relays {
            let g = draw_ris_gain(self.n1, self.mean_power, rng);
            let i = draw_interference(self.i_relay, self.inr_relay, rng);
            if self.snr * g / (i + 1.0) >= self.u {
                let h = draw_ris_gain(self.n2, self.mean_power, rng);
                if best.is_none_or(|b| h > b) {
                    best = Some(h);
                }
            }
        }
        let Some(h) = best else {
            return true;
        };
        let i = draw_interference(self.i_dest, self.inr_dest, rng);
        self.snr * h / (i + 1.0) < self.u
    }
}

/// One protocol realization: decoding, opportunistic selection and the
/// destination SINR test. Returns `true` on outage.
pub fn run_trial<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> bool {
    TrialModel::new(cfg).outage(rng)
}

fn stream_key(seed: u64) -> [u8; 32] {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

/// Outages in block `block`, truncated to the first `len` trials.
fn count_block(model: &TrialModel, key: [u8; 32], block: u64, len: u64) -> u64 {
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(block);
    (0..len).filter(|_| model.outage(&mut rng)).count() as u64
}

/// Runs `spec.trials` independent trials across `spec.workers` threads.
pub fn simulate(spec: &SimSpec) -> Result<SimResult> {
    spec.config.validate()?;
    if spec.trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    if spec.workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    let model = TrialModel::new(&spec.config);
    let key = stream_key(spec.seed);
    let blocks = spec.trials.div_ceil(BLOCK);
    let next = AtomicU64::new(0);
    let total = AtomicU64::new(0);
    let work = || loop {
        let b = next.fetch_add(1, Ordering::Relaxed);
        if b >= blocks {
            break;
        }
        let len = BLOCK.min(spec.trials - b * BLOCK);
        total.fetch_add(count_block(&model, key, b, len), Ordering::Relaxed);
    };
    let workers = spec.workers.min(blocks as usize).max(1);
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    let outage_count = total.into_inner();
    let (ci_low, ci_high) = wilson_interval(outage_count, spec.trials, Z99);
    let estimate = outage_count as f64 / spec.trials as f64;
    Ok(SimResult {
        outage_count,
        trials: spec.trials,
        estimate,
        ci99_halfwidth: 0.5 * (ci_high - ci_low),
        ci_low,
        ci_high,
        low_event_count: outage_count < LOW_EVENT_THRESHOLD,
    })
}
