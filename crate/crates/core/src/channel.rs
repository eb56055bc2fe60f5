//! Hop and interference distributions plus the network parameterization.
//!
//! The end-to-end SNR of an RIS-assisted hop, `ρ (Σ|α_i|)²`, is modelled by
//! the Gamma law `F(γ) = 1 − e^{−λγ/C} Σ_{k<N} (λγ/C)^k / k!` with
//! `C = 1 + (N − 1) Γ²(3/2)`. Interference at a receiver is the sum of `I`
//! i.i.d. exponential powers, so `Z = 1 + X` is a shifted Erlang variable.

use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::specfun::{log_factorial, regularized_lower_gamma_int};

/// Distribution parameters of one RIS-assisted hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopModel {
    n_elements: u32,
    rate: f64,
    scaling: f64,
}

impl HopModel {
    /// A hop with `n_elements` reflecting elements and rate `λ = 1/ρ̄`.
    pub fn new(n_elements: u32, rate: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::Domain("an RIS needs at least one element".into()));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Domain(format!("hop rate must be positive, got {rate}")));
        }
        Ok(HopModel {
            n_elements,
            rate,
            scaling: scaling_constant(n_elements),
        })
    }

    pub fn n_elements(&self) -> u32 {
        self.n_elements
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `B` (first hop) or `C` (second hop).
    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    /// `λ/C`, the rate of the approximating Gamma law.
    pub fn gamma_rate(&self) -> f64 {
        self.rate / self.scaling
    }
}

/// Aggregate co-channel interference seen by one receiver.
///
/// `count` i.i.d. interferers whose powers are exponential with rate
/// `λ^I = 1/(ρ_I σ_I²)`. [`InterferenceProfile::absent`] models a
/// noise-limited receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceProfile {
    count: u32,
    rate: f64,
    present: bool,
}

impl InterferenceProfile {
    pub fn new(count: u32, rate: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Domain(
                "interferer count must be >= 1; use InterferenceProfile::absent()".into(),
            ));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Domain(format!(
                "interference rate must be positive, got {rate}"
            )));
        }
        Ok(InterferenceProfile {
            count,
            rate,
            present: true,
        })
    }

    /// Interference-free receiver (`Z ≡ 1`).
    pub fn absent() -> Self {
        InterferenceProfile {
            count: 0,
            rate: f64::INFINITY,
            present: false,
        }
    }

    /// Profile from an interferer count and the per-interferer INR `ρ_I` in dB.
    /// A count of zero yields [`InterferenceProfile::absent`].
    pub fn from_inr_db(count: u32, inr_db: f64) -> Result<Self> {
        if count == 0 {
            return Ok(Self::absent());
        }
        if !inr_db.is_finite() {
            return Err(Error::Domain(format!("interference INR must be finite, got {inr_db}")));
        }
        Self::new(count, 1.0 / db_to_linear(inr_db))
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_absent(&self) -> bool {
        !self.present
    }

    /// Mean of one interferer's power, `1/λ^I`.
    pub fn mean_power(&self) -> f64 {
        if self.present {
            1.0 / self.rate
        } else {
            0.0
        }
    }
}

/// Full parameterization of the two-hop network.
///
/// Relays are statistically identical: one relay-side interference profile
/// serves all `k_relays` relays.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Reflecting elements at the source RIS (`N₁`).
    pub n1: u32,
    /// Reflecting elements at each relay RIS (`N₂`).
    pub n2: u32,
    /// Number of relays (`K`).
    pub k_relays: u32,
    /// Target spectral efficiency `R` in bits/s/Hz.
    pub rate_threshold: f64,
    /// Transmit SNR `ρ` in dB, shared by source and relays.
    pub snr_db: f64,
    /// Interferers per relay (`I_k`); zero disables relay interference.
    pub i_relay: u32,
    /// Interferers at the destination (`I_d`); zero disables it.
    pub i_dest: u32,
    /// Per-interferer INR at the relays, dB.
    pub rho_i_relay_db: f64,
    /// Per-interferer INR at the destination, dB.
    pub rho_i_dest_db: f64,
    /// Mean power of every RIS element channel. The closed forms assume 1.
    pub mean_power: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n1: 2,
            n2: 2,
            k_relays: 2,
            rate_threshold: 0.5,
            snr_db: 10.0,
            i_relay: 1,
            i_dest: 1,
            rho_i_relay_db: 0.0,
            rho_i_dest_db: 0.0,
            mean_power: 1.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n1 == 0 || self.n2 == 0 {
            return bad("n1 and n2 must be >= 1".into());
        }
        if self.k_relays == 0 {
            return bad("k_relays must be >= 1".into());
        }
        if !(self.rate_threshold >= 0.0) || !self.rate_threshold.is_finite() {
            return bad(format!(
                "rate_threshold must be finite and >= 0, got {}",
                self.rate_threshold
            ));
        }
        for (name, v) in [
            ("snr_db", self.snr_db),
            ("rho_i_relay_db", self.rho_i_relay_db),
            ("rho_i_dest_db", self.rho_i_dest_db),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if !(self.mean_power > 0.0) || !self.mean_power.is_finite() {
            return bad(format!("mean_power must be positive, got {}", self.mean_power));
        }
        Ok(())
    }

    /// Same configuration at another SNR.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        SystemConfig {
            snr_db,
            ..self.clone()
        }
    }

    /// Linear transmit SNR `ρ`.
    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }

    /// Outage threshold `u = 2^{2R} − 1`.
    pub fn threshold(&self) -> f64 {
        outage_threshold(self.rate_threshold)
    }

    /// Per-hop rate `λ = 1/(ρ Ω)`.
    pub fn hop_rate(&self) -> f64 {
        1.0 / (self.snr_linear() * self.mean_power)
    }

    pub fn first_hop(&self) -> Result<HopModel> {
        HopModel::new(self.n1, self.hop_rate())
    }

    pub fn second_hop(&self) -> Result<HopModel> {
        HopModel::new(self.n2, self.hop_rate())
    }

    pub fn relay_interference(&self) -> Result<InterferenceProfile> {
        InterferenceProfile::from_inr_db(self.i_relay, self.rho_i_relay_db)
    }

    pub fn dest_interference(&self) -> Result<InterferenceProfile> {
        InterferenceProfile::from_inr_db(self.i_dest, self.rho_i_dest_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `C = 1 + (N − 1) π/4`, the Gamma-law scale correction of an `N`-element RIS.
pub fn scaling_constant(n_elements: u32) -> f64 {
    1.0 + (n_elements.max(1) - 1) as f64 * FRAC_PI_4
}

/// `u = 2^{2R} − 1`.
pub fn outage_threshold(rate_threshold: f64) -> f64 {
    (2.0 * rate_threshold * std::f64::consts::LN_2).exp_m1()
}

/// CDF of the RIS-assisted hop SNR at `gamma`.
pub fn ris_hop_cdf(gamma: f64, hop: &HopModel) -> Result<f64> {
    if gamma < 0.0 || gamma.is_nan() {
        return Err(Error::Domain(format!("hop CDF needs gamma >= 0, got {gamma}")));
    }
    Ok(regularized_lower_gamma_int(hop.n_elements, hop.gamma_rate() * gamma))
}

/// Leading high-SNR term of [`ris_hop_cdf`]: `γ^N / ((C/λ)^N N!)`.
pub fn ris_hop_cdf_asymptotic(gamma: f64, hop: &HopModel) -> f64 {
    if gamma <= 0.0 {
        return 0.0;
    }
    let n = hop.n_elements as f64;
    (n * (hop.gamma_rate() * gamma).ln() - log_factorial(hop.n_elements as u64)).exp()
}

/// Density of `Z = 1 + X` where `X` is the aggregate interference.
///
/// Returns the shifted Erlang density for `z >= 1` and zero below. For an
/// absent profile `Z` is a point mass at 1 and has no density; zero is
/// returned and callers evaluate at `z = 1` directly.
pub fn interference_plus_one_pdf(z: f64, prof: &InterferenceProfile) -> f64 {
    if prof.is_absent() || !(z >= 1.0) {
        return 0.0;
    }
    let w = z - 1.0;
    let lambda = prof.rate;
    let i = prof.count;
    if w == 0.0 {
        return if i == 1 { lambda } else { 0.0 };
    }
    let log_pdf = i as f64 * lambda.ln() + (i - 1) as f64 * w.ln()
        - lambda * w
        - log_factorial((i - 1) as u64);
    log_pdf.exp()
}

/// Survival function `P[Z > z]` of `Z = 1 + X`.
pub fn interference_plus_one_survival(z: f64, prof: &InterferenceProfile) -> f64 {
    if prof.is_absent() {
        return if z < 1.0 { 1.0 } else { 0.0 };
    }
    if z <= 1.0 {
        return 1.0;
    }
    crate::specfun::regularized_upper_gamma_int(prof.count, prof.rate * (z - 1.0))
}

/// CDF of the best of `set_size` i.i.d. hops, `F(y)^L`; 1 when `L = 0`.
pub fn best_relay_cdf(y: f64, hop: &HopModel, set_size: u32) -> Result<f64> {
    if set_size == 0 {
        return Ok(1.0);
    }
    Ok(ris_hop_cdf(y, hop)?.powi(set_size as i32))
}
