//! High-SNR outage, diversity order and coding gain.
//!
//! As `ρ → ∞` the hop CDF behaves like `P(N, x) ≈ x^N / N!`, so each
//! per-hop integral collapses to a moment of the interference variable:
//!
//! ```text
//! H(N, L, Z) ≈ (a^N / N!)^L · E[Z^{NL}],     a = λ u / C.
//! ```
//!
//! `E[Z^s]` for `Z = 1 + Erlang(I, λ^I)` is the finite positive sum
//! `Σ_m C(s,m) (I)_m / (λ^I)^m`.

use std::fmt;

use crate::analytic::decoding_set_pmf;
use crate::channel::{HopModel, InterferenceProfile, SystemConfig};
use crate::error::{Error, Result};
use crate::specfun::{binomial, factorial, sum_positive, LogScaledValue};

/// Which hop sets the coding gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominantHop {
    /// `N₁ < N₂`: relay decoding failures dominate.
    First,
    /// `N₁ > N₂`: the relay-to-destination hop dominates.
    Second,
    /// `N₁ = N₂` and the first hop has the larger coefficient.
    InterferenceDecidedFirst,
    /// `N₁ = N₂` and the second hop has the larger (or equal) coefficient.
    InterferenceDecidedSecond,
}

impl fmt::Display for DominantHop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DominantHop::First => "first",
            DominantHop::Second => "second",
            DominantHop::InterferenceDecidedFirst => "interference-decided-first",
            DominantHop::InterferenceDecidedSecond => "interference-decided-second",
        })
    }
}

/// High-SNR summary `P_out ≈ (G_c ρ)^{−G_d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticResult {
    pub probability: f64,
    pub diversity_order: u32,
    pub coding_gain: f64,
    pub dominant_hop: DominantHop,
}

/// Relative tolerance under which the two hop coefficients count as equal.
const COEFFICIENT_TIE: f64 = 1e-12;

/// `E[Z^s]` for `Z = 1 + Erlang(I, λ^I)`; `Z ≡ 1` when interference is absent.
pub fn interference_moment(s: u32, prof: &InterferenceProfile) -> LogScaledValue {
    if prof.is_absent() || s == 0 {
        return LogScaledValue::ONE;
    }
    let count = prof.count() as u64;
    let inv_rate = LogScaledValue::from_f64(prof.rate()).recip();
    let base = factorial(count - 1);
    let terms: Vec<LogScaledValue> = (0..=s as u64)
        .map(|m| {
            let rising = factorial(count + m - 1) / base;
            let c = binomial(s as u64, m).expect("m <= s");
            c * rising * inv_rate.powi(m as u32)
        })
        .collect();
    sum_positive(&terms)
}

/// Leading-order `H(N, L, Z)` in log-scaled form.
fn leading_hop_term(
    hop: &HopModel,
    set_size: u32,
    prof: &InterferenceProfile,
    u: f64,
) -> LogScaledValue {
    if set_size == 0 {
        return LogScaledValue::ONE;
    }
    if u == 0.0 {
        return LogScaledValue::ZERO;
    }
    let n = hop.n_elements();
    let single = LogScaledValue::from_f64(hop.gamma_rate() * u).powi(n) / factorial(n as u64);
    single.powi(set_size) * interference_moment(n * set_size, prof)
}

/// High-SNR `P[γ_d < u | |B| = L]`.
pub fn asymptotic_dest_term(cfg: &SystemConfig, set_size: u32) -> Result<f64> {
    cfg.validate()?;
    Ok(leading_hop_term(
        &cfg.second_hop()?,
        set_size,
        &cfg.dest_interference()?,
        cfg.threshold(),
    )
    .to_f64())
}

/// High-SNR per-relay decoding failure probability.
pub fn asymptotic_relay_term(cfg: &SystemConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(leading_hop_term(
        &cfg.first_hop()?,
        1,
        &cfg.relay_interference()?,
        cfg.threshold(),
    )
    .to_f64())
}

/// High-SNR outage assembled from the full decoding-set sum.
///
/// The dominance label compares the `L = 0` term `q^K` against the `L = K`
/// term `D(K)`; with `N₁ ≠ N₂` one of them decays strictly faster.
pub fn asymptotic_outage(cfg: &SystemConfig) -> Result<AsymptoticResult> {
    cfg.validate()?;
    let q = asymptotic_relay_term(cfg)?;
    let mut total = 0.0;
    for (l, weight) in decoding_set_pmf(cfg.k_relays, q.min(1.0)) {
        if weight == 0.0 {
            continue;
        }
        total += weight * asymptotic_dest_term(cfg, l)?;
    }
    let diversity_order = cfg.n1.min(cfg.n2) * cfg.k_relays;
    let dominant_hop = match cfg.n1.cmp(&cfg.n2) {
        std::cmp::Ordering::Less => DominantHop::First,
        std::cmp::Ordering::Greater => DominantHop::Second,
        std::cmp::Ordering::Equal => {
            let first = leading_hop_term(
                &cfg.first_hop()?,
                1,
                &cfg.relay_interference()?,
                cfg.threshold(),
            )
            .powi(cfg.k_relays);
            let second = leading_hop_term(
                &cfg.second_hop()?,
                cfg.k_relays,
                &cfg.dest_interference()?,
                cfg.threshold(),
            );
            let gap = first.log_magnitude() - second.log_magnitude();
            if gap > COEFFICIENT_TIE {
                DominantHop::InterferenceDecidedFirst
            } else {
                DominantHop::InterferenceDecidedSecond
            }
        }
    };
    let coding_gain = if total > 0.0 {
        total.powf(-1.0 / diversity_order as f64) / cfg.snr_linear()
    } else {
        f64::INFINITY
    };
    Ok(AsymptoticResult {
        probability: total,
        diversity_order,
        coding_gain,
        dominant_hop,
    })
}

fn check_curve(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::Domain("slope fit needs at least two points".into()));
    }
    if let Some(&(snr, p)) = points.iter().find(|(_, p)| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain(format!(
            "outage probability {p} at {snr} dB cannot enter a log-scale fit"
        )));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Domain("SNR grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Empirical diversity order: `−10 ×` the least-squares slope of
/// `log₁₀ P_out` against SNR in dB.
pub fn fit_diversity_slope(points: &[(f64, f64)]) -> Result<f64> {
    check_curve(points)?;
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.log10()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, p) in points {
        let dx = x - mx;
        sxy += dx * (p.log10() - my);
        sxx += dx * dx;
    }
    Ok(-10.0 * sxy / sxx)
}

/// Coding gain fitted with the diversity order held fixed: the geometric
/// mean over the points of `P_out^{−1/G_d} / ρ`.
pub fn fit_coding_gain(points: &[(f64, f64)], diversity_order: f64) -> Result<f64> {
    check_curve(points)?;
    if !(diversity_order > 0.0) {
        return Err(Error::Domain("diversity order must be positive".into()));
    }
    let mean_log = points
        .iter()
        .map(|&(snr, p)| -p.log10() / diversity_order - snr / 10.0)
        .sum::<f64>()
        / points.len() as f64;
    Ok(10f64.powf(mean_log))
}
