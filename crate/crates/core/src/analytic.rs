//! Closed-form outage probability.
//!
//! Both hops reduce to the same integral
//!
//! ```text
//! H(N, L, Z) = ∫_1^∞ f_Z(z) · P(N, a z)^L dz,     a = λ u / C,
//! ```
//!
//! where `P` is the regularized lower incomplete gamma function (the hop CDF)
//! and `Z` is one plus the aggregate interference. The relay decoding failure
//! is `H(N₁, 1, Z')`; the destination outage given `L` decoded relays is
//! `H(N₂, L, Z)`.
//!
//! `H` is evaluated by the finite binomial expansion over `(k, g, s)` with
//! upper incomplete gamma functions. At high SNR that expansion cancels
//! catastrophically (it computes a tiny number as a difference of `O(1)`
//! terms), so when its cancellation ratio exceeds [`CANCELLATION_SWITCH`]
//! the same integral is re-evaluated from the all-positive series of the
//! CDF tail, `P(N, x) = e^{-x} Σ_{j≥N} x^j/j!`.

use crate::channel::{best_relay_cdf, HopModel, InterferenceProfile, SystemConfig};
use crate::error::{Error, Result};
use crate::specfun::{
    binomial, exp_tail_poly_power, factorial, log_factorial, scaled_sum, sum_positive,
    trunc_exp_poly_power, upper_gamma_int_ladder, LogScaledValue,
};

/// Cancellation ratio above which the expanded series is abandoned for the
/// positive tail series. Leaves at least ~9 good digits.
pub const CANCELLATION_SWITCH: f64 = 1e6;

/// Cancellation ratio above which a result carries a warning.
pub const CANCELLATION_WARN: f64 = 1e12;

/// Upper bound on the degree of the positive tail series.
const MAX_TAIL_DEGREE: usize = 8000;

/// How an outage value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Analytic,
    Asymptotic,
    MonteCarlo,
    Oracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Asymptotic => "asymptotic",
            Method::MonteCarlo => "montecarlo",
            Method::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "analytic" => Ok(Method::Analytic),
            "asymptotic" => Ok(Method::Asymptotic),
            "montecarlo" | "mc" | "simulate" => Ok(Method::MonteCarlo),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Diagnostic attached to an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The evaluated series lost more than 12 digits to cancellation.
    Cancellation { ratio: f64 },
    /// The raw value left `[0, 1]` and was clamped.
    Clamped { raw: f64 },
    /// Too few Monte Carlo outage events for a reliable interval.
    LowEventCount { events: u64 },
}

impl Warning {
    pub fn tag(&self) -> &'static str {
        match self {
            Warning::Cancellation { .. } => "cancellation",
            Warning::Clamped { .. } => "clamped",
            Warning::LowEventCount { .. } => "low_event_count",
        }
    }
}

/// Which series produced a [`SeriesValue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesRoute {
    /// No interference or a trivial case; no series needed.
    Direct,
    /// Binomial expansion with upper incomplete gamma functions.
    Expanded,
    /// All-positive series of the CDF tail.
    PositiveTail,
}

/// A probability produced by one of the series, with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub cancellation_ratio: f64,
    pub terms: usize,
    pub route: SeriesRoute,
}

impl SeriesValue {
    fn exact(value: f64) -> Self {
        SeriesValue {
            value,
            cancellation_ratio: 1.0,
            terms: 0,
            route: SeriesRoute::Direct,
        }
    }
}

/// Outage probability with method tag and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageEstimate {
    /// Probability clamped to `[0, 1]`.
    pub probability: f64,
    /// Value before clamping.
    pub raw_probability: f64,
    pub method: Method,
    /// Worst cancellation ratio among the series used (analytic only).
    pub cancellation_ratio: f64,
    /// 99% Wilson half-width (Monte Carlo only).
    pub ci_halfwidth: f64,
    pub terms_evaluated: usize,
    pub warnings: Vec<Warning>,
}

impl OutageEstimate {
    pub(crate) fn new(raw: f64, method: Method) -> Self {
        let mut warnings = Vec::new();
        let probability = if raw.is_nan() {
            raw
        } else {
            raw.clamp(0.0, 1.0)
        };
        if probability != raw && !raw.is_nan() {
            warnings.push(Warning::Clamped { raw });
        }
        OutageEstimate {
            probability,
            raw_probability: raw,
            method,
            cancellation_ratio: 1.0,
            ci_halfwidth: 0.0,
            terms_evaluated: 0,
            warnings,
        }
    }

    pub fn has_warning(&self, tag: &str) -> bool {
        self.warnings.iter().any(|w| w.tag() == tag)
    }
}

/// Which printed reading of the destination expansion to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionVariant {
    /// Every `λu k` carries `1/C` and the `k`-th binomial term uses `T^k`.
    Consistent,
    /// Prefactor base `λ^I + uλk` without `1/C`, and `T^{k+1}` (sums
    /// starting at `j₀`). Kept only to exhibit its disagreement with quadrature.
    Literal,
}

fn ensure_unit_power(cfg: &SystemConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.mean_power != 1.0 {
        return Err(Error::Config(
            "closed-form evaluation assumes unit mean channel power".into(),
        ));
    }
    Ok(())
}

/// `H(N, L, Z)` for hop `hop`, `L = set_size` and interference `prof` at
/// threshold `u`.
pub fn hop_outage_integral(
    hop: &HopModel,
    set_size: u32,
    prof: &InterferenceProfile,
    u: f64,
) -> Result<SeriesValue> {
    if set_size == 0 {
        return Ok(SeriesValue::exact(1.0));
    }
    if u == 0.0 {
        return Ok(SeriesValue::exact(0.0));
    }
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("threshold must be finite and >= 0, got {u}")));
    }
    if prof.is_absent() {
        return Ok(SeriesValue::exact(best_relay_cdf(u, hop, set_size)?));
    }
    let expanded = expanded_series(hop, set_size, prof, u, ExpansionVariant::Consistent)?;
    if expanded.cancellation_ratio <= CANCELLATION_SWITCH {
        return Ok(expanded);
    }
    Ok(positive_tail_series(hop, set_size, prof, u)?.unwrap_or(expanded))
}

/// The binomial expansion
///
/// ```text
/// Σ_k C(L,k)(−1)^k Σ_s c_s^{(k)} a^s Σ_g w_g Γ(g+s+1, c_k) / c_k^{g+s+1}
/// ```
///
/// with `c_s^{(k)}` the coefficients of `T(x)^k`, `T(x) = Σ_{j<N} x^j/j!`,
/// `c_k = λ^I + k a` and `w_g = (λ^I)^I e^{λ^I} (−1)^{I−1−g} C(I−1,g) / (I−1)!`.
/// Terms are summed in ascending magnitude with compensation.
pub fn expanded_series(
    hop: &HopModel,
    set_size: u32,
    prof: &InterferenceProfile,
    u: f64,
    variant: ExpansionVariant,
) -> Result<SeriesValue> {
    if prof.is_absent() {
        return Err(Error::Domain(
            "the expansion integrates against an interference density".into(),
        ));
    }
    let count = prof.count();
    let lambda_i = prof.rate();
    let a = hop.gamma_rate() * u;
    let a_scaled = LogScaledValue::from_f64(a);
    let weight = LogScaledValue::from_ln(
        count as f64 * lambda_i.ln() + lambda_i - log_factorial((count - 1) as u64),
    );
    let g_binomials: Vec<LogScaledValue> = (0..count)
        .map(|g| binomial((count - 1) as u64, g as u64))
        .collect::<Result<_>>()?;

    let mut terms = Vec::new();
    for k in 0..=set_size {
        let power = match variant {
            ExpansionVariant::Consistent => k,
            ExpansionVariant::Literal => k + 1,
        };
        let poly = trunc_exp_poly_power(hop.n_elements(), power)?;
        let gamma_arg = lambda_i + k as f64 * a;
        let prefactor_base = match variant {
            ExpansionVariant::Consistent => gamma_arg,
            ExpansionVariant::Literal => lambda_i + k as f64 * u * hop.rate(),
        };
        let max_order = count + poly.len() as u32 - 1;
        let ladder = upper_gamma_int_ladder(max_order, gamma_arg)?;
        let inv_base = LogScaledValue::from_f64(prefactor_base).recip();
        let inv_powers: Vec<LogScaledValue> = std::iter::successors(Some(inv_base), |p| {
            Some(*p * inv_base)
        })
        .take(max_order as usize)
        .collect();
        let outer = binomial(set_size as u64, k as u64)? * weight;
        let k_sign = if k % 2 == 0 { 1 } else { -1 };

        let mut a_power = LogScaledValue::ONE;
        for s in 0..poly.len() {
            let coef = outer * poly.scaled(s) * a_power;
            for g in 0..count {
                let order = g as usize + s; // Γ(g+s+1, ·) sits at ladder[g+s]
                let magnitude = coef * g_binomials[g as usize] * ladder[order] * inv_powers[order];
                let g_sign = if (count - 1 - g) % 2 == 0 { 1 } else { -1 };
                terms.push(if k_sign * g_sign > 0 {
                    magnitude
                } else {
                    -magnitude
                });
            }
            a_power = a_power * a_scaled;
        }
    }
    let (sum, ratio) = scaled_sum(&terms);
    Ok(SeriesValue {
        value: sum.to_f64(),
        cancellation_ratio: ratio,
        terms: terms.len(),
        route: SeriesRoute::Expanded,
    })
}

/// The positive series
///
/// ```text
/// Σ_{s≥NL} d_s a^s e^{−La} (λ^I/c)^I Σ_{m=0}^{s} C(s,m) (I)_m / c^m,   c = λ^I + L a,
/// ```
///
/// where `d_s` are the coefficients of `(Σ_{j≥N} x^j/j!)^L`. Converges
/// geometrically with ratio `La/c`, fast exactly where the expansion cancels.
/// Returns `None` when the degree cap is reached before convergence.
pub fn positive_tail_series(
    hop: &HopModel,
    set_size: u32,
    prof: &InterferenceProfile,
    u: f64,
) -> Result<Option<SeriesValue>> {
    if prof.is_absent() || set_size == 0 || u <= 0.0 {
        return Err(Error::Domain(
            "positive tail series needs interference, L >= 1 and u > 0".into(),
        ));
    }
    let count = prof.count();
    let lambda_i = prof.rate();
    let n = hop.n_elements() as usize;
    let l = set_size as usize;
    let a = hop.gamma_rate() * u;
    let c = lambda_i + l as f64 * a;
    let ratio = l as f64 * a / c;
    let first = n * l;
    let mut extra = (45.0 / -ratio.ln()).ceil() as usize + 20 * count as usize + 16;

    loop {
        let max_degree = first + extra;
        let capped = max_degree >= MAX_TAIL_DEGREE;
        let max_degree = max_degree.min(MAX_TAIL_DEGREE);
        let d = exp_tail_poly_power(hop.n_elements(), set_size, max_degree);
        let front = LogScaledValue::from_ln(
            -(l as f64) * a + count as f64 * (lambda_i / c).ln() - log_factorial((count - 1) as u64),
        );
        let a_scaled = LogScaledValue::from_f64(a);
        let inv_c = LogScaledValue::from_f64(c).recip();

        let mut terms = Vec::with_capacity(max_degree - first + 1);
        let mut a_power = a_scaled.powi(first as u32);
        let mut moment_terms = Vec::with_capacity(max_degree + 1);
        for s in first..=max_degree {
            // Σ_m C(s,m) (I+m−1)! / c^m
            moment_terms.clear();
            let mut h = factorial((count - 1) as u64);
            moment_terms.push(h);
            for m in 0..s {
                h = h * LogScaledValue::from_f64(((s - m) as f64 / (m + 1) as f64) * (count as f64 + m as f64))
                    * inv_c;
                moment_terms.push(h);
            }
            terms.push(d[s] * a_power * sum_positive(&moment_terms));
            a_power = a_power * a_scaled;
        }
        let total = sum_positive(&terms);
        let last = terms[terms.len() - 1];
        let prev = terms[terms.len() - 2];
        let decaying = last.cmp_magnitude(&prev).is_le();
        let small = (last / total).to_f64() < 1e-18;
        if decaying && small {
            return Ok(Some(SeriesValue {
                value: (front * total).to_f64(),
                cancellation_ratio: 1.0,
                terms: terms.len(),
                route: SeriesRoute::PositiveTail,
            }));
        }
        if capped {
            return Ok(None);
        }
        extra *= 2;
    }
}

/// Per-relay decoding failure probability `q = P[γ_{s,k} < u]`.
pub fn relay_decode_failure(cfg: &SystemConfig) -> Result<SeriesValue> {
    ensure_unit_power(cfg)?;
    hop_outage_integral(
        &cfg.first_hop()?,
        1,
        &cfg.relay_interference()?,
        cfg.threshold(),
    )
}

/// `P[γ_d < u | |B| = L]`.
pub fn dest_outage_given_set(cfg: &SystemConfig, set_size: u32) -> Result<SeriesValue> {
    ensure_unit_power(cfg)?;
    if set_size > cfg.k_relays {
        return Err(Error::Domain(format!(
            "decoding set size {set_size} exceeds the relay count {}",
            cfg.k_relays
        )));
    }
    hop_outage_integral(
        &cfg.second_hop()?,
        set_size,
        &cfg.dest_interference()?,
        cfg.threshold(),
    )
}

/// The destination expansion in the requested reading; see [`ExpansionVariant`].
pub fn dest_outage_expanded(
    cfg: &SystemConfig,
    set_size: u32,
    variant: ExpansionVariant,
) -> Result<f64> {
    ensure_unit_power(cfg)?;
    if set_size == 0 {
        return Ok(1.0);
    }
    let prof = cfg.dest_interference()?;
    Ok(expanded_series(&cfg.second_hop()?, set_size, &prof, cfg.threshold(), variant)?.value)
}

/// `P[|B| = L] = C(K,L) (1−q)^L q^{K−L}` for `L = 0..=K`.
pub fn decoding_set_pmf(k_relays: u32, q: f64) -> Vec<(u32, f64)> {
    let p = 1.0 - q;
    (0..=k_relays)
        .map(|l| {
            let c = binomial(k_relays as u64, l as u64).map_or(0.0, |b| b.to_f64());
            (l, c * p.powi(l as i32) * q.powi((k_relays - l) as i32))
        })
        .collect()
}

/// Distribution of the decoding-set size under i.i.d. relays.
pub fn decoding_set_distribution(cfg: &SystemConfig) -> Result<Vec<(u32, f64)>> {
    let q = relay_decode_failure(cfg)?.value.clamp(0.0, 1.0);
    Ok(decoding_set_pmf(cfg.k_relays, q))
}

/// End-to-end outage probability `Σ_L P[γ_d<u | L] P[|B|=L]`.
///
/// Both factors depend on the decoding set only through its size, so the
/// sum over subsets collapses to a sum over sizes.
pub fn outage_probability(cfg: &SystemConfig) -> Result<OutageEstimate> {
    ensure_unit_power(cfg)?;
    if cfg.threshold() == 0.0 {
        return Ok(OutageEstimate::new(0.0, Method::Analytic));
    }
    let q = relay_decode_failure(cfg)?;
    let mut worst = q.cancellation_ratio;
    let mut terms = q.terms;
    let mut total = 0.0;
    for (l, weight) in decoding_set_pmf(cfg.k_relays, q.value.clamp(0.0, 1.0)) {
        let d = dest_outage_given_set(cfg, l)?;
        worst = worst.max(d.cancellation_ratio);
        terms += d.terms;
        total += weight * d.value;
    }
    let mut est = OutageEstimate::new(total, Method::Analytic);
    est.cancellation_ratio = worst;
    est.terms_evaluated = terms;
    if worst > CANCELLATION_WARN {
        est.warnings.push(Warning::Cancellation { ratio: worst });
    }
    Ok(est)
}
