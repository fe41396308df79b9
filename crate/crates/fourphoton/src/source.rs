//! Pump-pulse train and pair-emission model.
//!
//! Each pump pulse is split over up to four beams by two half-wave plates
//! and a pair of displacers; each pumped beam can emit photon pairs with a
//! mean number proportional to the power it receives. The per-pulse state
//! is a truncated product over the beams' pair-number ladders, with the
//! signal photon horizontal and the idler vertical in every beam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::fock::{FockState, Mode, Occupation, Path, Pol};

/// Pump laser and beam-splitting settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PumpConfig {
    /// Total pump power in milliwatts.
    pub power_mw: f64,
    /// Pulse repetition rate in megahertz.
    pub rep_rate_mhz: f64,
    /// First splitting plate: distributes power between beam groups
    /// {1,3} and {2,4}.
    pub hwp1_deg: f64,
    /// Second splitting plate: distributes each group between its two
    /// beams.
    pub hwp2_deg: f64,
    /// Mechanical blocks inserted into individual beams.
    pub blocked: [bool; 4],
    /// Pre-crystal arrival offset of each beam's pulse, picoseconds.
    pub offsets_ps: [f64; 4],
    /// Pump-power transmission of each beam (inserted glass attenuates
    /// the pump before the crystal).
    #[serde(default = "unit_transmission")]
    pub transmission: [f64; 4],
    /// Explicit relative field amplitudes per beam; overrides the plate
    /// angles when set. Squared magnitudes must sum to 1.
    pub relative_amplitudes: Option<[f64; 4]>,
}

fn unit_transmission() -> [f64; 4] {
    [1.0; 4]
}

impl Default for PumpConfig {
    fn default() -> PumpConfig {
        PumpConfig {
            power_mw: 25.0,
            rep_rate_mhz: 76.0,
            hwp1_deg: 22.5,
            hwp2_deg: 22.5,
            blocked: [false; 4],
            offsets_ps: [0.0, 0.0, 0.244, 0.244],
            transmission: unit_transmission(),
            relative_amplitudes: None,
        }
    }
}

impl PumpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.power_mw < 0.0 {
            return Err(SimError::InvalidParameter(format!(
                "pump power must be nonnegative, got {}",
                self.power_mw
            )));
        }
        if !(self.rep_rate_mhz > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "repetition rate must be positive, got {}",
                self.rep_rate_mhz
            )));
        }
        if !self.offsets_ps.iter().all(|t| t.is_finite()) {
            return Err(SimError::InvalidParameter(
                "pump arrival offsets must be finite".into(),
            ));
        }
        if !self.transmission.iter().all(|t| (0.0..=1.0).contains(t)) {
            return Err(SimError::InvalidParameter(format!(
                "beam transmissions must lie in [0, 1], got {:?}",
                self.transmission
            )));
        }
        if let Some(amps) = self.relative_amplitudes {
            let total: f64 = amps.iter().map(|a| a * a).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(SimError::InvalidParameter(format!(
                    "relative pump amplitudes must satisfy Σ|a|² = 1, got {total}"
                )));
            }
        }
        Ok(())
    }

    /// Power fraction reaching each beam before blocks. The two plates
    /// rotate into their displacers so the four fractions are products of
    /// cos²/sin² of the doubled angles and always sum to 1.
    pub fn beam_fractions(&self) -> [f64; 4] {
        if let Some(amps) = self.relative_amplitudes {
            return [
                amps[0] * amps[0],
                amps[1] * amps[1],
                amps[2] * amps[2],
                amps[3] * amps[3],
            ];
        }
        let c1 = (2.0 * self.hwp1_deg.to_radians()).cos().powi(2);
        let s1 = 1.0 - c1;
        let c2 = (2.0 * self.hwp2_deg.to_radians()).cos().powi(2);
        let s2 = 1.0 - c2;
        [c1 * c2, s1 * c2, c1 * s2, s1 * s2]
    }

    /// Indices (1-based) of beams carrying power and not blocked.
    pub fn pumped_beams(&self) -> Vec<u8> {
        let f = self.beam_fractions();
        (0..4)
            .filter(|&i| !self.blocked[i] && f[i] > 0.0)
            .map(|i| i as u8 + 1)
            .collect()
    }
}

/// Pair-number statistics of one beam's emission.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStatistics {
    /// Near-single-spectral-mode emission: geometric pair-number
    /// distribution P(n) = μⁿ/(1+μ)ⁿ⁺¹.
    #[default]
    Thermal,
    /// Many-spectral-mode limit: P(n) = e^{−μ} μⁿ/n!.
    Poisson,
}

/// Emission-strength settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpdcConfig {
    /// Mean pairs per pulse per beam per milliwatt of that beam's power.
    pub mu_per_mw: f64,
    pub statistics: PairStatistics,
    /// Maximum total pairs kept per pulse.
    pub max_pairs: u32,
}

impl Default for SpdcConfig {
    fn default() -> SpdcConfig {
        SpdcConfig {
            mu_per_mw: 2e-3,
            statistics: PairStatistics::Thermal,
            max_pairs: 2,
        }
    }
}

impl SpdcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu_per_mw < 0.0 {
            return Err(SimError::InvalidParameter(format!(
                "mu_per_mw must be nonnegative, got {}",
                self.mu_per_mw
            )));
        }
        if self.max_pairs < 1 {
            return Err(SimError::InvalidParameter(
                "max_pairs must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Mean pair number of beam `p` (1-based) for this pump setting.
    pub fn mu_for_beam(&self, pump: &PumpConfig, p: u8) -> f64 {
        let i = (p - 1) as usize;
        if pump.blocked[i] {
            return 0.0;
        }
        self.mu_per_mw * pump.power_mw * pump.beam_fractions()[i] * pump.transmission[i]
    }
}

/// P(n pairs) for one beam, untruncated.
pub fn pair_probability(statistics: PairStatistics, mu: f64, n: u32) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    match statistics {
        PairStatistics::Thermal => {
            let x = mu / (1.0 + mu);
            (1.0 - x) * x.powi(n as i32)
        }
        PairStatistics::Poisson => {
            let mut log_p = -mu + n as f64 * mu.ln();
            for k in 2..=n {
                log_p -= (k as f64).ln();
            }
            log_p.exp()
        }
    }
}

/// Joint probability of per-beam pair counts, conditioned on the total
/// staying within `max_pairs`. This is exactly the distribution the
/// truncated, renormalized pulse state carries.
pub fn joint_pair_probabilities(
    pump: &PumpConfig,
    spdc: &SpdcConfig,
) -> Vec<([u32; 4], f64)> {
    let mu: Vec<f64> = (1..=4).map(|p| spdc.mu_for_beam(pump, p)).collect();
    let cap = spdc.max_pairs;
    let mut out = Vec::new();
    let mut total = 0.0;
    for n1 in 0..=cap {
        for n2 in 0..=(cap - n1) {
            for n3 in 0..=(cap - n1 - n2) {
                for n4 in 0..=(cap - n1 - n2 - n3) {
                    let p = pair_probability(spdc.statistics, mu[0], n1)
                        * pair_probability(spdc.statistics, mu[1], n2)
                        * pair_probability(spdc.statistics, mu[2], n3)
                        * pair_probability(spdc.statistics, mu[3], n4);
                    if p > 0.0 {
                        out.push(([n1, n2, n3, n4], p));
                        total += p;
                    }
                }
            }
        }
    }
    for (_, p) in &mut out {
        *p /= total;
    }
    out
}

/// Pulse state for definite per-beam pair counts: `n` pairs in beam `p`
/// occupy `(pump_p, H)` and `(pump_p, V)` at the beam's arrival offset.
pub fn pulse_state_for_counts(
    pump: &PumpConfig,
    counts: [u32; 4],
    truncation: u32,
) -> FockState {
    let mut entries = Vec::new();
    for (i, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let beam = i as u8 + 1;
        let tau = pump.offsets_ps[i];
        entries.push((Mode::new(Path::Pump(beam), Pol::H, tau, beam), n));
        entries.push((Mode::new(Path::Pump(beam), Pol::V, tau, beam), n));
    }
    FockState::from_terms(
        [(Occupation::from_entries(entries), Complex64::new(1.0, 0.0))],
        truncation,
    )
}

/// Full per-pulse emission state: superposition over all per-beam pair
/// counts within the truncation, normalized.
pub fn emit_pulse_state(
    pump: &PumpConfig,
    spdc: &SpdcConfig,
    truncation: u32,
) -> Result<FockState> {
    pump.validate()?;
    spdc.validate()?;
    if truncation < 2 * spdc.max_pairs {
        return Err(SimError::TruncationTooSmall {
            truncation,
            required: 2 * spdc.max_pairs,
        });
    }
    let mut terms = Vec::new();
    for (counts, p) in joint_pair_probabilities(pump, spdc) {
        let occ_state = pulse_state_for_counts(pump, counts, truncation);
        let (occ, _) = occ_state.terms().next().expect("one term").clone();
        terms.push((occ.clone(), Complex64::new(p.sqrt(), 0.0)));
    }
    FockState::from_terms(terms, truncation).normalized()
}

/// A sampled pulse: definite pair counts per beam.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PulseDraw {
    pub pairs: [u32; 4],
}

impl PulseDraw {
    pub fn total(&self) -> u32 {
        self.pairs.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs == [0; 4]
    }
}

fn draw_pair_count(statistics: PairStatistics, mu: f64, rng: &mut impl Rng) -> u32 {
    if mu == 0.0 {
        return 0;
    }
    match statistics {
        PairStatistics::Thermal => {
            // Inversion of the geometric CDF.
            let x = mu / (1.0 + mu);
            let u: f64 = rng.gen();
            ((1.0 - u).ln() / x.ln()).floor() as u32
        }
        PairStatistics::Poisson => {
            let limit = (-mu).exp();
            let mut n = 0;
            let mut prod: f64 = rng.gen();
            while prod > limit {
                n += 1;
                prod *= rng.gen::<f64>();
            }
            n
        }
    }
}

/// Draw per-beam pair counts, conditioned on the total staying within
/// `max_pairs` (whole-pulse rejection), matching the truncated analytic
/// state exactly.
pub fn sample_pulse(pump: &PumpConfig, spdc: &SpdcConfig, rng: &mut impl Rng) -> PulseDraw {
    let mu: Vec<f64> = (1..=4).map(|p| spdc.mu_for_beam(pump, p)).collect();
    loop {
        let mut pairs = [0u32; 4];
        for i in 0..4 {
            pairs[i] = draw_pair_count(spdc.statistics, mu[i], rng);
        }
        let draw = PulseDraw { pairs };
        if draw.total() <= spdc.max_pairs {
            return draw;
        }
    }
}

/// Pulse arrival timestamps in nanoseconds: k / rep_rate.
pub fn pulse_train_times(rep_rate_mhz: f64, n_pulses: u64) -> Vec<f64> {
    let period_ns = 1000.0 / rep_rate_mhz;
    (0..n_pulses).map(|k| k as f64 * period_ns).collect()
}
