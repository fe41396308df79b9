//! Gated single-photon detectors and the trigger electronics that open
//! their gates.
//!
//! Detectors are threshold devices: any number of photons inside an open
//! gate yields at most one click, with per-photon efficiency η and a dark
//! count that fires with probability 1 − exp(−r_dark · gate) per gate.
//! Gate scheduling mirrors the bench: the herald detectors are gated from
//! the divided pump clock; a herald click, delayed by the processing
//! electronics and a programmable two-channel delay generator, gates the
//! analysis detectors, whose photons have meanwhile been held in a fiber
//! spool.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fock::Path;

/// Vacuum speed of light in meters per nanosecond.
pub const C_M_PER_NS: f64 = 0.299792458;

/// One gated threshold detector.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Photon detection efficiency, including collection losses.
    pub efficiency: f64,
    /// Gate width in nanoseconds.
    pub gate_ns: f64,
    /// Dark-count rate in hertz while gated.
    pub dark_hz: f64,
    /// Highest gate-repetition rate the device accepts, MHz; faster
    /// requests are silently ignored.
    pub max_trigger_mhz: f64,
    /// Offset from the trigger edge to the gate opening, nanoseconds.
    pub internal_delay_ns: f64,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(SimError::InvalidParameter(format!(
                "detector efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        if !(self.gate_ns > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "gate width must be positive, got {}",
                self.gate_ns
            )));
        }
        if self.dark_hz < 0.0 || self.max_trigger_mhz <= 0.0 {
            return Err(SimError::InvalidParameter(
                "dark rate must be nonnegative and max trigger rate positive".into(),
            ));
        }
        Ok(())
    }

    /// Dark-click probability per gate: 1 − exp(−r·T).
    pub fn p_dark(&self) -> f64 {
        -(-self.dark_hz * self.gate_ns * 1e-9).exp_m1()
    }

    /// Click probability with `n` photons in the gate:
    /// 1 − (1−η)ⁿ (1−p_dark).
    pub fn p_click(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.efficiency).powi(n as i32) * (1.0 - self.p_dark())
    }

    pub fn p_no_click(&self, n: u32) -> f64 {
        1.0 - self.p_click(n)
    }
}

/// Herald-class detector defaults (free-running gate from the divided
/// pump clock, wider gate, slower recovery).
pub fn herald_detector_default() -> DetectorModel {
    DetectorModel {
        efficiency: 0.10,
        gate_ns: 2.5,
        dark_hz: 150.0,
        max_trigger_mhz: 5.0,
        internal_delay_ns: 1.75,
    }
}

/// Analysis-class detector defaults (externally gated, short gate).
pub fn analysis_detector_default() -> DetectorModel {
    DetectorModel {
        efficiency: 0.10,
        gate_ns: 1.0,
        dark_hz: 100.0,
        max_trigger_mhz: 10.0,
        internal_delay_ns: 0.0,
    }
}

/// What a registered click came from.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClickOrigin {
    Photon,
    Dark,
}

impl fmt::Display for ClickOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClickOrigin::Photon => write!(f, "photon"),
            ClickOrigin::Dark => write!(f, "dark"),
        }
    }
}

/// One registered detector click.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub detector: Path,
    pub time_ns: f64,
    pub origin: ClickOrigin,
}

/// Write click records as CSV with header `detector,time_ns,origin`.
pub fn write_events_csv(mut sink: impl std::io::Write, events: &[EventRecord]) -> Result<()> {
    writeln!(sink, "detector,time_ns,origin")?;
    for e in events {
        writeln!(sink, "{},{},{}", e.detector, e.time_ns, e.origin)?;
    }
    Ok(())
}

/// Simulate one gate of a threshold detector. `arrivals_ns` are photon
/// arrival times at the detector face; only those inside
/// [gate_open, gate_open + gate] (closed interval) can fire it. Returns
/// the earliest click, photon or dark.
pub fn detect(
    detector: Path,
    model: &DetectorModel,
    gate_open_ns: f64,
    arrivals_ns: &[f64],
    rng: &mut impl Rng,
) -> Option<EventRecord> {
    let gate_close = gate_open_ns + model.gate_ns;
    let mut click: Option<EventRecord> = None;
    let mut in_gate: Vec<f64> = arrivals_ns
        .iter()
        .copied()
        .filter(|&t| t >= gate_open_ns && t <= gate_close)
        .collect();
    in_gate.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for t in in_gate {
        if rng.gen::<f64>() < model.efficiency {
            click = Some(EventRecord {
                detector,
                time_ns: t,
                origin: ClickOrigin::Photon,
            });
            break;
        }
    }
    if rng.gen::<f64>() < model.p_dark() {
        let t_dark = gate_open_ns + rng.gen::<f64>() * model.gate_ns;
        match click {
            Some(c) if c.time_ns <= t_dark => {}
            _ => {
                click = Some(EventRecord {
                    detector,
                    time_ns: t_dark,
                    origin: ClickOrigin::Dark,
                });
            }
        }
    }
    click
}

/// Which herald condition gates the analysis detectors.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldMode {
    /// Both herald detectors must click in the same pulse.
    #[default]
    CoincidenceCd,
    /// A click on detector C alone heralds (delay alignment runs).
    SingleC,
    /// A click on detector D alone heralds.
    SingleD,
}

/// Trigger and gate-distribution electronics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TriggerChain {
    /// Pump-clock division feeding the herald-detector gates.
    pub divide_by: u32,
    /// Programmable delay, herald → analysis gate, channel driving the
    /// first analysis pair, nanoseconds.
    pub dg535_ch1_ns: f64,
    /// Same for the second channel.
    pub dg535_ch2_ns: f64,
    /// Step size of the programmable delay, nanoseconds.
    pub dg535_step_ns: f64,
    /// Optical storage delay on the analysis photons, nanoseconds.
    pub fiber_delay_ns: f64,
    /// Coincidence acceptance window, nanoseconds (full width).
    pub coincidence_window_ns: f64,
    /// Herald-processing latency before the programmable delay,
    /// nanoseconds.
    pub electronics_latency_ns: f64,
    /// How far the divided pump trigger leads the optical arrival at the
    /// herald detectors, nanoseconds.
    pub trigger_lead_ns: f64,
    pub herald: HeraldMode,
}

impl Default for TriggerChain {
    fn default() -> TriggerChain {
        TriggerChain {
            divide_by: 16,
            dg535_ch1_ns: 39.170,
            dg535_ch2_ns: 39.170,
            dg535_step_ns: 0.005,
            fiber_delay_ns: fiber_delay_ns(100.0, 1.468),
            coincidence_window_ns: 2.0,
            electronics_latency_ns: 450.0,
            trigger_lead_ns: 3.0,
            herald: HeraldMode::CoincidenceCd,
        }
    }
}

impl TriggerChain {
    pub fn validate(&self) -> Result<()> {
        if self.divide_by == 0 {
            return Err(SimError::InvalidParameter(
                "trigger division factor must be at least 1".into(),
            ));
        }
        if !(self.dg535_step_ns > 0.0) {
            return Err(SimError::InvalidParameter(
                "delay-generator step must be positive".into(),
            ));
        }
        for (name, d) in [
            ("dg535_ch1_ns", self.dg535_ch1_ns),
            ("dg535_ch2_ns", self.dg535_ch2_ns),
        ] {
            if d < 0.0 {
                return Err(SimError::InvalidParameter(format!(
                    "{name} must be nonnegative, got {d}"
                )));
            }
            let steps = d / self.dg535_step_ns;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(SimError::InvalidParameter(format!(
                    "{name} = {d} is not a multiple of the {} step",
                    self.dg535_step_ns
                )));
            }
        }
        if self.fiber_delay_ns < 0.0
            || self.electronics_latency_ns < 0.0
            || self.trigger_lead_ns < 0.0
        {
            return Err(SimError::InvalidParameter(
                "chain delays must be nonnegative".into(),
            ));
        }
        if !(self.coincidence_window_ns > 0.0) {
            return Err(SimError::InvalidParameter(
                "coincidence window must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Delay feeding the gate of an analysis detector: channel 1 drives
    /// the ports of the first displacer pair, channel 2 the second.
    pub fn channel_delay_ns(&self, port: Path) -> f64 {
        match port {
            Path::A | Path::Alpha => self.dg535_ch2_ns,
            _ => self.dg535_ch1_ns,
        }
    }

    /// Snap a requested programmable delay onto the step grid.
    pub fn snap_to_step(&self, delay_ns: f64) -> f64 {
        (delay_ns / self.dg535_step_ns).round() * self.dg535_step_ns
    }
}

/// Storage-fiber group delay: length · n_g / c.
pub fn fiber_delay_ns(length_m: f64, group_index: f64) -> f64 {
    length_m * group_index / C_M_PER_NS
}

/// Count coincidences between two click streams: clicks pair up when
/// |t_a − t_b| ≤ window/2, each click used at most once, earliest pairs
/// first.
pub fn count_coincidences(events: &[EventRecord], a: Path, b: Path, window_ns: f64) -> u64 {
    let mut ta: Vec<f64> = events
        .iter()
        .filter(|e| e.detector == a)
        .map(|e| e.time_ns)
        .collect();
    let mut tb: Vec<f64> = events
        .iter()
        .filter(|e| e.detector == b)
        .map(|e| e.time_ns)
        .collect();
    ta.sort_by(|x, y| x.partial_cmp(y).unwrap());
    tb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let half = window_ns / 2.0;
    let (mut i, mut j, mut n) = (0usize, 0usize, 0u64);
    while i < ta.len() && j < tb.len() {
        let dt = ta[i] - tb[j];
        if dt.abs() <= half {
            n += 1;
            i += 1;
            j += 1;
        } else if dt < 0.0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

/// Singles count on one detector.
pub fn count_singles(events: &[EventRecord], port: Path) -> u64 {
    events.iter().filter(|e| e.detector == port).count() as u64
}

/// Per-port singles over a full stream.
pub fn singles_by_port(events: &[EventRecord]) -> BTreeMap<Path, u64> {
    let mut out = BTreeMap::new();
    for e in events {
        *out.entry(e.detector).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn dark_probability_matches_rate_times_gate() {
        let det = herald_detector_default();
        let expected = 150.0 * 2.5e-9;
        assert!((det.p_dark() - expected).abs() / expected < 1e-6);
        assert!((det.p_dark() - 3.75e-7).abs() < 1e-12);
    }

    #[test]
    fn click_probability_limits() {
        let mut det = analysis_detector_default();
        det.dark_hz = 0.0;
        assert_eq!(det.p_click(0), 0.0);
        det.efficiency = 1.0;
        assert_eq!(det.p_click(1), 1.0);
        det.efficiency = 0.1;
        assert!((det.p_click(2) - 0.19).abs() < 1e-12);
        assert!((det.p_click(1) + det.p_no_click(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fiber_delay_scales_with_length() {
        let d100 = fiber_delay_ns(100.0, 1.468);
        assert!((d100 - 489.67209175088726).abs() < 1e-9);
        let d200 = fiber_delay_ns(200.0, 1.468);
        assert!((d200 - 2.0 * d100).abs() < 1e-9);
    }

    #[test]
    fn gate_boundaries_are_inclusive() {
        let det = DetectorModel {
            efficiency: 1.0,
            gate_ns: 1.0,
            dark_hz: 0.0,
            max_trigger_mhz: 10.0,
            internal_delay_ns: 0.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let hit = detect(Path::B, &det, 10.0, &[11.0], &mut rng);
        assert_eq!(hit.unwrap().time_ns, 11.0);
        let miss = detect(Path::B, &det, 10.0, &[11.0001], &mut rng);
        assert!(miss.is_none());
        let early = detect(Path::B, &det, 10.0, &[9.9999], &mut rng);
        assert!(early.is_none());
    }

    #[test]
    fn detect_returns_earliest_surviving_photon() {
        let det = DetectorModel {
            efficiency: 1.0,
            gate_ns: 2.0,
            dark_hz: 0.0,
            max_trigger_mhz: 10.0,
            internal_delay_ns: 0.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let hit = detect(Path::Alpha, &det, 0.0, &[1.5, 0.25, 0.8], &mut rng).unwrap();
        assert_eq!(hit.time_ns, 0.25);
        assert_eq!(hit.origin, ClickOrigin::Photon);
    }

    #[test]
    fn detect_click_rate_matches_p_click() {
        let det = analysis_detector_default();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 1_000_000;
        let mut clicks = 0u64;
        for _ in 0..n {
            if detect(Path::B, &det, 0.0, &[0.5], &mut rng).is_some() {
                clicks += 1;
            }
        }
        let rate = clicks as f64 / n as f64;
        let p = det.p_click(1);
        let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() < tol, "rate {rate} vs p {p}");
    }

    #[test]
    fn coincidence_window_is_half_width_each_side() {
        let mk = |d: Path, t: f64| EventRecord {
            detector: d,
            time_ns: t,
            origin: ClickOrigin::Photon,
        };
        let events = [mk(Path::Alpha, 0.0), mk(Path::Beta, 1.0)];
        assert_eq!(count_coincidences(&events, Path::Alpha, Path::Beta, 2.0), 1);
        assert_eq!(count_coincidences(&events, Path::Alpha, Path::Beta, 1.9), 0);
        let burst = [
            mk(Path::Alpha, 0.0),
            mk(Path::Alpha, 0.3),
            mk(Path::Beta, 0.1),
        ];
        assert_eq!(count_coincidences(&burst, Path::Alpha, Path::Beta, 2.0), 1);
        let two = [
            mk(Path::Alpha, 0.0),
            mk(Path::Beta, 0.2),
            mk(Path::Alpha, 13.0),
            mk(Path::Beta, 13.4),
        ];
        assert_eq!(count_coincidences(&two, Path::Alpha, Path::Beta, 2.0), 2);
    }

    #[test]
    fn csv_format_round_trips() {
        let events = [
            EventRecord {
                detector: Path::C,
                time_ns: 489.672,
                origin: ClickOrigin::Photon,
            },
            EventRecord {
                detector: Path::Alpha,
                time_ns: 490.5,
                origin: ClickOrigin::Dark,
            },
        ];
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("detector,time_ns,origin"));
        assert_eq!(lines.next(), Some("C,489.672,photon"));
        assert_eq!(lines.next(), Some("alpha,490.5,dark"));
    }

    #[test]
    fn chain_defaults_center_gates_on_stored_photons() {
        let chain = TriggerChain::default();
        chain.validate().unwrap();
        // Herald click near t = 0 → analysis gate opens at
        // latency + channel delay; the stored photon arrives mid-gate.
        let gate_open = chain.electronics_latency_ns + chain.dg535_ch1_ns;
        let arrival = chain.fiber_delay_ns;
        let det = analysis_detector_default();
        assert!(arrival > gate_open && arrival < gate_open + det.gate_ns);
        let center_offset = arrival - (gate_open + det.gate_ns / 2.0);
        assert!(center_offset.abs() < 0.01, "offset {center_offset}");
    }

    #[test]
    fn chain_rejects_off_grid_delay() {
        let chain = TriggerChain {
            dg535_ch1_ns: 39.1707,
            ..TriggerChain::default()
        };
        assert!(chain.validate().is_err());
        let snapped = TriggerChain::default().snap_to_step(39.1707);
        assert!((snapped - 39.170).abs() < 1e-9);
    }

    #[test]
    fn accidental_coincidences_scale_with_window() {
        // Two independent click streams at rate r: expected accidentals
        // over time T are ≈ r²·w·T for small windows.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let total_ns = 1e9;
        let rate_per_ns = 1e-3;
        let n = (total_ns * rate_per_ns) as usize;
        let mut events = Vec::with_capacity(2 * n);
        for _ in 0..n {
            events.push(EventRecord {
                detector: Path::Alpha,
                time_ns: rng.gen::<f64>() * total_ns,
                origin: ClickOrigin::Photon,
            });
            events.push(EventRecord {
                detector: Path::Beta,
                time_ns: rng.gen::<f64>() * total_ns,
                origin: ClickOrigin::Photon,
            });
        }
        let w = 2.0;
        let counted = count_coincidences(&events, Path::Alpha, Path::Beta, w) as f64;
        let expected = rate_per_ns * rate_per_ns * w * total_ns;
        assert!((counted - expected).abs() < 5.0 * expected.sqrt());
    }
}
