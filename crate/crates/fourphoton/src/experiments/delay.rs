//! Trigger-chain delay calibration by coincidence-peak scans.
//!
//! Three sequential scans, each with a single pump beam unblocked,
//! walk a delay dial until the gated detector sits on its photon:
//!
//! 1. beam 1 only — channel 1 is scanned until B clicks peak among
//!    C-heralded events (a B·C coincidence peak),
//! 2. beam 2 only — channel 2 is scanned for the A·C peak,
//! 3. beam 3 only — the herald detector D's internal delay dial is
//!    scanned off the divided pump clock until D clicks peak.
//!
//! Because gate capture is a top-hat in the dial setting, the "peak"
//! is a plateau as wide as the gate; the calibrated value is the
//! plateau midpoint snapped onto the 5 ps dial grid, located in two
//! stages (coarse 0.4 ns sweep, then a 5 ps fine sweep around the hot
//! region). A plateau that is missing or runs into the scan boundary
//! fails loudly rather than returning a biased center.
//!
//! Scan 3 conditions on the pulse actually emitting a pair in beam 3 —
//! a statistics shortcut standing in for the much longer integration a
//! free-running scan would use; the located plateau is identical.
//!
//! Hidden cable offsets (`PlantedOffsets`) shift when clicks appear
//! without the locator's knowledge, which is how recovery is exercised
//! end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectorModel, HeraldMode, TriggerChain};
use crate::error::{Result, SimError};
use crate::experiments::conditioned::{
    build_pattern_table, condition_on_herald, condition_on_pairs, HeraldedEnsemble,
};
use crate::experiments::scan::derive_seed;
use crate::fock::{OverlapModel, Path};
use crate::layouts::{build_bench, Geometry, Layout};
use crate::source::SpdcConfig;

/// Extra gate-line delays unknown to the locator.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PlantedOffsets {
    pub ch1_ns: f64,
    pub ch2_ns: f64,
    pub herald_ns: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DelayScanSettings {
    /// Heralded (or emission-conditioned) events per scan point.
    pub events_per_point: u64,
    /// Clicks at or above this mark a point as on-plateau. With 200
    /// events and 10% efficiency the plateau runs at ≈ 20 clicks and
    /// the dark floor at ≈ 10⁻⁴, so 3 separates them cleanly.
    pub hot_threshold: u64,
    /// Swept range for the two programmable channels.
    pub channel_range_ns: (f64, f64),
    /// Swept range for the herald detector's internal delay.
    pub herald_range_ns: (f64, f64),
    pub coarse_step_ns: f64,
}

impl Default for DelayScanSettings {
    fn default() -> DelayScanSettings {
        DelayScanSettings {
            events_per_point: 200,
            hot_threshold: 3,
            // Wide enough for line offsets up to ~10 ns on the default
            // chain, with margin so a valid plateau never touches the
            // boundary.
            channel_range_ns: (26.0, 44.0),
            herald_range_ns: (0.0, 5.0),
            coarse_step_ns: 0.4,
        }
    }
}

/// Dial settings the three scans landed on.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DelayCalibration {
    pub ch1_ns: f64,
    pub ch2_ns: f64,
    pub herald_internal_ns: f64,
}

impl DelayCalibration {
    /// The chain with both programmable channels set to the located
    /// centers. The herald dial lives on the detector, not the chain.
    pub fn applied_to(&self, chain: &TriggerChain) -> TriggerChain {
        TriggerChain {
            dg535_ch1_ns: self.ch1_ns,
            dg535_ch2_ns: self.ch2_ns,
            ..*chain
        }
    }
}

/// One dial scan: an ensemble of conditioned events, a watched port,
/// and the photon's offset into the gate as a function of the dial.
struct DialScan<'a> {
    label: &'static str,
    ens: &'a HeraldedEnsemble,
    port: Path,
    det: DetectorModel,
    offset_ns: &'a dyn Fn(f64) -> f64,
}

impl DialScan<'_> {
    fn clicks_at(&self, dial: f64, events: u64, seed: u64) -> Result<u64> {
        let idx = self.ens.port_index(self.port)?;
        let offset = (self.offset_ns)(dial);
        let captured = offset >= 0.0 && offset <= self.det.gate_ns;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut clicks = 0u64;
        for _ in 0..events {
            let e = self.ens.draw(&mut rng);
            let n = if captured { e.pattern[idx] } else { 0 };
            clicks += u64::from(rng.gen_bool(self.det.p_click(n)));
        }
        Ok(clicks)
    }

    /// Hot-region bounds over a grid, requiring the plateau to sit
    /// strictly inside it.
    fn hot_bounds(
        &self,
        grid: &[f64],
        settings: &DelayScanSettings,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let mut first = None;
        let mut last = None;
        for (i, &d) in grid.iter().enumerate() {
            let clicks = self.clicks_at(d, settings.events_per_point, derive_seed(seed, i as u64))?;
            if clicks >= settings.hot_threshold {
                if first.is_none() {
                    first = Some(i);
                }
                last = Some(i);
            }
        }
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) => (f, l),
            _ => {
                return Err(SimError::CalibrationFailed(format!(
                    "{}: no coincidence plateau inside the scanned range",
                    self.label
                )))
            }
        };
        if first == 0 || last == grid.len() - 1 {
            return Err(SimError::CalibrationFailed(format!(
                "{}: plateau touches the scan boundary; widen the range",
                self.label
            )));
        }
        Ok((grid[first], grid[last]))
    }

    fn locate(
        &self,
        range: (f64, f64),
        step_ns: f64,
        settings: &DelayScanSettings,
        seed: u64,
    ) -> Result<f64> {
        let coarse: Vec<f64> = grid(range.0, range.1, settings.coarse_step_ns);
        let (lo, hi) = self.hot_bounds(&coarse, settings, derive_seed(seed, 1))?;
        let fine: Vec<f64> = grid(
            lo - settings.coarse_step_ns,
            hi + settings.coarse_step_ns,
            step_ns,
        );
        let (lo, hi) = self.hot_bounds(&fine, settings, derive_seed(seed, 2))?;
        Ok((0.5 * (lo + hi) / step_ns).round() * step_ns)
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let start = (lo / step).floor() * step;
    let n = ((hi - start) / step).ceil() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

/// Closed-form plateau centers (dial grid included) for a known plant:
/// what a perfect locator should return.
pub fn expected_centers(
    geom: &Geometry,
    chain: &TriggerChain,
    planted: &PlantedOffsets,
) -> Result<DelayCalibration> {
    let bench = build_bench(Layout::Ghz, geom)?;
    let tau_sig = |b: usize| (geom.pump_offsets_ps[b] + geom.sig_bd_delay_ps[b]) * 1e-3;
    let tau_idl = |b: usize| (geom.pump_offsets_ps[b] + geom.idl_bd_delay_ps[b]) * 1e-3;
    let step = chain.dg535_step_ns;
    let det_b = bench.detectors[&Path::B];
    let det_a = bench.detectors[&Path::A];
    let det_d = bench.detectors[&Path::D];
    let ch = |tau_i: f64, tau_s: f64, det: &DetectorModel, plant: f64| {
        chain.fiber_delay_ns + tau_i
            - tau_s
            - chain.electronics_latency_ns
            - plant
            - det.internal_delay_ns
            - det.gate_ns / 2.0
    };
    let herald = tau_sig(2) + chain.trigger_lead_ns - planted.herald_ns - det_d.gate_ns / 2.0;
    Ok(DelayCalibration {
        ch1_ns: (ch(tau_idl(0), tau_sig(0), &det_b, planted.ch1_ns) / step).round() * step,
        ch2_ns: (ch(tau_idl(1), tau_sig(1), &det_a, planted.ch2_ns) / step).round() * step,
        herald_internal_ns: (herald / step).round() * step,
    })
}

/// Run the three-scan protocol against a bench whose gate lines hide
/// `planted` extra delays.
pub fn calibrate_delays(
    geom: &Geometry,
    overlap: &OverlapModel,
    spdc: &SpdcConfig,
    power_mw: f64,
    chain: &TriggerChain,
    planted: &PlantedOffsets,
    settings: &DelayScanSettings,
    seed: u64,
) -> Result<DelayCalibration> {
    let bench = build_bench(Layout::Ghz, geom)?;
    let tau_sig = |b: usize| (geom.pump_offsets_ps[b] + geom.sig_bd_delay_ps[b]) * 1e-3;
    let tau_idl = |b: usize| (geom.pump_offsets_ps[b] + geom.idl_bd_delay_ps[b]) * 1e-3;
    let step = chain.dg535_step_ns;

    let single_beam = |beam: usize| {
        let mut pump = bench.default_pump.clone();
        pump.power_mw = power_mw;
        for b in 0..4 {
            pump.blocked[b] = b != beam;
        }
        pump
    };

    // Scan 1: beam 1, C heralds, watch B through channel 1.
    let table1 = build_pattern_table(&bench, &single_beam(0), spdc, overlap)?;
    let ens1 = condition_on_herald(&table1, HeraldMode::SingleC, &bench.detectors)?;
    let det_b = bench.detectors[&Path::B];
    let offset1 = |d: f64| {
        chain.fiber_delay_ns + tau_idl(0)
            - tau_sig(0)
            - chain.electronics_latency_ns
            - (d + planted.ch1_ns + det_b.internal_delay_ns)
    };
    let ch1 = DialScan {
        label: "channel 1 (B against C heralds)",
        ens: &ens1,
        port: Path::B,
        det: det_b,
        offset_ns: &offset1,
    }
    .locate(settings.channel_range_ns, step, settings, derive_seed(seed, 101))?;

    // Scan 2: beam 2, C heralds, watch A through channel 2.
    let table2 = build_pattern_table(&bench, &single_beam(1), spdc, overlap)?;
    let ens2 = condition_on_herald(&table2, HeraldMode::SingleC, &bench.detectors)?;
    let det_a = bench.detectors[&Path::A];
    let offset2 = |d: f64| {
        chain.fiber_delay_ns + tau_idl(1)
            - tau_sig(1)
            - chain.electronics_latency_ns
            - (d + planted.ch2_ns + det_a.internal_delay_ns)
    };
    let ch2 = DialScan {
        label: "channel 2 (A against C heralds)",
        ens: &ens2,
        port: Path::A,
        det: det_a,
        offset_ns: &offset2,
    }
    .locate(settings.channel_range_ns, step, settings, derive_seed(seed, 102))?;

    // Scan 3: beam 3, gate straight off the divided clock, walk D's
    // internal delay dial. Conditioned on the pulse carrying a pair.
    let table3 = build_pattern_table(&bench, &single_beam(2), spdc, overlap)?;
    let ens3 = condition_on_pairs(&table3, |pairs| pairs[2] >= 1)?;
    let det_d = bench.detectors[&Path::D];
    let offset3 = |v: f64| tau_sig(2) + chain.trigger_lead_ns - (v + planted.herald_ns);
    let herald_internal = DialScan {
        label: "herald internal delay (D off the divided clock)",
        ens: &ens3,
        port: Path::D,
        det: det_d,
        offset_ns: &offset3,
    }
    .locate(settings.herald_range_ns, step, settings, derive_seed(seed, 103))?;

    Ok(DelayCalibration {
        ch1_ns: ch1,
        ch2_ns: ch2,
        herald_internal_ns: herald_internal,
    })
}
