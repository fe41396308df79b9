//! Four-photon coincidence rate of the full-bench state.
//!
//! Double emission in a partner beam pair ({1,3} or {2,4}) puts one
//! photon on each of A, B, C, D. The herald pair C·D is gated straight
//! off the divided pump clock; their coincidence triggers the
//! programmable delay that gates A and B onto the fiber-stored idlers.
//! The analytic rate per eligible pulse is
//!
//! ```text
//!   Σ_cells P(cell) · Π_{p ∈ {A,B,C,D}} p_click(n_p(cell)),
//! ```
//!
//! with each port count zeroed when its photons fall outside the gate,
//! so a misdialed trigger chain honestly starves the rate. On the
//! shared four-beam pump, the rate scales as η⁴ in detection
//! efficiency and quadratically in pump power — the two handles a
//! scaling measurement checks — while the absolute value is pinned by
//! μ/mW and the gate-eligible trigger rate.
//!
//! The Monte Carlo path reproduces the same rate event by event with
//! real timestamps: heralded pulses are spaced by a geometric draw in
//! eligible gates, and every click is re-derived from arrival times
//! through the gated-detector model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{detect, EventRecord, TriggerChain};
use crate::error::{Result, SimError};
use crate::experiments::conditioned::{
    build_pattern_table, condition_on_herald, PatternTable,
};
use crate::fock::{OverlapModel, Path};
use crate::layouts::{Bench, Geometry};
use crate::source::{PumpConfig, SpdcConfig};

/// Gate-eligible trigger rate: the divided pump clock, further limited
/// by the slowest herald detector — gate requests beyond a detector's
/// maximum trigger rate are silently dropped.
pub fn eligible_pulse_rate_hz(bench: &Bench, pump: &PumpConfig, chain: &TriggerChain) -> f64 {
    let divided_mhz = pump.rep_rate_mhz / f64::from(chain.divide_by);
    let det_cap_mhz = bench
        .herald_ports
        .iter()
        .map(|p| bench.detectors[p].max_trigger_mhz)
        .fold(f64::INFINITY, f64::min);
    divided_mhz.min(det_cap_mhz) * 1e6
}

/// Where each beam's photons land on the full bench, with arrival
/// times relative to the pump pulse (slips included via the pump
/// offsets baked into `pump.offsets_ps`).
struct BeamRouting {
    /// (signal port, signal arrival ns) per beam.
    sig: [(Path, f64); 4],
    /// (idler port, idler arrival ns before fiber) per beam.
    idl: [(Path, f64); 4],
}

fn routing(geom: &Geometry, pump: &PumpConfig) -> BeamRouting {
    let sig_port = [Path::C, Path::C, Path::D, Path::D];
    let idl_port = [Path::B, Path::A, Path::A, Path::B];
    let mut sig = [(Path::C, 0.0); 4];
    let mut idl = [(Path::A, 0.0); 4];
    for b in 0..4 {
        sig[b] = (
            sig_port[b],
            (pump.offsets_ps[b] + geom.sig_bd_delay_ps[b]) * 1e-3,
        );
        idl[b] = (
            idl_port[b],
            (pump.offsets_ps[b] + geom.idl_bd_delay_ps[b]) * 1e-3,
        );
    }
    BeamRouting { sig, idl }
}

/// Gate opening times for one heralded pulse at `t_pulse`, given the
/// herald click times.
struct Gates {
    herald_open: [(Path, f64); 2],
    analysis_open: [(Path, f64); 2],
}

fn gates_for(
    bench: &Bench,
    chain: &TriggerChain,
    t_pulse: f64,
    herald_click: [f64; 2],
) -> Gates {
    let trigger = t_pulse - chain.trigger_lead_ns;
    let hp = [bench.herald_ports[0], bench.herald_ports[1]];
    let herald_open = [
        (hp[0], trigger + bench.detectors[&hp[0]].internal_delay_ns),
        (hp[1], trigger + bench.detectors[&hp[1]].internal_delay_ns),
    ];
    let coinc = herald_click[0].max(herald_click[1]);
    let ap = [bench.analysis_ports[0], bench.analysis_ports[1]];
    let analysis_open = [
        (
            ap[0],
            coinc
                + chain.electronics_latency_ns
                + chain.channel_delay_ns(ap[0])
                + bench.detectors[&ap[0]].internal_delay_ns,
        ),
        (
            ap[1],
            coinc
                + chain.electronics_latency_ns
                + chain.channel_delay_ns(ap[1])
                + bench.detectors[&ap[1]].internal_delay_ns,
        ),
    ];
    Gates {
        herald_open,
        analysis_open,
    }
}

fn arrivals_at(
    route: &BeamRouting,
    pairs: [u32; 4],
    port: Path,
    t_pulse: f64,
    fiber_ns: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    for b in 0..4 {
        let n = pairs[b];
        if n == 0 {
            continue;
        }
        if route.sig[b].0 == port {
            for _ in 0..n {
                out.push(t_pulse + route.sig[b].1);
            }
        }
        if route.idl[b].0 == port {
            for _ in 0..n {
                out.push(t_pulse + route.idl[b].1 + fiber_ns);
            }
        }
    }
    out
}

/// Herald click time used for triggering: the earliest herald photon,
/// or the gate center when the herald fired on a dark count.
fn herald_time(
    route: &BeamRouting,
    pairs: [u32; 4],
    port: Path,
    t_pulse: f64,
    gate_open: f64,
    gate_ns: f64,
) -> f64 {
    let earliest = arrivals_at(route, pairs, port, t_pulse, 0.0)
        .into_iter()
        .filter(|&t| t >= gate_open && t <= gate_open + gate_ns)
        .fold(f64::INFINITY, f64::min);
    if earliest.is_finite() {
        earliest
    } else {
        gate_open + gate_ns / 2.0
    }
}

/// Analytic four-port coincidence probability per eligible pulse.
/// Every cell's port counts are re-derived from the beam routing with
/// gate capture applied, so chain misalignment shows up as lost
/// photons rather than silent optimism.
pub fn fourfold_per_pulse_analytic(
    table: &PatternTable,
    bench: &Bench,
    geom: &Geometry,
    pump: &PumpConfig,
    chain: &TriggerChain,
) -> Result<f64> {
    let route = routing(geom, pump);
    let fiber = chain.fiber_delay_ns;
    let mut rate = 0.0;
    for cell in &table.cells {
        let gates0 = gates_for(bench, chain, 0.0, [0.0, 0.0]);
        // Herald clicks at the earliest gated photon (dark heralds at
        // gate center shift the analysis gate by ≤ half a herald gate;
        // their weight is ~p_dark² and irrelevant).
        let mut herald_click = [0.0f64; 2];
        for (i, &(port, open)) in gates0.herald_open.iter().enumerate() {
            let det = bench.detectors[&port];
            herald_click[i] = herald_time(&route, cell.pairs, port, 0.0, open, det.gate_ns);
        }
        let gates = gates_for(bench, chain, 0.0, herald_click);
        let mut p = cell.prob;
        for &(port, open) in gates.herald_open.iter().chain(gates.analysis_open.iter()) {
            let det = bench.detectors[&port];
            let n = arrivals_at(&route, cell.pairs, port, 0.0, if bench.analysis_ports.contains(&port) { fiber } else { 0.0 })
                .into_iter()
                .filter(|&t| t >= open && t <= open + det.gate_ns)
                .count() as u32;
            p *= det.p_click(n);
        }
        rate += p;
    }
    Ok(rate)
}

/// Analytic rates and the trigger bookkeeping needed to quote them
/// per second.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FourfoldRates {
    pub per_eligible_pulse: f64,
    pub eligible_pulse_rate_hz: f64,
    pub rate_hz: f64,
}

pub fn fourfold_rates(
    bench: &Bench,
    geom: &Geometry,
    pump: &PumpConfig,
    spdc: &SpdcConfig,
    overlap: &OverlapModel,
    chain: &TriggerChain,
) -> Result<FourfoldRates> {
    let table = build_pattern_table(bench, pump, spdc, overlap)?;
    let per_pulse = fourfold_per_pulse_analytic(&table, bench, geom, pump, chain)?;
    let eligible = eligible_pulse_rate_hz(bench, pump, chain);
    Ok(FourfoldRates {
        per_eligible_pulse: per_pulse,
        eligible_pulse_rate_hz: eligible,
        rate_hz: per_pulse * eligible,
    })
}

/// Log-log least-squares slopes of the analytic fourfold rate against
/// detection efficiency and against pump power.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub efficiency_points: Vec<(f64, f64)>,
    pub efficiency_slope: f64,
    pub power_points: Vec<(f64, f64)>,
    pub power_slope: f64,
}

fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(SimError::InvalidParameter(
            "log-log fit needs at least two positive points".into(),
        ));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Sweep a common detector efficiency and the pump power, fitting the
/// fourfold rate's power laws. Efficiencies sweep 0.02–0.2 on all four
/// detectors at once; powers keep every beam's mean pair number at or
/// below `mu_cap` (default regime: well under one pair per pulse).
pub fn scaling_slopes(
    bench: &Bench,
    geom: &Geometry,
    pump: &PumpConfig,
    spdc: &SpdcConfig,
    overlap: &OverlapModel,
    chain: &TriggerChain,
    mu_cap: f64,
) -> Result<ScalingReport> {
    let eta_grid = [0.02, 0.035, 0.06, 0.11, 0.2];
    let mut efficiency_points = Vec::with_capacity(eta_grid.len());
    for &eta in &eta_grid {
        let mut b = bench.clone();
        for det in b.detectors.values_mut() {
            det.efficiency = eta;
        }
        let table = build_pattern_table(&b, pump, spdc, overlap)?;
        let r = fourfold_per_pulse_analytic(&table, &b, geom, pump, chain)?;
        efficiency_points.push((eta, r));
    }

    let fractions = pump.beam_fractions();
    let max_fraction = fractions
        .iter()
        .zip(&pump.transmission)
        .map(|(f, t)| f * t)
        .fold(0.0f64, f64::max);
    let p_max = mu_cap / (spdc.mu_per_mw * max_fraction);
    let power_grid: Vec<f64> = (0..5).map(|i| p_max / 2f64.powi(4 - i)).collect();
    let mut power_points = Vec::with_capacity(power_grid.len());
    for &p in &power_grid {
        let mut pm = pump.clone();
        pm.power_mw = p;
        let table = build_pattern_table(bench, &pm, spdc, overlap)?;
        let r = fourfold_per_pulse_analytic(&table, bench, geom, &pm, chain)?;
        power_points.push((p, r));
    }

    Ok(ScalingReport {
        efficiency_slope: loglog_slope(&efficiency_points)?,
        efficiency_points,
        power_slope: loglog_slope(&power_points)?,
        power_points,
    })
}

/// Event-level Monte Carlo outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourfoldOutcome {
    pub heralds: u64,
    pub fourfolds: u64,
    pub p_fourfold_per_herald_mc: f64,
    pub p_fourfold_per_herald_analytic: f64,
    pub herald_prob_per_pulse: f64,
    pub eligible_pulse_rate_hz: f64,
    pub herald_rate_hz: f64,
    pub fourfold_rate_hz_mc: f64,
    pub fourfold_rate_hz_analytic: f64,
    /// Click log of the first events (bounded by the log limit).
    pub events: Vec<EventRecord>,
}

/// Heralded event-level simulation. Every trial is one herald;
/// successive heralds are spaced by a geometric number of eligible
/// gates so the click log carries laboratory-scale timestamps.
pub fn fourfold_mc(
    bench: &Bench,
    geom: &Geometry,
    pump: &PumpConfig,
    spdc: &SpdcConfig,
    overlap: &OverlapModel,
    chain: &TriggerChain,
    trials: u64,
    seed: u64,
    log_limit: usize,
) -> Result<FourfoldOutcome> {
    let table = build_pattern_table(bench, pump, spdc, overlap)?;
    let ens = condition_on_herald(&table, bench.herald, &bench.detectors)?;
    let analytic = {
        let per_pulse = fourfold_per_pulse_analytic(&table, bench, geom, pump, chain)?;
        per_pulse / ens.herald_prob_per_pulse
    };
    let route = routing(geom, pump);
    let period_ns = f64::from(chain.divide_by) * 1e3 / pump.rep_rate_mhz;
    let p_herald = ens.herald_prob_per_pulse;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut fourfolds = 0u64;
    let mut gate_index = 0.0f64;
    for _ in 0..trials {
        // Eligible gates until the next herald: geometric on p_herald.
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        gate_index += (u.ln() / (1.0 - p_herald).ln()).floor() + 1.0;
        let t_pulse = gate_index * period_ns;
        let e = ens.draw(&mut rng);

        let gates0 = gates_for(bench, chain, t_pulse, [0.0, 0.0]);
        let mut herald_click = [0.0f64; 2];
        let mut all = Vec::with_capacity(4);
        for (i, &(port, open)) in gates0.herald_open.iter().enumerate() {
            let det = bench.detectors[&port];
            let t = herald_time(&route, e.pairs, port, t_pulse, open, det.gate_ns);
            herald_click[i] = t;
            all.push(EventRecord {
                detector: port,
                time_ns: t,
                origin: if arrivals_at(&route, e.pairs, port, t_pulse, 0.0)
                    .iter()
                    .any(|&a| a >= open && a <= open + det.gate_ns)
                {
                    crate::detection::ClickOrigin::Photon
                } else {
                    crate::detection::ClickOrigin::Dark
                },
            });
        }
        let gates = gates_for(bench, chain, t_pulse, herald_click);
        let mut clicked = 0;
        for &(port, open) in &gates.analysis_open {
            let det = bench.detectors[&port];
            let arrivals = arrivals_at(&route, e.pairs, port, t_pulse, chain.fiber_delay_ns);
            if let Some(rec) = detect(port, &det, open, &arrivals, &mut rng) {
                clicked += 1;
                all.push(rec);
            }
        }
        if clicked == 2 {
            fourfolds += 1;
        }
        if events.len() + all.len() <= log_limit {
            events.extend(all);
        }
    }
    let eligible = eligible_pulse_rate_hz(bench, pump, chain);
    let herald_rate = p_herald * eligible;
    let p_mc = fourfolds as f64 / trials.max(1) as f64;
    Ok(FourfoldOutcome {
        heralds: trials,
        fourfolds,
        p_fourfold_per_herald_mc: p_mc,
        p_fourfold_per_herald_analytic: analytic,
        herald_prob_per_pulse: p_herald,
        eligible_pulse_rate_hz: eligible,
        herald_rate_hz: herald_rate,
        fourfold_rate_hz_mc: p_mc * herald_rate,
        fourfold_rate_hz_analytic: analytic * herald_rate,
        events,
    })
}
