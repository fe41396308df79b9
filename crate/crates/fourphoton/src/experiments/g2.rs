//! Heralded second-order correlation of the single-photon output.
//!
//! Beam 3 alone is pumped; its signal heralds on D and its idler is
//! split on the α/β pair behind port B. The β gate delay (programmable
//! channel 1) is swept across the stored pulse train, so the α·β
//! coincidence rate traces a comb: one peak per pulse period
//! T = 1000/rep. When the swept gate selects the heralded pulse itself
//! (k = 0) the normalized coincidence rate collapses to the heralded
//! g²(0) ≈ 4μ of a thermal pair source; when it selects any other
//! pulse the two detectors watch independent pulses and the
//! singles-normalized rate is exactly 1. Between peaks the β gate sees
//! only dark counts — still independent of α, so the normalized level
//! stays 1 while the raw rate drops to the dark floor.
//!
//! Gate capture is a deterministic interval in the swept delay, so
//! peak centers are read off the instrument's 5 ps step grid exactly;
//! the quoted center of peak k is the snapped midpoint of its capture
//! interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::detection::TriggerChain;
use crate::error::{Result, SimError};
use crate::experiments::conditioned::{
    build_pattern_table, condition_on_herald, HeraldedEnsemble,
};
use crate::experiments::scan::{derive_seed, run_points, ScanPoint, ScanResult};
use crate::fock::{OverlapModel, Path};
use crate::layouts::{Bench, Geometry};
use crate::source::{PumpConfig, SpdcConfig};

/// Which pulse (relative to the heralded one) the swept β gate has
/// latched onto, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateTarget {
    Pulse(i64),
    DarkOnly,
}

pub struct G2Scanner<'a> {
    pub bench: &'a Bench,
    pub geom: &'a Geometry,
    pub chain: &'a TriggerChain,
    pub overlap: OverlapModel,
    pub spdc: SpdcConfig,
    pub power_mw: f64,
}

impl<'a> G2Scanner<'a> {
    pub fn new(
        bench: &'a Bench,
        geom: &'a Geometry,
        chain: &'a TriggerChain,
        overlap: OverlapModel,
        spdc: &SpdcConfig,
        power_mw: f64,
    ) -> G2Scanner<'a> {
        G2Scanner {
            bench,
            geom,
            chain,
            overlap,
            spdc: *spdc,
            power_mw,
        }
    }

    fn pump(&self) -> PumpConfig {
        let mut pump = self.bench.default_pump.clone();
        pump.power_mw = self.power_mw;
        pump
    }

    /// Pulse repetition period, nanoseconds.
    pub fn period_ns(&self) -> f64 {
        1e3 / self.pump().rep_rate_mhz
    }

    /// Optical arrival times (herald photon, β photon, α photon)
    /// relative to the pump pulse, nanoseconds.
    fn taus_ns(&self) -> (f64, f64, f64) {
        let her = (self.geom.pump_offsets_ps[2] + self.geom.sig_bd_delay_ps[2]) * 1e-3;
        let idl = (self.geom.pump_offsets_ps[2] + self.geom.idl_bd_delay_ps[2]) * 1e-3;
        (her, idl, idl)
    }

    /// β-gate placement for a swept channel-1 delay: the gate opens at
    /// herald-click + latency + delay, and the photon of pulse k sits
    /// at fiber + k·T downstream. Capture is a closed interval.
    pub fn beta_target(&self, delay_ns: f64) -> GateTarget {
        let (tau_her, tau_beta, _) = self.taus_ns();
        let gate = self.bench.detectors[&Path::Beta].gate_ns;
        let t = self.period_ns();
        // offset(k) = arrival(k) − gate-open, want it in [0, gate].
        let base = self.chain.fiber_delay_ns + tau_beta
            - tau_her
            - self.chain.electronics_latency_ns
            - delay_ns;
        let k = ((gate / 2.0 - base) / t).round() as i64;
        let offset = base + k as f64 * t;
        if (0.0..=gate).contains(&offset) {
            GateTarget::Pulse(k)
        } else {
            GateTarget::DarkOnly
        }
    }

    /// Whether the fixed α gate (channel 2) captures the heralded
    /// pulse's own photon. With default chain settings it does; a
    /// misdialed chain leaves α on darks and the scan reports that
    /// honestly.
    pub fn alpha_captured(&self) -> bool {
        let (tau_her, _, tau_alpha) = self.taus_ns();
        let gate = self.bench.detectors[&Path::Alpha].gate_ns;
        let offset = self.chain.fiber_delay_ns + tau_alpha
            - tau_her
            - self.chain.electronics_latency_ns
            - self.chain.channel_delay_ns(Path::Alpha);
        (0.0..=gate).contains(&offset)
    }

    /// Swept-delay interval over which the β gate captures pulse k.
    pub fn peak_interval_ns(&self, k: i64) -> (f64, f64) {
        let (tau_her, tau_beta, _) = self.taus_ns();
        let gate = self.bench.detectors[&Path::Beta].gate_ns;
        let edge = self.chain.fiber_delay_ns + tau_beta - tau_her
            - self.chain.electronics_latency_ns
            + k as f64 * self.period_ns();
        (edge - gate, edge)
    }

    /// Peak center as the instrument reports it: both capture edges
    /// land on the programmable 5 ps grid, and the center is the
    /// snapped midpoint.
    pub fn measured_peak_center_ns(&self, k: i64) -> f64 {
        let (lo, hi) = self.peak_interval_ns(k);
        let step = self.chain.dg535_step_ns;
        let first = (lo / step - 1e-9).ceil() * step;
        let last = (hi / step + 1e-9).floor() * step;
        self.chain.snap_to_step(0.5 * (first + last))
    }

    /// All peak centers whose capture interval intersects the swept
    /// span `[lo, hi]`.
    pub fn peak_centers_in(&self, lo_ns: f64, hi_ns: f64) -> Vec<(i64, f64)> {
        let t = self.period_ns();
        let k_lo = ((lo_ns - self.peak_interval_ns(0).1) / t).floor() as i64 - 1;
        let k_hi = ((hi_ns - self.peak_interval_ns(0).0) / t).ceil() as i64 + 1;
        (k_lo..=k_hi)
            .filter(|&k| {
                let (a, b) = self.peak_interval_ns(k);
                b >= lo_ns && a <= hi_ns
            })
            .map(|k| (k, self.measured_peak_center_ns(k)))
            .collect()
    }

    fn ensemble(&self) -> Result<(HeraldedEnsemble, Vec<f64>)> {
        let table = build_pattern_table(self.bench, &self.pump(), &self.spdc, &self.overlap)?;
        let marginal = table.marginal_port_counts(Path::Beta)?;
        let ens = condition_on_herald(&table, self.bench.herald, &self.bench.detectors)?;
        Ok((ens, marginal))
    }

    fn point_from(
        &self,
        ens: &HeraldedEnsemble,
        marginal: &[f64],
        delay_ns: f64,
    ) -> Result<ScanPoint> {
        let da = self.bench.detectors[&Path::Alpha];
        let db = self.bench.detectors[&Path::Beta];
        let ia = ens.port_index(Path::Alpha)?;
        let ib = ens.port_index(Path::Beta)?;
        let alpha_on = self.alpha_captured();
        let pa = |n: u32| if alpha_on { da.p_click(n) } else { da.p_dark() };
        let sa = ens.expectation(|e| pa(e.pattern[ia]));
        let (c, sb) = match self.beta_target(delay_ns) {
            GateTarget::Pulse(0) => (
                ens.expectation(|e| pa(e.pattern[ia]) * db.p_click(e.pattern[ib])),
                ens.expectation(|e| db.p_click(e.pattern[ib])),
            ),
            GateTarget::Pulse(_) => {
                // An unrelated pulse: β draws from the unconditioned
                // per-pulse distribution, independently of the herald.
                let sb: f64 = marginal
                    .iter()
                    .enumerate()
                    .map(|(n, p)| p * db.p_click(n as u32))
                    .sum();
                (sa * sb, sb)
            }
            GateTarget::DarkOnly => {
                let sb = db.p_dark();
                (sa * sb, sb)
            }
        };
        Ok(ScanPoint {
            setting: delay_ns,
            normalized_rate: c / (sa * sb),
            raw: c,
            singles_a: sa,
            singles_b: sb,
            stderr: 0.0,
        })
    }

    /// Exact per-herald rates at one swept delay.
    pub fn analytic_point(&self, delay_ns: f64) -> Result<ScanPoint> {
        let (ens, marginal) = self.ensemble()?;
        self.point_from(&ens, &marginal, delay_ns)
    }

    /// Exact scan across `span_ns` centered on the default channel-1
    /// delay.
    pub fn scan_analytic(&self, span_ns: f64, step_ns: f64) -> Result<ScanResult> {
        let (ens, marginal) = self.ensemble()?;
        let mut points = Vec::new();
        for d in self.grid(span_ns, step_ns) {
            points.push(self.point_from(&ens, &marginal, d)?);
        }
        Ok(ScanResult { points })
    }

    fn grid(&self, span_ns: f64, step_ns: f64) -> Vec<f64> {
        let center = self.chain.dg535_ch1_ns;
        let n = (span_ns / step_ns / 2.0).floor() as i64;
        (-n..=n)
            .map(|i| self.chain.snap_to_step(center + i as f64 * step_ns))
            .collect()
    }

    fn mc_point(
        &self,
        ens: &HeraldedEnsemble,
        beta_cum: &[(u32, f64)],
        delay_ns: f64,
        trials: u64,
        seed: u64,
    ) -> Result<ScanPoint> {
        let da = self.bench.detectors[&Path::Alpha];
        let db = self.bench.detectors[&Path::Beta];
        let ia = ens.port_index(Path::Alpha)?;
        let ib = ens.port_index(Path::Beta)?;
        let alpha_on = self.alpha_captured();
        let target = self.beta_target(delay_ns);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (mut cc, mut ca, mut cb) = (0u64, 0u64, 0u64);
        for _ in 0..trials {
            let e = ens.draw(&mut rng);
            let n_alpha = if alpha_on { e.pattern[ia] } else { 0 };
            let a = rng.gen_bool(da.p_click(n_alpha));
            let b = match target {
                GateTarget::Pulse(0) => rng.gen_bool(db.p_click(e.pattern[ib])),
                GateTarget::Pulse(_) => {
                    let u: f64 = rng.gen();
                    let n = beta_cum
                        .iter()
                        .find(|(_, cum)| u < *cum)
                        .map_or(0, |(n, _)| *n);
                    rng.gen_bool(db.p_click(n))
                }
                GateTarget::DarkOnly => rng.gen_bool(db.p_dark()),
            };
            ca += u64::from(a);
            cb += u64::from(b);
            cc += u64::from(a && b);
        }
        let (c, sa, sb) = (cc as f64, ca.max(1) as f64, cb.max(1) as f64);
        let normalized = c * trials as f64 / (sa * sb);
        let dc = c.max(1.0).sqrt() * trials as f64 / (sa * sb);
        let ds = normalized * (1.0 / sa + 1.0 / sb).sqrt();
        Ok(ScanPoint {
            setting: delay_ns,
            normalized_rate: normalized,
            raw: c,
            singles_a: sa,
            singles_b: sb,
            stderr: dc.hypot(ds),
        })
    }

    /// Monte Carlo scan: `trials` heralded events per delay setting.
    pub fn scan_mc(
        &self,
        span_ns: f64,
        step_ns: f64,
        trials: u64,
        seed: u64,
        threads: usize,
    ) -> Result<ScanResult> {
        let (ens, marginal) = self.ensemble()?;
        let beta_cum = cumulative(&marginal);
        let grid = self.grid(span_ns, step_ns);
        let results = run_points(grid.len(), threads, |i| {
            self.mc_point(&ens, &beta_cum, grid[i], trials, derive_seed(seed, i as u64))
        });
        let mut points = Vec::with_capacity(results.len());
        for r in results {
            points.push(r?);
        }
        Ok(ScanResult { points })
    }

    /// Matched-versus-sidepeak summary. The matched value is evaluated
    /// at the measured k = 0 center; side peaks at |k| ∈ [1, n_side]
    /// on both sides.
    pub fn zero_delay_outcome(
        &self,
        n_side: i64,
        trials: u64,
        seed: u64,
        threads: usize,
    ) -> Result<G2Outcome> {
        if n_side < 1 {
            return Err(SimError::InvalidParameter(
                "need at least one side peak per side".into(),
            ));
        }
        let (ens, marginal) = self.ensemble()?;
        let beta_cum = cumulative(&marginal);
        let ks: Vec<i64> = (-n_side..=n_side).collect();
        let centers: Vec<f64> = ks.iter().map(|&k| self.measured_peak_center_ns(k)).collect();
        let analytic: Vec<ScanPoint> = ks
            .iter()
            .zip(&centers)
            .map(|(_, &d)| self.point_from(&ens, &marginal, d))
            .collect::<Result<_>>()?;
        let sampled = if trials > 0 {
            let pts = run_points(ks.len(), threads, |i| {
                self.mc_point(&ens, &beta_cum, centers[i], trials, derive_seed(seed, i as u64))
            });
            let mut out = Vec::with_capacity(pts.len());
            for p in pts {
                out.push(p?);
            }
            Some(out)
        } else {
            None
        };
        let ratio = |pts: &[ScanPoint]| -> f64 {
            let matched = pts[ks.iter().position(|&k| k == 0).unwrap()].normalized_rate;
            let side: Vec<f64> = ks
                .iter()
                .zip(pts)
                .filter(|(&k, _)| k != 0)
                .map(|(_, p)| p.normalized_rate)
                .collect();
            matched / (side.iter().sum::<f64>() / side.len() as f64)
        };
        let spacing = centers.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        Ok(G2Outcome {
            peak_ks: ks.clone(),
            peak_centers_ns: centers,
            mean_spacing_ns: spacing.iter().sum::<f64>() / spacing.len() as f64,
            zero_delay_ratio_analytic: ratio(&analytic),
            zero_delay_ratio_mc: sampled.as_deref().map(ratio),
            analytic_points: analytic,
            mc_points: sampled,
        })
    }
}

fn cumulative(marginal: &[f64]) -> Vec<(u32, f64)> {
    let mut cum = 0.0;
    marginal
        .iter()
        .enumerate()
        .map(|(n, p)| {
            cum += p;
            (n as u32, cum)
        })
        .collect()
}

/// Peak geometry and matched/side-peak correlation summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct G2Outcome {
    pub peak_ks: Vec<i64>,
    pub peak_centers_ns: Vec<f64>,
    pub mean_spacing_ns: f64,
    /// Normalized matched-peak rate over the mean normalized
    /// side-peak rate.
    pub zero_delay_ratio_analytic: f64,
    pub zero_delay_ratio_mc: Option<f64>,
    pub analytic_points: Vec<ScanPoint>,
    pub mc_points: Option<Vec<ScanPoint>>,
}
