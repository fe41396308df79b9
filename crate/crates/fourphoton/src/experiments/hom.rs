//! Two-photon interference dip versus compensation-slip count.
//!
//! Beams 1 and 3 are pumped; the beam-1 idler and beam-3 idler meet on
//! port B with a relative delay Δτ(n) = Δτ₀ − n·slip set by the number
//! of cover slips in pump beam 3. A plate-and-splitter pair behind B
//! turns two-photon bunching into an α/β coincidence dip: heralded on
//! C·D, the singles-normalized coincidence rate falls to
//!
//! ```text
//!   ≈ (1 − V·κ²(Δτ)) + floor(μ),   V = purity²,
//! ```
//!
//! where the additive floor grows linearly with pump power because it
//! is fed by triple-pair emissions. The scan is reported relative to a
//! distinguishable-photon reference (overlap forced to zero, no slips)
//! so the far-delay plateau sits at 1 by construction, mirroring how
//! measured scans are normalized to their own long-delay shoulders.
//!
//! `calibrate_dip_model` inverts two measured dip minima at different
//! powers into (purity, μ per mW): the minimum is monotone decreasing
//! in purity and increasing in pump strength, so a nested bisection
//! (purity inside, μ per mW outside) pins both.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::detection::DetectorModel;
use crate::error::{Result, SimError};
use crate::experiments::conditioned::{
    build_pattern_table, condition_on_herald, heralded_pair_stats, run_heralded_pair_mc,
    PairStatsPerHerald,
};
use crate::experiments::scan::{derive_seed, run_points, ScanPoint, ScanResult};
use crate::fock::{OverlapModel, Path};
use crate::layouts::{Bench, Geometry};
use crate::source::{PumpConfig, SpdcConfig};

/// Triple-pair emissions are what make the dip floor power-dependent:
/// with the pair budget capped at two, the floor contribution of the
/// (2,1) and (1,2) cells vanishes and the minima at 25 mW and 100 mW
/// collapse onto each other. Every dip computation therefore keeps at
/// least three pairs in play.
pub fn dip_spdc(spdc: &SpdcConfig) -> SpdcConfig {
    SpdcConfig {
        max_pairs: spdc.max_pairs.max(3),
        ..*spdc
    }
}

/// Everything needed to evaluate one dip scan at a fixed pump power.
pub struct DipScanner<'a> {
    pub bench: &'a Bench,
    pub geom: &'a Geometry,
    pub overlap: OverlapModel,
    pub spdc: SpdcConfig,
    pub power_mw: f64,
}

impl<'a> DipScanner<'a> {
    pub fn new(
        bench: &'a Bench,
        geom: &'a Geometry,
        overlap: OverlapModel,
        spdc: &SpdcConfig,
        power_mw: f64,
    ) -> DipScanner<'a> {
        DipScanner {
            bench,
            geom,
            overlap,
            spdc: dip_spdc(spdc),
            power_mw,
        }
    }

    /// Pump settings with `n_slips` cover slips inserted into beam 3.
    /// Each slip retards that pump pulse and attenuates it by the slip
    /// transmission.
    pub fn pump(&self, n_slips: u32) -> PumpConfig {
        let mut pump = self.bench.default_pump.clone();
        pump.power_mw = self.power_mw;
        pump.offsets_ps[2] += f64::from(n_slips) * self.geom.slip_delay_ps;
        pump.transmission[2] *= self.geom.slip_transmission.powi(n_slips as i32);
        pump
    }

    /// Idler arrival-time mismatch at port B for a given slip count.
    pub fn mismatch_ps(&self, n_slips: u32) -> f64 {
        let b1 = self.geom.pump_offsets_ps[0] + self.geom.idl_bd_delay_ps[0];
        let b3 = self.geom.pump_offsets_ps[2]
            + f64::from(n_slips) * self.geom.slip_delay_ps
            + self.geom.idl_bd_delay_ps[2];
        b1 - b3
    }

    fn analysis_pair(&self) -> ((Path, &DetectorModel), (Path, &DetectorModel)) {
        (
            (Path::Alpha, &self.bench.detectors[&Path::Alpha]),
            (Path::Beta, &self.bench.detectors[&Path::Beta]),
        )
    }

    fn stats_for(&self, pump: &PumpConfig, overlap: &OverlapModel) -> Result<PairStatsPerHerald> {
        let table = build_pattern_table(self.bench, pump, &self.spdc, overlap)?;
        let ens = condition_on_herald(&table, self.bench.herald, &self.bench.detectors)?;
        let (a, b) = self.analysis_pair();
        heralded_pair_stats(&ens, a, b)
    }

    /// Singles-normalized coincidence rate with photon overlap switched
    /// off: the same bench, pump power and pair statistics, but every
    /// cross-beam overlap forced to zero and no slips inserted. This is
    /// the long-delay plateau level the scan is divided by.
    pub fn reference(&self) -> Result<f64> {
        let distinguishable = OverlapModel {
            purity: 0.0,
            ..self.overlap
        };
        Ok(self.stats_for(&self.pump(0), &distinguishable)?.normalized())
    }

    /// Plateau-relative dip value at one slip count.
    pub fn normalized_analytic(&self, n_slips: u32, reference: f64) -> Result<f64> {
        let stats = self.stats_for(&self.pump(n_slips), &self.overlap)?;
        Ok(stats.normalized() / reference)
    }

    /// Exact scan over the given slip counts. `raw` carries the
    /// per-herald coincidence probability; `stderr` is zero.
    pub fn scan_analytic(&self, slips: &[u32]) -> Result<ScanResult> {
        let reference = self.reference()?;
        let mut points = Vec::with_capacity(slips.len());
        for &n in slips {
            let stats = self.stats_for(&self.pump(n), &self.overlap)?;
            points.push(ScanPoint {
                setting: f64::from(n),
                normalized_rate: stats.normalized() / reference,
                raw: stats.coincidence,
                singles_a: stats.singles_a,
                singles_b: stats.singles_b,
                stderr: 0.0,
            });
        }
        Ok(ScanResult { points })
    }

    /// Monte Carlo scan: `trials` heralded events per slip setting, one
    /// independent sub-seeded point per setting, evaluated on up to
    /// `threads` workers without affecting any sampled value.
    pub fn scan_mc(
        &self,
        slips: &[u32],
        trials: u64,
        seed: u64,
        threads: usize,
    ) -> Result<ScanResult> {
        let reference = self.reference()?;
        let results = run_points(slips.len(), threads, |i| {
            self.point_mc(slips[i], trials, derive_seed(seed, i as u64), reference)
        });
        let mut points = Vec::with_capacity(results.len());
        for r in results {
            points.push(r?);
        }
        Ok(ScanResult { points })
    }

    fn point_mc(&self, n_slips: u32, trials: u64, seed: u64, reference: f64) -> Result<ScanPoint> {
        let pump = self.pump(n_slips);
        let table = build_pattern_table(self.bench, &pump, &self.spdc, &self.overlap)?;
        let ens = condition_on_herald(&table, self.bench.herald, &self.bench.detectors)?;
        let (a, b) = self.analysis_pair();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let counts = run_heralded_pair_mc(&ens, a, b, trials, &mut rng)?;
        let (c, sa, sb) = (
            counts.coincidences as f64,
            counts.singles_a.max(1) as f64,
            counts.singles_b.max(1) as f64,
        );
        let normalized = c * trials as f64 / (sa * sb) / reference;
        // Poisson error on the coincidence column plus the (smaller)
        // singles contributions, added in quadrature; correlations
        // between C and the singles are ignored.
        let dc = c.max(1.0).sqrt() * trials as f64 / (sa * sb) / reference;
        let ds = normalized * (1.0 / sa + 1.0 / sb).sqrt();
        Ok(ScanPoint {
            setting: f64::from(n_slips),
            normalized_rate: normalized,
            raw: c,
            singles_a: counts.singles_a as f64,
            singles_b: counts.singles_b as f64,
            stderr: dc.hypot(ds),
        })
    }

    /// Smallest normalized value over a slip grid.
    pub fn dip_minimum(&self, slips: &[u32]) -> Result<f64> {
        let reference = self.reference()?;
        let mut min = f64::INFINITY;
        for &n in slips {
            min = min.min(self.normalized_analytic(n, reference)?);
        }
        Ok(min)
    }

    /// Slip counts bracketing the zero-mismatch point; the dip minimum
    /// over the full grid always sits on one of these.
    pub fn slips_near_zero_mismatch(&self) -> Vec<u32> {
        let zero = self.mismatch_ps(0) / self.geom.slip_delay_ps;
        let center = zero.round().max(0.0) as u32;
        let mut grid: Vec<u32> = vec![center.saturating_sub(1), center, center + 1];
        grid.dedup();
        grid
    }
}

/// Parameters recovered from two dip minima measured at different pump
/// powers.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DipCalibration {
    /// Heralded-photon spectral purity (pairwise overlap between
    /// photons born in different beams).
    pub purity: f64,
    /// Low-power dip visibility, purity².
    pub visibility: f64,
    pub mu_per_mw: f64,
    /// Carried through unchanged: the dip minimum sits at zero
    /// mismatch where the overlap kernel is 1 for any width, so the
    /// two calibration inputs cannot constrain it.
    pub sigma_t_ps: f64,
}

enum InnerSolve {
    /// Purity matching the low-power minimum at this pump strength.
    Solved(f64),
    /// Even perfect purity leaves the minimum above target: the
    /// power-dependent floor alone overshoots, μ/mW is too large.
    MuTooLarge,
    /// Even purity 0.5 puts the minimum below target: μ/mW too small.
    MuTooSmall,
}

/// Recover (purity, μ per mW) from dip minima observed at two pump
/// powers, holding the bench, pair statistics and kernel width fixed.
///
/// `minima` must contain at least two entries of (power in mW,
/// normalized dip minimum); the lowest- and highest-power entries are
/// used. Purity is searched in [0.5, 1]. Fails if the two observations
/// cannot be bracketed, e.g. when the higher-power minimum is not
/// deeper-floored than the lower-power one.
pub fn calibrate_dip_model(
    minima: &[(f64, f64)],
    bench: &Bench,
    geom: &Geometry,
    overlap: &OverlapModel,
    spdc: &SpdcConfig,
) -> Result<DipCalibration> {
    if minima.len() < 2 {
        return Err(SimError::CalibrationFailed(
            "need dip minima at two pump powers".into(),
        ));
    }
    let mut sorted = minima.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (p_lo, y_lo) = sorted[0];
    let (p_hi, y_hi) = *sorted.last().unwrap();
    if !(p_lo > 0.0 && p_hi > p_lo) {
        return Err(SimError::CalibrationFailed(
            "calibration powers must be positive and distinct".into(),
        ));
    }

    let dip_min = |mu_per_mw: f64, purity: f64, power: f64| -> Result<f64> {
        let scanner = DipScanner::new(
            bench,
            geom,
            OverlapModel {
                purity,
                ..*overlap
            },
            &SpdcConfig {
                mu_per_mw,
                ..*spdc
            },
            power,
        );
        let grid = scanner.slips_near_zero_mismatch();
        scanner.dip_minimum(&grid)
    };

    // Inner solve: at fixed μ/mW, bisect purity so the low-power
    // minimum matches. The minimum is monotone decreasing in purity.
    let inner = |mu_per_mw: f64| -> Result<InnerSolve> {
        let (mut lo, mut hi) = (0.5f64, 1.0f64);
        if dip_min(mu_per_mw, hi, p_lo)? > y_lo {
            return Ok(InnerSolve::MuTooLarge);
        }
        if dip_min(mu_per_mw, lo, p_lo)? < y_lo {
            return Ok(InnerSolve::MuTooSmall);
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            let f = dip_min(mu_per_mw, mid, p_lo)? - y_lo;
            if f.abs() < 1e-13 {
                return Ok(InnerSolve::Solved(mid));
            }
            if f > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(InnerSolve::Solved(0.5 * (lo + hi)))
    };

    // Outer solve on μ/mW: with purity re-solved at every candidate,
    // the high-power minimum grows monotonically with μ/mW. Bracket by
    // doubling, then bisect.
    let outer = |mu_per_mw: f64| -> Result<(f64, Option<f64>)> {
        match inner(mu_per_mw)? {
            InnerSolve::Solved(p) => Ok((dip_min(mu_per_mw, p, p_hi)? - y_hi, Some(p))),
            InnerSolve::MuTooLarge => Ok((f64::INFINITY, None)),
            InnerSolve::MuTooSmall => Ok((f64::NEG_INFINITY, None)),
        }
    };

    let mut m_lo = 1e-8;
    let (g_lo, _) = outer(m_lo)?;
    if g_lo >= 0.0 {
        return Err(SimError::CalibrationFailed(
            "high-power minimum already exceeded at negligible pump strength".into(),
        ));
    }
    let mut m_hi = 1e-6;
    loop {
        let (g, _) = outer(m_hi)?;
        if g >= 0.0 {
            break;
        }
        m_lo = m_hi;
        m_hi *= 2.0;
        if m_hi > 1.0 {
            return Err(SimError::CalibrationFailed(
                "could not bracket pump strength: minima barely separate with power".into(),
            ));
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..50 {
        let mid = 0.5 * (m_lo + m_hi);
        let (g, p) = outer(mid)?;
        if let Some(p) = p {
            best = Some((mid, p));
            if g.abs() < 1e-13 {
                break;
            }
        }
        if g > 0.0 {
            m_hi = mid;
        } else {
            m_lo = mid;
        }
    }
    let (mu_per_mw, purity) = best.ok_or_else(|| {
        SimError::CalibrationFailed("bisection never produced a joint solution".into())
    })?;
    Ok(DipCalibration {
        purity,
        visibility: purity * purity,
        mu_per_mw,
        sigma_t_ps: overlap.sigma_t_ps,
    })
}

/// Analytic dip minima at several powers, e.g. to compare the bench's
/// own power law against measured minima.
pub fn minima_vs_power(
    bench: &Bench,
    geom: &Geometry,
    overlap: &OverlapModel,
    spdc: &SpdcConfig,
    powers_mw: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(powers_mw.len());
    for &power in powers_mw {
        let scanner = DipScanner::new(bench, geom, *overlap, spdc, power);
        let grid = scanner.slips_near_zero_mismatch();
        out.push((power, scanner.dip_minimum(&grid)?));
    }
    Ok(out)
}

/// Per-power Monte Carlo dip scans plus a straight-line fit of the
/// analytic minima, bundled for serialization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DipReport {
    pub powers_mw: Vec<f64>,
    pub scans: BTreeMap<String, ScanResult>,
    pub analytic_minima: Vec<(f64, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layouts::{build_bench, Layout};

    fn scanner_parts() -> (Bench, Geometry, OverlapModel, SpdcConfig) {
        let geom = Geometry::default();
        let bench = build_bench(Layout::Hom, &geom).unwrap();
        (bench, geom, OverlapModel::default(), SpdcConfig::default())
    }

    #[test]
    fn mismatch_cancels_at_five_slips() {
        let (bench, geom, overlap, spdc) = scanner_parts();
        let s = DipScanner::new(&bench, &geom, overlap, &spdc, 25.0);
        assert!(s.mismatch_ps(5).abs() < 1e-12);
        assert!((s.mismatch_ps(0) - 1.22).abs() < 1e-12);
        assert_eq!(s.slips_near_zero_mismatch(), vec![4, 5, 6]);
    }

    #[test]
    fn ideal_photons_null_the_dip_and_hold_the_plateau() {
        let (bench, geom, overlap, _) = scanner_parts();
        let spdc = SpdcConfig {
            mu_per_mw: 1e-7,
            ..SpdcConfig::default()
        };
        let s = DipScanner::new(&bench, &geom, overlap, &spdc, 25.0);
        let reference = s.reference().unwrap();
        assert!(s.normalized_analytic(5, reference).unwrap() < 1e-4);
        let plateau = s.normalized_analytic(0, reference).unwrap();
        assert!((plateau - 1.0).abs() < 1e-6);
    }

    #[test]
    fn partial_purity_sets_the_dip_depth() {
        let (bench, geom, mut overlap, _) = scanner_parts();
        overlap.purity = 0.97;
        let spdc = SpdcConfig {
            mu_per_mw: 1e-7,
            ..SpdcConfig::default()
        };
        let s = DipScanner::new(&bench, &geom, overlap, &spdc, 25.0);
        let reference = s.reference().unwrap();
        let min = s.normalized_analytic(5, reference).unwrap();
        // Leading-order depth: 1 − purity². The singles normalization
        // shifts it by a percent-level correction, and the μ floor by
        // ~3e-5 at this pump strength.
        let expect = 1.0 - 0.97f64.powi(2);
        assert!((min - expect).abs() < 0.02 * expect + 1e-4, "min {min}");
    }

    #[test]
    fn dip_floor_rises_with_pump_power() {
        let (bench, geom, overlap, spdc) = scanner_parts();
        let lo = DipScanner::new(&bench, &geom, overlap, &spdc, 25.0);
        let hi = DipScanner::new(&bench, &geom, overlap, &spdc, 100.0);
        let grid = [4u32, 5, 6];
        let d_lo = lo.dip_minimum(&grid).unwrap();
        let d_hi = hi.dip_minimum(&grid).unwrap();
        assert!(d_hi > d_lo + 1e-4, "floor must grow with power: {d_lo} vs {d_hi}");
    }

    #[test]
    fn plateau_is_flat_at_finite_power() {
        let (bench, geom, overlap, spdc) = scanner_parts();
        let s = DipScanner::new(&bench, &geom, overlap, &spdc, 100.0);
        let reference = s.reference().unwrap();
        for n in [0u32, 1, 9, 10] {
            let v = s.normalized_analytic(n, reference).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "slip {n} plateau {v}");
        }
    }

    #[test]
    fn mc_point_matches_analytic_value() {
        let (bench, geom, overlap, spdc) = scanner_parts();
        let s = DipScanner::new(&bench, &geom, overlap, &spdc, 100.0);
        let reference = s.reference().unwrap();
        let exact = s.normalized_analytic(5, reference).unwrap();
        let pt = s.point_mc(5, 150_000, 11, reference).unwrap();
        assert!(
            (pt.normalized_rate - exact).abs() < 5.0 * pt.stderr,
            "mc {} vs exact {} (σ {})",
            pt.normalized_rate,
            exact,
            pt.stderr
        );
    }

    #[test]
    fn scan_is_thread_count_invariant() {
        let (bench, geom, overlap, spdc) = scanner_parts();
        let s = DipScanner::new(&bench, &geom, overlap, &spdc, 25.0);
        let slips = [0u32, 5, 10];
        let a = s.scan_mc(&slips, 2_000, 7, 1).unwrap();
        let b = s.scan_mc(&slips, 2_000, 7, 4).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn calibration_inverts_synthesized_minima() {
        let (bench, geom, overlap, spdc) = scanner_parts();
        let truth = (0.978f64, 1.3e-4f64);
        let make = |power: f64| {
            DipScanner::new(
                &bench,
                &geom,
                OverlapModel {
                    purity: truth.0,
                    ..overlap
                },
                &SpdcConfig {
                    mu_per_mw: truth.1,
                    ..spdc
                },
                power,
            )
        };
        let grid = [4u32, 5, 6];
        let minima = [
            (25.0, make(25.0).dip_minimum(&grid).unwrap()),
            (100.0, make(100.0).dip_minimum(&grid).unwrap()),
        ];
        let cal = calibrate_dip_model(&minima, &bench, &geom, &overlap, &spdc).unwrap();
        assert!((cal.purity - truth.0).abs() < 1e-5, "purity {}", cal.purity);
        assert!(
            (cal.mu_per_mw - truth.1).abs() / truth.1 < 1e-3,
            "mu {}",
            cal.mu_per_mw
        );
        assert!((cal.visibility - truth.0 * truth.0).abs() < 1e-4);
        // The recovered model must reproduce a held-out power.
        let predicted = make(50.0).dip_minimum(&grid).unwrap();
        let replay = DipScanner::new(
            &bench,
            &geom,
            OverlapModel {
                purity: cal.purity,
                ..overlap
            },
            &SpdcConfig {
                mu_per_mw: cal.mu_per_mw,
                ..spdc
            },
            50.0,
        )
        .dip_minimum(&grid)
        .unwrap();
        assert!((predicted - replay).abs() < 1e-6);
    }

    #[test]
    fn calibration_rejects_inverted_minima() {
        let (bench, geom, overlap, spdc) = scanner_parts();
        // Higher power reporting a *shallower* floor cannot be bracketed.
        let minima = [(25.0, 0.070), (100.0, 0.050)];
        assert!(calibrate_dip_model(&minima, &bench, &geom, &overlap, &spdc).is_err());
    }
}
