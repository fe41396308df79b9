//! Herald-conditioned event tables.
//!
//! At bench parameters almost every pulse is empty: the herald
//! coincidence fires on roughly one pulse in 10⁷–10⁸, so sampling raw
//! pulses would spend nearly all its time drawing vacuum. Instead the
//! per-pulse state is organized by its pair-count cell (how many pairs
//! each beam emitted). For a fixed cell the circuit output fixes a
//! distribution over port photon-number patterns, and detector click
//! probabilities then weight each (cell, pattern) into the distribution
//! conditioned on the herald firing. Scans draw heralded events directly
//! from that table — `trials` counts heralded events, not wall-clock
//! pulses — and the per-pulse herald probability converts to absolute
//! rates.

use std::collections::BTreeMap;

use rand::Rng;

use crate::detection::{DetectorModel, HeraldMode};
use crate::error::{Result, SimError};
use crate::fock::{OverlapModel, Path};
use crate::layouts::Bench;
use crate::source::{joint_pair_probabilities, pulse_state_for_counts, PumpConfig, SpdcConfig};

/// Per-cell port-pattern distributions for one bench and pump setting.
#[derive(Clone, Debug)]
pub struct PatternTable {
    /// Output ports, fixing the index order of every pattern.
    pub ports: Vec<Path>,
    pub cells: Vec<CountsCell>,
}

#[derive(Clone, Debug)]
pub struct CountsCell {
    /// Pairs emitted per beam.
    pub pairs: [u32; 4],
    /// Probability of this cell (within the pair truncation).
    pub prob: f64,
    /// Port photon-count patterns and their conditional probabilities.
    pub patterns: Vec<(Vec<u32>, f64)>,
}

/// Propagate every pair-count cell through the bench circuit and record
/// the port photon-number distributions. Photons ending on paths that
/// carry no detector are marginalized out.
pub fn build_pattern_table(
    bench: &Bench,
    pump: &PumpConfig,
    spdc: &SpdcConfig,
    overlap: &OverlapModel,
) -> Result<PatternTable> {
    pump.validate()?;
    spdc.validate()?;
    overlap.validate()?;
    let truncation = 2 * spdc.max_pairs;
    let ports = bench.output_ports();
    let mut cells = Vec::new();
    for (pairs, prob) in joint_pair_probabilities(pump, spdc) {
        let state = pulse_state_for_counts(pump, pairs, truncation);
        let out = bench.circuit.run(&state)?;
        let mut patterns: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (counts, p) in out.port_count_distribution(overlap) {
            let mut pattern = vec![0u32; ports.len()];
            for &(path, n) in counts.iter() {
                if let Some(i) = ports.iter().position(|&q| q == path) {
                    pattern[i] = n;
                }
            }
            *patterns.entry(pattern).or_insert(0.0) += p;
        }
        cells.push(CountsCell {
            pairs,
            prob,
            patterns: patterns.into_iter().collect(),
        });
    }
    Ok(PatternTable { ports, cells })
}

impl PatternTable {
    pub fn port_index(&self, port: Path) -> Result<usize> {
        self.ports
            .iter()
            .position(|&p| p == port)
            .ok_or_else(|| SimError::Config(format!("port {port} is not part of this bench")))
    }

    /// Unconditioned photon-number distribution at one port.
    pub fn marginal_port_counts(&self, port: Path) -> Result<Vec<f64>> {
        let idx = self.port_index(port)?;
        let mut dist = Vec::new();
        for cell in &self.cells {
            for (pattern, pp) in &cell.patterns {
                let n = pattern[idx] as usize;
                if dist.len() <= n {
                    dist.resize(n + 1, 0.0);
                }
                dist[n] += cell.prob * pp;
            }
        }
        Ok(dist)
    }
}

/// Ports whose clicks constitute the herald.
pub fn herald_ports_for(mode: HeraldMode) -> &'static [Path] {
    match mode {
        HeraldMode::CoincidenceCd => &[Path::C, Path::D],
        HeraldMode::SingleC => &[Path::C],
        HeraldMode::SingleD => &[Path::D],
    }
}

/// One herald-conditioned outcome.
#[derive(Clone, Debug)]
pub struct Entry {
    cum: f64,
    /// Probability given the herald.
    pub prob: f64,
    pub pairs: [u32; 4],
    pub pattern: Vec<u32>,
}

/// The distribution over (cell, pattern) given that the herald fired.
#[derive(Clone, Debug)]
pub struct HeraldedEnsemble {
    pub ports: Vec<Path>,
    /// Probability per eligible pulse that the herald fires.
    pub herald_prob_per_pulse: f64,
    pub entries: Vec<Entry>,
}

/// Weight each (cell, pattern) by the herald detectors' click
/// probabilities and normalize.
pub fn condition_on_herald(
    table: &PatternTable,
    mode: HeraldMode,
    detectors: &BTreeMap<Path, DetectorModel>,
) -> Result<HeraldedEnsemble> {
    let hports = herald_ports_for(mode);
    let mut herald_idx = Vec::new();
    for &hp in hports {
        let det = detectors
            .get(&hp)
            .ok_or_else(|| SimError::Config(format!("no detector configured on port {hp}")))?;
        herald_idx.push((table.port_index(hp)?, *det));
    }
    let mut entries = Vec::new();
    let mut total = 0.0;
    for cell in &table.cells {
        for (pattern, pp) in &cell.patterns {
            let mut w = cell.prob * pp;
            for (idx, det) in &herald_idx {
                w *= det.p_click(pattern[*idx]);
            }
            if w > 0.0 {
                total += w;
                entries.push(Entry {
                    cum: 0.0,
                    prob: w,
                    pairs: cell.pairs,
                    pattern: pattern.clone(),
                });
            }
        }
    }
    if !(total > 0.0) {
        return Err(SimError::InvalidParameter(
            "herald probability is zero for this configuration".into(),
        ));
    }
    let mut cum = 0.0;
    for e in &mut entries {
        e.prob /= total;
        cum += e.prob;
        e.cum = cum;
    }
    Ok(HeraldedEnsemble {
        ports: table.ports.clone(),
        herald_prob_per_pulse: total,
        entries,
    })
}

/// Condition on the emission itself rather than on detector clicks:
/// keep cells selected by `keep`, with their pattern mixture intact.
pub fn condition_on_pairs(
    table: &PatternTable,
    keep: impl Fn(&[u32; 4]) -> bool,
) -> Result<HeraldedEnsemble> {
    let mut entries = Vec::new();
    let mut total = 0.0;
    for cell in table.cells.iter().filter(|c| keep(&c.pairs)) {
        for (pattern, pp) in &cell.patterns {
            let w = cell.prob * pp;
            if w > 0.0 {
                total += w;
                entries.push(Entry {
                    cum: 0.0,
                    prob: w,
                    pairs: cell.pairs,
                    pattern: pattern.clone(),
                });
            }
        }
    }
    if !(total > 0.0) {
        return Err(SimError::InvalidParameter(
            "conditioning selects an empty set of emission cells".into(),
        ));
    }
    let mut cum = 0.0;
    for e in &mut entries {
        e.prob /= total;
        cum += e.prob;
        e.cum = cum;
    }
    Ok(HeraldedEnsemble {
        ports: table.ports.clone(),
        herald_prob_per_pulse: total,
        entries,
    })
}

impl HeraldedEnsemble {
    pub fn port_index(&self, port: Path) -> Result<usize> {
        self.ports
            .iter()
            .position(|&p| p == port)
            .ok_or_else(|| SimError::Config(format!("port {port} is not part of this bench")))
    }

    /// Draw one heralded event by inverse CDF.
    pub fn draw(&self, rng: &mut impl Rng) -> &Entry {
        let u: f64 = rng.gen();
        let i = self.entries.partition_point(|e| e.cum <= u);
        &self.entries[i.min(self.entries.len() - 1)]
    }

    pub fn expectation(&self, f: impl Fn(&Entry) -> f64) -> f64 {
        self.entries.iter().map(|e| e.prob * f(e)).sum()
    }
}

/// Analytic per-herald coincidence and singles probabilities for a
/// detector pair watching two ports of the same heralded pulse.
#[derive(Clone, Copy, Debug)]
pub struct PairStatsPerHerald {
    pub coincidence: f64,
    pub singles_a: f64,
    pub singles_b: f64,
}

impl PairStatsPerHerald {
    /// Singles-normalized coincidence rate: C·N / (S_a·S_b) in counts,
    /// equivalently (C/N)/((S_a/N)(S_b/N)).
    pub fn normalized(&self) -> f64 {
        self.coincidence / (self.singles_a * self.singles_b)
    }
}

pub fn heralded_pair_stats(
    ens: &HeraldedEnsemble,
    a: (Path, &DetectorModel),
    b: (Path, &DetectorModel),
) -> Result<PairStatsPerHerald> {
    let ia = ens.port_index(a.0)?;
    let ib = ens.port_index(b.0)?;
    Ok(PairStatsPerHerald {
        coincidence: ens
            .expectation(|e| a.1.p_click(e.pattern[ia]) * b.1.p_click(e.pattern[ib])),
        singles_a: ens.expectation(|e| a.1.p_click(e.pattern[ia])),
        singles_b: ens.expectation(|e| b.1.p_click(e.pattern[ib])),
    })
}

/// Monte Carlo tallies for a heralded detector pair.
#[derive(Clone, Copy, Debug, Default)]
pub struct PairCounts {
    pub heralds: u64,
    pub coincidences: u64,
    pub singles_a: u64,
    pub singles_b: u64,
}

pub fn run_heralded_pair_mc(
    ens: &HeraldedEnsemble,
    a: (Path, &DetectorModel),
    b: (Path, &DetectorModel),
    trials: u64,
    rng: &mut impl Rng,
) -> Result<PairCounts> {
    let ia = ens.port_index(a.0)?;
    let ib = ens.port_index(b.0)?;
    let mut counts = PairCounts {
        heralds: trials,
        ..PairCounts::default()
    };
    for _ in 0..trials {
        let e = ens.draw(rng);
        let ca = rng.gen::<f64>() < a.1.p_click(e.pattern[ia]);
        let cb = rng.gen::<f64>() < b.1.p_click(e.pattern[ib]);
        counts.singles_a += ca as u64;
        counts.singles_b += cb as u64;
        counts.coincidences += (ca && cb) as u64;
    }
    Ok(counts)
}
