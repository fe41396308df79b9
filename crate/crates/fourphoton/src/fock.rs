//! Sparse multimode bosonic Fock states.
//!
//! A state is a complex-amplitude map over occupation vectors. Each mode
//! carries a path label, a polarization, a quantized temporal offset, and
//! the pump path that emitted the photon. Amplitudes are stored in the
//! orthogonal-occupation convention: a term `(occupation, a)` stands for
//! `a · Π_m (a†_m)^{n_m} / √(n_m!) |0⟩`.
//!
//! Arrival-time mismatch enters only at detection. Photons that reach the
//! same polarization-resolved slot `(path, pol)` at different offsets are
//! treated as wave packets with a pairwise overlap given by an
//! [`OverlapModel`]; projection probabilities are computed with permanents
//! of the per-slot overlap matrices, which reproduces two-photon
//! interference (coincidence ∝ 1 − overlap² at a balanced mix) and extends
//! it consistently to higher photon numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Temporal offsets closer than this are the same mode (picoseconds).
pub const TAU_QUANTUM_PS: f64 = 1e-6;

/// Amplitudes with modulus below this are pruned into the discarded weight.
pub const AMP_EPSILON: f64 = 1e-12;

/// Quantize a temporal offset to the mode-merge grid.
pub fn quantize_tau(tau_ps: f64) -> i64 {
    (tau_ps / TAU_QUANTUM_PS).round() as i64
}

const FACTORIALS: [f64; 13] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
];

fn factorial(n: u32) -> f64 {
    FACTORIALS[n as usize]
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Photon polarization.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Pol {
    H,
    V,
}

impl Pol {
    pub fn flipped(self) -> Pol {
        match self {
            Pol::H => Pol::V,
            Pol::V => Pol::H,
        }
    }
}

impl fmt::Display for Pol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pol::H => write!(f, "H"),
            Pol::V => write!(f, "V"),
        }
    }
}

/// Spatial path label.
///
/// `Pump(p)` is pump beam `p` between the crystal and the first splitting
/// optic; `SigArm`/`IdlArm` are the per-beam arms after the splitting PBS;
/// `A`–`D` are collection ports; `Alpha`/`Beta` are the two outputs of the
/// analysis splitter on port B; `Discard` absorbs coupler losses.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Path {
    Pump(u8),
    SigArm(u8),
    IdlArm(u8),
    A,
    B,
    C,
    D,
    Alpha,
    Beta,
    Discard(u8),
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Path::Pump(p) => write!(f, "pump{p}"),
            Path::SigArm(p) => write!(f, "sig{p}"),
            Path::IdlArm(p) => write!(f, "idl{p}"),
            Path::A => write!(f, "A"),
            Path::B => write!(f, "B"),
            Path::C => write!(f, "C"),
            Path::D => write!(f, "D"),
            Path::Alpha => write!(f, "alpha"),
            Path::Beta => write!(f, "beta"),
            Path::Discard(k) => write!(f, "loss{k}"),
        }
    }
}

impl Serialize for Path {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Path {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Path, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Path {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Path> {
        let numbered = |prefix: &str| -> Option<u8> {
            s.strip_prefix(prefix).and_then(|d| d.parse().ok())
        };
        match s {
            "A" => return Ok(Path::A),
            "B" => return Ok(Path::B),
            "C" => return Ok(Path::C),
            "D" => return Ok(Path::D),
            "alpha" => return Ok(Path::Alpha),
            "beta" => return Ok(Path::Beta),
            _ => {}
        }
        if let Some(p) = numbered("pump") {
            return Ok(Path::Pump(p));
        }
        if let Some(p) = numbered("sig") {
            return Ok(Path::SigArm(p));
        }
        if let Some(p) = numbered("idl") {
            return Ok(Path::IdlArm(p));
        }
        if let Some(k) = numbered("loss") {
            return Ok(Path::Discard(k));
        }
        Err(SimError::UnknownPath(s.to_string()))
    }
}

/// One bosonic mode: where a photon is, its polarization, when its wave
/// packet arrives (quantized to [`TAU_QUANTUM_PS`]), and which pump beam
/// emitted it. The origin tag never affects routing; it only enters the
/// overlap weights at detection, where photons from different emitters are
/// partially distinguishable even at matched arrival times.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Mode {
    pub path: Path,
    pub pol: Pol,
    pub tau_q: i64,
    pub origin: u8,
}

impl Mode {
    pub fn new(path: Path, pol: Pol, tau_ps: f64, origin: u8) -> Mode {
        Mode {
            path,
            pol,
            tau_q: quantize_tau(tau_ps),
            origin,
        }
    }

    pub fn tau_ps(&self) -> f64 {
        self.tau_q as f64 * TAU_QUANTUM_PS
    }

    pub fn with_path(self, path: Path) -> Mode {
        Mode { path, ..self }
    }

    pub fn with_pol(self, pol: Pol) -> Mode {
        Mode { pol, ..self }
    }

    pub fn delayed(self, dtau_ps: f64) -> Mode {
        Mode {
            tau_q: self.tau_q + quantize_tau(dtau_ps),
            ..self
        }
    }

    /// Detection slot: what a polarization-resolved, time-blind detector
    /// can distinguish.
    pub fn slot(&self) -> (Path, Pol) {
        (self.path, self.pol)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{:.6}ps)", self.path, self.pol, self.tau_ps())
    }
}

/// Sorted occupation vector: modes with their photon counts (counts ≥ 1).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Occupation(Box<[(Mode, u32)]>);

impl Occupation {
    pub fn empty() -> Occupation {
        Occupation(Box::default())
    }

    /// Build from unsorted entries; merges duplicates, drops zero counts.
    pub fn from_entries(entries: impl IntoIterator<Item = (Mode, u32)>) -> Occupation {
        let mut map: BTreeMap<Mode, u32> = BTreeMap::new();
        for (m, n) in entries {
            if n > 0 {
                *map.entry(m).or_insert(0) += n;
            }
        }
        Occupation(map.into_iter().collect())
    }

    pub fn entries(&self) -> &[(Mode, u32)] {
        &self.0
    }

    pub fn total_photons(&self) -> u32 {
        self.0.iter().map(|(_, n)| n).sum()
    }

    pub fn count_of(&self, mode: &Mode) -> u32 {
        self.0
            .binary_search_by(|(m, _)| m.cmp(mode))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    /// All photons expanded with multiplicity, in mode order.
    pub fn photons(&self) -> impl Iterator<Item = Mode> + '_ {
        self.0
            .iter()
            .flat_map(|&(m, n)| std::iter::repeat(m).take(n as usize))
    }

    /// New occupation with one photon added; also returns the new count of
    /// the target mode (the `√n` bookkeeping lives with the caller).
    pub fn with_added(&self, mode: Mode) -> (Occupation, u32) {
        let mut v: Vec<(Mode, u32)> = self.0.to_vec();
        match v.binary_search_by(|(m, _)| m.cmp(&mode)) {
            Ok(i) => {
                v[i].1 += 1;
                let n = v[i].1;
                (Occupation(v.into()), n)
            }
            Err(i) => {
                v.insert(i, (mode, 1));
                (Occupation(v.into()), 1)
            }
        }
    }

    /// Photon counts per detection slot, in slot order.
    pub fn profile(&self) -> Box<[((Path, Pol), u32)]> {
        let mut out: Vec<((Path, Pol), u32)> = Vec::with_capacity(self.0.len());
        for &(m, n) in self.0.iter() {
            match out.last_mut() {
                Some((slot, c)) if *slot == m.slot() => *c += n,
                _ => out.push((m.slot(), n)),
            }
        }
        out.into()
    }

    /// Photon counts per path, in path order.
    pub fn port_counts(&self) -> Box<[(Path, u32)]> {
        let mut out: Vec<(Path, u32)> = Vec::with_capacity(self.0.len());
        for &(m, n) in self.0.iter() {
            match out.last_mut() {
                Some((p, c)) if *p == m.path => *c += n,
                _ => out.push((m.path, n)),
            }
        }
        out.into()
    }

    fn product_factorial(&self) -> f64 {
        self.0.iter().map(|&(_, n)| factorial(n)).product()
    }
}

/// Functional form of the temporal overlap kernel.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapKernel {
    #[default]
    Gaussian,
}

/// Pairwise indistinguishability of photon wave packets.
///
/// `kappa(Δτ)` is the temporal overlap of two packets offset by `Δτ`;
/// `purity` additionally scales the overlap of photons emitted by
/// different pump beams, modeling residual spectral distinguishability
/// between independent emissions. Photons from the same emission event at
/// the same offset are fully indistinguishable.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct OverlapModel {
    pub sigma_t_ps: f64,
    #[serde(default)]
    pub kernel: OverlapKernel,
    pub purity: f64,
}

impl Default for OverlapModel {
    fn default() -> OverlapModel {
        OverlapModel {
            sigma_t_ps: 0.2,
            kernel: OverlapKernel::Gaussian,
            purity: 1.0,
        }
    }
}

impl OverlapModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t_ps > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "overlap sigma_t_ps must be positive, got {}",
                self.sigma_t_ps
            )));
        }
        if !(0.0..=1.0).contains(&self.purity) {
            return Err(SimError::InvalidParameter(format!(
                "overlap purity must lie in [0, 1], got {}",
                self.purity
            )));
        }
        Ok(())
    }

    /// Temporal overlap of two packets offset by `dtau_ps`.
    pub fn kappa(&self, dtau_ps: f64) -> f64 {
        match self.kernel {
            OverlapKernel::Gaussian => {
                let s = dtau_ps / self.sigma_t_ps;
                (-0.5 * s * s).exp()
            }
        }
    }

    /// Overlap of two photons sharing a detection slot.
    pub fn photon_overlap(&self, a: &Mode, b: &Mode) -> f64 {
        let k = self.kappa((a.tau_q - b.tau_q) as f64 * TAU_QUANTUM_PS);
        if a.origin == b.origin {
            k
        } else {
            k * self.purity
        }
    }
}

/// Temporal overlap of two arrival times under a model.
pub fn mode_overlap(tau_a_ps: f64, tau_b_ps: f64, model: &OverlapModel) -> f64 {
    model.kappa(tau_a_ps - tau_b_ps)
}

/// Permanent of a real `k × k` matrix in row-major order (Ryser's formula).
fn permanent(g: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    debug_assert_eq!(g.len(), k * k);
    let mut total = 0.0;
    for subset in 1u32..(1 << k) {
        let parity = if (k as u32 - subset.count_ones()) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        let mut prod = 1.0;
        for row in 0..k {
            let mut sum = 0.0;
            for col in 0..k {
                if subset & (1 << col) != 0 {
                    sum += g[row * k + col];
                }
            }
            prod *= sum;
        }
        total += parity * prod;
    }
    total
}

/// Sparse multimode Fock state.
#[derive(Clone, Debug)]
pub struct FockState {
    terms: BTreeMap<Occupation, Complex64>,
    truncation: u32,
    discarded: f64,
}

impl FockState {
    /// The vacuum: a single empty term with amplitude 1.
    pub fn vacuum(truncation: u32) -> FockState {
        let mut terms = BTreeMap::new();
        terms.insert(Occupation::empty(), Complex64::new(1.0, 0.0));
        FockState {
            terms,
            truncation,
            discarded: 0.0,
        }
    }

    /// Build a state from explicit terms. Total photon numbers above the
    /// truncation and amplitudes below [`AMP_EPSILON`] are dropped into the
    /// discarded weight.
    pub fn from_terms(
        terms: impl IntoIterator<Item = (Occupation, Complex64)>,
        truncation: u32,
    ) -> FockState {
        let mut accum: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        let mut discarded = 0.0;
        for (occ, amp) in terms {
            if occ.total_photons() > truncation {
                discarded += amp.norm_sqr();
            } else {
                *accum.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
        let mut state = FockState {
            terms: accum,
            truncation,
            discarded,
        };
        state.prune();
        state
    }

    fn prune(&mut self) {
        let eps = AMP_EPSILON;
        let mut dropped = 0.0;
        self.terms.retain(|_, amp| {
            if amp.norm() < eps {
                dropped += amp.norm_sqr();
                false
            } else {
                true
            }
        });
        self.discarded += dropped;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.terms
            .get(occ)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Largest total photon number over the retained terms.
    pub fn total_photons(&self) -> u32 {
        self.terms
            .keys()
            .map(|occ| occ.total_photons())
            .max()
            .unwrap_or(0)
    }

    /// Probability weight lost to truncation, pruning, and loss.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    /// Rescaled so that `Σ|amp|² = 1`; the discarded ledger resets.
    pub fn normalized(&self) -> Result<FockState> {
        let norm = self.norm_sqr();
        if norm <= 0.0 {
            return Err(SimError::ZeroNorm);
        }
        let scale = 1.0 / norm.sqrt();
        let terms = self
            .terms
            .iter()
            .map(|(occ, amp)| (occ.clone(), amp * scale))
            .collect();
        Ok(FockState {
            terms,
            truncation: self.truncation,
            discarded: 0.0,
        })
    }

    pub fn scaled(&self, factor: Complex64) -> FockState {
        let terms = self
            .terms
            .iter()
            .map(|(occ, amp)| (occ.clone(), amp * factor))
            .collect();
        FockState {
            terms,
            truncation: self.truncation,
            discarded: self.discarded,
        }
    }

    /// `state + amp · a†_signal a†_idler · state`, with bosonic `√(n+1)`
    /// factors. Terms pushed past the truncation land in the discarded
    /// weight.
    pub fn apply_pair_creation(
        &self,
        signal: Mode,
        idler: Mode,
        amp: Complex64,
    ) -> Result<FockState> {
        if signal == idler {
            return Err(SimError::DegeneratePair);
        }
        if self.truncation < 2 {
            return Err(SimError::TruncationTooSmall {
                truncation: self.truncation,
                required: 2,
            });
        }
        let mut out = self.terms.clone();
        let mut discarded = self.discarded;
        for (occ, a) in self.terms.iter() {
            let (with_s, ns) = occ.with_added(signal);
            let (with_si, ni) = with_s.with_added(idler);
            let created = amp * a * (ns as f64).sqrt() * (ni as f64).sqrt();
            if with_si.total_photons() > self.truncation {
                discarded += created.norm_sqr();
            } else {
                *out.entry(with_si).or_insert(Complex64::new(0.0, 0.0)) += created;
            }
        }
        let mut state = FockState {
            terms: out,
            truncation: self.truncation,
            discarded,
        };
        state.prune();
        Ok(state)
    }

    /// Substitute each creation operator by a linear combination of
    /// creation operators: `a†_m → Σ_j coeff_j a†_{m_j}`. Returning `None`
    /// keeps a mode untouched. Every lossless element is an instance of
    /// this with an isometric image.
    pub fn apply_linear_map<F>(&self, image: F) -> Result<FockState>
    where
        F: Fn(&Mode) -> Result<Option<Vec<(Mode, Complex64)>>>,
    {
        let mut accum: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (occ, amp) in self.terms.iter() {
            // Work on monomial coefficients: divide out the √(n!) of the
            // source occupation, multiply the target's back in at the end.
            let base = amp / occ.product_factorial().sqrt();
            let mut partials: Vec<(BTreeMap<Mode, u32>, Complex64)> =
                vec![(BTreeMap::new(), base)];
            for &(mode, count) in occ.entries() {
                let targets = match image(&mode)? {
                    Some(t) => t,
                    None => vec![(mode, Complex64::new(1.0, 0.0))],
                };
                let expansion = expand_operator_power(&targets, count);
                let mut next: Vec<(BTreeMap<Mode, u32>, Complex64)> =
                    Vec::with_capacity(partials.len() * expansion.len());
                for (powers, coeff) in &partials {
                    for (epow, ecoeff) in &expansion {
                        let mut merged = powers.clone();
                        for &(m, k) in epow {
                            *merged.entry(m).or_insert(0) += k;
                        }
                        next.push((merged, coeff * ecoeff));
                    }
                }
                partials = next;
            }
            for (powers, coeff) in partials {
                let occ_out = Occupation::from_entries(powers);
                let final_amp = coeff * occ_out.product_factorial().sqrt();
                *accum.entry(occ_out).or_insert(Complex64::new(0.0, 0.0)) += final_amp;
            }
        }
        let mut state = FockState {
            terms: accum,
            truncation: self.truncation,
            discarded: self.discarded,
        };
        state.prune();
        Ok(state)
    }

    fn profile_groups(&self) -> BTreeMap<Box<[((Path, Pol), u32)]>, Vec<(&Occupation, Complex64)>> {
        let mut groups: BTreeMap<_, Vec<(&Occupation, Complex64)>> = BTreeMap::new();
        for (occ, amp) in self.terms.iter() {
            groups.entry(occ.profile()).or_default().push((occ, *amp));
        }
        groups
    }

    /// Probability that a time-blind, polarization-resolved measurement of
    /// the listed slots finds exactly the given counts there, marginalizing
    /// everything else. Terms that share a photon-count profile interfere
    /// with weights from the overlap model.
    pub fn project(&self, pattern: &[(Path, Pol, u32)], model: &OverlapModel) -> f64 {
        let mut wanted: BTreeMap<(Path, Pol), u32> = BTreeMap::new();
        for &(path, pol, n) in pattern {
            *wanted.entry((path, pol)).or_insert(0) += n;
        }
        let mut prob = 0.0;
        for (profile, group) in self.profile_groups() {
            let lookup = |slot: &(Path, Pol)| -> u32 {
                profile
                    .binary_search_by(|(s, _)| s.cmp(slot))
                    .map(|i| profile[i].1)
                    .unwrap_or(0)
            };
            if wanted.iter().all(|(slot, &n)| lookup(slot) == n) {
                prob += group_probability(&group, model);
            }
        }
        prob
    }

    /// Joint distribution of photon counts per path, marginalizing
    /// polarization and arrival structure.
    pub fn port_count_distribution(
        &self,
        model: &OverlapModel,
    ) -> BTreeMap<Box<[(Path, u32)]>, f64> {
        let mut dist: BTreeMap<Box<[(Path, u32)]>, f64> = BTreeMap::new();
        for (_, group) in self.profile_groups() {
            let p = group_probability(&group, model);
            let ports = group[0].0.port_counts();
            *dist.entry(ports).or_insert(0.0) += p;
        }
        dist
    }

    /// Post-select terms with exactly one photon at each listed port and no
    /// photons anywhere else; returns the polarization pattern of each
    /// surviving term with its amplitude. Errors when two terms share a
    /// polarization pattern but differ in arrival structure (the selection
    /// is then not a pure polarization state).
    pub fn single_photon_port_amplitudes(
        &self,
        ports: &[Path],
    ) -> Result<BTreeMap<Vec<Pol>, Complex64>> {
        let mut out: BTreeMap<Vec<Pol>, Complex64> = BTreeMap::new();
        let mut seen: BTreeMap<Vec<Pol>, &Occupation> = BTreeMap::new();
        for (occ, amp) in self.terms.iter() {
            if occ.total_photons() as usize != ports.len() {
                continue;
            }
            let counts = occ.port_counts();
            let one_each = ports.iter().all(|p| {
                counts
                    .iter()
                    .any(|&(path, n)| path == *p && n == 1)
            }) && counts.len() == ports.len();
            if !one_each {
                continue;
            }
            let pols: Vec<Pol> = ports
                .iter()
                .map(|p| {
                    occ.entries()
                        .iter()
                        .find(|(m, _)| m.path == *p)
                        .map(|(m, _)| m.pol)
                        .expect("port occupied by construction")
                })
                .collect();
            if let Some(prev) = seen.get(&pols) {
                if *prev != occ {
                    return Err(SimError::InvalidParameter(format!(
                        "post-selection on {:?} is not a pure polarization state: \
                         pattern {:?} appears with distinct arrival structures",
                        ports, pols
                    )));
                }
            }
            seen.insert(pols.clone(), occ);
            *out.entry(pols).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        Ok(out)
    }
}

/// Multinomial expansion of `(Σ_j coeff_j a†_j)^n` into monomials.
fn expand_operator_power(
    targets: &[(Mode, Complex64)],
    n: u32,
) -> Vec<(Vec<(Mode, u32)>, Complex64)> {
    match targets {
        [] => {
            if n == 0 {
                vec![(Vec::new(), Complex64::new(1.0, 0.0))]
            } else {
                Vec::new()
            }
        }
        [(mode, coeff)] => {
            if n == 0 {
                vec![(Vec::new(), Complex64::new(1.0, 0.0))]
            } else {
                vec![(vec![(*mode, n)], coeff.powu(n))]
            }
        }
        [(first, coeff), rest @ ..] => {
            let mut out = Vec::new();
            for k in 0..=n {
                let head = coeff.powu(k) * binomial(n, k);
                for (mut powers, tail_coeff) in expand_operator_power(rest, n - k) {
                    if k > 0 {
                        powers.insert(0, (*first, k));
                    }
                    out.push((powers, head * tail_coeff));
                }
            }
            out
        }
    }
}

/// Probability carried by a group of terms sharing one photon-count
/// profile: `Σ_{T,T'} a_T a*_{T'} Π_slots perm(G) / √(Π n_T! Π n_{T'}!)`,
/// with `G` the matrix of pairwise photon overlaps within the slot.
fn group_probability(terms: &[(&Occupation, Complex64)], model: &OverlapModel) -> f64 {
    let profile = terms[0].0.profile();
    let slots: Vec<(Path, Pol)> = profile.iter().map(|&(slot, _)| slot).collect();
    // Photon lists per slot, and the 1/√(Π n_m!) factor, per term.
    let prepared: Vec<(Vec<Vec<Mode>>, f64)> = terms
        .iter()
        .map(|(occ, _)| {
            let lists: Vec<Vec<Mode>> = slots
                .iter()
                .map(|slot| {
                    occ.photons()
                        .filter(|m| m.slot() == *slot)
                        .collect::<Vec<Mode>>()
                })
                .collect();
            let f = 1.0 / occ.product_factorial().sqrt();
            (lists, f)
        })
        .collect();

    let cross_weight = |i: usize, j: usize| -> f64 {
        let mut w = prepared[i].1 * prepared[j].1;
        for (list_i, list_j) in prepared[i].0.iter().zip(prepared[j].0.iter()) {
            let k = list_i.len();
            let mut g = vec![0.0; k * k];
            for (r, pi) in list_i.iter().enumerate() {
                for (c, pj) in list_j.iter().enumerate() {
                    g[r * k + c] = model.photon_overlap(pi, pj);
                }
            }
            w *= permanent(&g, k);
        }
        w
    };

    let mut prob = 0.0;
    for i in 0..terms.len() {
        prob += terms[i].1.norm_sqr() * cross_weight(i, i);
        for j in (i + 1)..terms.len() {
            let cross = terms[i].1 * terms[j].1.conj();
            prob += 2.0 * cross.re * cross_weight(i, j);
        }
    }
    prob
}
