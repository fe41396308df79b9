//! Preset optical benches.
//!
//! Every preset follows the same pattern: pump beams hit the crystal and
//! emit signal (H) / idler (V) pairs; a polarizing splitter separates the
//! two photons of each beam; wave plates relabel polarizations on chosen
//! arms; calcite displacers merge arms pairwise into output ports, adding
//! their built-in walk-off delays. The presets differ only in how many
//! beams are pumped and which arms merge where:
//!
//! * `fig1` — two beams, one merged signal port and one merged idler
//!   port; produces the two-photon superposition checked by `bell-check`.
//! * `fig2` — four beams merged into four ports (signals → C, D; idlers
//!   → A, B); double-pair emission produces the four-photon
//!   superposition checked by `ghz-check`.
//! * `fig4-hom` — beams 1 and 3 only; signals herald on C and D while
//!   both idlers meet at port B and interfere behind a 22.5° plate and a
//!   splitter feeding α and β.
//! * `fig6-g2` — beam 3 only; the signal heralds on D and the idler is
//!   split between α and β.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::{
    analysis_detector_default, herald_detector_default, DetectorModel, HeraldMode,
};
use crate::elements::{Branch, Circuit, Element};
use crate::error::{Result, SimError};
use crate::fock::{Path, Pol};
use crate::source::PumpConfig;

/// Fixed optical-path parameters of the bench.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Geometry {
    /// Pre-crystal pulse arrival offset of each pump beam, picoseconds.
    /// Beams 3 and 4 sit behind extra pump glass and arrive strictly
    /// later than beams 1 and 2.
    pub pump_offsets_ps: [f64; 4],
    /// Walk-off delay added by the signal-side displacer to each beam's
    /// signal arm; the arms entering on the displaced axis (beams 2, 4)
    /// travel strictly longer.
    pub sig_bd_delay_ps: [f64; 4],
    /// Same for the idler-side displacer; there beams 1 and 2 walk
    /// longer.
    pub idl_bd_delay_ps: [f64; 4],
    /// Delay added per compensation cover slip, picoseconds.
    pub slip_delay_ps: f64,
    /// Pump-power transmission per cover slip. The scan normalization
    /// assumes lossless slips; values below 1 tilt the far-delay plateau.
    pub slip_transmission: f64,
}

impl Default for Geometry {
    fn default() -> Geometry {
        Geometry {
            pump_offsets_ps: [0.0, 0.0, 0.244, 0.244],
            sig_bd_delay_ps: [0.0, 0.488, 0.0, 0.488],
            idl_bd_delay_ps: [1.464, 1.464, 0.0, 0.0],
            slip_delay_ps: 0.244,
            slip_transmission: 1.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let o = &self.pump_offsets_ps;
        for late in [o[2], o[3]] {
            for early in [o[0], o[1]] {
                if late <= early {
                    return Err(SimError::InfeasibleGeometry(format!(
                        "pump beams 3 and 4 must arrive strictly after beams 1 and 2, \
                         got offsets {o:?}"
                    )));
                }
            }
        }
        let s = &self.sig_bd_delay_ps;
        for long in [s[1], s[3]] {
            for short in [s[0], s[2]] {
                if long <= short {
                    return Err(SimError::InfeasibleGeometry(format!(
                        "signal displacer must delay arms 2 and 4 past arms 1 and 3, \
                         got delays {s:?}"
                    )));
                }
            }
        }
        let i = &self.idl_bd_delay_ps;
        for long in [i[0], i[1]] {
            for short in [i[2], i[3]] {
                if long <= short {
                    return Err(SimError::InfeasibleGeometry(format!(
                        "idler displacer must delay arms 1 and 2 past arms 3 and 4, \
                         got delays {i:?}"
                    )));
                }
            }
        }
        if !(self.slip_delay_ps > 0.0) {
            return Err(SimError::InfeasibleGeometry(format!(
                "slip delay must be positive, got {}",
                self.slip_delay_ps
            )));
        }
        if !(self.slip_transmission > 0.0 && self.slip_transmission <= 1.0) {
            return Err(SimError::InfeasibleGeometry(format!(
                "slip transmission must lie in (0, 1], got {}",
                self.slip_transmission
            )));
        }
        Ok(())
    }
}

/// Named bench presets; the tokens are the values accepted by run
/// configurations.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Layout {
    /// Token `fig1`: two-beam pair source.
    Bell,
    /// Token `fig2`: four-beam source with four merged ports.
    Ghz,
    /// Token `fig4-hom`: heralded two-photon interference bench.
    Hom,
    /// Token `fig6-g2`: heralded single-beam autocorrelation bench.
    G2,
}

impl Layout {
    pub const ALL: [Layout; 4] = [Layout::Bell, Layout::Ghz, Layout::Hom, Layout::G2];

    pub fn token(&self) -> &'static str {
        match self {
            Layout::Bell => "fig1",
            Layout::Ghz => "fig2",
            Layout::Hom => "fig4-hom",
            Layout::G2 => "fig6-g2",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Layout {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Layout> {
        match s {
            "fig1" => Ok(Layout::Bell),
            "fig2" => Ok(Layout::Ghz),
            "fig4-hom" => Ok(Layout::Hom),
            "fig6-g2" => Ok(Layout::G2),
            other => Err(SimError::Config(format!(
                "unknown layout '{other}'; expected fig1, fig2, fig4-hom, fig6-g2 or custom"
            ))),
        }
    }
}

/// A built bench: validated circuit plus the detection roles of its
/// output ports.
#[derive(Clone, Debug)]
pub struct Bench {
    pub circuit: Circuit,
    /// Ports gated from the divided pump clock; their coincidence (or a
    /// chosen single) heralds the analysis gates.
    pub herald_ports: Vec<Path>,
    /// Ports whose photons wait in fiber for a herald-driven gate.
    pub analysis_ports: Vec<Path>,
    pub detectors: BTreeMap<Path, DetectorModel>,
    /// Pump plate angles that feed exactly the beams this bench uses.
    pub default_pump: PumpConfig,
    pub herald: HeraldMode,
}

impl Bench {
    pub fn output_ports(&self) -> Vec<Path> {
        let mut ports = self.herald_ports.clone();
        ports.extend(self.analysis_ports.iter().copied());
        ports
    }
}

fn detector_map(herald: &[Path], analysis: &[Path]) -> BTreeMap<Path, DetectorModel> {
    let mut map = BTreeMap::new();
    for &p in herald {
        map.insert(p, herald_detector_default());
    }
    for &p in analysis {
        map.insert(p, analysis_detector_default());
    }
    map
}

fn pump_for(hwp1_deg: f64, hwp2_deg: f64, offsets_ps: [f64; 4]) -> PumpConfig {
    PumpConfig {
        hwp1_deg,
        hwp2_deg,
        offsets_ps,
        ..PumpConfig::default()
    }
}

/// Build a preset bench on the given geometry.
pub fn build_bench(layout: Layout, geom: &Geometry) -> Result<Bench> {
    geom.validate()?;
    let sig = geom.sig_bd_delay_ps;
    let idl = geom.idl_bd_delay_ps;
    let branch = |path: Path, pol: Pol, to: Path, delay: f64| Branch {
        from: (path, pol),
        to_path: to,
        added_delay_ps: delay,
    };
    let bench = match layout {
        Layout::Bell => {
            let elements = vec![
                Element::Pbs {
                    input: Path::Pump(1),
                    transmit: Path::SigArm(1),
                    reflect: Path::IdlArm(1),
                },
                Element::Pbs {
                    input: Path::Pump(2),
                    transmit: Path::SigArm(2),
                    reflect: Path::IdlArm(2),
                },
                Element::Hwp {
                    path: Path::SigArm(2),
                    theta_deg: 45.0,
                },
                Element::Hwp {
                    path: Path::IdlArm(2),
                    theta_deg: 45.0,
                },
                Element::BeamDisplacer {
                    label: "signal merge".into(),
                    branches: vec![
                        branch(Path::SigArm(1), Pol::H, Path::A, sig[0]),
                        branch(Path::SigArm(2), Pol::V, Path::A, sig[1]),
                    ],
                    passthrough: vec![],
                },
                Element::BeamDisplacer {
                    label: "idler merge".into(),
                    branches: vec![
                        branch(Path::IdlArm(1), Pol::V, Path::B, idl[0]),
                        branch(Path::IdlArm(2), Pol::H, Path::B, idl[1]),
                    ],
                    passthrough: vec![],
                },
            ];
            let paths = [
                Path::Pump(1),
                Path::Pump(2),
                Path::SigArm(1),
                Path::SigArm(2),
                Path::IdlArm(1),
                Path::IdlArm(2),
                Path::A,
                Path::B,
            ];
            Bench {
                circuit: Circuit::new(elements, paths),
                herald_ports: vec![],
                analysis_ports: vec![Path::A, Path::B],
                detectors: detector_map(&[], &[Path::A, Path::B]),
                default_pump: pump_for(22.5, 0.0, geom.pump_offsets_ps),
                herald: HeraldMode::CoincidenceCd,
            }
        }
        Layout::Ghz => {
            let mut elements = Vec::new();
            for p in 1..=4 {
                elements.push(Element::Pbs {
                    input: Path::Pump(p),
                    transmit: Path::SigArm(p),
                    reflect: Path::IdlArm(p),
                });
            }
            for p in [1u8, 3] {
                elements.push(Element::Hwp {
                    path: Path::SigArm(p),
                    theta_deg: 45.0,
                });
                elements.push(Element::Hwp {
                    path: Path::IdlArm(p),
                    theta_deg: 45.0,
                });
            }
            elements.push(Element::BeamDisplacer {
                label: "signal merge".into(),
                branches: vec![
                    branch(Path::SigArm(1), Pol::V, Path::C, sig[0]),
                    branch(Path::SigArm(2), Pol::H, Path::C, sig[1]),
                    branch(Path::SigArm(3), Pol::V, Path::D, sig[2]),
                    branch(Path::SigArm(4), Pol::H, Path::D, sig[3]),
                ],
                passthrough: vec![],
            });
            elements.push(Element::BeamDisplacer {
                label: "idler merge".into(),
                branches: vec![
                    branch(Path::IdlArm(1), Pol::H, Path::B, idl[0]),
                    branch(Path::IdlArm(2), Pol::V, Path::A, idl[1]),
                    branch(Path::IdlArm(3), Pol::H, Path::A, idl[2]),
                    branch(Path::IdlArm(4), Pol::V, Path::B, idl[3]),
                ],
                passthrough: vec![],
            });
            let mut paths = vec![Path::A, Path::B, Path::C, Path::D];
            for p in 1..=4 {
                paths.push(Path::Pump(p));
                paths.push(Path::SigArm(p));
                paths.push(Path::IdlArm(p));
            }
            Bench {
                circuit: Circuit::new(elements, paths),
                herald_ports: vec![Path::C, Path::D],
                analysis_ports: vec![Path::A, Path::B],
                detectors: detector_map(&[Path::C, Path::D], &[Path::A, Path::B]),
                default_pump: pump_for(22.5, 22.5, geom.pump_offsets_ps),
                herald: HeraldMode::CoincidenceCd,
            }
        }
        Layout::Hom => {
            let elements = vec![
                Element::Pbs {
                    input: Path::Pump(1),
                    transmit: Path::SigArm(1),
                    reflect: Path::IdlArm(1),
                },
                Element::Pbs {
                    input: Path::Pump(3),
                    transmit: Path::SigArm(3),
                    reflect: Path::IdlArm(3),
                },
                Element::Hwp {
                    path: Path::IdlArm(1),
                    theta_deg: 45.0,
                },
                Element::BeamDisplacer {
                    label: "signal merge".into(),
                    branches: vec![
                        branch(Path::SigArm(1), Pol::H, Path::C, sig[0]),
                        branch(Path::SigArm(3), Pol::H, Path::D, sig[2]),
                    ],
                    passthrough: vec![],
                },
                Element::BeamDisplacer {
                    label: "idler merge".into(),
                    branches: vec![
                        branch(Path::IdlArm(1), Pol::H, Path::B, idl[0]),
                        branch(Path::IdlArm(3), Pol::V, Path::B, idl[2]),
                    ],
                    passthrough: vec![],
                },
                Element::Hwp {
                    path: Path::B,
                    theta_deg: 22.5,
                },
                Element::Pbs {
                    input: Path::B,
                    transmit: Path::Alpha,
                    reflect: Path::Beta,
                },
            ];
            let paths = [
                Path::Pump(1),
                Path::Pump(3),
                Path::SigArm(1),
                Path::SigArm(3),
                Path::IdlArm(1),
                Path::IdlArm(3),
                Path::B,
                Path::C,
                Path::D,
                Path::Alpha,
                Path::Beta,
            ];
            Bench {
                circuit: Circuit::new(elements, paths),
                herald_ports: vec![Path::C, Path::D],
                analysis_ports: vec![Path::Alpha, Path::Beta],
                detectors: detector_map(&[Path::C, Path::D], &[Path::Alpha, Path::Beta]),
                default_pump: pump_for(0.0, 22.5, geom.pump_offsets_ps),
                herald: HeraldMode::CoincidenceCd,
            }
        }
        Layout::G2 => {
            let elements = vec![
                Element::Pbs {
                    input: Path::Pump(3),
                    transmit: Path::SigArm(3),
                    reflect: Path::IdlArm(3),
                },
                Element::BeamDisplacer {
                    label: "signal route".into(),
                    branches: vec![branch(Path::SigArm(3), Pol::H, Path::D, sig[2])],
                    passthrough: vec![],
                },
                Element::BeamDisplacer {
                    label: "idler route".into(),
                    branches: vec![branch(Path::IdlArm(3), Pol::V, Path::B, idl[2])],
                    passthrough: vec![],
                },
                Element::Hwp {
                    path: Path::B,
                    theta_deg: 22.5,
                },
                Element::Pbs {
                    input: Path::B,
                    transmit: Path::Alpha,
                    reflect: Path::Beta,
                },
            ];
            let paths = [
                Path::Pump(3),
                Path::SigArm(3),
                Path::IdlArm(3),
                Path::B,
                Path::D,
                Path::Alpha,
                Path::Beta,
            ];
            Bench {
                circuit: Circuit::new(elements, paths),
                herald_ports: vec![Path::D],
                analysis_ports: vec![Path::Alpha, Path::Beta],
                detectors: detector_map(&[Path::D], &[Path::Alpha, Path::Beta]),
                default_pump: pump_for(0.0, 45.0, geom.pump_offsets_ps),
                herald: HeraldMode::SingleD,
            }
        }
    };
    bench.circuit.validate()?;
    Ok(bench)
}

/// Declarative circuit description for `layout = "custom"` runs,
/// loadable from a structured text file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub paths: Vec<String>,
    #[serde(default)]
    pub herald_ports: Vec<String>,
    pub analysis_ports: Vec<String>,
    #[serde(default)]
    pub herald: HeraldMode,
    pub elements: Vec<ElementSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementSpec {
    Hwp {
        path: String,
        theta_deg: f64,
    },
    Pbs {
        input: String,
        transmit: String,
        reflect: String,
    },
    Displacer {
        label: String,
        branches: Vec<BranchSpec>,
        #[serde(default)]
        passthrough: Vec<String>,
    },
    DelaySlab {
        path: String,
        n_slips: u32,
        slip_delay_ps: f64,
    },
    Coupler {
        path: String,
        transmission: f64,
        discard: u8,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchSpec {
    pub from_path: String,
    pub from_pol: Pol,
    pub to: String,
    pub delay_ps: f64,
}

impl CircuitSpec {
    pub fn from_toml(text: &str) -> Result<CircuitSpec> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("bad circuit file: {e}")))
    }

    pub fn build(&self) -> Result<Bench> {
        let parse = |s: &String| s.parse::<Path>();
        let mut elements = Vec::new();
        for spec in &self.elements {
            elements.push(match spec {
                ElementSpec::Hwp { path, theta_deg } => Element::Hwp {
                    path: parse(path)?,
                    theta_deg: *theta_deg,
                },
                ElementSpec::Pbs {
                    input,
                    transmit,
                    reflect,
                } => Element::Pbs {
                    input: parse(input)?,
                    transmit: parse(transmit)?,
                    reflect: parse(reflect)?,
                },
                ElementSpec::Displacer {
                    label,
                    branches,
                    passthrough,
                } => Element::BeamDisplacer {
                    label: label.clone(),
                    branches: branches
                        .iter()
                        .map(|b| {
                            Ok(Branch {
                                from: (b.from_path.parse()?, b.from_pol),
                                to_path: b.to.parse()?,
                                added_delay_ps: b.delay_ps,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                    passthrough: passthrough
                        .iter()
                        .map(|p| p.parse())
                        .collect::<Result<Vec<_>>>()?,
                },
                ElementSpec::DelaySlab {
                    path,
                    n_slips,
                    slip_delay_ps,
                } => Element::DelaySlab {
                    path: parse(path)?,
                    n_slips: *n_slips,
                    slip_delay_ps: *slip_delay_ps,
                },
                ElementSpec::Coupler {
                    path,
                    transmission,
                    discard,
                } => Element::Coupler {
                    path: parse(path)?,
                    transmission: *transmission,
                    discard: *discard,
                },
            });
        }
        let paths = self
            .paths
            .iter()
            .map(|p| p.parse())
            .collect::<Result<Vec<Path>>>()?;
        let herald_ports = self
            .herald_ports
            .iter()
            .map(|p| p.parse())
            .collect::<Result<Vec<Path>>>()?;
        let analysis_ports = self
            .analysis_ports
            .iter()
            .map(|p| p.parse())
            .collect::<Result<Vec<Path>>>()?;
        let circuit = Circuit::new(elements, paths);
        circuit.validate()?;
        Ok(Bench {
            circuit,
            detectors: detector_map(&herald_ports, &analysis_ports),
            herald_ports,
            analysis_ports,
            default_pump: PumpConfig::default(),
            herald: self.herald,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::OverlapModel;
    use crate::source::{emit_pulse_state, SpdcConfig};

    fn run_default(layout: Layout, pump: &PumpConfig, spdc: &SpdcConfig) -> crate::fock::FockState {
        let bench = build_bench(layout, &Geometry::default()).unwrap();
        let state = emit_pulse_state(pump, spdc, 4 * spdc.max_pairs).unwrap();
        bench.circuit.run(&state).unwrap()
    }

    #[test]
    fn bell_bench_emits_balanced_superposition() {
        let bench = build_bench(Layout::Bell, &Geometry::default()).unwrap();
        let spdc = SpdcConfig {
            max_pairs: 1,
            ..SpdcConfig::default()
        };
        let out = run_default(Layout::Bell, &bench.default_pump, &spdc);
        let amps = out
            .single_photon_port_amplitudes(&[Path::A, Path::B])
            .unwrap();
        assert_eq!(amps.len(), 2);
        let hv = amps[&vec![Pol::H, Pol::V]];
        let vh = amps[&vec![Pol::V, Pol::H]];
        assert!((hv - vh).norm() < 1e-14);
        assert!(hv.norm() > 0.0);
    }

    #[test]
    fn ghz_bench_emits_two_equal_terms() {
        let bench = build_bench(Layout::Ghz, &Geometry::default()).unwrap();
        let out = run_default(Layout::Ghz, &bench.default_pump, &SpdcConfig::default());
        let ports = [Path::A, Path::B, Path::C, Path::D];
        let amps = out.single_photon_port_amplitudes(&ports).unwrap();
        assert_eq!(amps.len(), 2, "only the two partner patterns survive");
        let hhvv = amps[&vec![Pol::H, Pol::H, Pol::V, Pol::V]];
        let vvhh = amps[&vec![Pol::V, Pol::V, Pol::H, Pol::H]];
        assert!((hhvv - vvhh).norm() < 1e-14);
        assert!(hhvv.re < 0.0, "both double-pair terms pick up a common sign");
    }

    #[test]
    fn non_partner_double_pairs_stack_photons_on_one_port() {
        // Pump beams 1 and 2 only: their idlers land on different ports
        // (B and A) but both signals merge into C, so no pattern with
        // exactly one photon per port can appear.
        let pump = PumpConfig {
            hwp1_deg: 22.5,
            hwp2_deg: 0.0,
            ..PumpConfig::default()
        };
        let out = run_default(Layout::Ghz, &pump, &SpdcConfig::default());
        let amps = out
            .single_photon_port_amplitudes(&[Path::A, Path::B, Path::C, Path::D])
            .unwrap();
        assert!(amps.is_empty());
        let dist = out.port_count_distribution(&OverlapModel::default());
        let doubled: f64 = dist
            .iter()
            .filter(|(counts, _)| {
                counts
                    .iter()
                    .any(|&(port, n)| port == Path::C && n == 2)
            })
            .map(|(_, p)| p)
            .sum();
        assert!(doubled > 0.0);
    }

    #[test]
    fn hom_bench_routes_one_pair_per_beam_to_expected_ports() {
        let bench = build_bench(Layout::Hom, &Geometry::default()).unwrap();
        let spdc = SpdcConfig::default();
        let out = run_default(Layout::Hom, &bench.default_pump, &spdc);
        let dist = out.port_count_distribution(&OverlapModel::default());
        // A double emission (one pair per beam) puts one signal on each
        // herald and both idlers behind the analysis splitter.
        let p_pattern: f64 = dist
            .iter()
            .filter(|(counts, _)| {
                let get = |port: Path| {
                    counts
                        .iter()
                        .find(|&&(p, _)| p == port)
                        .map_or(0, |&(_, n)| n)
                };
                get(Path::C) == 1
                    && get(Path::D) == 1
                    && get(Path::Alpha) + get(Path::Beta) == 2
            })
            .map(|(_, p)| p)
            .sum();
        assert!(p_pattern > 0.0);
        let total: f64 = dist.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn g2_bench_splits_idler_evenly() {
        let bench = build_bench(Layout::G2, &Geometry::default()).unwrap();
        let spdc = SpdcConfig {
            max_pairs: 1,
            ..SpdcConfig::default()
        };
        let out = run_default(Layout::G2, &bench.default_pump, &spdc);
        let model = OverlapModel::default();
        let p_alpha = out.project(
            &[
                (Path::D, Pol::H, 1),
                (Path::Alpha, Pol::H, 1),
                (Path::Beta, Pol::V, 0),
            ],
            &model,
        );
        let p_beta = out.project(
            &[
                (Path::D, Pol::H, 1),
                (Path::Alpha, Pol::H, 0),
                (Path::Beta, Pol::V, 1),
            ],
            &model,
        );
        assert!((p_alpha - p_beta).abs() < 1e-12);
        assert!(p_alpha > 0.0);
    }

    #[test]
    fn geometry_orderings_are_enforced() {
        let mut g = Geometry::default();
        g.pump_offsets_ps = [0.3, 0.0, 0.244, 0.244];
        assert!(matches!(
            g.validate(),
            Err(SimError::InfeasibleGeometry(_))
        ));
        let mut g = Geometry::default();
        g.sig_bd_delay_ps = [0.5, 0.488, 0.0, 0.488];
        assert!(g.validate().is_err());
        let mut g = Geometry::default();
        g.idl_bd_delay_ps = [1.464, 0.0, 0.1, 0.0];
        assert!(g.validate().is_err());
        let mut g = Geometry::default();
        g.slip_transmission = 0.0;
        assert!(g.validate().is_err());
        assert!(Geometry::default().validate().is_ok());
    }

    #[test]
    fn layout_tokens_round_trip() {
        for layout in Layout::ALL {
            assert_eq!(layout.token().parse::<Layout>().unwrap(), layout);
        }
        assert!("fig3".parse::<Layout>().is_err());
    }

    #[test]
    fn custom_circuit_file_builds_and_runs() {
        let text = r#"
            paths = ["pump1", "sig1", "idl1", "A", "B"]
            analysis_ports = ["A", "B"]

            [[elements]]
            kind = "pbs"
            input = "pump1"
            transmit = "sig1"
            reflect = "idl1"

            [[elements]]
            kind = "displacer"
            label = "merge"
            branches = [
                { from_path = "sig1", from_pol = "H", to = "A", delay_ps = 0.0 },
                { from_path = "idl1", from_pol = "V", to = "B", delay_ps = 1.0 },
            ]
        "#;
        let bench = CircuitSpec::from_toml(text).unwrap().build().unwrap();
        let pump = PumpConfig {
            hwp1_deg: 0.0,
            hwp2_deg: 0.0,
            ..PumpConfig::default()
        };
        let spdc = SpdcConfig {
            max_pairs: 1,
            ..SpdcConfig::default()
        };
        let state = emit_pulse_state(&pump, &spdc, 2).unwrap();
        let out = bench.circuit.run(&state).unwrap();
        let amps = out
            .single_photon_port_amplitudes(&[Path::A, Path::B])
            .unwrap();
        assert_eq!(amps.len(), 1);
        assert!(amps.contains_key(&vec![Pol::H, Pol::V]));
    }

    #[test]
    fn custom_circuit_rejects_unknown_path() {
        let text = r#"
            paths = ["pump1", "nowhere"]
            analysis_ports = []
            elements = []
        "#;
        let err = CircuitSpec::from_toml(text).unwrap().build();
        assert!(matches!(err, Err(SimError::UnknownPath(_))));
    }
}
