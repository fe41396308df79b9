//! Run configuration files and the run manifest written next to data.
//!
//! A run is one TOML file: a bench layout token plus the pump, source,
//! overlap, geometry, electronics and per-port detector settings, a
//! trial count, a seed, and an output directory. The file round-trips
//! (`load` → `save` is canonical) and its canonical form is hashed
//! into every manifest, so a data directory always names the exact
//! configuration that produced it. Manifests embed the full
//! configuration and reload to an equivalent `RunConfig`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::{DetectorModel, TriggerChain};
use crate::error::{Result, SimError};
use crate::fock::{OverlapModel, Path};
use crate::layouts::{build_bench, Bench, CircuitSpec, Geometry, Layout};
use crate::source::{PumpConfig, SpdcConfig};

fn default_trials() -> u64 {
    100_000
}

fn default_seed() -> u64 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One simulation run, as read from a TOML file. Omitted sections fall
/// back to the standard bench profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Bench preset token (`fig1`, `fig2`, `fig4-hom`, `fig6-g2`) or
    /// `custom` together with `circuit_file`.
    pub layout: String,
    /// Circuit description file; only used with `layout = "custom"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_file: Option<PathBuf>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub pump: PumpConfig,
    #[serde(default)]
    pub spdc: SpdcConfig,
    #[serde(default)]
    pub overlap: OverlapModel,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub chain: TriggerChain,
    /// Per-port detector models; entries replace the preset's default
    /// for that port, ports not listed keep it.
    #[serde(default)]
    pub detectors: BTreeMap<Path, DetectorModel>,
}

impl RunConfig {
    /// The standard profile for a named bench: 76 MHz pump at 25 mW,
    /// 10% detection, 2.5/1 ns gates with 150/100 Hz dark rates,
    /// divide-by-16 heralding, 100 m storage fiber and a 5 ps delay
    /// dial, with the preset's plate angles and per-port detectors.
    pub fn default_profile(layout: Layout) -> RunConfig {
        let geometry = Geometry::default();
        let bench = build_bench(layout, &geometry).expect("presets build on default geometry");
        RunConfig {
            layout: layout.token().to_string(),
            circuit_file: None,
            trials: default_trials(),
            seed: default_seed(),
            output: default_output(),
            pump: bench.default_pump.clone(),
            spdc: SpdcConfig::default(),
            overlap: OverlapModel::default(),
            geometry,
            chain: TriggerChain::default(),
            detectors: bench.detectors,
        }
    }

    fn section<T>(name: &str, checked: Result<T>) -> Result<T> {
        checked.map_err(|e| SimError::Config(format!("{name}: {e}")))
    }

    /// Named layout, or `None` for `custom`.
    pub fn resolved_layout(&self) -> Result<Option<Layout>> {
        if self.layout == "custom" {
            if self.circuit_file.is_none() {
                return Err(SimError::Config(
                    "layout 'custom' needs a circuit_file".into(),
                ));
            }
            return Ok(None);
        }
        if self.circuit_file.is_some() {
            return Err(SimError::Config(format!(
                "circuit_file is only used with layout 'custom', not '{}'",
                self.layout
            )));
        }
        self.layout.parse().map(Some)
    }

    pub fn validate(&self) -> Result<()> {
        self.resolved_layout()?;
        if self.trials < 1 {
            return Err(SimError::Config("trials must be at least 1".into()));
        }
        Self::section("pump", self.pump.validate())?;
        Self::section("spdc", self.spdc.validate())?;
        Self::section("overlap", self.overlap.validate())?;
        Self::section("geometry", self.geometry.validate())?;
        Self::section("chain", self.chain.validate())?;
        for (port, det) in &self.detectors {
            Self::section(&format!("detectors.{port}"), det.validate())?;
        }
        Ok(())
    }

    /// Build the configured bench: the named preset (or the custom
    /// circuit file) on this geometry, with this pump and the
    /// configured detector models installed.
    pub fn bench(&self) -> Result<Bench> {
        self.validate()?;
        let mut bench = match self.resolved_layout()? {
            Some(layout) => build_bench(layout, &self.geometry)?,
            None => {
                let file = self.circuit_file.as_ref().unwrap();
                let text = fs::read_to_string(file).map_err(|e| {
                    SimError::Config(format!("circuit file {}: {e}", file.display()))
                })?;
                CircuitSpec::from_toml(&text)?.build()?
            }
        };
        for (port, model) in &self.detectors {
            match bench.detectors.get_mut(port) {
                Some(slot) => *slot = *model,
                None => {
                    return Err(SimError::Config(format!(
                        "detector set for '{port}', which is not an output port of '{}'",
                        self.layout
                    )))
                }
            }
        }
        bench.default_pump = self.pump.clone();
        Ok(bench)
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| SimError::Config(format!("parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical TOML form; loading it back yields an equivalent
    /// configuration with the same hash.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| SimError::Config(format!("serialize: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    /// Hex digest of the canonical TOML form.
    pub fn sha256_hex(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml_string()?.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}

/// Provenance record written beside every run's data files. The full
/// configuration is embedded, so the manifest alone reconstructs the
/// run; the hash pins the canonical form it had when the data was
/// written.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub layout: String,
    pub seed: u64,
    pub trials: u64,
    pub config_sha256: String,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Result<RunManifest> {
        Ok(RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            layout: config.layout.clone(),
            seed: config.seed,
            trials: config.trials,
            config_sha256: config.sha256_hex()?,
            config: config.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| SimError::Config(format!("manifest: {e}")))
    }

    /// Reload a manifest and check the embedded configuration still
    /// hashes to the recorded digest.
    pub fn from_json(text: &str) -> Result<RunManifest> {
        let manifest: RunManifest =
            serde_json::from_str(text).map_err(|e| SimError::Config(format!("manifest: {e}")))?;
        manifest.config.validate()?;
        let recomputed = manifest.config.sha256_hex()?;
        if recomputed != manifest.config_sha256 {
            return Err(SimError::Config(format!(
                "manifest hash {} does not match its configuration ({recomputed})",
                manifest.config_sha256
            )));
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_round_trips_byte_for_byte() {
        for layout in Layout::ALL {
            let config = RunConfig::default_profile(layout);
            let first = config.to_toml_string().unwrap();
            let reloaded = RunConfig::from_toml_str(&first).unwrap();
            assert_eq!(first, reloaded.to_toml_string().unwrap());
            assert_eq!(config.sha256_hex().unwrap(), reloaded.sha256_hex().unwrap());
        }
    }

    #[test]
    fn manifest_reloads_to_an_equivalent_config() {
        let config = RunConfig::default_profile(Layout::Hom);
        let manifest = RunManifest::new(&config).unwrap();
        let reloaded = RunManifest::from_json(&manifest.to_json().unwrap()).unwrap();
        assert_eq!(reloaded.version, env!("CARGO_PKG_VERSION"));
        assert_eq!(
            reloaded.config.to_toml_string().unwrap(),
            config.to_toml_string().unwrap()
        );
    }

    #[test]
    fn tampered_manifests_are_rejected() {
        let config = RunConfig::default_profile(Layout::Bell);
        let json = RunManifest::new(&config).unwrap().to_json().unwrap();
        let tampered = json.replace("\"seed\": 1", "\"seed\": 2");
        assert!(RunManifest::from_json(&tampered).is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut config = RunConfig::default_profile(Layout::Ghz);
        config.trials = 0;
        assert!(matches!(config.validate(), Err(SimError::Config(_))));

        let mut config = RunConfig::default_profile(Layout::Ghz);
        config.layout = "fig3".into();
        assert!(config.validate().is_err());

        let mut config = RunConfig::default_profile(Layout::Ghz);
        config.layout = "custom".into();
        assert!(config.validate().is_err());

        let mut config = RunConfig::default_profile(Layout::Ghz);
        config.circuit_file = Some(PathBuf::from("bench.toml"));
        assert!(config.validate().is_err());

        let mut config = RunConfig::default_profile(Layout::Ghz);
        config.pump.power_mw = -1.0;
        assert!(matches!(config.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn detector_entries_replace_preset_models() {
        let mut config = RunConfig::default_profile(Layout::Hom);
        config
            .detectors
            .get_mut(&Path::Alpha)
            .unwrap()
            .efficiency = 0.37;
        let bench = config.bench().unwrap();
        assert_eq!(bench.detectors[&Path::Alpha].efficiency, 0.37);
        assert_eq!(bench.detectors[&Path::Beta].efficiency, 0.1);

        config.detectors.insert(
            Path::Pump(1),
            *config.detectors.get(&Path::Alpha).unwrap(),
        );
        assert!(config.bench().is_err());
    }

    #[test]
    fn run_pump_drives_the_bench() {
        let mut config = RunConfig::default_profile(Layout::G2);
        config.pump.power_mw = 50.0;
        assert_eq!(config.bench().unwrap().default_pump.power_mw, 50.0);
    }

    #[test]
    fn toml_form_is_sectioned() {
        let text = RunConfig::default_profile(Layout::Ghz)
            .to_toml_string()
            .unwrap();
        for section in ["[pump]", "[spdc]", "[chain]", "[geometry]", "[detectors."] {
            assert!(text.contains(section), "missing {section} in:\n{text}");
        }
        assert!(!text.contains("circuit_file"));
    }
}
