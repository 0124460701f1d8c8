//! Layered run configuration: defaults < preset < config file < flags.
//!
//! Every section is a TOML table whose keys are all optional. Layers are
//! merged key by key and the origin of each resolved key is kept in a
//! [`Provenance`] map that ends up in the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use hom_core::montecarlo::{Pairing, SamplingMode, DEFAULT_MAX_EVENTS, DEFAULT_WINDOW_NS};
use hom_core::{SourceSpec, WavePacketParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// `section.key` → where the resolved value came from.
pub type Provenance = BTreeMap<String, String>;

/// Maps `section.key` to the provenance text of one layer.
pub type Origin<'a> = &'a dyn Fn(&str) -> String;

macro_rules! section {
    (
        $(#[$meta:meta])*
        $overlay:ident => $resolved:ident, $name:literal {
            required { $($(#[$fmeta:meta])* $field:ident : $ty:ty),* $(,)? }
            optional { $($(#[$ofmeta:meta])* $ofield:ident : $oty:ty),* $(,)? }
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $overlay {
            $( $(#[$fmeta])* #[serde(default, skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>, )*
            $( $(#[$ofmeta])* #[serde(default, skip_serializing_if = "Option::is_none")] pub $ofield: Option<$oty>, )*
        }

        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $resolved {
            $( pub $field: $ty, )*
            $( pub $ofield: Option<$oty>, )*
        }

        impl $overlay {
            fn merge(&mut self, other: &Self, origin: &dyn Fn(&str) -> String, prov: &mut Provenance) {
                $(
                    if let Some(v) = &other.$field {
                        self.$field = Some(v.clone());
                        let key = concat!($name, ".", stringify!($field));
                        prov.insert(key.to_string(), origin(key));
                    }
                )*
                $(
                    if let Some(v) = &other.$ofield {
                        self.$ofield = Some(v.clone());
                        let key = concat!($name, ".", stringify!($ofield));
                        prov.insert(key.to_string(), origin(key));
                    }
                )*
            }

            pub fn missing(&self) -> Vec<&'static str> {
                let mut out = Vec::new();
                $( if self.$field.is_none() { out.push(concat!($name, ".", stringify!($field))); } )*
                out
            }

            fn resolve(&self) -> Result<$resolved, CliError> {
                Ok($resolved {
                    $(
                        $field: self.$field.clone().ok_or_else(|| {
                            CliError::Config(format!("missing {}.{}", $name, stringify!($field)))
                        })?,
                    )*
                    $( $ofield: self.$ofield.clone(), )*
                })
            }
        }

        impl From<&$resolved> for $overlay {
            fn from(r: &$resolved) -> Self {
                Self {
                    $( $field: Some(r.$field.clone()), )*
                    $( $ofield: r.$ofield.clone(), )*
                }
            }
        }
    };
}

section! {
    /// Photon-pair source.
    SourceOverlay => SourceConfig, "source" {
        required {
            lambda_s_nm: f64,
            lambda_i_nm: f64,
            visibility: f64,
            gamma_s_per_ns: f64,
            gamma_i_per_ns: f64,
            pair_rate_per_s: f64,
            background_rate_per_s: f64,
        }
        optional {}
    }
}

section! {
    /// One acquisition; for scans, one delay point.
    SimulationOverlay => SimulationSection, "simulation" {
        required {
            duration_s: f64,
            window_ns: f64,
            efficiency: Vec<f64>,
            jitter_ns: f64,
            mode: SamplingMode,
            pairing: Pairing,
            delay_um: f64,
            max_events: u64,
            tag_format: TagFormat,
        }
        optional {
            seed: u64,
            /// Exact pair count instead of a Poisson number.
            pairs: u64,
        }
    }
}

section! {
    ScanOverlay => ScanSection, "scan" {
        required {
            start_um: f64,
            points: usize,
        }
        optional {
            /// Defaults to `start_um + periods · beat period`.
            stop_um: f64,
            periods: f64,
        }
    }
}

section! {
    G2Overlay => G2Section, "g2" {
        required {
            pairs: u64,
            bin_ns: f64,
            span_ns: f64,
        }
        optional {}
    }
}

section! {
    EstimateOverlay => EstimateSection, "estimate" {
        required {
            trials: usize,
            pairs_per_trial: u64,
            trial_duration_s: f64,
        }
        optional {
            /// Runs the benchmark once per entry; the source visibility when absent.
            visibilities: Vec<f64>,
        }
    }
}

section! {
    Figure1Overlay => Figure1Section, "figure1" {
        required {
            gamma_per_ns: f64,
            pump_nm: f64,
            detunings_thz: Vec<f64>,
            delay_span_ns: f64,
            points: usize,
            visibility: f64,
            ratio_detuning: f64,
            convention: DetuningConvention,
            ratio_v_min: f64,
            ratio_v_max: f64,
            ratio_points: usize,
        }
        optional {}
    }
}

section! {
    FitOverlay => FitSection, "fit" {
        required {
            envelope: hom_core::estimation::EnvelopeMode,
        }
        optional {
            input: String,
            kind: FitKind,
            envelope_scale_um: f64,
        }
    }
}

/// How the `ratio_detuning` number of `figure1` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DetuningConvention {
    /// Angular detuning Δω in rad/ps.
    RadPerPs,
    /// Frequency detuning Δf in THz.
    Cycles,
}

/// File format of `simulate` tag output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TagFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    Fringe,
    G2,
}

/// One full layer; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    #[serde(default, skip_serializing_if = "is_default")]
    pub source: SourceOverlay,
    #[serde(default, skip_serializing_if = "is_default")]
    pub simulation: SimulationOverlay,
    #[serde(default, skip_serializing_if = "is_default")]
    pub scan: ScanOverlay,
    #[serde(default, skip_serializing_if = "is_default")]
    pub g2: G2Overlay,
    #[serde(default, skip_serializing_if = "is_default")]
    pub estimate: EstimateOverlay,
    #[serde(default, skip_serializing_if = "is_default")]
    pub figure1: Figure1Overlay,
    #[serde(default, skip_serializing_if = "is_default")]
    pub fit: FitOverlay,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl ConfigOverlay {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies `other` on top of `self`, recording `origin(key)` for each
    /// key `other` sets.
    pub fn merge(&mut self, other: &Self, origin: &dyn Fn(&str) -> String, prov: &mut Provenance) {
        self.source.merge(&other.source, origin, prov);
        self.simulation.merge(&other.simulation, origin, prov);
        self.scan.merge(&other.scan, origin, prov);
        self.g2.merge(&other.g2, origin, prov);
        self.estimate.merge(&other.estimate, origin, prov);
        self.figure1.merge(&other.figure1, origin, prov);
        self.fit.merge(&other.fit, origin, prov);
    }

    /// Built-in values for everything except the source.
    pub fn defaults() -> Self {
        let gamma = 1.0 / 20.0;
        ConfigOverlay {
            source: SourceOverlay::default(),
            simulation: SimulationOverlay {
                duration_s: Some(1.0),
                window_ns: Some(DEFAULT_WINDOW_NS),
                efficiency: Some(vec![1.0; 4]),
                jitter_ns: Some(0.0),
                mode: Some(SamplingMode::Aggregate),
                pairing: Some(Pairing::Greedy),
                delay_um: Some(0.0),
                max_events: Some(DEFAULT_MAX_EVENTS),
                tag_format: Some(TagFormat::Binary),
                seed: None,
                pairs: None,
            },
            scan: ScanOverlay {
                start_um: Some(0.0),
                points: Some(41),
                stop_um: None,
                periods: Some(2.0),
            },
            g2: G2Overlay {
                pairs: Some(1_000_000),
                bin_ns: Some(0.5),
                span_ns: Some(200.0),
            },
            estimate: EstimateOverlay {
                trials: Some(1000),
                pairs_per_trial: Some(10),
                trial_duration_s: Some(1.0),
                visibilities: None,
            },
            figure1: Figure1Overlay {
                gamma_per_ns: Some(gamma),
                pump_nm: Some(532.0),
                detunings_thz: Some(vec![0.0, 10.0, 20.0]),
                delay_span_ns: Some(3e-4),
                points: Some(1201),
                visibility: Some(1.0),
                ratio_detuning: Some(10.0),
                convention: Some(DetuningConvention::RadPerPs),
                ratio_v_min: Some(0.9),
                ratio_v_max: Some(1.0),
                ratio_points: Some(11),
            },
            fit: FitOverlay {
                envelope: Some(hom_core::estimation::EnvelopeMode::Frozen),
                input: None,
                kind: None,
                envelope_scale_um: None,
            },
        }
    }

    pub fn missing_source_keys(&self) -> Vec<&'static str> {
        self.source.missing()
    }
}

/// Fully merged configuration with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub layers: ConfigOverlay,
    pub provenance: Provenance,
}

impl Resolved {
    /// Merges `layers` in order on top of the defaults.
    pub fn build(layers: &[(ConfigOverlay, Origin)]) -> Self {
        let mut prov = Provenance::new();
        let mut merged = ConfigOverlay::default();
        merged.merge(&ConfigOverlay::defaults(), &|_| "default".to_string(), &mut prov);
        for (layer, origin) in layers {
            merged.merge(layer, *origin, &mut prov);
        }
        Resolved {
            layers: merged,
            provenance: prov,
        }
    }

    pub fn source(&self) -> Result<SourceSpec, CliError> {
        let s = self.layers.source.resolve()?;
        let field = |name: &str, e: hom_core::ModelError| CliError::Config(format!("source.{name}: {e}"));
        let wp = WavePacketParams::new(s.gamma_s_per_ns, s.gamma_i_per_ns)
            .map_err(|e| field("gamma_s_per_ns/gamma_i_per_ns", e))?;
        if !(0.0..=1.0).contains(&s.visibility) {
            return Err(CliError::Config(format!(
                "source.visibility: {} is outside [0, 1]",
                s.visibility
            )));
        }
        SourceSpec::new(
            s.lambda_s_nm,
            s.lambda_i_nm,
            s.visibility,
            wp,
            s.pair_rate_per_s,
            s.background_rate_per_s,
        )
        .map_err(|e| CliError::Config(format!("source: {e}")))
    }

    pub fn simulation(&self) -> Result<SimulationSection, CliError> {
        let s = self.layers.simulation.resolve()?;
        if s.efficiency.len() != 4 {
            return Err(CliError::Config(format!(
                "simulation.efficiency: expected 4 values, got {}",
                s.efficiency.len()
            )));
        }
        Ok(s)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.layers
            .simulation
            .seed
            .ok_or_else(|| CliError::Config("a seed is required (--seed or simulation.seed)".into()))
    }

    pub fn scan(&self) -> Result<ScanSection, CliError> {
        self.layers.scan.resolve()
    }

    pub fn g2(&self) -> Result<G2Section, CliError> {
        self.layers.g2.resolve()
    }

    pub fn estimate(&self) -> Result<EstimateSection, CliError> {
        self.layers.estimate.resolve()
    }

    pub fn figure1(&self) -> Result<Figure1Section, CliError> {
        self.layers.figure1.resolve()
    }

    pub fn fit(&self) -> Result<FitSection, CliError> {
        self.layers.fit.resolve()
    }

    /// The merged configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.layers).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = ConfigOverlay::parse("[source]\nvisibilty = 0.5\n", "cfg").unwrap_err();
        assert!(err.to_string().contains("visibilty"), "{err}");
        assert!(ConfigOverlay::parse("[nonsense]\n", "cfg").is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = ConfigOverlay::parse("[source]\nvisibility = \n", "cfg").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn later_layers_win_and_are_recorded() {
        let file = ConfigOverlay::parse("[simulation]\nduration_s = 2.0\nwindow_ns = 10.0\n", "f").unwrap();
        let flags = ConfigOverlay::parse("[simulation]\nduration_s = 3.0\n", "x").unwrap();
        let r = Resolved::build(&[(file, &|_| "file".into()), (flags, &|_| "flag".into())]);
        let s = r.simulation().unwrap();
        assert_eq!(s.duration_s, 3.0);
        assert_eq!(s.window_ns, 10.0);
        assert_eq!(r.provenance["simulation.duration_s"], "flag");
        assert_eq!(r.provenance["simulation.window_ns"], "file");
        assert_eq!(r.provenance["simulation.jitter_ns"], "default");
    }

    #[test]
    fn resolved_round_trips_through_toml() {
        let file = ConfigOverlay::parse("[simulation]\nseed = 5\npairs = 100\n", "f").unwrap();
        let r = Resolved::build(&[(file, &|_| "file".into())]);
        let again = ConfigOverlay::parse(&r.to_toml(), "manifest").unwrap();
        assert_eq!(again, r.layers);
    }

    #[test]
    fn visibility_out_of_range_names_field() {
        let text = "[source]\nlambda_s_nm = 900.0\nlambda_i_nm = 1200.0\nvisibility = 1.2\n\
                    gamma_s_per_ns = 0.05\ngamma_i_per_ns = 0.05\npair_rate_per_s = 1.0\nbackground_rate_per_s = 0.0\n";
        let r = Resolved::build(&[(ConfigOverlay::parse(text, "f").unwrap(), &|_| "file".into())]);
        let err = r.source().unwrap_err();
        assert!(err.to_string().contains("source.visibility"), "{err}");
    }

    #[test]
    fn missing_source_reported() {
        let r = Resolved::build(&[]);
        assert!(r.source().unwrap_err().to_string().contains("source.lambda_s_nm"));
    }
}
