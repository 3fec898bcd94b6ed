use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ApplianceBaseline, CarbonError, InfrastructureProfile, TransportBaseline};

#[derive(Debug, Error)]
pub enum ProfileSetError {
    #[error("reading profiles file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing profiles file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] CarbonError),
    #[error("duplicate name `{0}`")]
    Duplicate(String),
    #[error("unknown profile `{0}`")]
    Unknown(String),
}

/// Infrastructure profiles plus the sustained-use comparison baselines.
///
/// On disk this is a TOML file:
///
/// ```toml
/// [[profile]]
/// name = "app"
/// watts = 5.3
/// pue = 1.2
/// carbon_intensity = 228
/// manufacturing_per_hour = 1.2
/// is_remote = false
///
/// [[appliance]]
/// name = "electric fan"
/// watts = 97
/// carbon_intensity = 228
///
/// [[transport]]
/// name = "coach"
/// distance_km = 188
/// emission_per_km = 21.7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    #[serde(default, rename = "profile")]
    pub profiles: Vec<InfrastructureProfile>,
    #[serde(default, rename = "appliance")]
    pub appliances: Vec<ApplianceBaseline>,
    #[serde(default, rename = "transport")]
    pub transports: Vec<TransportBaseline>,
}

impl ProfileSet {
    pub fn from_toml_str(text: &str) -> Result<Self, ProfileSetError> {
        let set: ProfileSet = toml::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProfileSetError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile set serialises")
    }

    pub fn validate(&self) -> Result<(), ProfileSetError> {
        let mut seen = BTreeSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !seen.insert(p.name.as_str()) {
                return Err(ProfileSetError::Duplicate(p.name.clone()));
            }
        }
        for a in &self.appliances {
            if !(a.watts > 0.0 && a.carbon_intensity >= 0.0)
                || !a.watts.is_finite()
                || !a.carbon_intensity.is_finite()
            {
                return Err(CarbonError::InvalidArgument(format!(
                    "appliance `{}` needs watts > 0 and carbon_intensity >= 0",
                    a.name
                ))
                .into());
            }
            if !seen.insert(a.name.as_str()) {
                return Err(ProfileSetError::Duplicate(a.name.clone()));
            }
        }
        for t in &self.transports {
            t.grams()?;
            if !seen.insert(t.name.as_str()) {
                return Err(ProfileSetError::Duplicate(t.name.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&InfrastructureProfile, ProfileSetError> {
        self.profiles
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ProfileSetError::Unknown(name.to_string()))
    }

    /// Hosting and LLM-server instances with the default comparison
    /// baselines.
    ///
    /// The fan wattage is chosen so that three hours of the app instance is
    /// about 12% of three hours of the fan. The heater and the coach distance
    /// are likewise defaults, not measurements.
    pub fn builtin() -> Self {
        let remote = |name: &str, watts: f64, pue: f64, intensity: f64| InfrastructureProfile {
            name: name.into(),
            watts,
            pue,
            carbon_intensity: intensity,
            manufacturing_per_hour: 0.0,
            is_remote: true,
        };
        ProfileSet {
            profiles: vec![
                InfrastructureProfile {
                    name: "app".into(),
                    watts: 5.3,
                    pue: 1.2,
                    carbon_intensity: 228.0,
                    manufacturing_per_hour: 1.2,
                    is_remote: false,
                },
                remote("gpt-4.5-preview", 1301.0, 1.12, 353.0),
                remote("o4-mini", 991.0, 1.12, 353.0),
                remote("gpt-4.1-nano", 377.0, 1.12, 353.0),
                remote("genai", 1301.0, 1.14, 385.0),
            ],
            appliances: vec![
                ApplianceBaseline {
                    name: "electric fan".into(),
                    watts: 97.0,
                    carbon_intensity: 228.0,
                },
                ApplianceBaseline {
                    name: "electric heater".into(),
                    watts: 2000.0,
                    carbon_intensity: 228.0,
                },
            ],
            transports: vec![TransportBaseline {
                name: "coach".into(),
                distance_km: 188.0,
                emission_per_km: 21.7,
            }],
        }
    }
}
