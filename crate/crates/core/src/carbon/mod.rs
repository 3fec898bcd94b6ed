//! Carbon footprint of running inference on an instance.
//!
//! An instance draws `watts` at the wall, inflated by the data-centre PUE and
//! converted to emissions by the grid carbon intensity. Hosted instances also
//! carry an amortised manufacturing term in grams per hour of use. For a
//! duration `t` in seconds the footprint in milligrams is
//!
//! ```text
//! E = (W * P * I / 1000 + M) * t / 3.6
//! ```
//!
//! and the share attributable to the memory actually used is
//! `E_m = E * (a + m) / C`.

mod baseline;
mod config;

pub use baseline::{
    compare_footprints, sustained_footprint, transport_baseline, ApplianceBaseline,
    ComparisonRow, ComparisonTable, TransportBaseline,
};
pub use config::{ProfileSet, ProfileSetError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum billing granularity of the hosting platform. Reported alongside
/// footprints, never folded into them.
pub const MIN_BILLED_SECONDS: f64 = 60.0;

#[derive(Debug, Error, PartialEq)]
pub enum CarbonError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("invalid memory context: {0}")]
    InvalidMemory(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfrastructureProfile {
    pub name: String,
    /// Instance power draw in watts.
    pub watts: f64,
    /// Power usage effectiveness, >= 1.
    pub pue: f64,
    /// Grid carbon intensity in gCO2eq/kWh.
    pub carbon_intensity: f64,
    /// Amortised manufacturing emissions in gCO2eq per hour of use.
    #[serde(default)]
    pub manufacturing_per_hour: f64,
    /// Remote (LLM server) profiles carry no manufacturing term.
    #[serde(default)]
    pub is_remote: bool,
}

impl InfrastructureProfile {
    pub fn new(
        name: impl Into<String>,
        watts: f64,
        pue: f64,
        carbon_intensity: f64,
        manufacturing_per_hour: f64,
        is_remote: bool,
    ) -> Result<Self, CarbonError> {
        let profile = Self {
            name: name.into(),
            watts,
            pue,
            carbon_intensity,
            manufacturing_per_hour,
            is_remote,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), CarbonError> {
        let fail = |reason: &str| {
            Err(CarbonError::InvalidProfile {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.trim().is_empty() {
            return fail("empty name");
        }
        let all = [
            self.watts,
            self.pue,
            self.carbon_intensity,
            self.manufacturing_per_hour,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return fail("non-finite parameter");
        }
        if self.watts <= 0.0 {
            return fail("watts must be > 0");
        }
        if self.pue < 1.0 {
            return fail("pue must be >= 1");
        }
        if self.carbon_intensity < 0.0 {
            return fail("carbon_intensity must be >= 0");
        }
        if self.manufacturing_per_hour < 0.0 {
            return fail("manufacturing_per_hour must be >= 0");
        }
        if self.is_remote && self.manufacturing_per_hour != 0.0 {
            return fail("remote profiles have no manufacturing term");
        }
        Ok(())
    }

    /// Emission rate in gCO2eq per hour of use.
    pub fn grams_per_hour(&self) -> f64 {
        self.watts * self.pue * self.carbon_intensity / 1000.0 + self.manufacturing_per_hour
    }
}

/// Footprint in mgCO2eq of running on `profile` for `duration_s` seconds.
pub fn footprint(profile: &InfrastructureProfile, duration_s: f64) -> Result<f64, CarbonError> {
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        return Err(CarbonError::InvalidArgument(format!(
            "duration must be finite and >= 0, got {duration_s}"
        )));
    }
    Ok(profile.grams_per_hour() * duration_s / 3.6)
}

/// Memory sizes in MB entering the memory-scaled footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryContext {
    pub app_size_mb: f64,
    /// Zero for remote configurations.
    #[serde(default)]
    pub model_size_mb: f64,
    pub instance_total_mb: f64,
}

impl MemoryContext {
    pub fn validate(&self) -> Result<(), CarbonError> {
        let MemoryContext {
            app_size_mb: a,
            model_size_mb: m,
            instance_total_mb: c,
        } = *self;
        if ![a, m, c].iter().all(|v| v.is_finite()) {
            return Err(CarbonError::InvalidMemory("non-finite size".into()));
        }
        if c <= 0.0 {
            return Err(CarbonError::InvalidMemory(
                "instance_total_mb must be > 0".into(),
            ));
        }
        if a < 0.0 || m < 0.0 {
            return Err(CarbonError::InvalidMemory("negative size".into()));
        }
        if a + m <= 0.0 || a + m > c {
            return Err(CarbonError::InvalidMemory(format!(
                "need 0 < app + model <= total, got {a} + {m} against {c}"
            )));
        }
        Ok(())
    }

    /// `(a + m) / C`.
    pub fn fraction(&self) -> f64 {
        (self.app_size_mb + self.model_size_mb) / self.instance_total_mb
    }
}

/// `E * (a + m) / C` in mgCO2eq/MB.
pub fn memory_scaled_footprint(total_mg: f64, mem: &MemoryContext) -> Result<f64, CarbonError> {
    mem.validate()?;
    scale_by_fraction(total_mg, mem.fraction())
}

/// Memory-scaled footprint for a precomputed used-memory fraction in (0, 1].
pub fn scale_by_fraction(total_mg: f64, fraction: f64) -> Result<f64, CarbonError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CarbonError::InvalidArgument(format!(
            "memory fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if !(total_mg >= 0.0) || !total_mg.is_finite() {
        return Err(CarbonError::InvalidArgument(format!(
            "footprint must be finite and >= 0, got {total_mg}"
        )));
    }
    Ok(total_mg * fraction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintBreakdown {
    pub profile_name: String,
    pub duration_s: f64,
    pub total_mg: f64,
    pub memory_scaled_mg_per_mb: f64,
    /// Footprint had the run been billed at the platform minimum.
    pub billed_minimum_mg: f64,
}

/// Both footprint figures for one profile, duration and memory fraction.
pub fn breakdown(
    profile: &InfrastructureProfile,
    duration_s: f64,
    memory_fraction: f64,
) -> Result<FootprintBreakdown, CarbonError> {
    let total_mg = footprint(profile, duration_s)?;
    Ok(FootprintBreakdown {
        profile_name: profile.name.clone(),
        duration_s,
        total_mg,
        memory_scaled_mg_per_mb: scale_by_fraction(total_mg, memory_fraction)?,
        billed_minimum_mg: footprint(profile, duration_s.max(MIN_BILLED_SECONDS))?,
    })
}

/// Percentage reduction of `value` relative to `reference`.
pub fn reduction_percent(value: f64, reference: f64) -> Option<f64> {
    (reference > 0.0).then(|| (1.0 - value / reference) * 100.0)
}

/// Formats to `digits` significant figures for presentation.
pub fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() || digits == 0 {
        return format!("{value}");
    }
    // round in scientific notation first so a carry (9.996 -> 10.0) moves the magnitude
    let rounded: f64 = format!("{value:.prec$e}", prec = digits - 1)
        .parse()
        .unwrap_or(value);
    let magnitude = rounded.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{rounded:.decimals$}")
}
