use serde::{Deserialize, Serialize};

use super::{footprint, CarbonError, InfrastructureProfile};

/// Footprint in gCO2eq of `hours` of continuous use of `profile`.
pub fn sustained_footprint(profile: &InfrastructureProfile, hours: f64) -> Result<f64, CarbonError> {
    if !(hours >= 0.0) || !hours.is_finite() {
        return Err(CarbonError::InvalidArgument(format!(
            "hours must be finite and >= 0, got {hours}"
        )));
    }
    Ok(footprint(profile, hours * 3600.0)? / 1000.0)
}

/// Emissions in gCO2eq of travelling `distance_km` at `emission_per_km`.
pub fn transport_baseline(distance_km: f64, emission_per_km: f64) -> Result<f64, CarbonError> {
    if !(distance_km >= 0.0 && emission_per_km >= 0.0)
        || !distance_km.is_finite()
        || !emission_per_km.is_finite()
    {
        return Err(CarbonError::InvalidArgument(format!(
            "distance and per-km emission must be >= 0, got {distance_km} and {emission_per_km}"
        )));
    }
    Ok(distance_km * emission_per_km)
}

/// A household appliance drawing constant power from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplianceBaseline {
    pub name: String,
    pub watts: f64,
    pub carbon_intensity: f64,
}

impl ApplianceBaseline {
    pub fn sustained_grams(&self, hours: f64) -> Result<f64, CarbonError> {
        let as_profile =
            InfrastructureProfile::new(&self.name, self.watts, 1.0, self.carbon_intensity, 0.0, false)?;
        sustained_footprint(&as_profile, hours)
    }
}

/// A journey at a fixed per-kilometre emission rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportBaseline {
    pub name: String,
    pub distance_km: f64,
    pub emission_per_km: f64,
}

impl TransportBaseline {
    pub fn grams(&self) -> Result<f64, CarbonError> {
        transport_baseline(self.distance_km, self.emission_per_km)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub grams: f64,
    /// `None` when the baseline is zero.
    pub ratio_to_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// Tabulates each entry against the entry labelled `baseline`.
pub fn compare_footprints(
    entries: &[(String, f64)],
    baseline: &str,
) -> Result<ComparisonTable, CarbonError> {
    if let Some((label, v)) = entries.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
        return Err(CarbonError::InvalidArgument(format!(
            "entry `{label}` has invalid value {v}"
        )));
    }
    let base = entries
        .iter()
        .find(|(label, _)| label == baseline)
        .map(|(_, v)| *v)
        .ok_or_else(|| CarbonError::InvalidArgument(format!("no entry labelled `{baseline}`")))?;
    let rows = entries
        .iter()
        .map(|(label, grams)| ComparisonRow {
            label: label.clone(),
            grams: *grams,
            ratio_to_baseline: (base > 0.0).then(|| grams / base),
        })
        .collect();
    Ok(ComparisonTable {
        baseline: baseline.to_string(),
        rows,
    })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "grams_co2eq", "ratio_to_baseline"])?;
        for row in &self.rows {
            let ratio = row
                .ratio_to_baseline
                .map(|r| format!("{r}"))
                .unwrap_or_else(|| "undefined".into());
            w.write_record([row.label.as_str(), &format!("{}", row.grams), &ratio])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(v: &[(&str, f64)]) -> Vec<(String, f64)> {
        v.iter().map(|(l, g)| (l.to_string(), *g)).collect()
    }

    #[test]
    fn transport_examples() {
        assert_eq!(transport_baseline(0.0, 21.7).unwrap(), 0.0);
        assert!((transport_baseline(1.0, 21.7).unwrap() - 21.7).abs() < 1e-12);
        assert!(transport_baseline(-1.0, 21.7).is_err());
    }

    #[test]
    fn single_entry_is_its_own_baseline() {
        let t = compare_footprints(&entries(&[("x", 3.0)]), "x").unwrap();
        assert_eq!(t.rows[0].ratio_to_baseline, Some(1.0));
    }

    #[test]
    fn zero_baseline_gives_undefined_ratio() {
        let t = compare_footprints(&entries(&[("zero", 0.0), ("x", 5.0)]), "zero").unwrap();
        assert!(t.rows.iter().all(|r| r.ratio_to_baseline.is_none()));
        let csv = t.to_csv().unwrap();
        assert!(csv.contains("x,5,undefined"));
        assert!(t.to_json().unwrap().contains("null"));
    }

    #[test]
    fn missing_baseline_and_negative_values_rejected() {
        assert!(compare_footprints(&entries(&[("x", 1.0)]), "y").is_err());
        assert!(compare_footprints(&entries(&[("x", -1.0)]), "x").is_err());
    }

    #[test]
    fn appliance_matches_profile_without_overheads() {
        let fan = ApplianceBaseline {
            name: "fan".into(),
            watts: 100.0,
            carbon_intensity: 200.0,
        };
        // 100 W for 3 h at 200 g/kWh
        assert!((fan.sustained_grams(3.0).unwrap() - 60.0).abs() < 1e-9);
    }
}
