use serde::{Deserialize, Serialize};

use super::PkiError;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Quoted upper bound for the average renewal rate of all web certificates
/// on a 90-day cycle. Reports flag computed rates at or above it.
pub const RENEWAL_TPS_BOUND: f64 = 17.0;

fn positive(v: f64, name: &'static str) -> Result<f64, PkiError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(PkiError::NonPositive(name))
    }
}

/// Seconds needed to write `cert_count` certificates at `ledger_tps`.
pub fn time_to_record(cert_count: f64, ledger_tps: f64) -> Result<f64, PkiError> {
    Ok(positive(cert_count, "cert_count")? / positive(ledger_tps, "ledger_tps")?)
}

/// Average transactions per second if every certificate renews once per period.
pub fn avg_renewal_tps(cert_count: f64, renewal_period_days: f64) -> Result<f64, PkiError> {
    Ok(positive(cert_count, "cert_count")? / (positive(renewal_period_days, "renewal_period_days")? * SECONDS_PER_DAY))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityModel {
    pub cert_count: f64,
    pub renewal_period_days: f64,
    pub ledger_tps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub model: CapacityModel,
    pub avg_renewal_tps: f64,
    pub time_to_record_secs: f64,
    pub time_to_record_hours: f64,
    /// Share of ledger throughput consumed by steady-state renewals.
    pub utilisation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CapacityModel {
    pub fn new(cert_count: f64, renewal_period_days: f64, ledger_tps: f64) -> Result<Self, PkiError> {
        positive(cert_count, "cert_count")?;
        positive(renewal_period_days, "renewal_period_days")?;
        positive(ledger_tps, "ledger_tps")?;
        Ok(CapacityModel { cert_count, renewal_period_days, ledger_tps })
    }

    pub fn report(&self) -> Result<CapacityReport, PkiError> {
        let tps = avg_renewal_tps(self.cert_count, self.renewal_period_days)?;
        let secs = time_to_record(self.cert_count, self.ledger_tps)?;
        let note = (tps >= RENEWAL_TPS_BOUND).then(|| {
            format!(
                "computed average renewal rate {tps:.2} tps is not below the quoted bound of {RENEWAL_TPS_BOUND:.0} tps; \
                 the computed value is reported unchanged"
            )
        });
        Ok(CapacityReport {
            model: *self,
            avg_renewal_tps: tps,
            time_to_record_secs: secs,
            time_to_record_hours: secs / 3600.0,
            utilisation: tps / self.ledger_tps,
            note,
        })
    }
}

impl CapacityReport {
    /// Small fixed-width table plus the note, if any.
    pub fn to_table(&self) -> String {
        let m = &self.model;
        let mut out = format!(
            "{:>14} {:>12} {:>10} {:>14} {:>16} {:>10}\n{:>14} {:>12} {:>10} {:>14.2} {:>16.0} {:>10.2}\n",
            "cert_count",
            "period_days",
            "tps",
            "avg_renew_tps",
            "record_secs",
            "hours",
            m.cert_count,
            m.renewal_period_days,
            m.ledger_tps,
            self.avg_renewal_tps,
            self.time_to_record_secs,
            self.time_to_record_hours,
        );
        if let Some(n) = &self.note {
            out.push_str("note: ");
            out.push_str(n);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn record_time_for_124_5_million() {
        let secs = time_to_record(124_500_000.0, 10_000.0).unwrap();
        assert_eq!(secs, 12_450.0);
        let hours = secs / 3600.0;
        assert!((hours - 3.458_333).abs() < 1e-6);
        assert!(hours < 3.5);
    }

    #[test]
    fn renewal_rate_for_145_million_over_90_days() {
        let tps = avg_renewal_tps(145_000_000.0, 90.0).unwrap();
        // 145e6 / 7_776_000 = 18.6471...
        assert!((tps - 18.65).abs() <= 0.01, "{tps}");
        let r = CapacityModel::new(145_000_000.0, 90.0, 10_000.0).unwrap().report().unwrap();
        assert!(r.note.is_some());
        assert!(r.to_table().contains("18.65"));
        assert!(r.to_table().contains("note:"));
    }

    #[test]
    fn unit_case_and_no_note_below_bound() {
        assert_eq!(avg_renewal_tps(86_400.0, 1.0).unwrap(), 1.0);
        let r = CapacityModel::new(86_400.0, 1.0, 10.0).unwrap().report().unwrap();
        assert!(r.note.is_none());
        assert_eq!(r.utilisation, 0.1);
    }

    #[test]
    fn non_positive_inputs_are_errors() {
        assert!(matches!(time_to_record(0.0, 1.0), Err(PkiError::NonPositive("cert_count"))));
        assert!(matches!(time_to_record(1.0, -1.0), Err(PkiError::NonPositive("ledger_tps"))));
        assert!(matches!(avg_renewal_tps(1.0, 0.0), Err(PkiError::NonPositive("renewal_period_days"))));
        assert!(avg_renewal_tps(f64::NAN, 1.0).is_err());
        assert!(CapacityModel::new(1.0, 1.0, f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn algebra_round_trips(count in 1.0f64..1e12, days in 0.01f64..3650.0, tps in 0.01f64..1e6) {
            let rate = avg_renewal_tps(count, days).unwrap();
            let back = rate * days * SECONDS_PER_DAY;
            prop_assert!(((back - count) / count).abs() <= 1e-9);
            let secs = time_to_record(count, tps).unwrap();
            prop_assert!(((secs * tps - count) / count).abs() <= 1e-9);
        }
    }
}
