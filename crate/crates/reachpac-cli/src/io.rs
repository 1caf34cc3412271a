//! File formats: sample CSV, ellipsoid/certificate/report JSON. Every
//! float is written with 17 significant digits so round-trips are exact.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use reachpac_core::certify::{CertMethod, PacCertificate};
use reachpac_core::dynamics::SampleBatch;
use reachpac_core::ellipsoid::Ellipsoid;
use reachpac_core::equivalence::{EquivalenceReport, JointParams};
use reachpac_core::special::Probability;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed {what} at line {line}: {detail}")]
    Malformed {
        what: &'static str,
        line: usize,
        detail: String,
    },
    #[error("file contents are inconsistent: {0}")]
    Inconsistent(String),
}

/// 17 significant digits: enough to reproduce any f64 bit pattern.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON with full-precision floats.
pub fn to_json_g17<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, G17Formatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serializer emits utf-8"))
}

struct G17Formatter;

impl serde_json::ser::Formatter for G17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_g17(value))
    }
}

/// CSV with header `x1,...,x{n_x}`, one row per sample.
pub fn write_samples_csv<W: Write>(mut w: W, batch: &SampleBatch) -> Result<(), IoError> {
    let header: Vec<String> = (1..=batch.dim()).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in batch.rows() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_samples_csv<R: BufRead>(r: R) -> Result<SampleBatch, IoError> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(IoError::Malformed {
        what: "sample csv",
        line: 1,
        detail: "empty file".to_string(),
    })??;
    let n_x = header.split(',').count();
    if n_x == 0 {
        return Err(IoError::Malformed {
            what: "sample csv",
            line: 1,
            detail: "empty header".to_string(),
        });
    }
    let mut data = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|e| IoError::Malformed {
                what: "sample csv",
                line: idx + 2,
                detail: format!("{e}"),
            })?;
            data.push(v);
            count += 1;
        }
        if count != n_x {
            return Err(IoError::Malformed {
                what: "sample csv",
                line: idx + 2,
                detail: format!("expected {n_x} columns, got {count}"),
            });
        }
    }
    SampleBatch::new(n_x, data).map_err(|e| IoError::Inconsistent(e.to_string()))
}

/// On-disk ellipsoid document: {n_x, A (row-major), b, level}.
#[derive(Debug, Serialize, Deserialize)]
pub struct EllipsoidDoc {
    pub n_x: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub level: f64,
}

impl From<&Ellipsoid> for EllipsoidDoc {
    fn from(e: &Ellipsoid) -> Self {
        Self {
            n_x: e.dim(),
            a: e.matrix().to_vec(),
            b: e.offset().to_vec(),
            level: e.level(),
        }
    }
}

impl EllipsoidDoc {
    pub fn into_ellipsoid(self) -> Result<Ellipsoid, IoError> {
        Ellipsoid::with_parts(self.n_x, self.a, self.b, self.level)
            .map_err(|e| IoError::Inconsistent(e.to_string()))
    }
}

pub fn ellipsoid_to_json(e: &Ellipsoid) -> Result<String, IoError> {
    to_json_g17(&EllipsoidDoc::from(e))
}

pub fn ellipsoid_from_json(text: &str) -> Result<Ellipsoid, IoError> {
    let doc: EllipsoidDoc = serde_json::from_str(text)?;
    doc.into_ellipsoid()
}

/// On-disk certificate: {method, epsilon, beta, samples_used, violations,
/// threshold}; threshold is null for methods that leave the set alone.
#[derive(Debug, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub method: String,
    pub epsilon: f64,
    pub beta: f64,
    pub samples_used: u64,
    pub violations: u64,
    pub threshold: Option<f64>,
}

impl From<&PacCertificate> for CertificateDoc {
    fn from(c: &PacCertificate) -> Self {
        Self {
            method: c.method.name().to_string(),
            epsilon: c.epsilon.get(),
            beta: c.beta.get(),
            samples_used: c.samples_used,
            violations: c.violations,
            threshold: if c.threshold.is_nan() {
                None
            } else {
                Some(c.threshold)
            },
        }
    }
}

impl CertificateDoc {
    pub fn into_certificate(self) -> Result<PacCertificate, IoError> {
        let method = match self.method.as_str() {
            "holdout" => CertMethod::Holdout,
            "empirical-conformal" => CertMethod::EmpiricalConformal,
            "split-conformal" => CertMethod::SplitConformal,
            "scenario-discard" => CertMethod::ScenarioDiscard,
            other => {
                return Err(IoError::Inconsistent(format!("unknown method {other}")));
            }
        };
        let prob = |v: f64| Probability::new(v).map_err(|e| IoError::Inconsistent(e.to_string()));
        Ok(PacCertificate {
            method,
            epsilon: prob(self.epsilon)?,
            beta: prob(self.beta)?,
            samples_used: self.samples_used,
            violations: self.violations,
            threshold: self.threshold.unwrap_or(f64::NAN),
        })
    }
}

pub fn certificate_to_json(c: &PacCertificate) -> Result<String, IoError> {
    to_json_g17(&CertificateDoc::from(c))
}

/// Equivalence-check result as JSON.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDoc {
    pub methods: (String, String),
    pub values: (f64, f64),
    pub difference: f64,
    pub retained: Option<(u64, u64)>,
    pub volumes: Option<(f64, f64)>,
    pub index_gap: i64,
    pub exact: bool,
    pub pass: bool,
}

impl From<&EquivalenceReport> for ReportDoc {
    fn from(r: &EquivalenceReport) -> Self {
        Self {
            methods: r.methods.clone(),
            values: r.values,
            difference: r.difference,
            retained: r.retained,
            volumes: r.volumes,
            index_gap: r.index_gap,
            exact: r.exact,
            pass: r.pass,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JointParamsDoc {
    pub samples: u64,
    pub epsilon: f64,
    pub beta: f64,
    pub k_discard: u64,
    pub residuals: [f64; 2],
}

impl From<&JointParams> for JointParamsDoc {
    fn from(p: &JointParams) -> Self {
        Self {
            samples: p.samples,
            epsilon: p.epsilon,
            beta: p.beta,
            k_discard: p.k_discard,
            residuals: p.residuals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips_awkward_floats() {
        for &x in &[
            0.1,
            1.0 / 3.0,
            core::f64::consts::PI,
            2.2250738585072014e-308,
            -1.7e308,
            0.029513049607039932,
        ] {
            let s = fmt_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn csv_round_trip_preserves_bits() {
        let batch = SampleBatch::new(2, vec![0.1, -0.2, 1.0 / 3.0, 2.5e-17]).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &batch).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2\n"));
        let back = read_samples_csv(&buf[..]).unwrap();
        assert_eq!(back, batch);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let text = "x1,x2\n1.0,2.0\n3.0\n";
        assert!(matches!(
            read_samples_csv(text.as_bytes()),
            Err(IoError::Malformed { line: 3, .. })
        ));
    }

    #[test]
    fn ellipsoid_json_schema_and_round_trip() {
        let e = Ellipsoid::with_parts(2, vec![1.5, 0.2, 0.2, 0.8], vec![0.1, -0.3], 0.25).unwrap();
        let json = ellipsoid_to_json(&e).unwrap();
        for key in ["\"n_x\"", "\"A\"", "\"b\"", "\"level\""] {
            assert!(json.contains(key), "{json}");
        }
        let back = ellipsoid_from_json(&json).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn certificate_json_null_threshold() {
        let cert = PacCertificate {
            method: CertMethod::Holdout,
            epsilon: Probability::new(0.0295).unwrap(),
            beta: Probability::new(0.05).unwrap(),
            samples_used: 100,
            violations: 0,
            threshold: f64::NAN,
        };
        let json = certificate_to_json(&cert).unwrap();
        assert!(json.contains("\"threshold\":null"), "{json}");
        let doc: CertificateDoc = serde_json::from_str(&json).unwrap();
        let back = doc.into_certificate().unwrap();
        assert!(back.threshold.is_nan());
        assert_eq!(back.method, CertMethod::Holdout);
    }

    #[test]
    fn json_floats_carry_17_digits() {
        let e = Ellipsoid::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.1, 0.0]).unwrap();
        let json = ellipsoid_to_json(&e).unwrap();
        assert!(json.contains("1.0000000000000001e-1"), "{json}");
    }
}
