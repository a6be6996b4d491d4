use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::numkit::Rng;
use crate::problems::Sample;
use crate::simdata::{AlphaForm, SemiSynthetic};
use crate::{Error, Real, Result};

pub const SCHEMA_X: &str = "change";
pub const SCHEMA_W: [&str; 5] = [
    "time_in_hospital",
    "num_lab_procedures",
    "num_procedures",
    "num_medications",
    "number_diagnoses",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidRows {
    #[default]
    Error,
    Skip,
}

/// A CSV file plus the synthetic partially linear outcome model laid over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularSource {
    pub path: PathBuf,
    #[serde(default = "default_x_col")]
    pub x_col: String,
    #[serde(default = "default_w_cols")]
    pub w_cols: Vec<String>,
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    /// Defaults to the sin/cos form with divisor equal to the number of controls.
    #[serde(default)]
    pub alpha: Option<AlphaForm>,
    #[serde(default = "default_delim")]
    pub delimiter: char,
    #[serde(default)]
    pub on_invalid: InvalidRows,
}

fn default_x_col() -> String {
    SCHEMA_X.to_string()
}
fn default_w_cols() -> Vec<String> {
    SCHEMA_W.iter().map(|s| s.to_string()).collect()
}
fn default_theta0() -> f64 {
    -1.0
}
fn default_noise() -> f64 {
    0.5
}
fn default_delim() -> char {
    ','
}

impl TabularSource {
    pub fn with_schema(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            x_col: default_x_col(),
            w_cols: default_w_cols(),
            theta0: default_theta0(),
            noise_scale: default_noise(),
            alpha: None,
            delimiter: default_delim(),
            on_invalid: InvalidRows::Error,
        }
    }

    pub fn alpha_form(&self) -> AlphaForm {
        self.alpha.unwrap_or(AlphaForm::SinCosOfSum {
            divisor: self.w_cols.len() as f64,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Ingested<T> {
    pub samples: Vec<Sample<T>>,
    pub rejected: usize,
    pub w_means: Vec<f64>,
    pub w_sds: Vec<f64>,
    pub truth: SemiSynthetic<T>,
}

fn parse_binary(s: &str) -> Option<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "ch" | "yes" | "true" => Some(1.0),
        "0" | "0.0" | "no" | "false" => Some(0.0),
        _ => None,
    }
}

/// Reads the mapped columns, standardizes the controls and draws synthetic outcomes.
pub fn ingest_csv<T: Real>(src: &TabularSource, rng: &mut Rng) -> Result<Ingested<T>> {
    if !src.delimiter.is_ascii() {
        return Err(Error::InvalidArgument(format!("delimiter {:?} is not ASCII", src.delimiter)));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(src.delimiter as u8)
        .has_headers(true)
        .from_path(&src.path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let xi = find(&src.x_col)?;
    let wi = src.w_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut raw: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut rejected = 0;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let parsed = rec.map_err(Error::from).and_then(|rec| {
            let cell = |i: usize| rec.get(i).unwrap_or("");
            let x = parse_binary(cell(xi)).ok_or_else(|| Error::Parse {
                row,
                column: src.x_col.clone(),
                message: format!("expected a binary value, got {:?}", cell(xi)),
            })?;
            let mut w = Vec::with_capacity(wi.len());
            for (name, &i) in src.w_cols.iter().zip(&wi) {
                let v: f64 = cell(i).trim().parse().map_err(|_| Error::Parse {
                    row,
                    column: name.clone(),
                    message: format!("expected a number, got {:?}", cell(i)),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: name.clone(),
                        message: "non-finite value".into(),
                    });
                }
                w.push(v);
            }
            Ok((x, w))
        });
        match parsed {
            Ok(r) => raw.push(r),
            Err(e) if src.on_invalid == InvalidRows::Error => return Err(e),
            Err(_) => rejected += 1,
        }
    }
    if raw.is_empty() {
        return Err(Error::EmptySample("no usable rows in tabular source"));
    }

    let p = wi.len();
    let n = raw.len() as f64;
    let means: Vec<f64> = (0..p).map(|j| raw.iter().map(|r| r.1[j]).sum::<f64>() / n).collect();
    let sds: Vec<f64> = (0..p)
        .map(|j| {
            let v = raw.iter().map(|r| (r.1[j] - means[j]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let rows: Vec<(Vec<T>, Vec<T>)> = raw
        .iter()
        .map(|(x, w)| {
            let ws = w.iter().enumerate().map(|(j, &v)| T::lit((v - means[j]) / sds[j])).collect();
            (vec![T::lit(*x)], ws)
        })
        .collect();
    let truth = SemiSynthetic {
        theta0: vec![T::lit(src.theta0)],
        alpha: src.alpha_form(),
        noise_scale: T::lit(src.noise_scale),
        rows: Arc::new(rows),
    };
    let samples = truth.rows.iter().map(|(x, w)| truth.outcome(rng, x, w)).collect();
    Ok(Ingested {
        samples,
        rejected,
        w_means: means,
        w_sds: sds,
        truth,
    })
}

/// Writes `rows` synthetic records with the six-column hospital-encounter schema.
///
/// Treatment depends on length of stay and medication count so the controls confound it.
pub fn write_schema_csv(path: &Path, rows: usize, rng: &mut Rng) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![SCHEMA_X];
    header.extend(SCHEMA_W);
    w.write_record(&header)?;
    let clamp = |v: f64, lo: f64, hi: f64| v.round().clamp(lo, hi);
    for _ in 0..rows {
        let time = clamp(4.4 + 3.0 * rng.standard_normal(), 1.0, 14.0);
        let labs = clamp(43.0 + 19.7 * rng.standard_normal(), 1.0, 132.0);
        let procs = clamp((1.7 * rng.standard_normal()).abs(), 0.0, 6.0);
        let meds = clamp(16.0 + 1.5 * (time - 4.4) + 7.0 * rng.standard_normal(), 1.0, 81.0);
        let diag = clamp(7.4 + 1.9 * rng.standard_normal(), 1.0, 16.0);
        let s = -0.2 + 0.06 * (meds - 16.0) + 0.1 * (time - 4.4);
        let change = rng.bernoulli(1.0 / (1.0 + (-s).exp()));
        w.write_record([
            if change { "1".to_string() } else { "0".to_string() },
            format!("{time}"),
            format!("{labs}"),
            format!("{procs}"),
            format!("{meds}"),
            format!("{diag}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Exports samples with columns `x_0.., w_0.., y, treat, u`.
pub fn write_samples_csv<T: Real, W: Write>(out: W, samples: &[Sample<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (dx, dw) = samples.first().map(|s| (s.x.len(), s.w.len())).unwrap_or((0, 0));
    let mut header: Vec<String> = (0..dx).map(|j| format!("x_{j}")).collect();
    header.extend((0..dw).map(|j| format!("w_{j}")));
    header.extend(["y", "treat", "u"].map(String::from));
    w.write_record(&header)?;
    for s in samples {
        if s.x.len() != dx || s.w.len() != dw {
            return Err(Error::Dimension("ragged sample export".into()));
        }
        let mut rec: Vec<String> = s.x.iter().chain(&s.w).map(|v| format!("{v}")).collect();
        rec.push(format!("{}", s.y));
        rec.push(s.treat.map(|t| if t { "1" } else { "0" }.to_string()).unwrap_or_default());
        rec.push(s.u.map(|u| format!("{u}")).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    const HEAD: &str = "change,time_in_hospital,num_lab_procedures,num_procedures,num_medications,number_diagnoses\n";

    #[test]
    fn zero_noise_outcome_is_exact() {
        let f = csv_file(&format!("{HEAD}1,3,40,0,10,5\n0,5,50,1,20,7\nCh,1,30,2,15,9\n"));
        let mut src = TabularSource::with_schema(f.path());
        src.noise_scale = 0.0;
        let ing: Ingested<f64> = ingest_csv(&src, &mut Rng::new(0)).unwrap();
        assert_eq!(ing.samples.len(), 3);
        for s in &ing.samples {
            let a = src.alpha_form().eval(&s.w);
            assert_eq!(s.y, -s.x[0] + a);
            assert_eq!(s.u, Some(a));
        }
        // standardized controls
        for j in 0..5 {
            let m: f64 = ing.samples.iter().map(|s| s.w[j]).sum::<f64>() / 3.0;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_cell_names_row_and_column() {
        let f = csv_file(&format!("{HEAD}1,3,40,0,10,5\n0,5,abc,1,20,7\n"));
        let src = TabularSource::with_schema(f.path());
        match ingest_csv::<f64>(&src, &mut Rng::new(0)) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "num_lab_procedures");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skip_mode_counts_rejects() {
        let f = csv_file(&format!("{HEAD}1,3,40,0,10,5\n0,5,abc,1,20,7\nmaybe,1,1,1,1,1\n"));
        let mut src = TabularSource::with_schema(f.path());
        src.on_invalid = InvalidRows::Skip;
        let ing: Ingested<f64> = ingest_csv(&src, &mut Rng::new(0)).unwrap();
        assert_eq!(ing.samples.len(), 1);
        assert_eq!(ing.rejected, 2);
    }

    #[test]
    fn missing_column_reported() {
        let f = csv_file("change,time_in_hospital\n1,2\n");
        let src = TabularSource::with_schema(f.path());
        assert!(matches!(ingest_csv::<f64>(&src, &mut Rng::new(0)), Err(Error::MissingColumn(c)) if c == "num_lab_procedures"));
    }

    #[test]
    fn semicolon_delimiter() {
        let f = csv_file(&HEAD.replace(',', ";").to_string().replace('\n', "\n1;3;40;0;10;5\n"));
        let mut src = TabularSource::with_schema(f.path());
        src.delimiter = ';';
        let ing: Ingested<f64> = ingest_csv(&src, &mut Rng::new(0)).unwrap();
        assert_eq!(ing.samples.len(), 1);
    }

    #[test]
    fn generated_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_schema_csv(&p, 500, &mut Rng::new(4)).unwrap();
        let ing: Ingested<f64> = ingest_csv(&TabularSource::with_schema(&p), &mut Rng::new(5)).unwrap();
        assert_eq!(ing.samples.len(), 500);
        assert_eq!(ing.rejected, 0);
        let treated = ing.samples.iter().filter(|s| s.x[0] == 1.0).count();
        assert!(treated > 50 && treated < 450);
    }
}
