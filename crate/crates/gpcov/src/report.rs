//! CSV and JSON emission for datasets, replication records and aggregated
//! tables. Every numeric field is serialized with 17 significant digits so
//! a parse of the emitted file reproduces the doubles exactly.

use crate::estimators::{Dataset, FitResult, Method};
use crate::experiment::{Aggregates, Histogram, ReplicationRecord, Scenario};
use crate::sampling::Design;
use crate::GpError;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// 17 significant digits: enough for a lossless f64 round trip.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>, GpError> {
    Ok(BufWriter::new(
        std::fs::File::create(path).map_err(|e| GpError::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<std::fs::File>, path: &Path) -> Result<(), GpError> {
    w.flush().map_err(|e| GpError::io(path, e))
}

fn parse_field(path: &Path, line: usize, field: &str) -> Result<f64, GpError> {
    field.trim().parse::<f64>().map_err(|_| GpError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("not a number: '{field}'"),
    })
}

/// Writes a dataset as CSV with header `x_1,...,x_d,y`.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<(), GpError> {
    let mut w = create(path)?;
    let dim = data.design.dim();
    let mut line = String::new();
    for k in 1..=dim {
        line.push_str(&format!("x_{k},"));
    }
    line.push('y');
    writeln!(w, "{line}").map_err(|e| GpError::io(path, e))?;
    for (p, y) in data.design.points().zip(&data.y) {
        let coords: Vec<String> = p.iter().map(|&c| fmt_g17(c)).collect();
        writeln!(w, "{},{}", coords.join(","), fmt_g17(*y)).map_err(|e| GpError::io(path, e))?;
    }
    finish(w, path)
}

/// Reads a dataset written by [`write_dataset_csv`]; parse failures carry
/// the offending line number.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset, GpError> {
    let text = std::fs::read_to_string(path).map_err(|e| GpError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| GpError::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[cols.len() - 1].trim() != "y" {
        return Err(GpError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header x_1,...,x_d,y got '{header}'"),
        });
    }
    let dim = cols.len() - 1;
    let mut coords = Vec::new();
    let mut y = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(GpError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected {} fields, got {}", dim + 1, fields.len()),
            });
        }
        for f in &fields[..dim] {
            coords.push(parse_field(path, idx + 1, f)?);
        }
        y.push(parse_field(path, idx + 1, fields[dim])?);
    }
    let design = Design::from_points(dim, coords)?;
    Dataset::new(design, y)
}

const REPLICATION_HEADER: &str = "rep_index,sigma2_ml,ell_ml,sigma2_cv,ell_cv,ml_value,cv_value,d_ml,d_cv,e_ml,e_cv,elapsed_ms";

/// One row per replication record, in replication order.
pub fn write_replications_csv(path: &Path, records: &[ReplicationRecord]) -> Result<(), GpError> {
    let mut w = create(path)?;
    writeln!(w, "{REPLICATION_HEADER}").map_err(|e| GpError::io(path, e))?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.rep_index,
            fmt_g17(r.sigma2_ml),
            fmt_g17(r.ell_ml),
            fmt_g17(r.sigma2_cv),
            fmt_g17(r.ell_cv),
            fmt_g17(r.ml_value),
            fmt_g17(r.cv_value),
            fmt_g17(r.d_ml),
            fmt_g17(r.d_cv),
            fmt_g17(r.e_ml),
            fmt_g17(r.e_cv),
            fmt_g17(r.elapsed_ms),
        )
        .map_err(|e| GpError::io(path, e))?;
    }
    finish(w, path)
}

pub fn read_replications_csv(path: &Path) -> Result<Vec<ReplicationRecord>, GpError> {
    let text = std::fs::read_to_string(path).map_err(|e| GpError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == REPLICATION_HEADER => {}
        Some((_, header)) => {
            return Err(GpError::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("unexpected header '{header}'"),
            })
        }
        None => {
            return Err(GpError::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(GpError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected 12 fields, got {}", f.len()),
            });
        }
        let rep_index = f[0].trim().parse::<u64>().map_err(|_| GpError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: format!("not an index: '{}'", f[0]),
        })?;
        let num = |k: usize| parse_field(path, idx + 1, f[k]);
        records.push(ReplicationRecord {
            rep_index,
            sigma2_ml: num(1)?,
            ell_ml: num(2)?,
            sigma2_cv: num(3)?,
            ell_cv: num(4)?,
            ml_value: num(5)?,
            cv_value: num(6)?,
            d_ml: num(7)?,
            d_cv: num(8)?,
            e_ml: num(9)?,
            e_cv: num(10)?,
            elapsed_ms: num(11)?,
        });
    }
    Ok(records)
}

/// Table rows keyed (n, specification, estimator).
pub fn write_table1_csv(
    path: &Path,
    scenario: &Scenario,
    agg: &Aggregates,
) -> Result<(), GpError> {
    let mut w = create(path)?;
    writeln!(w, "n,specification,estimator,mean_ell,sd_ell,mean_e,mean_d")
        .map_err(|e| GpError::io(path, e))?;
    for (name, a) in [("ml", &agg.ml), ("cv", &agg.cv)] {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            scenario.n,
            scenario.specification(),
            name,
            fmt_g17(a.mean_ell),
            fmt_g17(a.sd_ell),
            fmt_g17(a.mean_e),
            fmt_g17(a.mean_d),
        )
        .map_err(|e| GpError::io(path, e))?;
    }
    finish(w, path)
}

/// `hist_<quantity>_<estimator>.csv` with columns bin_left, bin_right, count.
pub fn write_histograms(dir: &Path, histograms: &[Histogram]) -> Result<Vec<PathBuf>, GpError> {
    let mut written = Vec::new();
    for h in histograms {
        let name = format!(
            "hist_{}_{}.csv",
            h.quantity.name(),
            match h.method {
                Method::Ml => "ml",
                Method::Cv => "cv",
            }
        );
        let path = dir.join(name);
        let mut w = create(&path)?;
        writeln!(w, "bin_left,bin_right,count").map_err(|e| GpError::io(&path, e))?;
        for b in &h.bins {
            writeln!(w, "{},{},{}", fmt_g17(b.left), fmt_g17(b.right), b.count)
                .map_err(|e| GpError::io(&path, e))?;
        }
        finish(w, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// JSON fit report emitted by the `fit` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub sigma2_hat: f64,
    pub ell_hat: f64,
    pub criterion: f64,
    pub evals: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn new(method: Method, fit: &FitResult) -> Self {
        FitReport {
            method,
            sigma2_hat: fit.sigma2,
            ell_hat: fit.ell,
            criterion: fit.criterion_value,
            evals: fit.evaluations,
            converged: fit.converged,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::TruthSpec;
    use crate::kernel::MaternSpec;
    use crate::sampling::SeedPlan;

    #[test]
    fn g17_round_trips_doubles() {
        for v in [
            0.1,
            -3.0e-300,
            1.0 / 3.0,
            6.02214076e23,
            f64::MIN_POSITIVE,
            -0.0,
            12345.678901234567,
        ] {
            let s = fmt_g17(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 2.0, 1.5, 0.04).unwrap()).unwrap();
        let data =
            crate::experiment::simulate_dataset(&truth, 9, 2, &SeedPlan::new(3, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset_csv(&path, &data).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x_1,x_2,y\n"));
        assert_eq!(text.lines().count(), 10);

        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back.design, data.design);
        assert_eq!(back.y, data.y);
    }

    #[test]
    fn dataset_csv_parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x_1,y\n0.1,1.0\noops,2.0\n").unwrap();
        match read_dataset_csv(&path) {
            Err(GpError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, "a,b\n").unwrap();
        match read_dataset_csv(&path) {
            Err(GpError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn replication_csv_round_trip_is_exact() {
        let rec = ReplicationRecord {
            rep_index: 3,
            sigma2_ml: 1.0 / 3.0,
            ell_ml: 2.0f64.sqrt(),
            sigma2_cv: 1e-300,
            ell_cv: 9.999999999999998,
            ml_value: -1.2345678901234567,
            cv_value: 0.1,
            d_ml: 3.3e-17,
            d_cv: 1.0,
            e_ml: 0.25,
            e_cv: 0.125,
            elapsed_ms: 17.25,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reps.csv");
        write_replications_csv(&path, &[rec]).unwrap();
        let back = read_replications_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].same_results(&rec));
        assert_eq!(back[0].elapsed_ms.to_bits(), rec.elapsed_ms.to_bits());
    }

    #[test]
    fn fit_report_json_has_the_agreed_keys() {
        let fit = FitResult {
            sigma2: 1.5,
            ell: 2.5,
            criterion_value: 0.75,
            evaluations: 321,
            converged: true,
        };
        let json = FitReport::new(Method::Cv, &fit).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["method"], "cv");
        assert_eq!(v["sigma2_hat"], 1.5);
        assert_eq!(v["ell_hat"], 2.5);
        assert_eq!(v["criterion"], 0.75);
        assert_eq!(v["evals"], 321);
        assert_eq!(v["converged"], true);
    }
}
