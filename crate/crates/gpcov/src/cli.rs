//! The work behind each CLI subcommand, separated from argument parsing so
//! integration tests can call the commands directly.

use crate::config::RunConfig;
use crate::estimators::{fit, Method};
use crate::experiment::{aggregate, run_experiment, ExperimentReport};
use crate::report::{
    read_dataset_csv, read_replications_csv, write_dataset_csv, write_histograms,
    write_replications_csv, write_table1_csv, FitReport,
};
use crate::sampling::SeedPlan;
use crate::GpError;
use std::path::{Path, PathBuf};

/// `simulate`: one dataset drawn from the configured truth, written as CSV.
pub fn cmd_simulate(cfg: &RunConfig, output: Option<&Path>) -> Result<PathBuf, GpError> {
    let truth = cfg.truth_spec()?;
    let plan = SeedPlan::new(cfg.master_seed, 0);
    let data = crate::experiment::simulate_dataset(&truth, cfg.n, cfg.dim, &plan)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            ensure_out_dir(&cfg.out_dir)?;
            cfg.out_dir.join("dataset.csv")
        }
    };
    write_dataset_csv(&path, &data)?;
    Ok(path)
}

/// `fit`: estimate covariance parameters on a dataset file with one method.
pub fn cmd_fit(cfg: &RunConfig, data_path: &Path, method: Method) -> Result<FitReport, GpError> {
    let data = read_dataset_csv(data_path)?;
    if method == Method::Cv && data.n() < 2 {
        return Err(GpError::Usage(
            "cv estimation requires a dataset with n >= 2".into(),
        ));
    }
    let family = crate::estimators::ModelFamily {
        nu: cfg.model.nu,
        delta: cfg.model.delta,
    };
    let result = fit(method, &family, &data, &cfg.param_box()?, &cfg.optimizer)?;
    Ok(FitReport::new(method, &result))
}

/// `experiment`: run the full replication study and write the report files.
/// On failure every file written by this invocation is removed.
pub fn cmd_experiment(cfg: &RunConfig) -> Result<(ExperimentReport, Vec<PathBuf>), GpError> {
    let scenario = cfg.scenario()?;
    let report = with_worker_pool(cfg.workers, || run_experiment(&scenario))?;

    let mut written: Vec<PathBuf> = Vec::new();
    let outcome = write_experiment_files(cfg, &report, &mut written);
    match outcome {
        Ok(()) => Ok((report, written)),
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            Err(e)
        }
    }
}

fn write_experiment_files(
    cfg: &RunConfig,
    report: &ExperimentReport,
    written: &mut Vec<PathBuf>,
) -> Result<(), GpError> {
    ensure_out_dir(&cfg.out_dir)?;
    let config_path = cfg.out_dir.join("config.json");
    cfg.save(&config_path)?;
    written.push(config_path);

    let reps_path = cfg.out_dir.join("replications.csv");
    write_replications_csv(&reps_path, &report.records)?;
    written.push(reps_path);

    let table_path = cfg.out_dir.join("table1.csv");
    write_table1_csv(&table_path, &report.scenario, &report.aggregates)?;
    written.push(table_path);

    written.extend(write_histograms(&cfg.out_dir, &report.histograms)?);

    if cfg.formats.iter().any(|f| f == "json") {
        let json_path = cfg.out_dir.join("report.json");
        let text = serde_json::to_string_pretty(report)
            .map_err(|e| GpError::Usage(format!("report serialization: {e}")))?;
        std::fs::write(&json_path, text).map_err(|e| GpError::io(&json_path, e))?;
        written.push(json_path);
    }
    Ok(())
}

/// `report`: re-aggregate an existing replications.csv (written by a prior
/// `experiment` run) and rewrite table1.csv and the histogram files.
pub fn cmd_report(dir: &Path) -> Result<Vec<PathBuf>, GpError> {
    let cfg = RunConfig::load(&dir.join("config.json"))?;
    let scenario = cfg.scenario()?;
    let mut records = read_replications_csv(&dir.join("replications.csv"))?;
    records.sort_by_key(|r| r.rep_index);
    let (aggregates, histograms) = aggregate(&records)?;

    let mut written = Vec::new();
    let table_path = dir.join("table1.csv");
    write_table1_csv(&table_path, &scenario, &aggregates)?;
    written.push(table_path);
    written.extend(write_histograms(dir, &histograms)?);
    Ok(written)
}

fn ensure_out_dir(dir: &Path) -> Result<(), GpError> {
    std::fs::create_dir_all(dir).map_err(|e| GpError::io(dir, e))
}

/// Runs `body` on a dedicated pool of `workers` threads; 0 keeps the global
/// default (all available cores).
fn with_worker_pool<T: Send>(
    workers: usize,
    body: impl FnOnce() -> Result<T, GpError> + Send,
) -> Result<T, GpError> {
    if workers == 0 {
        return body();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| GpError::Usage(format!("worker pool: {e}")))?;
    pool.install(body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig {
            n: 20,
            n_reps: 2,
            workers: 1,
            out_dir: dir.to_path_buf(),
            ..RunConfig::default()
        };
        cfg.quadrature.m = 50;
        cfg
    }

    #[test]
    fn simulate_writes_expected_rows_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.n = 5;
        let p1 = cmd_simulate(&cfg, None).unwrap();
        let text1 = std::fs::read_to_string(&p1).unwrap();
        assert_eq!(text1.lines().count(), 6);
        assert!(text1.starts_with("x_1,y\n"));

        let p2 = dir.path().join("again.csv");
        cmd_simulate(&cfg, Some(&p2)).unwrap();
        let text2 = std::fs::read_to_string(&p2).unwrap();
        assert_eq!(text1, text2);
    }

    #[test]
    fn fit_runs_on_simulated_file_and_respects_box() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.n = 25;
        cfg.model.delta = cfg.truth.delta; // well-specified
        let data_path = cmd_simulate(&cfg, None).unwrap();
        let report = cmd_fit(&cfg, &data_path, Method::Ml).unwrap();
        let pbox = cfg.param_box().unwrap();
        assert!(pbox.contains(report.sigma2_hat, report.ell_hat));
        assert!(report.evals > 0);
    }

    #[test]
    fn fit_cv_rejects_single_observation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        std::fs::write(&path, "x_1,y\n0.5,1.0\n").unwrap();
        let cfg = tiny_config(dir.path());
        match cmd_fit(&cfg, &path, Method::Cv) {
            Err(e @ GpError::Usage(_)) => assert_eq!(e.exit_code(), 1),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn experiment_emits_all_files_and_report_reaggregates_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let (report, written) = cmd_experiment(&cfg).unwrap();
        assert_eq!(report.records.len(), 2);
        for name in [
            "config.json",
            "replications.csv",
            "table1.csv",
            "hist_ell_ml.csv",
            "hist_ell_cv.csv",
            "hist_d_ml.csv",
            "hist_d_cv.csv",
            "hist_e_ml.csv",
            "hist_e_cv.csv",
        ] {
            assert!(
                written.iter().any(|p| p.ends_with(name)),
                "missing {name}"
            );
            assert!(dir.path().join(name).exists(), "missing file {name}");
        }
        let table = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
        assert_eq!(table.lines().count(), 3, "header + 2 estimator rows");

        // re-aggregation from the CSV reproduces the table byte for byte
        cmd_report(dir.path()).unwrap();
        let table_again = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
        assert_eq!(table, table_again);
    }

    #[test]
    fn experiment_csv_outputs_are_byte_identical_across_runs() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let cfg1 = tiny_config(dir1.path());
        let mut cfg2 = tiny_config(dir2.path());
        cfg2.workers = 2; // different parallelism, same bytes
        cmd_experiment(&cfg1).unwrap();
        cmd_experiment(&cfg2).unwrap();
        for name in ["table1.csv", "hist_ell_ml.csv", "hist_d_cv.csv", "hist_e_ml.csv"] {
            let a = std::fs::read_to_string(dir1.path().join(name)).unwrap();
            let b = std::fs::read_to_string(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
        // replications.csv is identical apart from the timing column
        let strip = |text: String| -> Vec<String> {
            text.lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                .collect()
        };
        let a = strip(std::fs::read_to_string(dir1.path().join("replications.csv")).unwrap());
        let b = strip(std::fs::read_to_string(dir2.path().join("replications.csv")).unwrap());
        assert_eq!(a, b);
    }
}
