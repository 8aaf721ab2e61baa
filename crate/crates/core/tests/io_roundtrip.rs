use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use su11tomo::experiment::{ensemble_outcomes, run_experiment, run_pipeline, ExperimentConfig};
use su11tomo::inversion::ReconstructionReport;
use su11tomo::simulation::{add_noise, sample_exact, GridSpec, MeasurementRecord, NoiseSpec};
use su11tomo::states::{state_perelomov, DensityMatrix};

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn density_matrix_json_is_bit_exact() {
    let rho = state_perelomov(Complex64::new(0.3, -0.45), 2, 12).unwrap();
    let text = serde_json::to_string(&rho).unwrap();
    let back: DensityMatrix = serde_json::from_str(&text).unwrap();
    for n in 0..rho.dim() {
        for m in 0..rho.dim() {
            assert_eq!(back.get(n, m).re.to_bits(), rho.get(n, m).re.to_bits());
            assert_eq!(back.get(n, m).im.to_bits(), rho.get(n, m).im.to_bits());
        }
    }
    assert_eq!(back.q(), 2);
}

#[test]
fn record_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rho = state_perelomov(Complex64::new(0.6, 0.0), 0, 10).unwrap();
    let rec = add_noise(&sample_exact(&rho, 0, &GridSpec::default()).unwrap(), NoiseSpec::default()).unwrap();
    let path = dir.path().join("rec.json");
    rec.write_json(&path).unwrap();
    assert_eq!(MeasurementRecord::read_json(&path).unwrap(), rec);
}

#[test]
fn config_and_report_round_trip() {
    let config = ExperimentConfig::default();
    let text = serde_json::to_string(&config).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), config);

    let report = run_pipeline(&config).unwrap().report;
    let text = serde_json::to_string(&report).unwrap();
    let back: ReconstructionReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn experiment_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        output_dir: dir.path().join("out"),
        ..ExperimentConfig::default()
    };
    run_experiment(&config).unwrap();
    let first = snapshot(&config.output_dir);
    for name in ["config.json", "record.json", "record.csv", "report.json", "moments_k0.csv", "rho_difference.csv"] {
        assert!(first.contains_key(name), "{name} missing");
    }
    run_experiment(&config).unwrap();
    assert_eq!(snapshot(&config.output_dir), first);
}

#[test]
fn single_seed_ensemble_equals_single_run() {
    let config = ExperimentConfig::default();
    let runs = ensemble_outcomes(&config, 1).unwrap();
    assert_eq!(runs[0], run_pipeline(&config).unwrap());
}

#[test]
fn unwritable_output_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let config = ExperimentConfig {
        output_dir: blocker.join("out"),
        ..ExperimentConfig::default()
    };
    let err = run_experiment(&config).unwrap_err();
    assert_eq!(err.kind(), "io");
    assert!(err.to_string().contains("file"));
}
