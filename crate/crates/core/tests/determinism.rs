use std::fs;

use fsnet_core::harness::{run_experiment, DataSpec, ExperimentConfig, LearnerKind, ModelConfig};

fn small(learner: LearnerKind, out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSpec::Ar1 { phi: 0.5, length: 400 },
        learner,
        horizon: 2,
        lookback: 16,
        seeds: vec![0, 1],
        model: ModelConfig { num_blocks: 2, filters: 4, kernel_size: 3 },
        out_dir: out.to_path_buf(),
        verbose: true,
        ..Default::default()
    }
}

fn metric_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".summary.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_write_identical_metric_files() {
    for learner in LearnerKind::ALL {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sa = run_experiment(&small(learner, a.path())).unwrap();
        let mut cb = small(learner, b.path());
        cb.threads = 2;
        let sb = run_experiment(&cb).unwrap();
        assert_eq!(sa.seeds, sb.seeds, "{learner}");
        let (fa, fb) = (metric_files(a.path()), metric_files(b.path()));
        assert!(fa.len() >= 4, "{learner}: {:?}", fa.iter().map(|f| &f.0).collect::<Vec<_>>());
        assert_eq!(fa, fb, "{learner}");
    }
}

#[test]
fn summaries_report_parameter_categories() {
    let dir = tempfile::tempdir().unwrap();
    let full = run_experiment(&small(LearnerKind::Fsnet, dir.path())).unwrap().param_counts;
    assert!(full.adapter.is_some() && full.ema_registers.is_some() && full.associative_memory.is_some());
    assert!(full.episodic_buffer.is_none());
    let naive = run_experiment(&small(LearnerKind::FsnetNaive, dir.path())).unwrap().param_counts;
    assert!(naive.adapter.is_some() && naive.associative_memory.is_none() && naive.ema_registers.is_none());
    let tcn = run_experiment(&small(LearnerKind::Onlinetcn, dir.path())).unwrap().param_counts;
    assert_eq!(tcn.total(), tcn.backbone);
    assert_eq!(tcn.backbone, full.backbone);
    let er = run_experiment(&small(LearnerKind::Er, dir.path())).unwrap().param_counts;
    assert_eq!(er.episodic_buffer, Some(500 * (16 + 2)));
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&small(LearnerKind::Fsnet, dir.path())).unwrap();
    assert_ne!(s.seeds[0].cum_mse, s.seeds[1].cum_mse);
}
