use fsnet_core::data::{
    gen_s_abrupt, gen_s_gradual, lag1_autocorrelation, load_csv, split_and_normalize, write_csv, Series, StreamSpec,
};
use fsnet_core::Error;
use proptest::prelude::*;

#[test]
fn abrupt_segments_hold_across_seeds() {
    let phis = [0.1, 0.4, 0.6, 0.1, 0.4, 0.6];
    for seed in 0..5 {
        let x = gen_s_abrupt(seed);
        assert_eq!(x.len(), 6000);
        assert_eq!(StreamSpec::s_abrupt(seed).boundaries(), vec![1000, 2000, 3000, 4000, 5000]);
        for (i, phi) in phis.iter().enumerate() {
            let r = lag1_autocorrelation(&x[i * 1000..(i + 1) * 1000]);
            assert!((r - phi).abs() < 0.08, "seed {seed} segment {i}: {r}");
        }
    }
}

#[test]
fn gradual_pure_stretches_follow_their_coefficient() {
    let phis = [0.1, 0.4, 0.6, 0.1, 0.4, 0.6];
    let pure = [(0, 800), (1000, 1600), (1800, 2400), (2600, 3200), (3400, 4000), (4200, 5000)];
    for seed in 0..5 {
        let x = gen_s_gradual(seed);
        assert_eq!(x.len(), 5000);
        for (&(a, b), phi) in pure.iter().zip(phis) {
            let r = lag1_autocorrelation(&x[a..b]);
            assert!((r - phi).abs() < 0.08, "seed {seed} [{a}, {b}): {r}");
        }
    }
}

#[test]
fn normalisation_uses_warmup_statistics_only() {
    let mut v: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
    v.extend(std::iter::repeat_n(1e6, 100));
    let s = Series::univariate("x", v).unwrap();
    let split = split_and_normalize(&s, 0.5).unwrap();
    let warm: Vec<f64> = split.warmup().column(0).collect();
    let mean = warm.iter().sum::<f64>() / warm.len() as f64;
    assert!(mean.abs() < 1e-12);
    assert!(split.online().row(0)[0] > 1e5);
}

#[test]
fn missing_file_is_an_io_error_naming_the_path() {
    let err = load_csv("/no/such/place.csv".as_ref(), &[]).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/no/such/place.csv"));
}

#[test]
fn malformed_cells_report_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "a,b\n1,2\n3,oops\n").unwrap();
    let msg = load_csv(&p, &[]).unwrap_err().to_string();
    assert!(msg.contains("row 2") && msg.contains("\"b\""), "{msg}");
}

#[test]
fn column_selection_keeps_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    std::fs::write(&p, "date,a,b,c\nx,1,2,3\ny,4,5,6\n").unwrap();
    let s = load_csv(&p, &["c".into(), "a".into()]).unwrap();
    assert_eq!(s.columns(), &["a".to_string(), "c".to_string()]);
    assert_eq!(s.values(), &[1.0, 3.0, 4.0, 6.0]);
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(
        width in 1usize..4,
        rows in prop::collection::vec(prop::collection::vec(-1e9..1e9f64, 4), 1..40),
    ) {
        let columns: Vec<String> = (0..width).map(|j| format!("c{j}")).collect();
        let values: Vec<f64> = rows.iter().flat_map(|r| r[..width].to_vec()).collect();
        let s = Series::new(columns, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_csv(&p, &s).unwrap();
        prop_assert_eq!(load_csv(&p, &[]).unwrap(), s);
    }
}
