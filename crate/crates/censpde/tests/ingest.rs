use censpde::dataset::{ingest, report, write_canonical, ColumnMapping, Transform};
use censpde_core::data::CensoredDataset;
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = (CensoredDataset, Vec<String>)> {
    (1usize..40, 0usize..3).prop_flat_map(|(n, ncov)| {
        (
            prop::collection::vec((-180.0..180.0f64, -90.0..90.0f64, 0.0..5e5f64, any::<bool>()), n),
            prop::collection::vec(-10.0..10.0f64, n * ncov),
        )
            .prop_map(move |(rows, covs)| {
                let locs = rows.iter().map(|r| [r.0, r.1]).collect();
                let censored: Vec<bool> = rows.iter().map(|r| r.3).collect();
                let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
                let limits = y.iter().zip(&censored).map(|(&v, &c)| if c { v } else { f64::INFINITY }).collect();
                let mut x = Vec::with_capacity(n * (3 + ncov));
                for (i, r) in rows.iter().enumerate() {
                    x.extend([1.0, r.0, r.1]);
                    x.extend(&covs[i * ncov..(i + 1) * ncov]);
                }
                let names = (0..ncov).map(|c| format!("cov{c}")).collect();
                (CensoredDataset::new(locs, y, censored, limits, x, 3 + ncov).unwrap(), names)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_round_trip((data, names) in dataset()) {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("d.csv");
        write_canonical(&path, &data, &names).unwrap();
        let mapping = ColumnMapping { covariates: names.clone(), ..ColumnMapping::default() };
        let back = ingest(&path, &mapping, Transform::None).unwrap();
        prop_assert_eq!(&back.data, &data);
        prop_assert_eq!(back.covariates, names);
        prop_assert_eq!(back.report, report(&data));
    }

    #[test]
    fn transforms_keep_flags_and_order((data, names) in dataset()) {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("d.csv");
        write_canonical(&path, &data, &names).unwrap();
        let mapping = ColumnMapping { covariates: names, ..ColumnMapping::default() };
        let plain = ingest(&path, &mapping, Transform::None).unwrap();
        for t in [Transform::Log1p, Transform::Iterlog] {
            let got = ingest(&path, &mapping, t).unwrap();
            prop_assert_eq!(&got.data.censored, &plain.data.censored);
            prop_assert_eq!(got.report.censored, plain.report.censored);
            for i in 0..data.len() {
                prop_assert_eq!(got.data.y[i], t.apply(plain.data.y[i]).unwrap());
                if data.censored[i] {
                    prop_assert_eq!(got.data.limits[i], got.data.y[i]);
                }
            }
            for i in 1..data.len() {
                let (a, b) = (plain.data.y[i - 1], plain.data.y[i]);
                let (ta, tb) = (got.data.y[i - 1], got.data.y[i]);
                prop_assert!((a < b) <= (ta <= tb));
            }
        }
    }
}

#[test]
fn censored_fraction_matches_count() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    let n = 5000;
    let k = 2331;
    let mut s = String::from("lon,lat,value,censored,limit\n");
    for i in 0..n {
        let c = i < k;
        s.push_str(&format!("{},{},{},{},{}\n", i % 71, i / 71, if c { 0.0 } else { 50.0 }, c as u8, 10.0));
    }
    std::fs::write(&path, s).unwrap();
    let got = ingest(&path, &ColumnMapping::default(), Transform::Iterlog).unwrap();
    assert_eq!(got.report.censored, k);
    assert!((got.report.censored_fraction - 0.4662).abs() < 1e-12);
    assert_eq!(got.report.bbox, [0.0, 0.0, 70.0, 70.0]);
}

#[test]
fn negative_values_fail_log_transforms() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    std::fs::write(&path, "lon,lat,value,censored,limit\n0,0,1,0,\n1,1,-3,0,\n").unwrap();
    let err = ingest(&path, &ColumnMapping::default(), Transform::Log1p).unwrap_err();
    assert_eq!(err.kind(), "parse");
    assert!(err.error_line().contains("line=3"), "{}", err.error_line());
    assert!(ingest(&path, &ColumnMapping::default(), Transform::None).is_ok());
}
