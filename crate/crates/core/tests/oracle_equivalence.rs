use fedmed::cohort::schema::*;
use fedmed::stats::{federated_correlation, federated_tableone, TableOneRow};
use fedmed::survival::{federated_cox_fit, federated_km};
use fedmed::synthgen::{default_two_site_config, generate_federation};
use fedmed::{AssetPolicy, Federation};
use fedmed_oracle as oracle;

fn setup() -> (Federation, String, oracle::PooledDataset) {
    let tables = generate_federation(&default_two_site_config().with_seed(21)).unwrap();
    let pooled = oracle::PooledDataset::from_sites(&tables);
    let mut fed = Federation::new();
    let mut ids = Vec::new();
    for (i, t) in tables.into_iter().enumerate() {
        let gw = format!("gateway-{}", i + 1);
        fed.add_gateway(&gw).unwrap();
        ids.push(fed.register_dataset(&gw, t, AssetPolicy::default_for(&ms_schema())).unwrap());
    }
    let spec = fed.deploy(&[&ids[0], &ids[1]], "oracle").unwrap();
    (fed, spec, pooled)
}

#[test]
fn moments_match_pooled() {
    let (mut fed, spec, pooled) = setup();
    let want = oracle::pooled_tableone(&pooled, &TABLEONE_NUMERIC);
    let got = federated_tableone(&mut fed, &spec, &TABLEONE_NUMERIC, &[]).unwrap();
    for (g, w) in got.iter().zip(&want) {
        let TableOneRow::Numeric(g) = g else { panic!() };
        assert_eq!(g.n as usize, w.n);
        assert!((g.mean - w.mean).abs() <= 1e-10 * w.mean.abs().max(1.0), "{}", w.column);
        assert!((g.sd.unwrap() - w.sd).abs() <= 1e-10 * w.sd.max(1.0), "{}", w.column);
    }
}

#[test]
fn correlation_matches_pooled() {
    let (mut fed, spec, pooled) = setup();
    let cols = [EDSS, LESION_VOLUME, SDMT];
    let want = oracle::pooled_correlation(&pooled, &cols);
    let got = federated_correlation(&mut fed, &spec, &cols).unwrap().matrix;
    for (g, w) in got.r.iter().zip(&want) {
        for (a, b) in g.iter().zip(w) {
            assert!((a - b.unwrap()).abs() <= 1e-10);
        }
    }
}

#[test]
fn km_matches_pooled_on_the_released_grid() {
    let (mut fed, spec, pooled) = setup();
    let curve = federated_km(&mut fed, &spec, 2.0, 30).unwrap();
    let recs: Vec<(i64, bool)> = oracle::pooled_survival_records(&pooled, 2.0, &[]).iter().map(|r| (r.time, r.event)).collect();
    let want = oracle::pooled_km(&recs, &curve.boundaries());
    assert_eq!(want.len(), curve.intervals.len());
    for (w, g) in want.iter().zip(&curve.intervals) {
        assert_eq!((w.d, w.n), (g.d, g.n));
        assert!((w.s - g.s).abs() <= 1e-12);
    }
}

#[test]
fn cox_matches_centralized_stratified_fit() {
    let (mut fed, spec, pooled) = setup();
    let fit = federated_cox_fit(&mut fed, &spec, &COX_FEATURES, 2.0, 30, 1e-9).unwrap();
    let recs = oracle::pooled_survival_records(&pooled, 2.0, &COX_FEATURES);
    let want = oracle::centralized_stratified_cox(&recs, COX_FEATURES.len(), 30, 1e-9);
    assert!(want.converged);
    for (a, b) in fit.model.beta.iter().zip(&want.beta) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
    assert!((fit.model.convergence.loglik - want.loglik).abs() <= 1e-6 * want.loglik.abs());
}
