use std::collections::{BTreeMap, HashSet};

use fedmed::cohort::schema::*;
use fedmed::cohort::{load_csv, write_csv, CohortTable};
use fedmed::pca::federated_pca;
use fedmed::runtime::audit::audit_log;
use fedmed::stats::{federated_binned_scatter, federated_correlation, federated_tableone};
use fedmed::survival::{federated_cox_fit, federated_km};
use fedmed::synthgen::{default_two_site_config, generate_federation};
use fedmed::{AssetPolicy, Federation};

const K: u64 = 5;

fn federation(tables: Vec<CohortTable>, policy: &AssetPolicy) -> (Federation, String) {
    let mut fed = Federation::new();
    let mut ids = Vec::new();
    for (i, t) in tables.into_iter().enumerate() {
        let gw = format!("gateway-{}", i + 1);
        fed.add_gateway(&gw).unwrap();
        ids.push(fed.register_dataset(&gw, t, policy.clone()).unwrap());
    }
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let spec = fed.deploy(&refs, "test").unwrap();
    (fed, spec)
}

fn default_policy() -> AssetPolicy {
    AssetPolicy::default_for(&ms_schema())
}

#[test]
fn every_workflow_leaves_a_clean_log() {
    let tables = generate_federation(&default_two_site_config()).unwrap();
    let pids: HashSet<String> = tables.iter().flat_map(|t| t.pids()).collect();
    let (mut fed, spec) = federation(tables, &default_policy());

    let rows = federated_tableone(&mut fed, &spec, &TABLEONE_NUMERIC, &TABLEONE_DATES).unwrap();
    assert_eq!(rows.len(), TABLEONE_NUMERIC.len() + TABLEONE_DATES.len());
    let corr = federated_correlation(&mut fed, &spec, &[LESION_VOLUME, EDSS]).unwrap();
    assert_eq!(corr.per_site_n.len(), 2);
    let scatter = federated_binned_scatter(&mut fed, &spec, LESION_VOLUME, EDSS, 12, 12).unwrap();
    assert!(scatter.combined.cells.iter().all(|c| c.count == 0 || c.count >= K));
    for site in &scatter.per_site {
        assert!(site.grid.cells.iter().all(|c| c.count == 0 || c.count >= K));
    }
    let km = federated_km(&mut fed, &spec, 2.0, 30).unwrap();
    assert!(km.intervals.len() > 2);
    let cox = federated_cox_fit(&mut fed, &spec, &COX_FEATURES, 2.0, 30, 1e-9).unwrap();
    assert_eq!(cox.model.beta.len(), COX_FEATURES.len());
    let pca = federated_pca(&mut fed, &spec, &PCA_CATEGORICALS, 4).unwrap();
    assert_eq!(pca.n, 1386);

    let report = audit_log(fed.message_log().iter().map(String::as_str), &pids, &fed.thresholds(), K);
    assert!(report.messages > 0);
    assert!(report.is_clean(), "{:?}", report.violations);
}

#[test]
fn small_cohorts_are_refused() {
    let mut cfg = default_two_site_config();
    cfg.sites.truncate(1);
    cfg.sites[0].n_subjects = 10;
    let tables = generate_federation(&cfg).unwrap();
    let (mut fed, spec) = federation(tables, &default_policy());
    let err = federated_tableone(&mut fed, &spec, &[EDSS], &[]).unwrap_err();
    assert!(err.is_policy(), "{err}");
}

#[test]
fn columns_outside_the_policy_are_refused() {
    let tables = generate_federation(&default_two_site_config()).unwrap();
    let mut policy = default_policy();
    policy.allowed_columns.remove(EDSS);
    let (mut fed, spec) = federation(tables, &policy);
    assert!(federated_tableone(&mut fed, &spec, &[EDSS], &[]).unwrap_err().is_policy());
    assert!(federated_tableone(&mut fed, &spec, &[SDMT], &[]).is_ok());
}

#[test]
fn csv_round_trip_preserves_generated_tables() {
    let dir = tempfile::tempdir().unwrap();
    for t in generate_federation(&default_two_site_config()).unwrap() {
        let path = dir.path().join(format!("{}.csv", t.site_id));
        let mut bytes = Vec::new();
        write_csv(&t, &mut bytes).unwrap();
        std::fs::write(&path, &bytes).unwrap();
        let back = load_csv(&path, &ms_schema()).unwrap();
        assert_eq!(back.rows(), t.rows());
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let a = generate_federation(&default_two_site_config().with_seed(9)).unwrap();
    let b = generate_federation(&default_two_site_config().with_seed(9)).unwrap();
    let c = generate_federation(&default_two_site_config().with_seed(10)).unwrap();
    assert_eq!(a[0].rows(), b[0].rows());
    assert_ne!(a[0].rows(), c[0].rows());
    let sizes: BTreeMap<_, _> = a.iter().map(|t| (t.site_id.clone(), t.n_rows())).collect();
    assert_eq!(sizes.values().sum::<usize>(), 1386);
}
