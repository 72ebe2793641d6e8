//! Shared fixtures for the benchmarks.

use fedmed::cohort::schema::ms_schema;
use fedmed::cohort::CohortTable;
use fedmed::synthgen::{default_two_site_config, generate_federation};
use fedmed::{AssetPolicy, Federation};

pub fn default_tables() -> Vec<CohortTable> {
    generate_federation(&default_two_site_config()).expect("default config is valid")
}

/// Default two-site federation with one compute spec over both datasets.
pub fn default_federation() -> (Federation, String) {
    let mut fed = Federation::new();
    let mut ids = Vec::new();
    for (i, t) in default_tables().into_iter().enumerate() {
        let gw = format!("gateway-{}", i + 1);
        fed.add_gateway(&gw).expect("fresh gateway");
        ids.push(fed.register_dataset(&gw, t, AssetPolicy::default_for(&ms_schema())).expect("valid dataset"));
    }
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let spec = fed.deploy(&refs, "bench").expect("deploys");
    (fed, spec)
}
