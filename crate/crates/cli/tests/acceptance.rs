//! Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.
//!
//! Run with `cargo test -p fedmed-cli --test acceptance -- --nocapture --test-threads 1`
//! to see the lines in order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fedmed::cohort::omop::{export_omop, write_omop_dir, OmopTable};
use fedmed::cohort::schema::*;
use fedmed::cohort::{load_csv, CohortTable, Value};
use fedmed::pca::{eigendecompose, federated_pca};
use fedmed::runtime::message::{Envelope, Message, PayloadBody, Step};
use fedmed::stats::{federated_correlation, federated_tableone, TableOneRow};
use fedmed::survival::{
    derive_survival, federated_cox_fit, federated_km, local_cox_round, newton_maximize, survival_from_hazard, NewtonOptions,
    StepFunction, SurvivalError,
};
use fedmed::synthgen::{default_two_site_config, generate_federation};
use fedmed::{AssetPolicy, Federation};
use fedmed_cli::audit::{audit_run, cmd_audit};
use fedmed_cli::generate::{cmd_generate, GenerateArgs};
use fedmed_cli::run::{cmd_run, RunArgs, Workflow};
use fedmed_cli::EXIT_AUDIT;
use fedmed_oracle as oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances.
const SIMPSON_SITE_MAX_R: f64 = -0.2;
const SIMPSON_FED_MIN_R: f64 = 0.2;
const SIMPSON_RUNTIME: Duration = Duration::from_secs(5);
const CALIBRATION_REL: f64 = 0.10;
const CALIBRATION_ABS_BINARY: f64 = 0.05;
const STATS_REL: f64 = 1e-10;
const QUANTILE_BINS: f64 = 512.0;
const KM_TOL: f64 = 1e-12;
const COX_CLOSED_FORM_TOL: f64 = 1e-8;
const COX_FD_REL: f64 = 1e-5;
const COX_ORACLE_TOL: f64 = 1e-6;
const COX_MAX_ROUNDS: u32 = 30;
const COX_RUNTIME: Duration = Duration::from_secs(30);
const SURVIVAL_ALGEBRA_TOL: f64 = 1e-12;
const PCA_COV_TOL: f64 = 1e-12;
const PCA_RESIDUAL_REL: f64 = 1e-8;
const PCA_ORTHO_TOL: f64 = 1e-10;
const PCA_TRACE_TOL: f64 = 1e-10;
const PCA_CLOSED_FORM_TOL: f64 = 1e-12;
const PCA_DEFAULT_COMPONENTS: usize = 4;
const DETERMINISM_RUNTIME: Duration = Duration::from_secs(120);
const PARTITIONS: u64 = 20;

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {id:>2} {name:<32} {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

fn federation_of(tables: Vec<CohortTable>, policy: &AssetPolicy) -> (Federation, Vec<String>) {
    let mut fed = Federation::new();
    let mut ids = Vec::new();
    for (i, t) in tables.into_iter().enumerate() {
        let gw = format!("gateway-{}", i + 1);
        fed.add_gateway(&gw).unwrap();
        ids.push(fed.register_dataset(&gw, t, policy.clone()).unwrap());
    }
    (fed, ids)
}

fn deploy_all(fed: &mut Federation, ids: &[String]) -> String {
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    fed.deploy(&refs, "acceptance").unwrap()
}

fn default_policy() -> AssetPolicy {
    AssetPolicy::default_for(&ms_schema())
}

fn permissive_policy() -> AssetPolicy {
    default_policy().with_thresholds(1, 1)
}

/// One 500-row site from the default generator.
fn base_table() -> CohortTable {
    let mut cfg = default_two_site_config().with_seed(7);
    cfg.sites.truncate(1);
    cfg.sites[0].n_subjects = 500;
    generate_federation(&cfg).unwrap().remove(0)
}

/// Random split of `table` into 1..=5 non-empty sites.
fn random_partition(table: &CohortTable, rng: &mut ChaCha8Rng, min_rows: usize) -> Vec<CohortTable> {
    let m = rng.random_range(1..=5usize);
    loop {
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); m];
        for i in 0..table.n_rows() {
            parts[rng.random_range(0..m)].push(i);
        }
        if parts.iter().all(|p| p.len() >= min_rows) {
            return parts.iter().enumerate().map(|(s, idx)| table.subset(format!("part-{}", s + 1), idx)).collect();
        }
    }
}

#[test]
fn criterion_01_simpson_reproduction() {
    let start = Instant::now();
    let tables = generate_federation(&default_two_site_config()).unwrap();
    let (mut fed, ids) = federation_of(tables, &default_policy());
    let mut site_r = Vec::new();
    for id in &ids {
        let spec = fed.deploy(&[id.as_str()], "site").unwrap();
        site_r.push(federated_correlation(&mut fed, &spec, &[LESION_VOLUME, EDSS]).unwrap().matrix.r[0][1]);
    }
    let all = deploy_all(&mut fed, &ids);
    let fed_r = federated_correlation(&mut fed, &all, &[LESION_VOLUME, EDSS]).unwrap().matrix.r[0][1];
    let elapsed = start.elapsed();
    let ok = site_r.iter().all(|&r| r < SIMPSON_SITE_MAX_R) && fed_r > SIMPSON_FED_MIN_R && elapsed < SIMPSON_RUNTIME;
    verdict(1, "simpson reproduction", ok, &format!("site r = {site_r:.3?}, federated r = {fed_r:.3}, {elapsed:.2?}"));
}

#[test]
fn criterion_02_tableone_calibration() {
    let targets: [(&str, f64, bool); 10] = [
        (SDMT, 55.56, false),
        (CHG, 0.39, false),
        (EDSS, 3.51, false),
        (RELAPSE, 3.11, false),
        (CNSR, 0.01, true),
        (MSFC, -2.33, false),
        (T25FWT, 8.91, false),
        (NHPT, 22.66, false),
        (LESION_VOLUME, 2188.0, false),
        (CDA, 0.0, true),
    ];
    let dates = [
        (DTFSTSYM, "2022-01-02", "2023-12-31"),
        (DIAGDT, "2022-02-01", "2024-02-03"),
        (VISITDT, "2022-02-26", "2024-12-09"),
        (TRTSDTC, "2022-03-02", "2024-03-07"),
    ];
    let tables = generate_federation(&default_two_site_config()).unwrap();
    let (mut fed, ids) = federation_of(tables, &default_policy());
    let spec = deploy_all(&mut fed, &ids);
    let rows = federated_tableone(&mut fed, &spec, &TABLEONE_NUMERIC, &TABLEONE_DATES).unwrap();
    let mut misses = Vec::new();
    for (col, target, binary) in targets {
        let Some(TableOneRow::Numeric(s)) = rows.iter().find(|r| matches!(r, TableOneRow::Numeric(s) if s.variable == col))
        else {
            misses.push(format!("{col} missing"));
            continue;
        };
        let ok = if binary {
            (s.mean - target).abs() <= CALIBRATION_ABS_BINARY
        } else {
            (s.mean - target).abs() <= CALIBRATION_REL * target.abs()
        };
        if !ok || s.n != 1386 {
            misses.push(format!("{col}: mean {:.4} vs {target}, n {}", s.mean, s.n));
        }
    }
    for (col, lo, hi) in dates {
        let Some(TableOneRow::Date(d)) = rows.iter().find(|r| matches!(r, TableOneRow::Date(d) if d.variable == col)) else {
            misses.push(format!("{col} missing"));
            continue;
        };
        if d.min.to_string() != lo || d.max.to_string() != hi || d.n != 1386 {
            misses.push(format!("{col}: {}..{} vs {lo}..{hi}", d.min, d.max));
        }
    }
    verdict(2, "tableone calibration", misses.is_empty(), &format!("10 numeric + 4 date rows, misses: {misses:?}"));
}

#[test]
fn criterion_03_oracle_equivalence_statistics() {
    let table = base_table();
    let pooled = oracle::PooledDataset::from_sites(std::slice::from_ref(&table));
    let columns = [EDSS, LESION_VOLUME, SDMT, MSFC, T25FWT];
    let expected = oracle::pooled_tableone(&pooled, &columns);
    let expected_r = oracle::pooled_correlation(&pooled, &columns);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    for trial in 0..PARTITIONS {
        let parts = random_partition(&table, &mut rng, 2);
        let n_sites = parts.len();
        let (mut fed, ids) = federation_of(parts, &permissive_policy());
        let spec = deploy_all(&mut fed, &ids);
        let rows = federated_tableone(&mut fed, &spec, &columns, &[]).unwrap();
        for (row, want) in rows.iter().zip(&expected) {
            let TableOneRow::Numeric(s) = row else { panic!("numeric row expected") };
            let width = (want.max - want.min) / QUANTILE_BINS;
            let exact = rel_close(s.mean, want.mean, STATS_REL)
                && rel_close(s.sd.unwrap(), want.sd, STATS_REL)
                && s.min == want.min
                && s.max == want.max
                && s.n as usize == want.n;
            let quartiles =
                [(s.q1, want.q1), (s.median, want.median), (s.q3, want.q3)].iter().all(|(a, b)| (a - b).abs() <= width);
            if !exact || !quartiles {
                failures.push(format!("trial {trial} ({n_sites} sites) {}: {s:?} vs {want:?}", want.column));
            }
        }
        let got = federated_correlation(&mut fed, &spec, &columns).unwrap().matrix;
        for (i, row) in expected_r.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                if !rel_close(got.r[i][j], want.unwrap(), STATS_REL) {
                    failures.push(format!("trial {trial} r[{i}][{j}] {} vs {want:?}", got.r[i][j]));
                }
            }
        }
    }
    verdict(
        3,
        "oracle equivalence, statistics",
        failures.is_empty(),
        &format!("{PARTITIONS} partitions, failures: {failures:?}"),
    );
}

fn with_cnsr_zero(table: &CohortTable) -> CohortTable {
    let i = table.column_index(CNSR).unwrap();
    let rows = table
        .rows()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r[i] = Value::Number(0.0);
            r
        })
        .collect();
    CohortTable::new(table.site_id.clone(), table.schema().to_vec(), rows).unwrap()
}

#[test]
fn criterion_04_oracle_equivalence_km() {
    let base = base_table();
    let uncensored = with_cnsr_zero(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let mut cases = Vec::new();
    for trial in 0..PARTITIONS {
        cases.push((trial, &base, 2.0, "default"));
    }
    cases.push((PARTITIONS, &base, 100.0, "zero events"));
    cases.push((PARTITIONS + 1, &uncensored, -1.0, "all events"));
    for (trial, table, threshold, label) in cases {
        let parts = random_partition(table, &mut rng, 25);
        let (mut fed, ids) = federation_of(parts, &default_policy());
        let spec = deploy_all(&mut fed, &ids);
        let curve = federated_km(&mut fed, &spec, threshold, 30).unwrap();
        let pooled = oracle::PooledDataset::from_sites(std::slice::from_ref(table));
        let recs: Vec<(i64, bool)> =
            oracle::pooled_survival_records(&pooled, threshold, &[]).iter().map(|r| (r.time, r.event)).collect();
        let want = oracle::pooled_km(&recs, &curve.boundaries());
        let same = want.len() == curve.intervals.len()
            && want.iter().zip(&curve.intervals).all(|(w, g)| w.d == g.d && w.n == g.n && (w.s - g.s).abs() <= KM_TOL);
        if !same {
            failures.push(format!("trial {trial} ({label})"));
        }
        if label == "zero events" && curve.intervals.iter().any(|iv| iv.s != 1.0) {
            failures.push("zero-event curve is not flat".into());
        }
        if label == "all events" && curve.intervals.last().map(|iv| iv.s) != Some(0.0) {
            failures.push("all-event curve does not reach 0".into());
        }
    }
    verdict(
        4,
        "oracle equivalence, KM",
        failures.is_empty(),
        &format!("{PARTITIONS} partitions + 2 edge cases, failures: {failures:?}"),
    );
}

fn rec(time: i64, event: bool, x: &[f64]) -> fedmed::survival::SurvivalRecord {
    fedmed::survival::SurvivalRecord { row: 0, time, event, x: x.to_vec() }
}

#[test]
fn criterion_05_cox_correctness() {
    // (a) closed form
    let three = [rec(1, true, &[1.0]), rec(2, true, &[0.0]), rec(3, false, &[1.0])];
    let fit = newton_maximize::<SurvivalError>(1, NewtonOptions { tol: 1e-14, ..NewtonOptions::default() }, |b| {
        let p = local_cox_round(&three, b)?;
        Ok((p.loglik, p.gradient, p.hessian))
    })
    .unwrap();
    let closed = -0.5 * 2f64.ln();
    let a_ok = (fit.beta[0] - closed).abs() <= COX_CLOSED_FORM_TOL;

    // (b) derivatives against central differences on real records
    let tables = generate_federation(&default_two_site_config()).unwrap();
    let features: Vec<String> = COX_FEATURES.iter().map(|s| s.to_string()).collect();
    let recs = derive_survival(&tables[0], 2.0, &features).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let beta: Vec<f64> = (0..features.len()).map(|j| rng.random_range(-0.5..0.5) / scale_of(&recs, j)).collect();
        let at = local_cox_round(&recs, &beta).unwrap();
        for j in 0..beta.len() {
            let h = 1e-4 / scale_of(&recs, j);
            let (mut up, mut dn) = (beta.clone(), beta.clone());
            up[j] += h;
            dn[j] -= h;
            let (pu, pd) = (local_cox_round(&recs, &up).unwrap(), local_cox_round(&recs, &dn).unwrap());
            let fd_grad = (pu.loglik - pd.loglik) / (2.0 * h);
            worst = worst.max((fd_grad - at.gradient[j]).abs() / at.gradient[j].abs().max(1.0));
            for k in 0..beta.len() {
                let fd_hess = (pu.gradient[k] - pd.gradient[k]) / (2.0 * h);
                let scale = at.hessian[j][k].abs().max(1e-3 * at.hessian[k][k].abs().max(at.hessian[j][j].abs())).max(1.0);
                worst = worst.max((fd_hess - at.hessian[j][k]).abs() / scale);
            }
        }
    }
    let b_ok = worst <= COX_FD_REL;

    // (c) federated vs centralized stratified oracle
    let start = Instant::now();
    let pooled = oracle::PooledDataset::from_sites(&tables);
    let (mut fed, ids) = federation_of(tables, &default_policy());
    let spec = deploy_all(&mut fed, &ids);
    let cox = federated_cox_fit(&mut fed, &spec, &COX_FEATURES, 2.0, COX_MAX_ROUNDS, 1e-9).unwrap();
    let elapsed = start.elapsed();
    let records = oracle::pooled_survival_records(&pooled, 2.0, &COX_FEATURES);
    let want = oracle::centralized_stratified_cox(&records, COX_FEATURES.len(), COX_MAX_ROUNDS, 1e-9);
    let diff = cox.model.beta.iter().zip(&want.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rounds = cox.model.convergence.rounds;
    let c_ok = diff <= COX_ORACLE_TOL && rounds <= COX_MAX_ROUNDS && want.converged && elapsed < COX_RUNTIME;
    verdict(
        5,
        "cox correctness",
        a_ok && b_ok && c_ok,
        &format!(
            "(a) β = {:.10} vs {closed:.10}; (b) worst FD rel err {worst:.2e}; (c) |Δβ|∞ = {diff:.2e}, {rounds} rounds, {elapsed:.2?}",
            fit.beta[0]
        ),
    );
}

fn scale_of(recs: &[fedmed::survival::SurvivalRecord], j: usize) -> f64 {
    let n = recs.len() as f64;
    let mean = recs.iter().map(|r| r.x[j]).sum::<f64>() / n;
    let sd = (recs.iter().map(|r| (r.x[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

fn fitted_hazard(times: &[(i64, bool, f64)]) -> Option<(StepFunction, f64)> {
    let recs: Vec<_> = times.iter().map(|&(t, e, x)| rec(t, e, &[x])).collect();
    let fit = newton_maximize::<SurvivalError>(1, NewtonOptions::default(), |b| {
        let p = local_cox_round(&recs, b)?;
        Ok((p.loglik, p.gradient, p.hessian))
    })
    .ok()?;
    Some((fedmed::survival::breslow_baseline(&recs, &fit.beta), fit.beta[0]))
}

#[test]
fn criterion_06_survival_algebra() {
    let cases = std::cell::Cell::new(0u32);
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (prop::collection::vec((1i64..200, any::<bool>(), -2.0f64..2.0), 4..40), -1.5f64..1.5);
    let result = runner.run(&strategy, |(data, x)| {
        let Some((h0, beta)) = fitted_hazard(&data) else { return Ok(()) };
        cases.set(cases.get() + 1);
        let s = survival_from_hazard(&h0, &[beta], &[x]);
        prop_assert_eq!(s.eval(0.0), 1.0);
        prop_assert!(s.values.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(s.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let doubled = survival_from_hazard(&h0, &[beta, 1.0], &[x, 2f64.ln()]);
        for (a, b) in s.values.iter().zip(&doubled.values) {
            prop_assert!((b - a * a).abs() <= SURVIVAL_ALGEBRA_TOL, "{} vs {}", b, a * a);
        }
        Ok(())
    });
    verdict(6, "survival algebra", result.is_ok(), &format!("{} fitted models, {result:?}", cases.get()));
}

#[test]
fn criterion_07_pca() {
    let tables = generate_federation(&default_two_site_config()).unwrap();
    let pooled = oracle::PooledDataset::from_sites(&tables);
    let (mut fed, ids) = federation_of(tables, &default_policy());
    let spec = deploy_all(&mut fed, &ids);
    let fit = federated_pca(&mut fed, &spec, &PCA_CATEGORICALS, PCA_DEFAULT_COMPONENTS).unwrap();

    let cats = oracle::pooled_categories(&pooled, &PCA_CATEGORICALS);
    let encoded_same = fit.encoding.columns.iter().map(|c| c.categories.clone()).collect::<Vec<_>>() == cats;
    let rows = oracle::pooled_one_hot(&pooled, &PCA_CATEGORICALS, &cats);
    let want = oracle::pooled_pca(&rows);
    let p = want.mean.len();
    let mut cov_err: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            cov_err = cov_err.max((fit.covariance[i][j] - want.covariance[(i, j)]).abs());
        }
    }

    let full = eigendecompose(&fit.covariance, &fit.components.mean, p).unwrap();
    let norm = fit.covariance.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let mut residual: f64 = 0.0;
    let mut ortho: f64 = 0.0;
    for j in 0..p {
        let w = full.component(j);
        let r = (0..p)
            .map(|i| ((0..p).map(|k| fit.covariance[i][k] * w[k]).sum::<f64>() - full.eigenvalues[j] * w[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
        for k in 0..p {
            let dot: f64 = (0..p).map(|i| full.components[i][j] * full.components[i][k]).sum();
            ortho = ortho.max((dot - if j == k { 1.0 } else { 0.0 }).abs());
        }
    }
    let trace: f64 = (0..p).map(|i| fit.covariance[i][i]).sum();
    let trace_err = (full.eigenvalues.iter().sum::<f64>() - trace).abs();
    let eig_err = full.eigenvalues.iter().zip(&want.eigenvalues).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let two = eigendecompose(&[vec![0.5, -0.5], vec![-0.5, 0.5]], &[0.5, 0.5], 2).unwrap();
    let h = 0.5f64.sqrt();
    let w = two.component(0);
    let closed = (two.eigenvalues[0] - 1.0).abs() <= PCA_CLOSED_FORM_TOL
        && two.eigenvalues[1].abs() <= PCA_CLOSED_FORM_TOL
        && (w[0] - h).abs() <= PCA_CLOSED_FORM_TOL
        && (w[1] + h).abs() <= PCA_CLOSED_FORM_TOL;

    let report = fedmed::pca::transform_matrix_report(&fit.encoding, &fit.components);
    let ok = encoded_same
        && cov_err <= PCA_COV_TOL
        && residual <= PCA_RESIDUAL_REL * norm
        && ortho <= PCA_ORTHO_TOL
        && trace_err <= PCA_TRACE_TOL
        && eig_err <= PCA_RESIDUAL_REL * norm
        && closed
        && report.components.len() == PCA_DEFAULT_COMPONENTS;
    verdict(
        7,
        "pca",
        ok,
        &format!(
            "cov err {cov_err:.1e}, residual {residual:.1e}, WᵀW err {ortho:.1e}, trace err {trace_err:.1e}, eigen vs oracle {eig_err:.1e}, 2x2 {closed}, {} components",
            report.components.len()
        ),
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedmed"))
}

fn generate_and_run_all(root: &Path, seed: u64) -> PathBuf {
    let data = root.join("data");
    cmd_generate(&GenerateArgs { config: None, out: data.clone(), seed: Some(seed) }).unwrap();
    cmd_run(&RunArgs::new(Workflow::All, &data)).unwrap();
    data
}

/// Rewrites the first message matching `pick` with `edit`, into a copy of the run directory's log.
fn tamper(log: &Path, mut edit: impl FnMut(&mut Envelope) -> bool) {
    let text = fs::read_to_string(log).unwrap();
    let mut done = false;
    let lines: Vec<String> = text
        .lines()
        .map(|l| {
            if done {
                return l.to_string();
            }
            let mut env = Envelope::from_bytes(l.as_bytes()).unwrap();
            if edit(&mut env) {
                done = true;
                String::from_utf8(env.to_bytes()).unwrap()
            } else {
                l.to_string()
            }
        })
        .collect();
    assert!(done, "nothing to tamper with");
    fs::write(log, lines.join("\n") + "\n").unwrap();
}

#[test]
fn criterion_08_privacy_audit() {
    let root = tempfile::tempdir().unwrap();
    let data = generate_and_run_all(root.path(), 42);
    let manifest = data.join("results").join("manifest.json");
    let report = cmd_audit(&manifest).unwrap();
    let clean_exit = bin().args(["audit", "--run"]).arg(&manifest).status().unwrap().code();

    let small = root.path().join("small");
    copy_dir(&data, &small);
    tamper(&small.join("results/messages.jsonl"), |env| match &mut env.payload {
        Message::Response { aggregate, .. } => match &mut aggregate.body {
            PayloadBody::Moments(m) => {
                m[0].n = 3;
                true
            }
            _ => false,
        },
        _ => false,
    });
    let small_report = audit_run(&small.join("results/manifest.json")).unwrap();
    let small_exit = bin().args(["audit", "--run"]).arg(small.join("results/manifest.json")).status().unwrap().code();

    let pid = root.path().join("pid");
    copy_dir(&data, &pid);
    let some_pid = load_csv(data.join("site-1.csv"), &ms_schema()).unwrap().pids()[0].clone();
    tamper(&pid.join("results/messages.jsonl"), |env| match &mut env.payload {
        Message::Request { step: Step::Moments { columns }, .. } => {
            columns.push(some_pid.clone());
            true
        }
        _ => false,
    });
    let pid_exit = bin().args(["audit", "--run"]).arg(pid.join("results/manifest.json")).status().unwrap().code();

    let ok = report.is_clean()
        && report.messages > 0
        && clean_exit == Some(0)
        && small_exit == Some(EXIT_AUDIT)
        && small_report.violations.len() == 1
        && pid_exit == Some(EXIT_AUDIT);
    verdict(
        8,
        "privacy audit",
        ok,
        &format!(
            "{} messages, {} violations (exit {clean_exit:?}); tampered count exit {small_exit:?}; tampered PID exit {pid_exit:?}",
            report.messages,
            report.violations.len()
        ),
    );
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            fs::copy(e.path(), target).unwrap();
        }
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[test]
fn criterion_09_omop_export() {
    let table = load_csv(fixtures().join("two_subjects.csv"), &ms_schema()).unwrap();
    let sets = export_omop(&table).unwrap();
    let counts: BTreeMap<&str, usize> = sets.iter().map(|s| (s.table_name.name(), s.rows.len())).collect();
    let expected: BTreeMap<&str, usize> = OmopTable::ALL
        .iter()
        .map(|t| {
            let n = match t {
                OmopTable::Observation => 14,
                OmopTable::Measurement => 16,
                _ => 2,
            };
            (t.name(), n)
        })
        .collect();
    let out = tempfile::tempdir().unwrap();
    write_omop_dir(&sets, out.path()).unwrap();
    let golden = fixtures().join("omop_golden");
    let mut mismatched = Vec::new();
    for t in OmopTable::ALL {
        let name = format!("{}.csv", t.name());
        let got = fs::read(out.path().join(&name)).unwrap();
        if std::env::var_os("FEDMED_UPDATE_GOLDEN").is_some() {
            fs::create_dir_all(&golden).unwrap();
            fs::write(golden.join(&name), &got).unwrap();
        }
        if fs::read(golden.join(&name)).ok().as_deref() != Some(got.as_slice()) {
            mismatched.push(name);
        }
    }
    verdict(
        9,
        "omop export",
        counts == expected && mismatched.is_empty(),
        &format!("rows {counts:?}, golden mismatches {mismatched:?}"),
    );
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_10_end_to_end_determinism() {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let da = generate_and_run_all(a.path(), 42);
    let status = bin().args(["generate", "--default", "--seed", "42", "--out"]).arg(b.path().join("data")).status().unwrap();
    assert!(status.success());
    let status = bin().args(["run", "--workflow", "all", "--data"]).arg(b.path().join("data")).status().unwrap();
    assert!(status.success());
    let elapsed = start.elapsed();
    let (ta, tb) = (tree(&da), tree(&b.path().join("data")));
    let differing: Vec<&String> = ta
        .keys()
        .chain(tb.keys())
        .filter(|k| ta.get(*k) != tb.get(*k))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let ok = differing.is_empty() && ta.len() > 20 && elapsed < DETERMINISM_RUNTIME;
    verdict(10, "end-to-end determinism", ok, &format!("{} files, differing {differing:?}, {elapsed:.2?}", ta.len()));
}
