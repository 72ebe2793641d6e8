use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedmed::cohort::schema::{ms_schema, COX_FEATURES, EDSS, LESION_VOLUME, PCA_CATEGORICALS, TABLEONE_DATES, TABLEONE_NUMERIC};
use fedmed::cohort::{load_csv, CohortTable};
use fedmed::pca::{federated_pca, transform_matrix_report};
use fedmed::stats::{
    federated_binned_scatter, federated_boxplot_stats, federated_correlation, federated_tableone, tableone, HistogramGrid,
};
use fedmed::survival::{federated_cox_fit, federated_km, KaplanMeierCurve};
use fedmed::{AssetPolicy, Federation};
use serde::Serialize;

use crate::manifest::{relative_path, sha256_hex, write_output, RunManifest};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workflow {
    TableOne,
    Boxplot,
    Correlation,
    Scatter,
    Km,
    Cox,
    Pca,
    All,
}

impl Workflow {
    pub const EACH: [Workflow; 7] = [
        Workflow::TableOne,
        Workflow::Boxplot,
        Workflow::Correlation,
        Workflow::Scatter,
        Workflow::Km,
        Workflow::Cox,
        Workflow::Pca,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Workflow::TableOne => "tableone",
            Workflow::Boxplot => "boxplot",
            Workflow::Correlation => "correlation",
            Workflow::Scatter => "scatter",
            Workflow::Km => "km",
            Workflow::Cox => "cox",
            Workflow::Pca => "pca",
            Workflow::All => "all",
        }
    }
}

impl FromStr for Workflow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Workflow::EACH
            .into_iter()
            .chain([Workflow::All])
            .find(|w| w.as_str() == s)
            .ok_or_else(|| format!("unknown workflow `{s}`"))
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub workflow: Workflow,
    pub data: PathBuf,
    pub policy: Option<PathBuf>,
    /// Defaults to `<data>/results`.
    pub out: Option<PathBuf>,
    pub event_threshold: f64,
    pub interval_width_days: i64,
    pub max_rounds: u32,
    pub components: usize,
    pub scatter_bins: u32,
}

impl RunArgs {
    pub fn new(workflow: Workflow, data: impl Into<PathBuf>) -> Self {
        RunArgs {
            workflow,
            data: data.into(),
            policy: None,
            out: None,
            event_threshold: 2.0,
            interval_width_days: 30,
            max_rounds: 30,
            components: 4,
            scatter_bins: 12,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.data.join("results"))
    }
}

/// Site CSVs directly under `dir`, by file name.
pub fn load_sites(dir: &Path) -> CliResult<Vec<CohortTable>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(&format!("reading data dir {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::config(format!("no site CSVs in {}", dir.display())));
    }
    let schema = ms_schema();
    paths.iter().map(|p| load_csv(p, &schema).map_err(|e| CliError::config(format!("{}: {e}", p.display())))).collect()
}

pub fn load_policy(path: Option<&Path>) -> CliResult<AssetPolicy> {
    let Some(path) = path else { return Ok(AssetPolicy::default_for(&ms_schema())) };
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
    let policy: AssetPolicy = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    policy.validate().map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(policy)
}

/// One gateway per site; returns the dataset ids in site order.
pub fn build_federation(tables: Vec<CohortTable>, policy: &AssetPolicy) -> CliResult<(Federation, Vec<String>)> {
    let mut fed = Federation::new();
    let mut ids = Vec::with_capacity(tables.len());
    for (i, t) in tables.into_iter().enumerate() {
        let gw = format!("gateway-{}", i + 1);
        fed.add_gateway(&gw)?;
        ids.push(fed.register_dataset(&gw, t, policy.clone())?);
    }
    Ok((fed, ids))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("result serializes");
    out.push(b'\n');
    out
}

fn km_csv(curve: &KaplanMeierCurve) -> String {
    let mut out = String::from("t_lo,t_hi,d,n,S\n");
    for iv in &curve.intervals {
        let _ = writeln!(out, "{},{},{},{},{}", iv.t_lo, iv.t_hi, iv.d, iv.n, iv.s);
    }
    out
}

fn grid_csv(g: &HistogramGrid) -> String {
    let mut out = String::from("ix,iy,x_lo,x_hi,y_lo,y_hi,count\n");
    let dx = (g.x_hi - g.x_lo) / g.x_bins as f64;
    let dy = (g.y_hi - g.y_lo) / g.y_bins as f64;
    for c in &g.cells {
        let (x0, y0) = (g.x_lo + dx * c.ix as f64, g.y_lo + dy * c.iy as f64);
        let _ = writeln!(out, "{},{},{},{},{},{},{}", c.ix, c.iy, x0, x0 + dx, y0, y0 + dy, c.count);
    }
    out
}

struct Ctx<'a> {
    args: &'a RunArgs,
    out: PathBuf,
    fed: Federation,
    ids: Vec<String>,
    all_spec: String,
    manifest: RunManifest,
}

impl Ctx<'_> {
    fn emit(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        write_output(&self.out, rel, bytes, &mut self.manifest)
    }

    fn site_spec(&mut self, i: usize) -> CliResult<String> {
        let id = self.ids[i].clone();
        Ok(self.fed.deploy(&[&id], &format!("fedmed-{id}"))?)
    }

    fn tableone(&mut self) -> CliResult<()> {
        let rows = federated_tableone(&mut self.fed, &self.all_spec, &TABLEONE_NUMERIC, &TABLEONE_DATES)?;
        self.emit("tableone_numeric.csv", tableone::numeric_rows_csv(&rows).as_bytes())?;
        self.emit("tableone_dates.csv", tableone::date_rows_csv(&rows).as_bytes())?;
        self.emit("tableone.json", &json(&rows))
    }

    fn boxplot(&mut self) -> CliResult<()> {
        let b = federated_boxplot_stats(&mut self.fed, &self.all_spec, &TABLEONE_NUMERIC, true)?;
        self.emit("boxplot.json", &json(&b))
    }

    fn correlation(&mut self) -> CliResult<()> {
        let cols = TABLEONE_NUMERIC;
        let mut all = serde_json::Map::new();
        for i in 0..self.ids.len() {
            let spec = self.site_spec(i)?;
            let r = federated_correlation(&mut self.fed, &spec, &cols)?;
            let id = self.ids[i].clone();
            self.emit(&format!("correlation_{id}.csv"), r.matrix.to_csv().as_bytes())?;
            all.insert(id, serde_json::to_value(&r).expect("result serializes"));
        }
        let r = federated_correlation(&mut self.fed, &self.all_spec.clone(), &cols)?;
        self.emit("correlation_federated.csv", r.matrix.to_csv().as_bytes())?;
        all.insert("federated".into(), serde_json::to_value(&r).expect("result serializes"));
        self.emit("correlation.json", &json(&all))
    }

    fn scatter(&mut self) -> CliResult<()> {
        let b = self.args.scatter_bins;
        let s = federated_binned_scatter(&mut self.fed, &self.all_spec.clone(), LESION_VOLUME, EDSS, b, b)?;
        for g in &s.per_site {
            self.emit(&format!("scatter_{}.csv", g.dataset_id), grid_csv(&g.grid).as_bytes())?;
        }
        self.emit("scatter_combined.csv", grid_csv(&s.combined).as_bytes())?;
        self.emit("scatter.json", &json(&s))
    }

    fn km(&mut self) -> CliResult<()> {
        let a = self.args;
        let curve = federated_km(&mut self.fed, &self.all_spec.clone(), a.event_threshold, a.interval_width_days)?;
        self.emit("km.csv", km_csv(&curve).as_bytes())?;
        self.emit("km.json", &json(&curve))
    }

    fn cox(&mut self) -> CliResult<()> {
        let a = self.args;
        let fit = federated_cox_fit(&mut self.fed, &self.all_spec.clone(), &COX_FEATURES, a.event_threshold, a.max_rounds, 1e-9)?;
        let report = serde_json::json!({
            "features": fit.model.features,
            "beta": fit.model.beta,
            "beta_normalized": fit.normalized,
            "rounds": fit.model.convergence.rounds,
            "loglik": fit.model.convergence.loglik,
            "grad_inf": fit.model.convergence.grad_inf,
            "warnings": fit.model.warnings,
            "baseline": fit.model.baselines,
        });
        let mut table = String::from("feature,beta,mean,beta_normalized\n");
        for c in &fit.normalized {
            let _ = writeln!(table, "{},{},{},{}", c.feature, c.beta, c.mean, c.value);
        }
        let mut curve = String::from("t,S\n");
        for (t, s) in fit.display_curve.times.iter().zip(&fit.display_curve.survival) {
            let _ = writeln!(curve, "{t},{s}");
        }
        self.emit("cox.json", &json(&report))?;
        self.emit("cox_coefficients.csv", table.as_bytes())?;
        self.emit("cox_survival.csv", curve.as_bytes())
    }

    fn pca(&mut self) -> CliResult<()> {
        let fit = federated_pca(&mut self.fed, &self.all_spec.clone(), &PCA_CATEGORICALS, self.args.components)?;
        let report = transform_matrix_report(&fit.encoding, &fit.components);
        self.emit("pca_transform.csv", report.to_csv().as_bytes())?;
        self.emit("pca.json", &json(&serde_json::json!({ "fit": fit, "report": report })))
    }
}

/// Builds the federation over `args.data`, runs the workflow(s) and writes artifacts plus manifest.
pub fn cmd_run(args: &RunArgs) -> CliResult<RunManifest> {
    let tables = load_sites(&args.data)?;
    let policy = load_policy(args.policy.as_deref())?;
    let mut input_hash = String::new();
    for t in &tables {
        let mut bytes = Vec::new();
        fedmed::cohort::write_csv(t, &mut bytes).map_err(|e| CliError::io("encoding csv", e))?;
        input_hash.push_str(&sha256_hex(&bytes));
    }
    let out = args.out_dir();
    fs::create_dir_all(&out).map_err(|e| CliError::io(&format!("creating {}", out.display()), e))?;
    let mut manifest = RunManifest::new("run", None, sha256_hex(input_hash.as_bytes()));
    manifest.workflow = Some(args.workflow.as_str().into());
    manifest.data_dir = Some(relative_path(&out, &args.data)?);
    let seed_file = args.data.join(crate::manifest::MANIFEST_FILE);
    if seed_file.exists() {
        manifest.seed = RunManifest::load(&seed_file).ok().and_then(|m| m.seed);
    }
    let (mut fed, ids) = build_federation(tables, &policy)?;
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let all_spec = fed.deploy(&id_refs, "fedmed-all")?;
    manifest.thresholds = fed.thresholds();
    manifest.tick("federation ready");
    let mut ctx = Ctx { args, out: out.clone(), fed, ids, all_spec, manifest };

    let steps: Vec<Workflow> = if args.workflow == Workflow::All { Workflow::EACH.to_vec() } else { vec![args.workflow] };
    let mut failure = None;
    for w in steps {
        let r = match w {
            Workflow::TableOne => ctx.tableone(),
            Workflow::Boxplot => ctx.boxplot(),
            Workflow::Correlation => ctx.correlation(),
            Workflow::Scatter => ctx.scatter(),
            Workflow::Km => ctx.km(),
            Workflow::Cox => ctx.cox(),
            Workflow::Pca => ctx.pca(),
            Workflow::All => unreachable!(),
        };
        if let Err(e) = r {
            ctx.manifest.tick(format!("{} failed", w.as_str()));
            failure = Some(e);
            break;
        }
        ctx.manifest.tick(w.as_str());
    }

    let Ctx { fed, mut manifest, .. } = ctx;
    manifest.job_ids = fed.jobs().iter().map(|j| j.job_id.clone()).collect();
    let mut log = fed.message_log().join("\n");
    if !log.is_empty() {
        log.push('\n');
    }
    write_output(&out, "messages.jsonl", log.as_bytes(), &mut manifest)?;
    manifest.message_log = Some("messages.jsonl".into());
    manifest.save(&out)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
