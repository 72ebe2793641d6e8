//! Deterministic generator for a synthetic multi-site MS federation.
//!
//! Randomness comes from ChaCha8 seeded per site, so generated tables (and
//! their CSV bytes) are identical across platforms for a given config.
//!
//! Lesion volume and EDSS are tied together with a negative slope inside
//! each site, while site centers move together (low lesion volume with low
//! EDSS at one site, high with high at the other). Each site on its own
//! shows a negative association; the pooled data shows a positive one.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::schema::*;
use crate::cohort::{days_between, ms_schema, CohortTable, DateValue, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid generator config: `{field}` {reason}")]
pub struct ConfigInvalid {
    pub field: String,
    pub reason: String,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigInvalid {
    ConfigInvalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DateWindow {
    pub min: DateValue,
    pub max: DateValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DateWindows {
    pub dtfstsym: DateWindow,
    pub diagdt: DateWindow,
    pub visitdt: DateWindow,
    pub trtsdtc: DateWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    /// Standard deviation of log lesion volume.
    pub lesion_log_sd: f64,
    /// Residual EDSS noise around the lesion-volume line.
    pub edss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGenConfig {
    pub site_id: String,
    /// Signed so that config files with negative counts are reported rather than misparsed.
    pub n_subjects: i64,
    /// Mean lesion volume in mm³.
    pub lesion_volume_center: f64,
    /// EDSS units per mm³; negative.
    pub lesion_edss_within_site_slope: f64,
    /// EDSS at the site's lesion-volume center.
    pub edss_offset: f64,
    pub date_windows: DateWindows,
    pub noise_scales: NoiseScales,
    /// Sampling weights per categorical column, aligned with the schema's category order.
    pub category_weights: BTreeMap<String, Vec<f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationGenConfig {
    pub sites: Vec<SiteGenConfig>,
    /// Target (mean, sd) per numeric variable.
    pub target_marginals: BTreeMap<String, Marginal>,
    /// Correlation of each functional score with standardized EDSS.
    pub edss_correlations: BTreeMap<String, f64>,
    pub event_threshold: f64,
    pub censoring_rate: f64,
    pub cda_rate: f64,
}

fn date(s: &str) -> DateValue {
    s.parse().expect("literal date")
}

fn default_windows() -> DateWindows {
    DateWindows {
        dtfstsym: DateWindow { min: date("2022-01-02"), max: date("2023-12-31") },
        diagdt: DateWindow { min: date("2022-02-01"), max: date("2024-02-03") },
        visitdt: DateWindow { min: date("2022-02-26"), max: date("2024-12-09") },
        trtsdtc: DateWindow { min: date("2022-03-02"), max: date("2024-03-07") },
    }
}

fn weights(pairs: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
    pairs.iter().map(|(k, w)| (k.to_string(), w.to_vec())).collect()
}

/// Two sites of 693 subjects each, calibrated to the reference cohort marginals.
pub fn default_two_site_config() -> FederationGenConfig {
    let site_a = SiteGenConfig {
        site_id: "site-1".into(),
        n_subjects: 693,
        lesion_volume_center: 600.0,
        lesion_edss_within_site_slope: -1.2e-3,
        edss_offset: 2.0,
        date_windows: default_windows(),
        noise_scales: NoiseScales { lesion_log_sd: 0.8, edss: 0.7 },
        category_weights: weights(&[
            (SEX, &[0.68, 0.32]),
            (ETHNIC, &[0.2, 0.65, 0.15]),
            (MSSUBTP, &[0.15, 0.65, 0.2]),
            (VOCSTAT, &[0.45, 0.2, 0.15, 0.2]),
            (EDUSTAT, &[0.2, 0.45, 0.35]),
            (PRSNTSYM, &[0.2, 0.3, 0.3, 0.2]),
        ]),
        seed: 0,
    };
    let site_b = SiteGenConfig {
        site_id: "site-2".into(),
        lesion_volume_center: 3776.0,
        lesion_edss_within_site_slope: -3.0e-4,
        edss_offset: 5.0,
        noise_scales: NoiseScales { lesion_log_sd: 0.5, edss: 1.0 },
        category_weights: weights(&[
            (SEX, &[0.7, 0.3]),
            (ETHNIC, &[0.25, 0.55, 0.2]),
            (MSSUBTP, &[0.25, 0.45, 0.3]),
            (VOCSTAT, &[0.35, 0.3, 0.15, 0.2]),
            (EDUSTAT, &[0.25, 0.4, 0.35]),
            (PRSNTSYM, &[0.3, 0.25, 0.2, 0.25]),
        ]),
        seed: 0,
        ..site_a.clone()
    };
    let target_marginals = [
        (SDMT, 55.56, 10.15),
        (CHG, 0.39, 0.31),
        (EDSS, 3.51, 2.16),
        (RELAPSE, 3.11, 1.82),
        (CNSR, 0.01, 0.11),
        (MSFC, -2.33, 2.02),
        (T25FWT, 8.91, 2.53),
        (NHPT, 22.66, 9.77),
        (LESION_VOLUME, 2188.0, 2136.0),
        (CDA, 0.0, 0.2),
    ]
    .into_iter()
    .map(|(k, mean, sd)| (k.to_string(), Marginal { mean, sd }))
    .collect();
    let edss_correlations = [(SDMT, -0.4), (CHG, 0.3), (RELAPSE, 0.3), (MSFC, -0.5), (T25FWT, 0.5), (NHPT, 0.4)]
        .into_iter()
        .map(|(k, r)| (k.to_string(), r))
        .collect();
    FederationGenConfig {
        sites: vec![site_a, site_b],
        target_marginals,
        edss_correlations,
        event_threshold: 2.0,
        censoring_rate: 0.012,
        cda_rate: 0.035,
    }
    .with_seed(42)
}

/// SplitMix64 step, used to derive independent per-site seeds from one base seed.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl FederationGenConfig {
    /// Re-derives every site seed from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for (i, site) in self.sites.iter_mut().enumerate() {
            site.seed = splitmix64(seed ^ (i as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407));
        }
        self
    }

    pub fn total_subjects(&self) -> i64 {
        self.sites.iter().map(|s| s.n_subjects).sum()
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        if self.sites.is_empty() {
            return Err(invalid("sites", "must list at least one site"));
        }
        if !(0.0..=1.0).contains(&self.censoring_rate) {
            return Err(invalid("censoring_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.cda_rate) {
            return Err(invalid("cda_rate", "must lie in [0, 1]"));
        }
        if !self.event_threshold.is_finite() {
            return Err(invalid("event_threshold", "must be finite"));
        }
        for key in [EDSS, SDMT, CHG, RELAPSE, MSFC, T25FWT, NHPT] {
            match self.target_marginals.get(key) {
                Some(m) if m.mean.is_finite() && m.sd.is_finite() && m.sd > 0.0 => {}
                _ => return Err(invalid(format!("target_marginals.{key}"), "needs a finite mean and positive sd")),
            }
        }
        for (k, r) in &self.edss_correlations {
            if !(-1.0..=1.0).contains(r) {
                return Err(invalid(format!("edss_correlations.{k}"), "must lie in [-1, 1]"));
            }
        }
        let mut ids = std::collections::HashSet::new();
        for (i, s) in self.sites.iter().enumerate() {
            s.validate(&format!("sites[{i}]"))?;
            if !ids.insert(&s.site_id) {
                return Err(invalid(format!("sites[{i}].site_id"), "duplicates another site"));
            }
        }
        Ok(())
    }
}

impl SiteGenConfig {
    fn validate(&self, path: &str) -> Result<(), ConfigInvalid> {
        let f = |name: &str| format!("{path}.{name}");
        if self.site_id.is_empty() {
            return Err(invalid(f("site_id"), "must be non-empty"));
        }
        if self.n_subjects < 1 {
            return Err(invalid(f("n_subjects"), format!("must be >= 1, got {}", self.n_subjects)));
        }
        if !(self.lesion_volume_center.is_finite() && self.lesion_volume_center > 0.0) {
            return Err(invalid(f("lesion_volume_center"), "must be positive"));
        }
        if !(self.lesion_edss_within_site_slope.is_finite() && self.lesion_edss_within_site_slope <= 0.0) {
            return Err(invalid(f("lesion_edss_within_site_slope"), "must be zero or negative"));
        }
        if !self.edss_offset.is_finite() {
            return Err(invalid(f("edss_offset"), "must be finite"));
        }
        let n = &self.noise_scales;
        for (name, v) in [("noise_scales.lesion_log_sd", n.lesion_log_sd), ("noise_scales.edss", n.edss)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(f(name), "must be non-negative"));
            }
        }
        let w = &self.date_windows;
        for (name, win) in [("dtfstsym", w.dtfstsym), ("diagdt", w.diagdt), ("visitdt", w.visitdt), ("trtsdtc", w.trtsdtc)] {
            if win.min > win.max {
                return Err(invalid(f(&format!("date_windows.{name}")), "min after max"));
            }
        }
        // Window endpoints are pinned onto real rows, so they must respect the date ordering.
        let ordered = w.dtfstsym.min <= w.diagdt.min
            && w.diagdt.min <= w.trtsdtc.min
            && w.diagdt.min <= w.visitdt.min
            && w.dtfstsym.max <= w.diagdt.max
            && w.diagdt.max <= w.trtsdtc.max
            && w.diagdt.max <= w.visitdt.max;
        if !ordered {
            return Err(invalid(
                f("date_windows"),
                "must satisfy DTFSTSYM <= DIAGDT <= TRTSDTC and DIAGDT <= VISITDT at both ends",
            ));
        }
        for col in PCA_CATEGORICALS {
            let expected = category_list(col).len();
            match self.category_weights.get(col) {
                Some(ws)
                    if ws.len() == expected && ws.iter().all(|x| x.is_finite() && *x >= 0.0) && ws.iter().sum::<f64>() > 0.0 => {}
                _ => {
                    return Err(invalid(f(&format!("category_weights.{col}")), format!("needs {expected} non-negative weights")))
                }
            }
        }
        Ok(())
    }
}

fn category_list(col: &str) -> &'static [&'static str] {
    match col {
        SEX => SEX_CATEGORIES,
        ETHNIC => ETHNIC_CATEGORIES,
        MSSUBTP => MSSUBTP_CATEGORIES,
        VOCSTAT => VOCSTAT_CATEGORIES,
        EDUSTAT => EDUSTAT_CATEGORIES,
        PRSNTSYM => PRSNTSYM_CATEGORIES,
        _ => &[],
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (x * p).round() / p
}

fn clamp_date(d: DateValue, w: DateWindow) -> DateValue {
    d.clamp(w.min, w.max)
}

fn uniform_date<R: Rng>(rng: &mut R, w: DateWindow) -> DateValue {
    let span = days_between(w.max, w.min);
    w.min.add_days(rng.random_range(0..=span))
}

fn pick<R: Rng>(rng: &mut R, ws: &[f64]) -> usize {
    let total: f64 = ws.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in ws.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    ws.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Generates one site's cohort. Row 0 carries every date window minimum and the
/// last row every maximum, so the site's date ranges span its windows exactly.
pub fn generate_site(cfg: &SiteGenConfig, fed: &FederationGenConfig) -> Result<CohortTable, ConfigInvalid> {
    cfg.validate("site")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_subjects as usize;
    let schema = ms_schema();
    let idx = |name: &str| schema.iter().position(|c| c.name == name).expect("schema column");
    let edss_target = fed.target_marginals[EDSS];
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let sigma = cfg.noise_scales.lesion_log_sd;
    let log_mu = cfg.lesion_volume_center.ln() - sigma * sigma / 2.0;
    let w = cfg.date_windows;

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![Value::Missing; schema.len()];

        let lesion = (log_mu + sigma * normal(&mut rng)).exp().round().max(1.0);
        let edss_raw = cfg.edss_offset
            + cfg.lesion_edss_within_site_slope * (lesion - cfg.lesion_volume_center)
            + cfg.noise_scales.edss * normal(&mut rng);
        let edss = round_to(edss_raw.max(0.0), 2);
        let z = (edss - edss_target.mean) / edss_target.sd;

        let functional = |name: &str, lo: f64, hi: f64, decimals: i32, rng: &mut ChaCha8Rng| -> f64 {
            let m = fed.target_marginals[name];
            let rho = fed.edss_correlations.get(name).copied().unwrap_or(0.0);
            let eps = normal(rng);
            let v = m.mean + m.sd * (rho * z + (1.0 - rho * rho).sqrt() * eps);
            round_to(v.clamp(lo, hi), decimals)
        };
        let sdmt = functional(SDMT, 0.0, 110.0, 1, &mut rng);
        let nhpt = functional(NHPT, 0.0, 300.0, 2, &mut rng);
        let t25 = functional(T25FWT, 2.0, 180.0, 2, &mut rng);
        let msfc = functional(MSFC, f64::NEG_INFINITY, f64::INFINITY, 2, &mut rng);
        let chg = functional(CHG, f64::NEG_INFINITY, f64::INFINITY, 2, &mut rng);
        let relapse = functional(RELAPSE, 0.0, f64::INFINITY, 2, &mut rng);

        let cnsr = if rng.random::<f64>() < fed.censoring_rate { 1.0 } else { 0.0 };
        let cda = if rng.random::<f64>() < fed.cda_rate { 1.0 } else { 0.0 };
        let bage = (38.0 + 10.0 * normal(&mut rng)).clamp(18.0, 75.0).round();

        let mut diag = uniform_date(&mut rng, w.diagdt);
        let mut first_symptom = clamp_date(diag.add_days(-rng.random_range(0..=60)), w.dtfstsym);
        let mut treatment = clamp_date(diag.add_days(rng.random_range(0..=45)), w.trtsdtc);
        let mut visit = clamp_date(diag.add_days(rng.random_range(25..=720)), w.visitdt);
        if i == 0 {
            (first_symptom, diag, treatment, visit) = (w.dtfstsym.min, w.diagdt.min, w.trtsdtc.min, w.visitdt.min);
        }
        if i + 1 == n {
            (first_symptom, diag, treatment, visit) = (w.dtfstsym.max, w.diagdt.max, w.trtsdtc.max, w.visitdt.max);
        }
        let follow_up = days_between(visit, diag) as f64;
        let base = round_to((edss - chg * follow_up / 365.25).max(0.0), 2);

        for col in PCA_CATEGORICALS {
            let c = pick(&mut rng, &cfg.category_weights[col]);
            row[idx(col)] = Value::Category(category_list(col)[c].to_string());
        }

        row[idx(PID)] = Value::Id(format!("{}-{:05}", cfg.site_id.to_uppercase(), i + 1));
        row[idx(BAGE)] = Value::Number(bage);
        row[idx(VISITDT)] = Value::Date(visit);
        row[idx(DIAGDT)] = Value::Date(diag);
        row[idx(TRTSDTC)] = Value::Date(treatment);
        row[idx(DTFSTSYM)] = Value::Date(first_symptom);
        row[idx(RELAPSE)] = Value::Number(relapse);
        row[idx(CDA)] = Value::Number(cda);
        row[idx(CNSR)] = Value::Number(cnsr);
        row[idx(FOLLUPTM)] = Value::Number(follow_up);
        row[idx(EDSS)] = Value::Number(edss);
        row[idx(NHPT)] = Value::Number(nhpt);
        row[idx(T25FWT)] = Value::Number(t25);
        row[idx(SDMT)] = Value::Number(sdmt);
        row[idx(MSFC)] = Value::Number(msfc);
        row[idx(LESION_VOLUME)] = Value::Number(lesion);
        row[idx(BASE)] = Value::Number(base);
        row[idx(CHG)] = Value::Number(chg);
        rows.push(row);
    }
    Ok(CohortTable::new(cfg.site_id.clone(), schema, rows).expect("generated rows match the schema"))
}

pub fn generate_federation(fed: &FederationGenConfig) -> Result<Vec<CohortTable>, ConfigInvalid> {
    fed.validate()?;
    fed.sites.iter().map(|s| generate_site(s, fed)).collect()
}
