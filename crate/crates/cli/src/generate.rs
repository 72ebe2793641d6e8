use std::fs;
use std::path::{Path, PathBuf};

use fedmed::cohort::omop::{export_omop, write_omop_dir};
use fedmed::cohort::write_csv;
use fedmed::synthgen::{default_two_site_config, generate_federation, FederationGenConfig};

use crate::manifest::{sha256_hex, write_output, RunManifest};
use crate::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

pub fn load_config(path: Option<&Path>) -> CliResult<FederationGenConfig> {
    let Some(path) = path else { return Ok(default_two_site_config()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Site CSVs, per-site OMOP tables and a manifest under `args.out`.
pub fn cmd_generate(args: &GenerateArgs) -> CliResult<RunManifest> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    config.validate().map_err(|e| CliError::config(format!("invalid config: {e}")))?;
    let config_json = serde_json::to_vec(&config).expect("config serializes");
    let mut manifest = RunManifest::new("generate", args.seed, sha256_hex(&config_json));
    let tables = generate_federation(&config).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
    manifest.tick("generate");
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&format!("creating {}", args.out.display()), e))?;
    write_output(&args.out, "config.json", &serde_json::to_vec_pretty(&config).expect("config serializes"), &mut manifest)?;
    for t in &tables {
        let mut bytes = Vec::new();
        write_csv(t, &mut bytes).map_err(|e| CliError::io("encoding csv", e))?;
        write_output(&args.out, &format!("{}.csv", t.site_id), &bytes, &mut manifest)?;
        manifest.tick(format!("write {}", t.site_id));
    }
    for t in &tables {
        let sets = export_omop(t).map_err(|e| CliError::io("omop export", e))?;
        let rel = format!("omop/{}", t.site_id);
        let dir = args.out.join(&rel);
        write_omop_dir(&sets, &dir).map_err(|e| CliError::io(&format!("writing {}", dir.display()), e))?;
        let mut names: Vec<_> = fs::read_dir(&dir)
            .map_err(|e| CliError::io("listing omop dir", e))?
            .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect();
        names.sort();
        for name in names {
            let bytes = fs::read(dir.join(&name)).map_err(|e| CliError::io("reading omop file", e))?;
            manifest.outputs.push(crate::manifest::OutputFile { path: format!("{rel}/{name}"), sha256: sha256_hex(&bytes) });
        }
        manifest.tick(format!("omop {}", t.site_id));
    }
    manifest.save(&args.out)?;
    Ok(manifest)
}
