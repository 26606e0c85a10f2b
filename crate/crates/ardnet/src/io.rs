//! On-disk formats: per-village CSV input bundles, the OUT/ results
//! tree, and the reproducibility manifest.
//!
//! A village `i` is described by three files in one folder:
//! `ARD_SURVEY_i.csv` (node_id + one count column per trait for the m
//! ARD respondents), `ARD_CENSUS_i.csv` (node_id + binary trait columns
//! for all n nodes, same trait order), and `distance_i.csv` (covariate
//! distances, one row per non-ARD node, one column per ARD node).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::graphs::GraphSample;
use crate::model::{validate_dataset, ArdDataset};
use crate::sampler::{AcceptanceWindow, ChainDiagnostics};
use crate::{Error, Result};

fn survey_name(village: usize) -> String {
    format!("ARD_SURVEY_{village}.csv")
}
fn census_name(village: usize) -> String {
    format!("ARD_CENSUS_{village}.csv")
}
fn distance_name(village: usize) -> String {
    format!("distance_{village}.csv")
}

/// Villages present in a folder, discovered from the `_i` suffix of the
/// survey files; indices need not be contiguous.
pub fn discover_villages(dir: &Path) -> Result<Vec<usize>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_prefix("ARD_SURVEY_") {
            if let Some(idx) = rest.strip_suffix(".csv") {
                if let Ok(i) = idx.parse::<usize>() {
                    found.push(i);
                }
            }
        }
    }
    found.sort_unstable();
    Ok(found)
}

struct CsvTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    path: PathBuf,
}

fn read_csv(path: &Path) -> Result<CsvTable> {
    if !path.exists() {
        return Err(Error::Io(format!("missing input file {}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::Io(format!("{}: line {}: {e}", path.display(), line + 2))
        })?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(CsvTable { headers, rows, path: path.to_path_buf() })
}

impl CsvTable {
    fn cell_f64(&self, row: usize, col: usize) -> Result<f64> {
        let raw = self
            .rows
            .get(row)
            .and_then(|r| r.get(col))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "{}: line {}, column {}: missing cell",
                    self.path.display(),
                    row + 2,
                    col + 1
                ))
            })?;
        raw.trim().parse::<f64>().map_err(|_| {
            Error::Validation(format!(
                "{}: line {}, column {} ({}): not numeric: {raw:?}",
                self.path.display(),
                row + 2,
                col + 1,
                self.headers.get(col).map(String::as_str).unwrap_or("?")
            ))
        })
    }
}

/// Load and validate the three-file bundle for one village.
pub fn load_village_inputs(
    dir: &Path,
    village: usize,
    min_sampling_share: f64,
) -> Result<ArdDataset> {
    let survey = read_csv(&dir.join(survey_name(village)))?;
    let census = read_csv(&dir.join(census_name(village)))?;
    let distance = read_csv(&dir.join(distance_name(village)))?;

    if survey.headers.len() < 2 || census.headers.len() < 2 {
        return Err(Error::Validation(
            "survey and census need a node_id column plus trait columns".into(),
        ));
    }
    let survey_traits = &survey.headers[1..];
    let census_traits_hdr = &census.headers[1..];
    if survey_traits != census_traits_hdr {
        return Err(Error::Validation(format!(
            "trait header mismatch: survey has {:?}, census has {:?}",
            survey_traits, census_traits_hdr
        )));
    }
    let k = survey_traits.len();
    let n = census.rows.len();
    let m = survey.rows.len();

    // Census node ids define the 0..n ordering.
    let mut census_ids = Vec::with_capacity(n);
    let mut census_traits = Vec::with_capacity(n);
    for (r, _) in census.rows.iter().enumerate() {
        let id = census.cell_f64(r, 0)?;
        census_ids.push(id as i64);
        let mut row = Vec::with_capacity(k);
        for c in 0..k {
            let v = census.cell_f64(r, c + 1)?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "{}: line {}, column {} ({}): census trait must be 0/1, got {v}",
                    census.path.display(),
                    r + 2,
                    c + 2,
                    census.headers[c + 1]
                )));
            }
            row.push(v as u8);
        }
        census_traits.push(row);
    }
    let id_pos: std::collections::HashMap<i64, usize> =
        census_ids.iter().enumerate().map(|(pos, &id)| (id, pos)).collect();
    if id_pos.len() != n {
        return Err(Error::Validation(format!(
            "{}: duplicate node ids",
            census.path.display()
        )));
    }

    let mut ard_index = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for r in 0..m {
        let id = survey.cell_f64(r, 0)? as i64;
        let pos = *id_pos.get(&id).ok_or_else(|| {
            Error::Validation(format!(
                "{}: line {}: node id {id} not present in the census",
                survey.path.display(),
                r + 2
            ))
        })?;
        ard_index.push(pos);
        let mut row = Vec::with_capacity(k);
        for c in 0..k {
            row.push(survey.cell_f64(r, c + 1)?);
        }
        y.push(row);
    }

    // Distance matrix: one row per non-ARD node, one column per ARD node
    // (plus a leading node_id column). A transposed matrix is detected by
    // shape and rejected.
    let d_rows = distance.rows.len();
    let d_cols = distance.headers.len().saturating_sub(1);
    if (d_rows, d_cols) != (n - m, m) {
        if (d_rows, d_cols) == (m, n - m) && m != n - m {
            return Err(Error::Validation(format!(
                "{}: distance matrix appears transposed ({d_rows} x {d_cols}; expected {} x {m})",
                distance.path.display(),
                n - m
            )));
        }
        return Err(Error::Validation(format!(
            "{}: distance matrix is {d_rows} x {d_cols}; expected {} x {m}",
            distance.path.display(),
            n - m
        )));
    }
    let mut covariate_distance = Vec::with_capacity(d_rows);
    for r in 0..d_rows {
        let mut row = Vec::with_capacity(m);
        for c in 0..m {
            row.push(distance.cell_f64(r, c + 1)?);
        }
        covariate_distance.push(row);
    }

    let group_sizes: Vec<u32> = (0..k)
        .map(|kk| census_traits.iter().map(|r| u32::from(r[kk])).sum())
        .collect();

    validate_dataset(
        ArdDataset {
            y,
            census_traits,
            group_sizes,
            covariate_distance,
            ard_index,
            reported_degrees: None,
            total_prop: None,
            trait_names: survey_traits.to_vec(),
        },
        min_sampling_share,
    )
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

/// Write a dataset back out as a three-file bundle (used by `simulate`
/// and in round-trip tests).
pub fn write_village_inputs(dir: &Path, village: usize, data: &ArdDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let k = data.n_groups();

    let mut survey = String::new();
    survey.push_str("node_id,");
    survey.push_str(&data.trait_names.join(","));
    survey.push('\n');
    for (row, &i) in data.y.iter().zip(&data.ard_index) {
        survey.push_str(&i.to_string());
        for v in row {
            survey.push(',');
            survey.push_str(&fmt(*v));
        }
        survey.push('\n');
    }
    fs::write(dir.join(survey_name(village)), survey)?;

    let mut census = String::new();
    census.push_str("node_id,");
    census.push_str(&data.trait_names.join(","));
    census.push('\n');
    for (i, row) in data.census_traits.iter().enumerate() {
        census.push_str(&i.to_string());
        for c in 0..k {
            census.push(',');
            census.push_str(&row[c].to_string());
        }
        census.push('\n');
    }
    fs::write(dir.join(census_name(village)), census)?;

    let mut dist = String::new();
    dist.push_str("node_id");
    for &i in &data.ard_index {
        dist.push_str(&format!(",ard_{i}"));
    }
    dist.push('\n');
    for (row, &j) in data.covariate_distance.iter().zip(&data.non_ard_index()) {
        dist.push_str(&j.to_string());
        for v in row {
            dist.push(',');
            dist.push_str(&fmt(*v));
        }
        dist.push('\n');
    }
    fs::write(dir.join(distance_name(village)), dist)?;
    Ok(())
}

/// SHA-256 over the canonical JSON serialization of a config.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_string(config)
        .map_err(|e| Error::Io(format!("config serialization failed: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// Reproducibility record written last into OUT/manifest.json.
#[derive(Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub villages: Vec<usize>,
}

/// Everything one village's run produces.
pub struct VillageOutputs<'a> {
    pub village: usize,
    /// Posterior (mean, sd) per node statistic (outer) per node (inner).
    pub node_summaries: &'a [Vec<(f64, f64)>],
    /// Posterior (mean, sd, defined draws) per graph statistic.
    pub graph_summaries: &'a [(f64, f64, usize)],
    pub graphs: &'a [GraphSample],
    pub diagnostics: Option<&'a ChainDiagnostics>,
    pub acceptance: &'a [AcceptanceWindow],
}

/// Write the OUT/ tree for a set of villages and the manifest (last).
/// Returns the list of files written. Reruns with identical inputs and
/// seed produce byte-identical bodies.
pub fn write_outputs(
    out_root: &Path,
    villages: &[VillageOutputs],
    manifest: &Manifest,
) -> Result<Vec<PathBuf>> {
    let sim_dir = out_root.join("SIMULATION");
    fs::create_dir_all(&sim_dir)?;
    let mut written = Vec::new();

    for v in villages {
        let i = v.village;

        // Node-level characteristics.
        let mut body = String::from("node_id");
        for name in crate::stats::NODE_STAT_NAMES {
            body.push_str(&format!(",{name}_mean,{name}_sd"));
        }
        body.push('\n');
        let n = v.node_summaries.first().map(Vec::len).unwrap_or(0);
        for node in 0..n {
            body.push_str(&node.to_string());
            for stat in v.node_summaries {
                let (m, sd) = stat[node];
                body.push_str(&format!(",{},{}", fmt(m), fmt(sd)));
            }
            body.push('\n');
        }
        let path = out_root.join(format!("network_characteristics_{i}.csv"));
        fs::write(&path, body)?;
        written.push(path);

        // Graph-level statistics.
        let mut body = String::from("statistic,mean,sd,defined_draws\n");
        for (s, name) in crate::stats::GRAPH_STAT_NAMES.iter().enumerate() {
            let (m, sd, cnt) = v.graph_summaries[s];
            body.push_str(&format!("{name},{},{},{cnt}\n", fmt(m), fmt(sd)));
        }
        let path = out_root.join(format!("graph_level_{i}.csv"));
        fs::write(&path, body)?;
        written.push(path);

        // Simulated graphs as edge lists.
        for (s, g) in v.graphs.iter().enumerate() {
            let mut body = String::from("u,v\n");
            for &(a, b) in &g.edges {
                body.push_str(&format!("{a},{b}\n"));
            }
            let path = sim_dir.join(format!("graph_{i}_{s}.csv"));
            fs::write(&path, body)?;
            written.push(path);
        }

        // Chain diagnostics and acceptance log.
        let mut body = String::from("parameter,rhat,ess,mean,sd,degenerate\n");
        if let Some(diag) = v.diagnostics {
            for e in &diag.entries {
                body.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    e.name,
                    fmt(e.rhat),
                    fmt(e.ess),
                    fmt(e.mean),
                    fmt(e.sd),
                    e.degenerate
                ));
            }
        }
        body.push_str("window_sweep,acc_z,acc_d,acc_beta,acc_eta,acc_zeta,log_posterior\n");
        for w in v.acceptance {
            body.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                w.sweep,
                fmt(w.z),
                fmt(w.d),
                fmt(w.beta),
                fmt(w.eta),
                fmt(w.zeta),
                fmt(w.log_posterior)
            ));
        }
        let path = out_root.join(format!("chain_{i}_diagnostics.csv"));
        fs::write(&path, body)?;
        written.push(path);
    }

    let path = out_root.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Io(format!("manifest serialization failed: {e}")))?;
    fs::write(&path, json)?;
    written.push(path);
    Ok(written)
}
