//! Command-line front end: fit ARD models, simulate synthetic villages,
//! compute statistics on stored graphs, run experiment grids, and run
//! the downstream regression step.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use ardnet::graphs::GraphSample;
use ardnet::io::{
    config_hash, discover_villages, load_village_inputs, write_outputs, write_village_inputs,
    Manifest, VillageOutputs,
};
use ardnet::model::{DegreeMode, PriorConfig};
use ardnet::regress::ols_regress;
use ardnet::sampler::{run_chain_masked, summarize_chain, PosteriorDraws, UpdateMask};
use ardnet::simlab::{run_experiment_grid, simulate_dgp, ExperimentConfig, GridAxis};
use ardnet::sphere::UnitVector;
use ardnet::stats::{
    compute_graph_stats, compute_node_stats, diffusion_centrality, graph_stats_batch,
    node_stats_batch, posterior_graph_summaries, posterior_node_summaries, GRAPH_STAT_NAMES,
    NODE_STAT_NAMES,
};
use ardnet::{Error, Result};

#[derive(Parser)]
#[command(name = "ardnet", version, about = "Network estimation from aggregated relational data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the latent surface model to village input bundles.
    Fit(FitArgs),
    /// Generate synthetic villages from the data generating process.
    Simulate(SimulateArgs),
    /// Compute statistics for stored edge-list graphs.
    Stats(StatsArgs),
    /// Run a simulation experiment grid.
    Experiment(ExperimentArgs),
    /// OLS with optional cluster block bootstrap.
    Regress(RegressArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Folder holding ARD_SURVEY_i.csv / ARD_CENSUS_i.csv / distance_i.csv.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file mirroring the prior/chain configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fit a single village instead of every one discovered.
    #[arg(long)]
    village: Option<usize>,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Latent dimension p.
    #[arg(long)]
    p: Option<usize>,
    /// Chain length T.
    #[arg(long = "T")]
    t: Option<usize>,
    /// Posterior graph draws S.
    #[arg(long)]
    graphs: Option<usize>,
    #[arg(long, value_parser = ["observed", "estimated", "pinned"])]
    degree_mode: Option<String>,
    /// Pinned-average degree value (with --degree-mode pinned).
    #[arg(long)]
    pinned_degree: Option<f64>,
    /// Fit the reduced degree-only baseline instead.
    #[arg(long)]
    beta_baseline: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file mirroring the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StatsArgs {
    /// Folder of edge-list CSVs (u,v per line).
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed_node: Option<usize>,
    /// Passing probability for diffusion centrality.
    #[arg(long)]
    dc_q: Option<f64>,
    /// Rounds for diffusion centrality.
    #[arg(long)]
    dc_t: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML grid file: [base] experiment config plus [[axes]] entries.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    /// CSV with a header and one outcome column.
    #[arg(long)]
    y: PathBuf,
    /// CSV with a header and the design matrix columns.
    #[arg(long)]
    x: PathBuf,
    /// Optional CSV with a header and one cluster-id column.
    #[arg(long)]
    cluster: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    ardnet::par::init_thread_pool_from_env();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Regress(args) => cmd_regress(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) => ExitCode::from(1),
                Error::Numerical(_) => ExitCode::from(2),
                Error::Io(_) => ExitCode::from(3),
            }
        }
    }
}

fn load_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let body = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            toml::from_str(&body)
                .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    // Precedence: flags > config file > defaults.
    let mut priors: PriorConfig = load_toml(args.config.as_deref())?;
    if let Some(p) = args.p {
        priors.p = p;
    }
    if let Some(t) = args.t {
        priors.t = t;
    }
    if let Some(s) = args.graphs {
        priors.n_graph_draws = s;
    }
    if let Some(mode) = &args.degree_mode {
        priors.degree_mode = match mode.as_str() {
            "observed" => DegreeMode::Observed,
            "pinned" => DegreeMode::PinnedAverage {
                value: args.pinned_degree.ok_or_else(|| {
                    Error::Validation("--degree-mode pinned needs --pinned-degree".into())
                })?,
            },
            _ => DegreeMode::Estimated,
        };
    }
    priors.validate()?;

    let villages = match args.village {
        Some(v) => vec![v],
        None => discover_villages(&args.input)?,
    };
    if villages.is_empty() {
        return Err(Error::Validation(format!(
            "no village inputs found in {}",
            args.input.display()
        )));
    }

    // Per-village results, then one shared manifest written last.
    struct Fitted {
        village: usize,
        node: Vec<Vec<(f64, f64)>>,
        graph: Vec<(f64, f64, usize)>,
        graphs: Vec<GraphSample>,
        diagnostics: ardnet::sampler::ChainDiagnostics,
        acceptance: Vec<ardnet::sampler::AcceptanceWindow>,
    }
    let mut fitted = Vec::new();
    for &village in &villages {
        let data = match load_village_inputs(&args.input, village, priors.min_sampling_share) {
            Ok(d) => d,
            Err(Error::Validation(msg)) if msg.contains("excluded") => {
                eprintln!("village {village}: {msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        // Anchor the three largest trait groups at spread positions.
        let dim = priors.ambient_dim();
        let mut order: Vec<usize> = (0..data.n_groups()).collect();
        order.sort_by_key(|&k| std::cmp::Reverse(data.group_sizes[k]));
        let anchors: Vec<(usize, UnitVector)> = order[..3]
            .iter()
            .enumerate()
            .map(|(slot, &k)| (k, UnitVector::basis(dim, slot % dim)))
            .collect();

        let mask = UpdateMask {
            latent_in_likelihood: !args.beta_baseline,
            ..UpdateMask::default()
        };
        let mut chains: Vec<PosteriorDraws> = Vec::new();
        for c in 0..args.chains.max(1) {
            let seed = args.seed
                ^ (village as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
                ^ (c as u64).wrapping_mul(0xd1b5_4a32_d192_ed03);
            chains.push(run_chain_masked(&data, &priors, &anchors, seed, &mask, None)?);
        }
        let refs: Vec<&PosteriorDraws> = chains.iter().collect();
        let diagnostics = summarize_chain(&refs)?;
        if diagnostics.max_rhat() >= 1.1 {
            eprintln!(
                "village {village}: warning: max split R-hat {:.3} >= 1.1",
                diagnostics.max_rhat()
            );
        }
        let graphs = ardnet::graphs::draw_posterior_graphs(
            &chains[0],
            &data,
            priors.n_graph_draws,
        )?;
        let samples: Vec<GraphSample> = graphs.into_iter().map(|g| g.graph).collect();
        let node_stats = node_stats_batch(&samples, None)?;
        let graph_stats = graph_stats_batch(&samples);
        fitted.push(Fitted {
            village,
            node: posterior_node_summaries(&node_stats)?,
            graph: posterior_graph_summaries(&graph_stats)?,
            graphs: samples,
            diagnostics,
            acceptance: chains[0].acceptance_log.clone(),
        });
    }

    let outputs: Vec<VillageOutputs> = fitted
        .iter()
        .map(|f| VillageOutputs {
            village: f.village,
            node_summaries: &f.node,
            graph_summaries: &f.graph,
            graphs: &f.graphs,
            diagnostics: Some(&f.diagnostics),
            acceptance: &f.acceptance,
        })
        .collect();
    let manifest = Manifest {
        seed: args.seed,
        config_hash: config_hash(&priors)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        villages: fitted.iter().map(|f| f.village).collect(),
    };
    write_outputs(&args.out, &outputs, &manifest)?;
    println!(
        "fit complete: {} village(s) written to {}",
        fitted.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_toml(args.config.as_deref())?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    std::fs::create_dir_all(&args.out)?;

    for rep in 0..config.n_reps {
        let seed = ardnet::simlab::rep_seed(config.seed, 0, rep);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let truth = simulate_dgp(&config, &mut rng)?;
        for w in &truth.warnings {
            eprintln!("rep {rep}: {w}");
        }
        write_village_inputs(&args.out, rep, &truth.dataset)?;

        // Truth files alongside the input bundle.
        let mut body = String::from("u,v\n");
        for &(a, b) in &truth.graph.edges {
            body.push_str(&format!("{a},{b}\n"));
        }
        std::fs::write(args.out.join(format!("true_graph_{rep}.csv")), body)?;

        let dim = config.ambient_dim();
        let mut body = String::from("node_id,nu,expected_degree");
        for c in 0..dim {
            body.push_str(&format!(",z{c}"));
        }
        body.push('\n');
        for i in 0..config.n {
            body.push_str(&format!("{i},{},{}", truth.nu[i], truth.expected_degrees[i]));
            for c in truth.z[i].coords() {
                body.push_str(&format!(",{c}"));
            }
            body.push('\n');
        }
        std::fs::write(args.out.join(format!("true_params_{rep}.csv")), body)?;
    }
    let manifest = Manifest {
        seed: config.seed,
        config_hash: config_hash(&config)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        villages: (0..config.n_reps).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(args.out.join("manifest.json"), json)?;
    println!("simulated {} village(s) into {}", config.n_reps, args.out.display());
    Ok(())
}

fn read_edge_list(path: &Path) -> Result<GraphSample> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut edges = Vec::new();
    let mut max_node = 0usize;
    for (lineno, line) in body.lines().enumerate() {
        if lineno == 0 && line.starts_with('u') {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                Error::Validation(format!("{}: line {}: bad edge", path.display(), lineno + 1))
            })
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        max_node = max_node.max(u).max(v);
        edges.push((u, v));
    }
    GraphSample::new(max_node + 1, edges)
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.graphs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no .csv graphs found in {}",
            args.graphs.display()
        )));
    }
    let mut body = String::from("graph,level,node_id,statistic,value\n");
    for path in &files {
        let g = read_edge_list(path)?;
        let label = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let ns = compute_node_stats(&g, args.seed_node)?;
        for (s, name) in NODE_STAT_NAMES.iter().enumerate() {
            for (i, v) in ns.column(s).iter().enumerate() {
                body.push_str(&format!("{label},node,{i},{name},{v}\n"));
            }
        }
        if let (Some(q), Some(t)) = (args.dc_q, args.dc_t) {
            for (i, v) in diffusion_centrality(&g, q, t)?.iter().enumerate() {
                body.push_str(&format!("{label},node,{i},diffusion_centrality,{v}\n"));
            }
        }
        let gs = compute_graph_stats(&g);
        for (s, name) in GRAPH_STAT_NAMES.iter().enumerate() {
            let v = gs.value(s).map_or("NA".to_string(), |x| x.to_string());
            body.push_str(&format!("{label},graph,,{name},{v}\n"));
        }
    }
    std::fs::write(&args.out, body)?;
    println!("wrote statistics for {} graph(s) to {}", files.len(), args.out.display());
    Ok(())
}

/// Grid file layout: a base experiment config plus axes and the number
/// of posterior graphs per fit.
#[derive(Deserialize, Default)]
#[serde(default)]
struct GridFile {
    base: ExperimentConfig,
    axes: Vec<GridAxis>,
    n_graphs: usize,
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let body = std::fs::read_to_string(&args.grid)
        .map_err(|e| Error::Io(format!("{}: {e}", args.grid.display())))?;
    let grid: GridFile = toml::from_str(&body)
        .map_err(|e| Error::Validation(format!("{}: {e}", args.grid.display())))?;
    let n_graphs = if grid.n_graphs == 0 { 20 } else { grid.n_graphs };
    std::fs::create_dir_all(&args.out)?;

    let table = run_experiment_grid(&grid.base, &grid.axes, n_graphs)?;
    let mut body = String::from("cell,rep,level,statistic,true,estimated,pct_error\n");
    for r in &table.rows {
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.cell, r.rep, r.level, r.statistic, r.true_value, r.estimated, r.pct_error
        ));
    }
    std::fs::write(args.out.join("results.csv"), body)?;
    let mut body = String::from("cell,rep,error\n");
    for (cell, rep, msg) in &table.failures {
        body.push_str(&format!("{cell},{rep},{}\n", msg.replace(',', ";")));
    }
    std::fs::write(args.out.join("failures.csv"), body)?;
    println!(
        "experiment grid finished: {} rows, {} failures",
        table.rows.len(),
        table.failures.len()
    );
    Ok(())
}

fn read_columns(path: &Path) -> Result<Vec<Vec<f64>>> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in body.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim().parse().map_err(|_| {
                    Error::Validation(format!(
                        "{}: line {}: not numeric: {v:?}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_regress(args: RegressArgs) -> Result<()> {
    let y: Vec<f64> = read_columns(&args.y)?
        .into_iter()
        .map(|r| r.first().copied().ok_or_else(|| Error::Validation("empty y row".into())))
        .collect::<Result<_>>()?;
    let x = read_columns(&args.x)?;
    let clusters: Option<Vec<usize>> = match &args.cluster {
        None => None,
        Some(p) => Some(
            read_columns(p)?
                .into_iter()
                .map(|r| r.first().map(|&v| v as usize).ok_or_else(|| {
                    Error::Validation("empty cluster row".into())
                }))
                .collect::<Result<_>>()?,
        ),
    };
    let fit = ols_regress(&y, &x, clusters.as_deref(), args.bootstrap, args.seed)?;
    println!("coefficient,estimate,bootstrap_sd");
    for (j, b) in fit.coefficients.iter().enumerate() {
        let sd = fit
            .bootstrap_sd
            .as_ref()
            .map_or("NA".to_string(), |s| s[j].to_string());
        println!("b{j},{b},{sd}");
    }
    Ok(())
}
