use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pairloc::experiment::{
    build_realization, realization_seed, run_field_sweep, run_relaxation, worker_pool,
    workers_from_env, write_trace_csv, ExperimentConfig, Failure, Manifest, PresetName,
};
use pairloc::fit::fit_stretched_exponential;
use pairloc::pairs::{
    ensemble_field_sweep, match_pairs_with, pair_sweep_rows, write_pair_sweep_csv, EnsembleKind,
    PairUnit,
};

/// Relaxation of disordered XXZ spin ensembles under a transverse field.
#[derive(Parser)]
#[command(name = "pairloc", version = pairloc::experiment::VERSION)]
struct Cli {
    /// Worker threads (overrides PAIRLOC_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a previous run's manifest.json.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in parameter sets.
    Presets,
    /// Sample spin positions for every disorder realization.
    Sample(RunArgs),
    /// Late-time magnetization versus field.
    Sweep(RunArgs),
    /// Relaxation traces for each field, with stretched-exponential fits.
    Relax(RunArgs),
    /// Pair decomposition and pair-model sweep of one realization.
    Pairs {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0)]
        realization: usize,
    },
    /// Fit a stretched exponential to a trace CSV (t_us, sx_mean).
    Fit {
        trace: PathBuf,
        /// Write the fit as JSON here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let workers = match cli.workers {
        Some(n) => Some(n),
        None => workers_from_env()?,
    };
    let pool = worker_pool(workers)?;
    pool.install(|| match cli.command {
        Command::Presets => {
            presets();
            Ok(())
        }
        Command::Sample(a) => with_manifest("sample", &a, sample),
        Command::Sweep(a) => with_manifest("sweep", &a, sweep),
        Command::Relax(a) => with_manifest("relax", &a, relax),
        Command::Pairs { run, realization } => {
            with_manifest("pairs", &run, |cfg, dir, m| pairs(cfg, dir, m, realization))
        }
        Command::Fit { trace, output } => fit(&trace, output.as_deref()),
    })
}

fn presets() {
    println!(
        "{:<7} {:>5} {:>8} {:>18} {:<15} {:>10} {:>6}",
        "name", "N", "r_bl_um", "radii_um", "law", "J_med_MHz", "a0_um"
    );
    for name in PresetName::ALL {
        let p = name.preset();
        let radii = format!("{}x{}x{}", p.radii_um[0], p.radii_um[1], p.radii_um[2]);
        let key = serde_json::to_value(name).expect("preset names serialize");
        println!(
            "{:<7} {:>5} {:>8} {:>18} {:<15} {:>10} {:>6}",
            key.as_str().unwrap_or_default(),
            p.n,
            p.r_bl_um,
            radii,
            p.law,
            p.j_median_mhz,
            p.a0_um
        );
    }
}

/// Load the config, prepare the output directory, run `body`, then write
/// the manifest.
fn with_manifest(
    command: &str,
    args: &RunArgs,
    body: impl FnOnce(&ExperimentConfig, &Path, &mut Manifest) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(dir) = &args.output {
        cfg.output.dir = dir.clone();
    }
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = Manifest::new(command, &cfg);
    manifest.realization_seeds = (0..cfg.n_realizations)
        .map(|r| realization_seed(cfg.seed, r))
        .collect();
    body(&cfg, &dir, &mut manifest)?;
    manifest.finish(start.elapsed());
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn note_failures(m: &mut Manifest, failures: &[Failure]) {
    for f in failures {
        m.notes.push(format!(
            "omega = {} MHz, realization {}: {}",
            f.omega_mhz, f.realization, f.message
        ));
    }
}

fn create(path: &Path) -> anyhow::Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn sample(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Row {
        realization: usize,
        seed: u64,
        n: usize,
        j_median_mhz: f64,
        file: String,
    }
    let law = cfg.resolve_law()?;
    let mut summary = csv::Writer::from_writer(create(&dir.join("realizations.csv"))?);
    for r in 0..cfg.n_realizations {
        let real = build_realization(cfg, &law, r)?;
        let name = format!("positions_{r:03}.csv");
        let path = dir.join(&name);
        real.positions.write_csv(create(&path)?)?;
        m.add_output(&path, format!("positions of realization {r} (um)"));
        summary.serialize(Row {
            realization: r,
            seed: real.info.seed,
            n: real.info.n,
            j_median_mhz: real.info.j_median_mhz,
            file: name,
        })?;
    }
    summary.flush()?;
    m.add_output(
        &dir.join("realizations.csv"),
        "seed, size and median coupling per realization",
    );
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    let res = run_field_sweep(cfg)?;
    let path = dir.join("sweep.csv");
    res.write_csv(create(&path)?)?;
    m.add_output(
        &path,
        format!("late-time magnetization per field ({})", cfg.engine.name()),
    );
    note_failures(m, &res.failures);
    Ok(())
}

fn relax(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct FitRow {
        omega_mhz: f64,
        file: String,
        m_inf: f64,
        tau_us: f64,
        beta: f64,
        residual_norm: f64,
        error: String,
    }
    let res = run_relaxation(cfg)?;
    let mut fits = csv::Writer::from_writer(create(&dir.join("fits.csv"))?);
    for (k, trace) in res.traces.iter().enumerate() {
        let name = format!("trace_{k:03}.csv");
        let path = dir.join(&name);
        write_trace_csv(&res.times, trace, create(&path)?)?;
        m.add_output(&path, format!("trace at omega = {} MHz", trace.omega_mhz));
        let row = match fit_stretched_exponential(&res.times, &trace.mean) {
            Ok(f) => FitRow {
                omega_mhz: trace.omega_mhz,
                file: name,
                m_inf: f.m_inf,
                tau_us: f.tau,
                beta: f.beta,
                residual_norm: f.residual_norm,
                error: String::new(),
            },
            Err(e) => FitRow {
                omega_mhz: trace.omega_mhz,
                file: name,
                m_inf: f64::NAN,
                tau_us: f64::NAN,
                beta: f64::NAN,
                residual_norm: f64::NAN,
                error: e.to_string(),
            },
        };
        fits.serialize(row)?;
    }
    fits.flush()?;
    m.add_output(&dir.join("fits.csv"), "stretched-exponential fit per trace");
    note_failures(m, &res.failures);
    Ok(())
}

fn pairs(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest, r: usize) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct PairRow {
        unit: usize,
        i: usize,
        j: Option<usize>,
        distance_um: f64,
        j_mhz: f64,
    }
    if r >= cfg.n_realizations {
        bail!(
            "realization {r} out of range (n_realizations = {})",
            cfg.n_realizations
        );
    }
    let law = cfg.resolve_law()?;
    let real = build_realization(cfg, &law, r)?;
    let decomposition = match_pairs_with(&real.positions, &real.couplings, cfg.matching)?;
    let pts = real.positions.points();
    let mut w = csv::Writer::from_writer(create(&dir.join("pairs.csv"))?);
    for (k, unit) in decomposition.units().iter().enumerate() {
        let (i, j) = match *unit {
            PairUnit::Pair(i, j) => (i, Some(j)),
            PairUnit::Single(i) => (i, None),
        };
        w.serialize(PairRow {
            unit: k,
            i,
            j,
            distance_um: j.map_or(0.0, |j| pairloc::geometry::distance(&pts[i], &pts[j])),
            j_mhz: decomposition.j()[k],
        })?;
    }
    w.flush()?;
    m.add_output(
        &dir.join("pairs.csv"),
        format!("pair decomposition of realization {r}"),
    );

    let omegas = pairloc::experiment::omega_grid(cfg)?;
    let gge = ensemble_field_sweep(
        &decomposition,
        &omegas,
        EnsembleKind::GgeMeanField,
        cfg.rescale,
        &cfg.mean_field,
    )?;
    let canonical = ensemble_field_sweep(
        &decomposition,
        &omegas,
        EnsembleKind::CanonicalGlobal,
        cfg.rescale,
        &cfg.mean_field,
    )?;
    for p in gge.points.iter().chain(&canonical.points) {
        if let Some(e) = &p.error {
            m.notes.push(format!("omega = {} MHz: {e}", p.omega));
        }
    }
    let rows = pair_sweep_rows(&gge, &canonical)?;
    let path = dir.join("pair_sweep.csv");
    write_pair_sweep_csv(&rows, create(&path)?)?;
    m.add_output(
        &path,
        format!(
            "pair-model sweep of realization {r}, rescale {}",
            cfg.rescale
        ),
    );
    Ok(())
}

fn fit(trace: &Path, output: Option<&Path>) -> anyhow::Result<()> {
    let mut rd =
        csv::Reader::from_path(trace).with_context(|| format!("reading {}", trace.display()))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no `{name}` column", trace.display()))
    };
    let (ti, mi) = (col("t_us")?, col("sx_mean")?);
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec?;
        t.push(
            rec[ti]
                .parse::<f64>()
                .with_context(|| format!("bad t_us `{}`", &rec[ti]))?,
        );
        y.push(
            rec[mi]
                .parse::<f64>()
                .with_context(|| format!("bad sx_mean `{}`", &rec[mi]))?,
        );
    }
    let f = fit_stretched_exponential(&t, &y)?;
    let json = serde_json::to_string_pretty(&f)?;
    match output {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}
