use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use meshadapt::study::{
    run, run_study, write_report_csv, Overrides, RunManifest, RunSpec,
};
use meshadapt::solver::write_diagnostics_csv;
use meshadapt::{FunctionalKind, MetricKind, TestCase};

#[derive(Parser)]
#[command(name = "meshadapt", version, about = "Variational moving-mesh adaptation on the unit square and cube")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adapt one mesh and write VTK, a report row and diagnostics.
    Adapt(Options),
    /// Sweep mesh sizes and fit convergence slopes.
    Study(Options),
}

#[derive(Args, Default)]
struct Options {
    /// JSON file with any of the options below; flags given here win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Test function 1..5 (1, 2 are 2D; 3, 4, 5 are 3D).
    #[arg(long)]
    example: Option<u8>,
    /// winslow, huang, hr or all.
    #[arg(long)]
    functional: Option<String>,
    /// l2 or h1.
    #[arg(long)]
    metric: Option<String>,
    /// Cells per side for `adapt`.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated cells per side for `study`.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    tau: Option<f64>,
    /// Maximum outer iterations.
    #[arg(long)]
    outer: Option<usize>,
    /// Maximum Euler steps per outer iteration.
    #[arg(long)]
    inner: Option<usize>,
    /// Displacement tolerance of the outer loop.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Multiply the metric by C (invariance check).
    #[arg(long = "metric-scale", value_name = "C")]
    metric_scale: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Four comma-separated Huang-Russell weights.
    #[arg(long, value_delimiter = ',')]
    thetas: Option<Vec<f64>>,
    /// Also report the unadapted structured mesh.
    #[arg(long)]
    uniform: bool,
    /// Randomly perturb interior vertices of the initial mesh by this fraction of a cell.
    #[arg(long)]
    perturb: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Config file contents; keys match the long flag names with `_` for `-`.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileOptions {
    example: Option<u8>,
    functional: Option<String>,
    metric: Option<String>,
    n: Option<usize>,
    sizes: Option<Vec<usize>>,
    tau: Option<f64>,
    outer: Option<usize>,
    inner: Option<usize>,
    tol: Option<f64>,
    out: Option<PathBuf>,
    diagnostics: Option<PathBuf>,
    metric_scale: Option<f64>,
    p: Option<f64>,
    theta: Option<f64>,
    nu: Option<f64>,
    thetas: Option<Vec<f64>>,
    uniform: Option<bool>,
    perturb: Option<f64>,
    seed: Option<u64>,
}

impl Options {
    fn merged(self) -> Result<Options> {
        let Some(path) = &self.config else {
            return Ok(self);
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let f: FileOptions = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(Options {
            config: self.config,
            example: self.example.or(f.example),
            functional: self.functional.or(f.functional),
            metric: self.metric.or(f.metric),
            n: self.n.or(f.n),
            sizes: self.sizes.or(f.sizes),
            tau: self.tau.or(f.tau),
            outer: self.outer.or(f.outer),
            inner: self.inner.or(f.inner),
            tol: self.tol.or(f.tol),
            out: self.out.or(f.out),
            diagnostics: self.diagnostics.or(f.diagnostics),
            metric_scale: self.metric_scale.or(f.metric_scale),
            p: self.p.or(f.p),
            theta: self.theta.or(f.theta),
            nu: self.nu.or(f.nu),
            thetas: self.thetas.or(f.thetas),
            uniform: self.uniform || f.uniform.unwrap_or(false),
            perturb: self.perturb.or(f.perturb),
            seed: self.seed.or(f.seed),
        })
    }

    fn manifest(self, sizes: Vec<usize>) -> Result<RunManifest> {
        let example = self.example.context("--example is required")?;
        let functionals = match self.functional.as_deref().unwrap_or("hr") {
            "all" => FunctionalKind::ALL.to_vec(),
            s => vec![s.parse::<FunctionalKind>().map_err(anyhow::Error::msg)?],
        };
        let metric = match &self.metric {
            Some(s) => s.parse::<MetricKind>().map_err(anyhow::Error::msg)?,
            None => MetricKind::L2,
        };
        let thetas = match self.thetas {
            Some(t) => Some(<[f64; 4]>::try_from(t.as_slice()).context("--thetas needs exactly four values")?),
            None => None,
        };
        let manifest = RunManifest {
            example,
            functionals,
            metric,
            sizes,
            uniform: self.uniform,
            overrides: Overrides {
                tau: self.tau,
                outer: self.outer,
                inner: self.inner,
                tol: self.tol,
                metric_scale: self.metric_scale,
                p: self.p,
                theta: self.theta,
                nu: self.nu,
                thetas,
            },
            out_dir: self.out,
            diagnostics: self.diagnostics,
            perturb: self.perturb,
            seed: self.seed.unwrap_or(0),
        };
        manifest.validate()?;
        Ok(manifest)
    }
}

fn out_dir(manifest: &RunManifest) -> Result<PathBuf> {
    let dir = manifest.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<()> {
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

fn cmd_adapt(opts: Options) -> Result<()> {
    let n = opts.n.context("--n is required")?;
    let manifest = opts.manifest(vec![n])?;
    let case = TestCase::new(manifest.example)?;
    let dir = out_dir(&manifest)?;
    write_manifest(&manifest, &dir)?;

    let mut runs: Vec<Option<FunctionalKind>> = manifest.functionals.iter().copied().map(Some).collect();
    if manifest.uniform {
        runs.insert(0, None);
    }
    let mut rows = Vec::new();
    let mut all_diagnostics = Vec::new();
    for kind in runs {
        let spec = RunSpec {
            case,
            functional: kind.map(|k| manifest.overrides.functional(k)),
            metric: manifest.metric,
            n,
            config: manifest.overrides.config(case.dim),
            perturb: manifest.perturb.map(|a| (a, manifest.seed)),
        };
        let result = run(&spec)?;
        let vtk = dir.join(format!(
            "ex{}_{}_{}_n{}.vtk",
            case.id,
            result.row.functional,
            manifest.metric.as_str(),
            n
        ));
        result.write_vtk(&vtk).with_context(|| format!("writing {}", vtk.display()))?;
        println!(
            "{} n={} N={} l2_error={} Q_eq={} Q_ali={} -> {}",
            result.row.functional,
            n,
            result.row.n_elements,
            result.row.l2_error,
            result.row.q_eq,
            result.row.q_ali,
            vtk.display()
        );
        all_diagnostics.extend(result.diagnostics.iter().copied());
        rows.push(result.row);
    }
    write_report_csv(&rows, fs::File::create(dir.join("report.csv"))?)?;
    if let Some(path) = &manifest.diagnostics {
        write_diagnostics_csv(&all_diagnostics, fs::File::create(path)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_study(opts: Options) -> Result<()> {
    let sizes = match (&opts.sizes, opts.example) {
        (Some(s), _) => s.clone(),
        (None, Some(id)) if TestCase::new(id)?.dim == 3 => vec![6, 8, 12, 16, 20],
        (None, _) => vec![16, 24, 32, 48, 64, 96],
    };
    if sizes.len() < 3 {
        bail!("a study needs at least three sizes");
    }
    let manifest = opts.manifest(sizes)?;
    let dir = out_dir(&manifest)?;
    write_manifest(&manifest, &dir)?;
    let summary = run_study(&manifest)?;
    summary.write_csv(fs::File::create(dir.join("study.csv"))?)?;
    summary.write_slopes(fs::File::create(dir.join("slopes.csv"))?)?;
    for row in &summary.rows {
        match &row.result {
            Ok(r) => {
                let vtk = dir.join(format!(
                    "ex{}_{}_{}_n{}.vtk",
                    manifest.example,
                    row.functional,
                    manifest.metric.as_str(),
                    row.n
                ));
                r.write_vtk(&vtk)?;
            }
            Err(e) => eprintln!("{} n={} failed: {e}", row.functional, row.n),
        }
    }
    for (f, s) in &summary.slopes {
        match s {
            Some(s) => println!("{f}: slope {s:.4}"),
            None => println!("{f}: slope unavailable"),
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Adapt(o) => o.merged().and_then(cmd_adapt),
        Command::Study(o) => o.merged().and_then(cmd_study),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
