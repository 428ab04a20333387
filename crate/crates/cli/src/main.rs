//! Batch runner: build-grid → decompose → approximate → verify → report.
//!
//! Each stage caches its artifact as JSON tagged with the artifact version and
//! a SHA-256 key of the effective config, so later stages can run on their
//! own and refuse stale inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use epsapprox::geometry::BoundarySet;
use epsapprox::pipeline::{self, Decomposition, FieldArtifact, Grid, Report, RunConfig, Tables, ARTIFACT_VERSION};

#[derive(Parser)]
#[command(name = "epsapprox", version, about = "Epsilon-approximants of harmonic functions off ADR sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".epsapprox-cache")]
    cache_dir: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample E, sweep ADR ratios and build the dyadic cubes.
    BuildGrid,
    /// Whitney boxes, corona decomposition and regions.
    Decompose,
    /// Stopping families and the approximant for every field and ε.
    Approximate,
    /// Measure everything and write report.json plus CSV tables.
    Verify,
    /// Print a written report.
    Report {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// All stages in one go.
    Run,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    version: u32,
    key: String,
    stage: String,
    data: T,
}

struct Ctx {
    cfg: RunConfig,
    key: String,
    cache: PathBuf,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self> {
        let path = cli.config.as_ref().ok_or_else(|| anyhow!("--config is required"))?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let key = hex::encode(Sha256::digest(serde_json::to_vec(&cfg)?));
        Ok(Ctx { cfg, key, cache: cli.cache_dir.clone() })
    }

    fn put<T: Serialize>(&self, stage: &str, data: &T) -> Result<()> {
        fs::create_dir_all(&self.cache)?;
        let a = Artifact { version: ARTIFACT_VERSION, key: self.key.clone(), stage: stage.into(), data };
        fs::write(self.cache.join(format!("{stage}.json")), serde_json::to_vec(&a)?)?;
        Ok(())
    }

    fn get<T: DeserializeOwned>(&self, stage: &str, producer: &str) -> Result<T> {
        let path = self.cache.join(format!("{stage}.json"));
        let bytes = fs::read(&path)
            .map_err(|_| anyhow!("no cached {stage} artifact in {}; run `{producer}` first", self.cache.display()))?;
        let head: Artifact<serde::de::IgnoredAny> = serde_json::from_slice(&bytes)?;
        if head.version != ARTIFACT_VERSION {
            bail!("cached {stage} artifact has version {} but this build expects {ARTIFACT_VERSION}; rebuild required (run `{producer}`)", head.version);
        }
        if head.key != self.key {
            bail!("cached {stage} artifact was built from a different config or seed; rebuild required (run `{producer}`)");
        }
        let a: Artifact<T> = serde_json::from_slice(&bytes)?;
        Ok(a.data)
    }

    fn boundary(&self) -> Result<BoundarySet> {
        Ok(pipeline::boundary(&self.cfg)?)
    }

    fn output(&self) -> PathBuf {
        PathBuf::from(&self.cfg.output)
    }
}

fn build_grid(ctx: &Ctx, e: &BoundarySet) -> Result<Grid> {
    let g = pipeline::build_grid(&ctx.cfg, e)?;
    ctx.put("grid", &g)?;
    Ok(g)
}

fn decompose(ctx: &Ctx, e: &BoundarySet, g: &Grid) -> Result<Decomposition> {
    let d = pipeline::decompose(&ctx.cfg, e, &g.cubes)?;
    ctx.put("decompose", &d)?;
    Ok(d)
}

fn approximate(ctx: &Ctx, e: &BoundarySet, g: &Grid, d: &Decomposition) -> Result<Vec<FieldArtifact>> {
    let a = pipeline::approximate(&ctx.cfg, e, &g.cubes, d)?;
    ctx.put("approximate", &a)?;
    Ok(a)
}

fn load_decomposition(ctx: &Ctx) -> Result<Decomposition> {
    let mut d: Decomposition = ctx.get("decompose", "decompose")?;
    d.restore();
    Ok(d)
}

fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(dir: &Path, report: &Report, tables: &Tables) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    write_csv(&dir.join("packing.csv"), &["field", "eps", "family", "size", "lambda", "budget"], &tables.packing)?;
    write_csv(
        &dir.join("functionals.csv"),
        &["field", "sample", "x", "y", "nstar", "dyadic_maximal", "square"],
        &tables.functionals,
    )?;
    write_csv(&dir.join("tv.csv"), &["field", "eps", "jumps", "gradient", "c1", "c2"], &tables.tv)?;
    write_csv(&dir.join("jumps.csv"), &["field", "eps", "facet", "a", "b", "area", "jump"], &tables.jumps)?;
    let checks: Vec<_> = report.checks.iter().map(|c| (&c.name, c.pass, c.value, c.budget)).collect();
    write_csv(&dir.join("acceptance.csv"), &["check", "pass", "value", "budget"], &checks)?;
    Ok(())
}

/// Leaves of a JSON value as (path, value) rows.
fn flatten(v: &Value, path: String, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(x, if path.is_empty() { k.clone() } else { format!("{path}.{k}") }, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(x, format!("{path}[{i}]"), out);
            }
        }
        Value::String(s) => out.push((path, s.clone())),
        other => out.push((path, other.to_string())),
    }
}

fn finish(report: &Report) -> ExitCode {
    match report.first_failure() {
        None => {
            eprintln!("all {} checks passed", report.checks.len());
            ExitCode::SUCCESS
        }
        Some(c) => {
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            eprintln!(
                "{failed} of {} checks failed; first: {} = {} (budget {})",
                report.checks.len(),
                c.name,
                c.value,
                c.budget
            );
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    if let Command::Report { format } = &cli.command {
        let ctx = Ctx::load(cli)?;
        let path = ctx.output().join("report.json");
        let text =
            fs::read_to_string(&path).map_err(|_| anyhow!("no report at {}; run `verify` first", path.display()))?;
        let report: Report = serde_json::from_str(&text)?;
        let value: Value = serde_json::from_str(&text)?;
        match format {
            Format::Json => print!("{text}"),
            Format::Csv => {
                let mut rows = Vec::new();
                flatten(&value, String::new(), &mut rows);
                let mut w = csv::Writer::from_writer(std::io::stdout());
                w.write_record(["path", "value"])?;
                for r in rows {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
        }
        return Ok(finish(&report));
    }
    let ctx = Ctx::load(cli)?;
    let e = ctx.boundary()?;
    match cli.command {
        Command::BuildGrid => {
            let g = build_grid(&ctx, &e)?;
            eprintln!(
                "{} samples, {} cubes, ADR ratios in [{:.4}, {:.4}]",
                e.len(),
                g.cubes.len(),
                g.adr.lower_constant,
                g.adr.upper_constant
            );
        }
        Command::Decompose => {
            let g: Grid = ctx.get("grid", "build-grid")?;
            let d = decompose(&ctx, &e, &g)?;
            eprintln!(
                "{} Whitney boxes, {} regimes, {} bad cubes",
                d.whitney.len(),
                d.corona.regimes.len(),
                d.corona.bad().len()
            );
        }
        Command::Approximate => {
            let g: Grid = ctx.get("grid", "build-grid")?;
            let d = load_decomposition(&ctx)?;
            let a = approximate(&ctx, &e, &g, &d)?;
            eprintln!("{} fields approximated at {} values of eps", a.len(), ctx.cfg.eps.len());
        }
        Command::Verify => {
            let g: Grid = ctx.get("grid", "build-grid")?;
            let d = load_decomposition(&ctx)?;
            let a: Vec<FieldArtifact> = ctx.get("approximate", "approximate")?;
            let (report, tables) = pipeline::verify(&ctx.cfg, &e, &g, &d, &a)?;
            write_outputs(&ctx.output(), &report, &tables)?;
            return Ok(finish(&report));
        }
        Command::Run => {
            let g = build_grid(&ctx, &e)?;
            let d = decompose(&ctx, &e, &g)?;
            let a = approximate(&ctx, &e, &g, &d)?;
            let (report, tables) = pipeline::verify(&ctx.cfg, &e, &g, &d, &a)?;
            write_outputs(&ctx.output(), &report, &tables)?;
            return Ok(finish(&report));
        }
        Command::Report { .. } => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
