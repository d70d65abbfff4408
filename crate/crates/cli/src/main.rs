use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use terrafollow::baselines::{HeightModel, KnnTerrain, PolyTerrain};
use terrafollow::bench::{
    generate_dataset, run_ablation, run_benchmark, run_standard_suite, standard_suite_datasets, BenchReport, Method,
};
use terrafollow::dataset::{frame_file_name, read_dataset, write_dataset, Dataset};
use terrafollow::follow::{run_follow, FollowParams};
use terrafollow::metrics::{percentile, Confusion};
use terrafollow::sim::{ScenarioKind, ScenarioSpec};
use terrafollow::terrain::ControlLattice;
use terrafollow::{fit_surface, par, write_atomic, Pipeline, PipelineConfig};

/// Terrain perception for UAV terrain following with a rotating mmWave radar.
///
/// Configuration precedence: `--set` and `--seed` flags, then `--config`,
/// then built-in defaults. `TERRAFOLLOW_THREADS` caps worker threads.
#[derive(Parser, Debug)]
#[command(name = "terrafollow", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for simulation and RANSAC sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory or file, depending on the command.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic dataset from a preset or a scenario file.
    Simulate {
        #[arg(long)]
        preset: Option<ScenarioKind>,
        /// Flight altitude for the preset, m. Defaults to the preset's lowest.
        #[arg(long, requires = "preset")]
        altitude: Option<f64>,
        /// Scenario file; keys override the preset when both are given.
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
    },
    /// Full pipeline: segmentation dumps, terrain exports, altitude log.
    Pipeline { dataset: PathBuf },
    /// Segmentation dumps and scores only.
    Segment { dataset: PathBuf },
    /// Fit a terrain model to a lattice export and evaluate it.
    Model {
        /// Lattice file as written by `pipeline` (`terrain_lattice.txt`).
        #[arg(long, value_name = "FILE")]
        lattice: PathBuf,
        #[arg(long, default_value = "bsp")]
        method: Method,
        /// `x y` query lines; without it a dense grid is written.
        #[arg(long, value_name = "FILE")]
        queries: Option<PathBuf>,
    },
    /// Score methods on datasets or on the standard suite.
    Bench {
        datasets: Vec<PathBuf>,
        #[arg(long)]
        standard_suite: bool,
        /// Comma-separated subset, e.g. `proposed,ransac-patch,bsp`.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Ablation table: baseline, +TI, +TI+PSI, full.
    Ablate {
        datasets: Vec<PathBuf>,
        #[arg(long)]
        standard_suite: bool,
    },
    /// Closed-loop terrain-following replay over a preset.
    Follow {
        #[arg(long, default_value = "slope")]
        preset: ScenarioKind,
        /// Reference height above ground, m.
        #[arg(long, default_value_t = 3.0)]
        h_ref: f64,
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

fn run(cli: Cli) -> Result<()> {
    par::configure_from_env().map_err(anyhow::Error::msg)?;
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Simulate { preset, altitude, spec } => simulate(c, *preset, *altitude, spec.as_deref()),
        Cmd::Pipeline { dataset } => pipeline(c, dataset, true),
        Cmd::Segment { dataset } => pipeline(c, dataset, false),
        Cmd::Model {
            lattice,
            method,
            queries,
        } => model(c, lattice, *method, queries.as_deref()),
        Cmd::Bench {
            datasets,
            standard_suite,
            methods,
        } => bench(c, datasets, *standard_suite, methods.as_deref()),
        Cmd::Ablate {
            datasets,
            standard_suite,
        } => ablate(c, datasets, *standard_suite),
        Cmd::Follow { preset, h_ref } => follow(c, *preset, *h_ref),
    }
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg = cfg.merge_text(&text, &path.display().to_string())?;
    }
    if !c.set.is_empty() {
        let mut text = String::new();
        for kv in &c.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {kv:?}");
            };
            let _ = writeln!(text, "{} = {}", k.trim(), v.trim());
        }
        cfg = cfg.merge_text(&text, "--set")?;
    }
    if let Some(seed) = c.seed {
        cfg.ransac_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn need_out(c: &Common) -> Result<&Path> {
    c.out.as_deref().context("--out is required for this command")
}

fn say(c: &Common, msg: impl AsRef<str>) {
    if !c.quiet {
        println!("{}", msg.as_ref());
    }
}

fn generated_stamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("unix={secs}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn simulate(c: &Common, preset: Option<ScenarioKind>, altitude: Option<f64>, spec_file: Option<&Path>) -> Result<()> {
    let out = need_out(c)?;
    let seed = c.seed.unwrap_or(1);
    let mut spec = match preset {
        Some(kind) => ScenarioSpec::preset(kind, altitude.unwrap_or(kind.altitudes()[0]), seed),
        None if spec_file.is_some() => ScenarioSpec::flat_noiseless(10.0, seed),
        None => bail!("give --preset, --spec or both"),
    };
    if let Some(path) = spec_file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        spec = ScenarioSpec::from_cfg(&text, &spec, &path.display().to_string())?;
    }
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let data = generate_dataset(&spec)?;
    write_dataset(out, &data)?;
    let returns: usize = data.frames.iter().map(|f| f.returns.len()).sum();
    say(
        c,
        format!("{}: {} frames, {} returns -> {}", spec.name, data.frames.len(), returns, out.display()),
    );
    Ok(())
}

fn pipeline(c: &Common, dataset: &Path, full: bool) -> Result<()> {
    let out = need_out(c)?;
    let cfg = load_config(c)?;
    let data = read_dataset(dataset)?;
    let mut p = Pipeline::new(&cfg, data.spec.mount.transform());
    let mut altitude = String::from("# t x y z_terr z_cmd extrapolated\n");
    let mut scored = Confusion::default();
    let mut latencies = Vec::new();
    for frame in &data.frames {
        let o = p.process(frame, &data.track)?;
        write_text(
            &out.join("segmentation").join(frame_file_name(o.frame_index)),
            &o.segmentation.dump(),
        )?;
        if frame.frame_index as usize >= cfg.warmup_frames {
            let (pred, labels) = o.current_masks();
            scored += Confusion::from_masks(&pred, &labels);
        }
        latencies.push(o.seg_latency.as_secs_f64() * 1e3);
        if let Some(cmd) = o.command {
            let _ = writeln!(
                altitude,
                "{} {} {} {} {} {}",
                o.reference_time,
                o.uav_position.x,
                o.uav_position.y,
                cmd.z_terr,
                cmd.z_cmd,
                u8::from(cmd.extrapolated)
            );
        }
    }
    let m = scored.metrics();
    let mut summary = format!("# generated {}\n", generated_stamp());
    let _ = writeln!(summary, "dataset = {}", data.spec.name);
    let _ = writeln!(summary, "frames = {}", data.frames.len());
    let _ = writeln!(summary, "scored_from_frame = {}", cfg.warmup_frames);
    let _ = writeln!(summary, "precision = {:.6}", m.precision);
    let _ = writeln!(summary, "recall = {:.6}", m.recall);
    let _ = writeln!(summary, "iou = {:.6}", m.iou);
    let _ = writeln!(summary, "f1 = {:.6}", m.f1);
    let _ = writeln!(summary, "control_points = {}", p.lattice().len());
    for line in cfg.to_text().lines() {
        let _ = writeln!(summary, "# {line}");
    }
    write_text(&out.join("summary.txt"), &summary)?;
    let mut timing = format!("# generated {}\n# frame seg_ms\n", generated_stamp());
    for (f, ms) in data.frames.iter().zip(&latencies) {
        let _ = writeln!(timing, "{} {ms:.6}", f.frame_index);
    }
    write_text(&out.join("timing.txt"), &timing)?;

    if full {
        write_text(&out.join("altitude.txt"), &altitude)?;
        write_text(&out.join("terrain_lattice.txt"), &p.lattice().export())?;
        if let Some(s) = p.surface() {
            write_text(&out.join("terrain_dense.txt"), &s.export_dense(cfg.export_step))?;
        }
    }
    let mean = latencies.iter().sum::<f64>() / latencies.len().max(1) as f64;
    say(
        c,
        format!(
            "{}: {} frames, F1 {:.2}%, segmentation {:.3} ms mean / {:.3} ms p95 -> {}",
            data.spec.name,
            data.frames.len(),
            100.0 * m.f1,
            mean,
            percentile(&latencies, 0.95).unwrap_or(0.0),
            out.display()
        ),
    );
    Ok(())
}

fn model(c: &Common, lattice_path: &Path, method: Method, queries: Option<&Path>) -> Result<()> {
    let cfg = load_config(c)?;
    let text =
        std::fs::read_to_string(lattice_path).with_context(|| format!("reading {}", lattice_path.display()))?;
    let lattice = ControlLattice::parse_export(&text, lattice_path)?;
    let surface = fit_surface(&lattice, cfg.degree_x, cfg.degree_y)?;
    let controls: Vec<_> = lattice.points().copied().collect();
    let knn;
    let poly;
    let m: &dyn HeightModel = match method {
        Method::Bsp | Method::Proposed => &surface,
        Method::Knn => {
            knn = KnnTerrain::new(&controls, cfg.knn_k)?;
            &knn
        }
        Method::Poly => {
            poly = PolyTerrain::fit(&controls)?;
            &poly
        }
        other => bail!("{other} is a segmentation method; use bsp, knn or poly"),
    };
    let points: Vec<(f64, f64)> = match queries {
        Some(path) => read_queries(path)?,
        None => {
            let ((x0, x1), (y0, y1)) = surface.domain();
            let step = cfg.export_step;
            let nx = ((x1 - x0) / step).floor() as usize;
            let ny = ((y1 - y0) / step).floor() as usize;
            (0..=nx)
                .flat_map(|i| (0..=ny).map(move |j| (x0 + i as f64 * step, y0 + j as f64 * step)))
                .collect()
        }
    };
    let mut s = String::from("# x y z extrapolated\n");
    for (x, y) in &points {
        let _ = writeln!(s, "{x} {y} {} {}", m.height(*x, *y), u8::from(!surface.contains(*x, *y)));
    }
    match &c.out {
        Some(path) => {
            write_text(path, &s)?;
            say(c, format!("{} {} queries -> {}", method, points.len(), path.display()));
        }
        None => print!("{s}"),
    }
    Ok(())
}

fn read_queries(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<f64> = t
            .split_ascii_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .ok()
            .filter(|v: &Vec<f64>| v.len() == 2)
            .with_context(|| format!("{}:{}: expected `x y`, got {line:?}", path.display(), i + 1))?;
        out.push((f[0], f[1]));
    }
    Ok(out)
}

fn load_datasets(c: &Common, dirs: &[PathBuf], standard_suite: bool) -> Result<Vec<(String, Dataset)>> {
    match (standard_suite, dirs.is_empty()) {
        (true, true) => Ok(standard_suite_datasets(c.seed.unwrap_or(1))?),
        (false, false) => dirs
            .iter()
            .map(|d| {
                let data = read_dataset(d)?;
                Ok((data.spec.name.clone(), data))
            })
            .collect(),
        (true, false) => bail!("give dataset directories or --standard-suite, not both"),
        (false, true) => bail!("give dataset directories or --standard-suite"),
    }
}

fn bench(c: &Common, dirs: &[PathBuf], standard_suite: bool, methods: Option<&[Method]>) -> Result<()> {
    let cfg = load_config(c)?;
    let methods = methods.unwrap_or(&Method::ALL);
    let report = if standard_suite && dirs.is_empty() {
        run_standard_suite(c.seed.unwrap_or(1), methods, &cfg)?
    } else {
        let datasets = load_datasets(c, dirs, standard_suite)?;
        BenchReport {
            config: cfg.clone(),
            results: datasets.iter().map(|(_, d)| run_benchmark(d, methods, &cfg)).collect(),
        }
    };
    if let Some(out) = &c.out {
        write_text(out, &report.to_csv(Some(&generated_stamp())))?;
    }
    say(c, report.to_table());
    Ok(())
}

fn ablate(c: &Common, dirs: &[PathBuf], standard_suite: bool) -> Result<()> {
    let cfg = load_config(c)?;
    let datasets = load_datasets(c, dirs, standard_suite)?;
    let report = run_ablation(&datasets, &cfg);
    if let Some(out) = &c.out {
        write_text(out, &report.to_csv(&cfg, Some(&generated_stamp())))?;
    }
    say(c, report.to_table());
    Ok(())
}

fn follow(c: &Common, preset: ScenarioKind, h_ref: f64) -> Result<()> {
    let cfg = load_config(c)?;
    let spec = ScenarioSpec::preset(preset, h_ref, c.seed.unwrap_or(1));
    let params = FollowParams {
        h_ref,
        ..FollowParams::default()
    };
    let r = run_follow(&spec, &cfg, params)?;
    if let Some(out) = &c.out {
        write_text(out, &r.to_text())?;
    }
    say(
        c,
        format!(
            "{}: {} samples, mean error {:.3} m, rmse {:.3} m",
            spec.name,
            r.samples.len(),
            r.mean_error,
            r.rmse
        ),
    );
    Ok(())
}
