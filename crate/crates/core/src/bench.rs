//! Benchmark harness: segmentation scores, terrain RMSE and latency for the
//! proposed pipeline and the baselines, the standard synthetic suite and the
//! component ablation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{ransac_patch, ransac_single, HeightModel, KnnTerrain, PolyTerrain};
use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::error::{PipelineError, SimError};
use crate::geometry::Vec3;
use crate::metrics::{percentile, Confusion, SegMetrics};
use crate::par::Execution;
use crate::pipeline::Pipeline;
use crate::rng::SimRng;
use crate::sim::{generate_scenario, ScenarioKind, ScenarioSpec, TerrainField};
use crate::terrain::{ControlLattice, TerrainSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Proposed,
    RansacSingle,
    RansacPatch,
    Bsp,
    Knn,
    Poly,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Proposed,
        Method::RansacSingle,
        Method::RansacPatch,
        Method::Bsp,
        Method::Knn,
        Method::Poly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::RansacSingle => "ransac-single",
            Method::RansacPatch => "ransac-patch",
            Method::Bsp => "bsp",
            Method::Knn => "knn",
            Method::Poly => "poly",
        }
    }

    /// Segmentation methods are scored on labels; the others are terrain models.
    pub fn is_segmentation(self) -> bool {
        matches!(self, Method::Proposed | Method::RansacSingle | Method::RansacPatch)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method {s:?}; valid methods: {}", valid.join(", "))
            })
    }
}

/// Raw per-method measurements; merged before scores are derived.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodStats {
    pub confusion: Option<Confusion>,
    /// Sum of squared height errors and sample count.
    pub sq_error: Option<(f64, usize)>,
    /// Per-frame segmentation time or per-query time, ms.
    pub latencies_ms: Vec<f64>,
}

impl MethodStats {
    pub fn merge(&mut self, o: &MethodStats) {
        if let Some(c) = o.confusion {
            *self.confusion.get_or_insert_with(Confusion::default) += c;
        }
        if let Some((s, n)) = o.sq_error {
            let e = self.sq_error.get_or_insert((0.0, 0));
            e.0 += s;
            e.1 += n;
        }
        self.latencies_ms.extend_from_slice(&o.latencies_ms);
    }

    pub fn metrics(&self) -> Option<SegMetrics> {
        self.confusion.map(SegMetrics::from_confusion)
    }

    pub fn rmse(&self) -> Option<f64> {
        self.sq_error.filter(|(_, n)| *n > 0).map(|(s, n)| (s / n as f64).sqrt())
    }

    pub fn latency_mean_ms(&self) -> Option<f64> {
        (!self.latencies_ms.is_empty())
            .then(|| self.latencies_ms.iter().sum::<f64>() / self.latencies_ms.len() as f64)
    }

    pub fn latency_p95_ms(&self) -> Option<f64> {
        percentile(&self.latencies_ms, 0.95)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: String,
    pub methods: BTreeMap<Method, MethodStats>,
    pub frames: usize,
    pub failures: Vec<String>,
}

/// Terrain-model latency: queries are timed in batches of this size.
const QUERY_BATCH: usize = 1000;
const QUERY_BATCHES: usize = 20;

fn ms_since(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

fn mask_from(indices: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in indices {
        m[i] = true;
    }
    m
}

/// Truth samples for terrain RMSE: every observed cell center plus as many
/// uniform random points inside observed cells, all within the surface
/// domain.
pub fn truth_samples(
    lattice: &ControlLattice,
    surface: &TerrainSurface,
    terrain: &TerrainField,
    seed: u64,
) -> Vec<(f64, f64, f64)> {
    let s = lattice.resolution();
    let ((x0, x1), (y0, y1)) = surface.domain();
    let mut rng = SimRng::new(seed);
    let mut out = Vec::with_capacity(2 * lattice.len());
    for p in lattice.points() {
        out.push((p.x, p.y, terrain.height(p.x, p.y)));
    }
    for p in lattice.points() {
        let lo_x = (p.u as f64 * s).max(x0);
        let hi_x = ((p.u + 1) as f64 * s).min(x1);
        let lo_y = (p.v as f64 * s).max(y0);
        let hi_y = ((p.v + 1) as f64 * s).min(y1);
        let x = rng.uniform_in(lo_x, hi_x);
        let y = rng.uniform_in(lo_y, hi_y);
        out.push((x, y, terrain.height(x, y)));
    }
    out
}

fn terrain_stats(model: &dyn HeightModel, truth: &[(f64, f64, f64)], queries: &[(f64, f64)]) -> MethodStats {
    let sq: f64 = truth.iter().map(|&(x, y, z)| (model.height(x, y) - z).powi(2)).sum();
    MethodStats {
        confusion: None,
        sq_error: Some((sq, truth.len())),
        latencies_ms: query_latency_ms(model, queries),
    }
}

/// Per-query time in ms for each batch of queries.
pub fn query_latency_ms(model: &dyn HeightModel, queries: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::new();
    for chunk in queries.chunks(QUERY_BATCH) {
        let t0 = Instant::now();
        let mut acc = 0.0;
        for &(x, y) in chunk {
            acc += model.height(x, y);
        }
        std::hint::black_box(acc);
        out.push(ms_since(t0) / chunk.len() as f64);
    }
    out
}

/// Uniform query points over the surface domain.
pub fn domain_queries(surface: &TerrainSurface, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let ((x0, x1), (y0, y1)) = surface.domain();
    let mut rng = SimRng::new(seed);
    (0..n).map(|_| (rng.uniform_in(x0, x1), rng.uniform_in(y0, y1))).collect()
}

/// Runs the requested methods over every frame of `data`. Frames before
/// `config.warmup_frames` feed the pipeline state but are not scored or
/// timed. Scores use each frame's own (newly observed) points.
pub fn run_benchmark(data: &Dataset, methods: &[Method], config: &PipelineConfig) -> ScenarioResult {
    let mut stats: BTreeMap<Method, MethodStats> = methods.iter().map(|m| (*m, MethodStats::default())).collect();
    let mut failures = Vec::new();
    let mut pipeline = Pipeline::new(config, data.spec.mount.transform()).with_execution(Execution::Sequential);
    let ransac = config.ransac();
    let wants = |m: Method| methods.contains(&m);
    let (want_single, want_patch) = (wants(Method::RansacSingle), wants(Method::RansacPatch));

    for (i, frame) in data.frames.iter().enumerate() {
        let out = match pipeline.process(frame, &data.track) {
            Ok(o) => o,
            Err(e) => {
                failures.push(format!("frame {}: {e}", frame.frame_index));
                continue;
            }
        };
        if i < config.warmup_frames {
            continue;
        }
        let n = out.partition.points.len();
        let labels: Vec<bool> = out.partition.points[out.current..]
            .iter()
            .map(|p| p.label.unwrap_or(false))
            .collect();
        let score = |mask: &[bool]| Confusion::from_masks(&mask[out.current..], &labels);

        if let Some(s) = stats.get_mut(&Method::Proposed) {
            s.merge(&MethodStats {
                confusion: Some(score(&out.segmentation.mask(n))),
                sq_error: None,
                latencies_ms: vec![out.seg_latency.as_secs_f64() * 1e3],
            });
        }
        if want_single {
            let positions: Vec<Vec3> = out.partition.points.iter().map(|p| p.position).collect();
            let t0 = Instant::now();
            let g = ransac_single(&positions, &ransac).unwrap_or_default();
            let lat = ms_since(t0);
            stats.get_mut(&Method::RansacSingle).unwrap().merge(&MethodStats {
                confusion: Some(score(&mask_from(&g, n))),
                sq_error: None,
                latencies_ms: vec![lat],
            });
        }
        if want_patch {
            let t0 = Instant::now();
            let g = ransac_patch(&out.partition, &ransac, Execution::Sequential);
            let lat = ms_since(t0);
            stats.get_mut(&Method::RansacPatch).unwrap().merge(&MethodStats {
                confusion: Some(score(&mask_from(&g, n))),
                sq_error: None,
                latencies_ms: vec![lat],
            });
        }
    }

    if let Some(surface) = pipeline.surface() {
        let lattice = pipeline.lattice();
        let truth = truth_samples(lattice, &surface, &data.spec.terrain, data.spec.seed ^ 0x7275_7468);
        let queries = domain_queries(&surface, QUERY_BATCH * QUERY_BATCHES, data.spec.seed ^ 0x7175_6572);
        let controls: Vec<_> = lattice.points().copied().collect();
        let bsp = terrain_stats(surface.as_ref(), &truth, &queries);
        if let Some(s) = stats.get_mut(&Method::Proposed) {
            s.sq_error = bsp.sq_error;
        }
        if let Some(s) = stats.get_mut(&Method::Bsp) {
            *s = bsp;
        }
        if wants(Method::Knn) {
            match KnnTerrain::new(&controls, config.knn_k) {
                Ok(k) => *stats.get_mut(&Method::Knn).unwrap() = terrain_stats(&k, &truth, &queries),
                Err(e) => failures.push(format!("knn: {e}")),
            }
        }
        if wants(Method::Poly) {
            match PolyTerrain::fit(&controls) {
                Ok(p) => *stats.get_mut(&Method::Poly).unwrap() = terrain_stats(&p, &truth, &queries),
                Err(e) => failures.push(format!("poly: {e}")),
            }
        }
    } else {
        failures.push("no terrain surface was built".into());
    }

    ScenarioResult {
        scenario: data.spec.name.clone(),
        methods: stats,
        frames: data.frames.len(),
        failures,
    }
}

/// One entry of the standard suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub kind: ScenarioKind,
    pub altitude: f64,
    pub spec: ScenarioSpec,
}

/// Four terrain families at three altitudes each, with fixed seeds.
pub fn standard_suite(seed: u64) -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    for (k, kind) in ScenarioKind::ALL.into_iter().enumerate() {
        for (a, altitude) in kind.altitudes().into_iter().enumerate() {
            let s = seed.wrapping_add(100 * k as u64 + a as u64);
            out.push(SuiteEntry {
                kind,
                altitude,
                spec: ScenarioSpec::preset(kind, altitude, s),
            });
        }
    }
    out
}

pub fn generate_dataset(spec: &ScenarioSpec) -> Result<Dataset, SimError> {
    let sc = generate_scenario(spec)?;
    Ok(Dataset {
        spec: spec.clone(),
        track: sc.track,
        frames: sc.frames,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: PipelineConfig,
    /// Per-run results followed by per-family aggregates.
    pub results: Vec<ScenarioResult>,
}

impl BenchReport {
    /// Adds one aggregate row per family (`flat`, `slope`, ...) after the runs.
    pub fn with_family_aggregates(mut self, entries: &[SuiteEntry]) -> Self {
        let mut agg: BTreeMap<ScenarioKind, ScenarioResult> = BTreeMap::new();
        for (e, r) in entries.iter().zip(self.results.clone()) {
            let a = agg.entry(e.kind).or_insert_with(|| ScenarioResult {
                scenario: e.kind.name().to_string(),
                methods: BTreeMap::new(),
                frames: 0,
                failures: Vec::new(),
            });
            for (m, s) in &r.methods {
                a.methods.entry(*m).or_default().merge(s);
            }
            a.frames += r.frames;
            a.failures.extend(r.failures);
        }
        self.results.extend(agg.into_values());
        self
    }

    pub fn find(&self, scenario: &str, method: Method) -> Option<&MethodStats> {
        self.results
            .iter()
            .find(|r| r.scenario == scenario)
            .and_then(|r| r.methods.get(&method))
    }

    pub const CSV_HEADER: &'static str = "scenario,method,precision,recall,iou,f1,rmse_m,lat_mean_ms,lat_p95_ms";

    /// Delimited report: an optional `# generated` line, the config echo as
    /// comments, the header, one row per scenario and method. Latency is
    /// segmentation time per frame for the segmentation methods and time per
    /// query for the terrain models; it is the only wall-clock content.
    pub fn to_csv(&self, generated: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(ts) = generated {
            let _ = writeln!(s, "# generated {ts}");
        }
        for line in self.config.to_text().lines() {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.results {
            for (m, st) in &r.methods {
                let met = st.metrics();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    r.scenario,
                    m,
                    opt(met.map(|x| x.precision)),
                    opt(met.map(|x| x.recall)),
                    opt(met.map(|x| x.iou)),
                    opt(met.map(|x| x.f1)),
                    opt(st.rmse()),
                    opt(st.latency_mean_ms()),
                    opt(st.latency_p95_ms())
                );
            }
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<14} {:<14} {:>7} {:>7} {:>7} {:>7} {:>8} {:>10} {:>10}\n",
            "scenario", "method", "prec", "recall", "iou", "f1", "rmse_m", "lat_ms", "p95_ms"
        );
        let pct = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
        let num = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
        for r in &self.results {
            for (m, st) in &r.methods {
                let met = st.metrics();
                let _ = writeln!(
                    s,
                    "{:<14} {:<14} {:>7} {:>7} {:>7} {:>7} {:>8} {:>10} {:>10}",
                    r.scenario,
                    m.name(),
                    pct(met.map(|x| x.precision)),
                    pct(met.map(|x| x.recall)),
                    pct(met.map(|x| x.iou)),
                    pct(met.map(|x| x.f1)),
                    num(st.rmse(), 3),
                    num(st.latency_mean_ms(), 5),
                    num(st.latency_p95_ms(), 5),
                );
            }
            for f in &r.failures {
                let _ = writeln!(s, "  ! {}: {f}", r.scenario);
            }
        }
        s
    }
}

/// Runs `methods` over the standard suite, one scenario at a time.
pub fn run_standard_suite(seed: u64, methods: &[Method], config: &PipelineConfig) -> Result<BenchReport, PipelineError> {
    let entries = standard_suite(seed);
    let mut results = Vec::with_capacity(entries.len());
    for e in &entries {
        results.push(run_benchmark(&generate_dataset(&e.spec)?, methods, config));
    }
    Ok(BenchReport {
        config: config.clone(),
        results,
    }
    .with_family_aggregates(&entries))
}

/// The four ablation configurations, cumulative.
pub fn ablation_configs(base: &PipelineConfig) -> [(&'static str, PipelineConfig); 4] {
    let baseline = PipelineConfig {
        window_frames: 1,
        prior_seeds: false,
        refinement: false,
        ..base.clone()
    };
    let ti = PipelineConfig {
        window_frames: base.window_frames,
        ..baseline.clone()
    };
    let psi = PipelineConfig {
        prior_seeds: true,
        ..ti.clone()
    };
    let full = PipelineConfig {
        refinement: true,
        ..psi.clone()
    };
    [("baseline", baseline), ("+TI", ti), ("+TI+PSI", psi), ("full", full)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: &'static str,
    pub config: PipelineConfig,
    /// Per-scenario confusion, in dataset order, then `all`.
    pub scenarios: Vec<(String, Confusion)>,
}

impl AblationRow {
    pub fn f1(&self, scenario: &str) -> Option<f64> {
        self.scenarios
            .iter()
            .find(|(s, _)| s == scenario)
            .map(|(_, c)| c.metrics().f1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub const CSV_HEADER: &'static str = "config,window_frames,prior_seeds,refinement,scenario,precision,recall,iou,f1";

    pub fn to_csv(&self, base: &PipelineConfig, generated: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(ts) = generated {
            let _ = writeln!(s, "# generated {ts}");
        }
        for line in base.to_text().lines() {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            for (scenario, c) in &r.scenarios {
                let m = c.metrics();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    r.name,
                    r.config.window_frames,
                    r.config.prior_seeds,
                    r.config.refinement,
                    scenario,
                    m.precision,
                    m.recall,
                    m.iou,
                    m.f1
                );
            }
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let scen: Vec<&String> = self.rows.first().map(|r| r.scenarios.iter().map(|(n, _)| n).collect()).unwrap_or_default();
        let _ = write!(s, "{:<10}", "config");
        for n in &scen {
            let _ = write!(s, " {:>9}", n);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<10}", r.name);
            for (_, c) in &r.scenarios {
                let _ = write!(s, " {:>9.2}", 100.0 * c.metrics().f1);
            }
            s.push('\n');
        }
        s
    }
}

/// Scores the proposed method under each ablation configuration. Datasets are
/// grouped into scenarios by `group`; `all` pools every dataset.
pub fn run_ablation(
    datasets: &[(String, Dataset)],
    base: &PipelineConfig,
) -> AblationReport {
    let rows = ablation_configs(base)
        .into_iter()
        .map(|(name, config)| {
            let mut groups: Vec<(String, Confusion)> = Vec::new();
            let mut all = Confusion::default();
            for (group, data) in datasets {
                let r = run_benchmark(data, &[Method::Proposed], &config);
                let c = r.methods[&Method::Proposed].confusion.unwrap_or_default();
                all += c;
                match groups.iter_mut().find(|(g, _)| g == group) {
                    Some((_, acc)) => *acc += c,
                    None => groups.push((group.clone(), c)),
                }
            }
            groups.push(("all".into(), all));
            AblationRow {
                name,
                config,
                scenarios: groups,
            }
        })
        .collect();
    AblationReport { rows }
}

/// The standard suite as datasets grouped by family.
pub fn standard_suite_datasets(seed: u64) -> Result<Vec<(String, Dataset)>, SimError> {
    standard_suite(seed)
        .into_iter()
        .map(|e| Ok((e.kind.name().to_string(), generate_dataset(&e.spec)?)))
        .collect()
}
