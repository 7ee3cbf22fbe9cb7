//! Run configuration, trajectory persistence, statistics output, benchmark
//! and offline analysis.
//!
//! Output files, all inside the configured output directory:
//!
//! * `stats.csv`: `step,energy_kT,ffn_stochastic,ffn_exact,n_clusters,avg_cluster_size`,
//!   one row per sample (step 0 and every `sample_interval` steps).
//! * `trajectory.txt`: a `# L=<L> M=<M> sample_interval=<k>` header, then one
//!   frame line per sample.
//! * `final_lattice.txt`: a `# L=<L> M=<M> step=<n>` header and the final frame.
//! * `frame_<step>.pgm`: binary P5 snapshots every `snapshot_interval` steps.
//! * `bench.csv`: written by the benchmark.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::analysis::{
    average_cluster_size, cluster_size_distribution, fraction_first_neighbors,
    fraction_first_neighbors_exact, hoshen_kopelman,
};
use crate::energy::InteractionModel;
use crate::error::{Error, IoContext, Result};
use crate::imaging::{
    image_ffn, image_ffn_exact, read_image, render_snapshot, write_image, ImageFormat,
    RasterNeighborhood, RenderConfig, DEFAULT_DELTA_COL,
};
use crate::kinetics::{run, Dynamics, Kawasaki, Nonlocal, Observer, RunSummary};
use crate::lattice::{Lattice, LatticeDims, SiteType};
use crate::mpkk::{suggest_dims, validate_dims, Mpkk};
use crate::rng::RngStream;
use crate::stats::median;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineKind {
    Kawasaki,
    Mpkk,
    Nonlocal,
}

impl EngineKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kawasaki" => Some(Self::Kawasaki),
            "mpkk" => Some(Self::Mpkk),
            "nonlocal" => Some(Self::Nonlocal),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Kawasaki => "kawasaki",
            Self::Mpkk => "mpkk",
            Self::Nonlocal => "nonlocal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartKind {
    Random,
    Block,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dims: LatticeDims,
    pub fraction_a: f64,
    pub model: InteractionModel,
    pub engine: EngineKind,
    pub n_steps: u64,
    pub seed: u64,
    pub sample_interval: u64,
    /// 0 disables snapshots.
    pub snapshot_interval: u64,
    pub render: RenderConfig,
    pub output_dir: PathBuf,
    pub start: StartKind,
    pub lanes: usize,
    pub cluster_species: SiteType,
}

const KNOWN_KEYS: &[&str] = &[
    "L",
    "M",
    "fraction_A",
    "omega_AB",
    "g_AA",
    "g_AB",
    "g_BB",
    "n_steps",
    "seed",
    "engine",
    "sample_interval",
    "snapshot_interval",
    "target_width",
    "supersample",
    "delta_col",
    "output_dir",
    "start",
    "lanes",
    "cluster_species",
];

/// Parses `key=value` lines; `#` starts a comment.
///
/// Required: `L`, `M`, `fraction_A`, `omega_AB` (or all of `g_AA`, `g_AB`,
/// `g_BB`), `n_steps`, `seed`. Defaults: `engine=mpkk`,
/// `sample_interval=100`, `snapshot_interval=0`, `target_width=L`,
/// `supersample=1`, `delta_col=35`, `output_dir=.`, `start=random`,
/// `lanes=1`, `cluster_species=A`.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key:?} on line {}", no + 1)));
        }
        if kv.insert(key, value).is_some() {
            return Err(Error::Config(format!("duplicate key {key:?} on line {}", no + 1)));
        }
    }

    fn req<'a>(kv: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str> {
        kv.get(key)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value
            .parse()
            .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
    }
    fn opt<T: std::str::FromStr>(kv: &BTreeMap<&str, &str>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        kv.get(key).map_or(Ok(default), |v| num(key, v))
    }

    let l: usize = num("L", req(&kv, "L")?)?;
    let m: usize = num("M", req(&kv, "M")?)?;
    let fraction_a: f64 = num("fraction_A", req(&kv, "fraction_A")?)?;
    let gibbs = ["g_AA", "g_AB", "g_BB"].map(|k| kv.get(k));
    let model = match (kv.get("omega_AB"), gibbs) {
        (Some(w), [None, None, None]) => InteractionModel::new(num("omega_AB", w)?)?,
        (w, [Some(aa), Some(ab), Some(bb)]) => {
            let model = InteractionModel::from_gibbs(
                num("g_AA", aa)?,
                num("g_AB", ab)?,
                num("g_BB", bb)?,
            )?;
            if let Some(w) = w {
                let w: f64 = num("omega_AB", w)?;
                if w != model.omega_ab() {
                    return Err(Error::Config(format!(
                        "omega_AB={w} contradicts g values (which give {})",
                        model.omega_ab()
                    )));
                }
            }
            model
        }
        (_, [_, _, _]) if gibbs.iter().any(Option::is_some) => {
            return Err(Error::Config("g_AA, g_AB and g_BB must be given together".into()))
        }
        _ => return Err(Error::Config("missing required key \"omega_AB\"".into())),
    };
    let n_steps: u64 = num("n_steps", req(&kv, "n_steps")?)?;
    let seed: u64 = num("seed", req(&kv, "seed")?)?;

    let engine = match kv.get("engine") {
        None => EngineKind::Mpkk,
        Some(e) => EngineKind::parse(e)
            .ok_or_else(|| Error::Config(format!("engine: unknown engine {e:?}")))?,
    };
    let start = match kv.get("start").copied().unwrap_or("random") {
        "random" => StartKind::Random,
        "block" => StartKind::Block,
        other => return Err(Error::Config(format!("start: expected random or block, got {other:?}"))),
    };
    let cluster_species = match kv.get("cluster_species").copied().unwrap_or("A") {
        "A" => SiteType::A,
        "B" => SiteType::B,
        other => return Err(Error::Config(format!("cluster_species: expected A or B, got {other:?}"))),
    };

    let dims = LatticeDims::new(l, m)?;
    dims.count_for_fraction(fraction_a)?;
    let sample_interval: u64 = opt(&kv, "sample_interval", 100)?;
    if sample_interval == 0 {
        return Err(Error::Config("sample_interval must be at least 1".into()));
    }
    let render = RenderConfig {
        target_width: opt(&kv, "target_width", l)?,
        supersample: opt(&kv, "supersample", 1)?,
        delta_col: opt(&kv, "delta_col", DEFAULT_DELTA_COL)?,
    };
    if render.delta_col == 0 {
        return Err(Error::Config("delta_col must be in 1..=255".into()));
    }
    if render.supersample == 0 || render.target_width == 0 || render.target_width > l {
        return Err(Error::Config(format!(
            "target_width must be in 1..={l} and supersample at least 1"
        )));
    }
    if engine == EngineKind::Mpkk && !validate_dims(dims).is_valid() {
        let s = suggest_dims(l, m)?;
        return Err(Error::Config(format!(
            "engine mpkk needs a lattice with seven-site domain coverage; {l}x{m} has none, try L={} M={}",
            s.l(),
            s.m()
        )));
    }
    Ok(RunConfig {
        dims,
        fraction_a,
        model,
        engine,
        n_steps,
        seed,
        sample_interval,
        snapshot_interval: opt(&kv, "snapshot_interval", 0)?,
        render,
        output_dir: PathBuf::from(kv.get("output_dir").copied().unwrap_or(".")),
        start,
        lanes: opt(&kv, "lanes", 1)?,
        cluster_species,
    })
}

impl RunConfig {
    pub fn initial_lattice(&self) -> Result<Lattice> {
        match self.start {
            StartKind::Random => Lattice::init_random(self.dims, self.fraction_a, self.seed),
            StartKind::Block => Lattice::init_block(self.dims, self.fraction_a),
        }
    }

    pub fn build_engine(&self, kind: EngineKind, lanes: usize) -> Result<Box<dyn Dynamics>> {
        Ok(match kind {
            EngineKind::Kawasaki => Box::new(Kawasaki::new(self.seed)),
            EngineKind::Nonlocal => Box::new(Nonlocal::new(self.seed)),
            EngineKind::Mpkk => Box::new(Mpkk::new(self.dims, self.seed, lanes)?),
        })
    }
}

/// One row of `stats.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub step: u64,
    pub energy_kt: f64,
    pub ffn_stochastic: f64,
    pub ffn_exact: f64,
    pub n_clusters: usize,
    /// NaN when the lattice holds no site of the cluster species.
    pub avg_cluster_size: f64,
}

impl Sample {
    pub const CSV_HEADER: &'static str =
        "step,energy_kT,ffn_stochastic,ffn_exact,n_clusters,avg_cluster_size";

    pub fn measure(
        step: u64,
        lattice: &Lattice,
        model: &InteractionModel,
        species: SiteType,
        ffn_rng: &mut RngStream,
    ) -> Self {
        let dist = cluster_size_distribution(&hoshen_kopelman(lattice, species));
        Self {
            step,
            energy_kt: model.omega_ab() * lattice.unlike_contacts() as f64,
            ffn_stochastic: fraction_first_neighbors(lattice, ffn_rng),
            ffn_exact: fraction_first_neighbors_exact(lattice),
            n_clusters: dist.n_clusters(),
            avg_cluster_size: average_cluster_size(&dist).unwrap_or(f64::NAN),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.energy_kt,
            self.ffn_stochastic,
            self.ffn_exact,
            self.n_clusters,
            self.avg_cluster_size
        )
    }
}

/// Per-sample neighbour-draw stream for the stochastic FFN column.
pub fn ffn_stream(seed: u64, step: u64) -> RngStream {
    RngStream::new(seed).derive_str("ffn").derive(step)
}

struct StatsCsv {
    path: PathBuf,
    out: BufWriter<File>,
    interval: u64,
    seed: u64,
    species: SiteType,
    samples: Vec<Sample>,
}

impl Observer for StatsCsv {
    fn interval(&self) -> u64 {
        self.interval
    }

    fn observe(&mut self, step: u64, lattice: &Lattice, model: &InteractionModel) -> Result<()> {
        let sample = Sample::measure(
            step,
            lattice,
            model,
            self.species,
            &mut ffn_stream(self.seed, step),
        );
        writeln!(self.out, "{}", sample.csv_row()).at(&self.path)?;
        self.samples.push(sample);
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.out.flush().at(&self.path)
    }
}

struct TrajectoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
    interval: u64,
    frames: usize,
}

impl Observer for TrajectoryWriter {
    fn interval(&self) -> u64 {
        self.interval
    }

    fn observe(&mut self, _step: u64, lattice: &Lattice, _: &InteractionModel) -> Result<()> {
        writeln!(self.out, "{}", lattice.to_frame_line()).at(&self.path)?;
        self.frames += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.out.flush().at(&self.path)
    }
}

struct SnapshotWriter {
    dir: PathBuf,
    interval: u64,
    render: RenderConfig,
    written: Vec<PathBuf>,
}

impl Observer for SnapshotWriter {
    fn interval(&self) -> u64 {
        self.interval
    }

    fn observe(&mut self, step: u64, lattice: &Lattice, _: &InteractionModel) -> Result<()> {
        let snap = render_snapshot(lattice, &self.render)?;
        let path = self.dir.join(format!("frame_{step}.pgm"));
        write_image(&snap, &path, ImageFormat::Pgm)?;
        self.written.push(path);
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).at(path)?))
}

/// What a run left on disk.
#[derive(Debug)]
pub struct RunReport {
    pub summary: RunSummary,
    pub samples: Vec<Sample>,
    pub trajectory_frames: usize,
    pub snapshots: Vec<PathBuf>,
    pub final_lattice: Lattice,
    pub initial_count_a: usize,
}

pub fn trajectory_header(dims: &LatticeDims, sample_interval: u64) -> String {
    format!("# L={} M={} sample_interval={}", dims.l(), dims.m(), sample_interval)
}

pub fn run_simulation(config: &RunConfig) -> Result<RunReport> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).at(dir)?;
    let mut lattice = config.initial_lattice()?;
    let initial_count_a = lattice.count_a();
    let mut engine = config.build_engine(config.engine, config.lanes)?;

    let stats_path = dir.join("stats.csv");
    let mut stats = StatsCsv {
        out: create(&stats_path)?,
        path: stats_path,
        interval: config.sample_interval,
        seed: config.seed,
        species: config.cluster_species,
        samples: Vec::new(),
    };
    writeln!(stats.out, "{}", Sample::CSV_HEADER).at(&stats.path)?;

    let traj_path = dir.join("trajectory.txt");
    let mut traj = TrajectoryWriter {
        out: create(&traj_path)?,
        path: traj_path,
        interval: config.sample_interval,
        frames: 0,
    };
    writeln!(traj.out, "{}", trajectory_header(&config.dims, config.sample_interval))
        .at(&traj.path)?;

    let mut snaps = SnapshotWriter {
        dir: dir.clone(),
        interval: config.snapshot_interval,
        render: config.render,
        written: Vec::new(),
    };

    let summary = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut stats, &mut traj];
        if config.snapshot_interval > 0 {
            observers.push(&mut snaps);
        }
        run(
            engine.as_mut(),
            &mut lattice,
            &config.model,
            config.n_steps,
            &mut observers,
        )
    };
    // the final state is persisted even when the run failed part way
    let final_path = dir.join("final_lattice.txt");
    let mut out = create(&final_path)?;
    writeln!(
        out,
        "# L={} M={} step={}",
        config.dims.l(),
        config.dims.m(),
        summary.as_ref().map_or(0, |s| s.steps)
    )
    .and_then(|_| writeln!(out, "{}", lattice.to_frame_line()))
    .and_then(|_| out.flush())
    .at(&final_path)?;
    let summary = summary?;

    Ok(RunReport {
        summary,
        samples: stats.samples,
        trajectory_frames: traj.frames,
        snapshots: snaps.written,
        final_lattice: lattice,
        initial_count_a,
    })
}

/// Timing of one engine configuration, medians over repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineTiming {
    pub engine: EngineKind,
    pub lanes: usize,
    pub attempted_per_step: u64,
    pub wall_seconds: f64,
    pub attempts_per_second: f64,
    /// The A count matched the initial lattice after every timed run.
    pub conserved: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub n_sites: usize,
    pub n_steps: u64,
    pub repeats: usize,
    pub kawasaki: EngineTiming,
    pub mpkk: Vec<EngineTiming>,
}

impl BenchReport {
    /// MPKK throughput over sequential Kawasaki throughput.
    pub fn speedup(&self, timing: &EngineTiming) -> f64 {
        timing.attempts_per_second / self.kawasaki.attempts_per_second
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "engine,lanes,n_sites,n_steps,wall_seconds,attempts_per_second,speedup")?;
        for t in std::iter::once(&self.kawasaki).chain(&self.mpkk) {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.engine.name(),
                t.lanes,
                self.n_sites,
                self.n_steps,
                t.wall_seconds,
                t.attempts_per_second,
                self.speedup(t)
            )?;
        }
        Ok(())
    }
}

fn time_engine(config: &RunConfig, kind: EngineKind, lanes: usize, repeats: usize) -> Result<EngineTiming> {
    let mut walls = Vec::with_capacity(repeats);
    let mut rates = Vec::with_capacity(repeats);
    let mut attempted_per_step = 0;
    let mut conserved = true;
    for _ in 0..repeats {
        let mut lattice = config.initial_lattice()?;
        let count_a = lattice.count_a();
        let mut engine = config.build_engine(kind, lanes)?;
        // warmup
        engine.step(&mut lattice, &config.model)?;
        let mut attempted = 0;
        let t0 = Instant::now();
        for _ in 0..config.n_steps {
            attempted += engine.step(&mut lattice, &config.model)?.attempted;
        }
        let wall = t0.elapsed().as_secs_f64().max(1e-9);
        conserved &= lattice.count_a() == count_a && lattice.is_consistent();
        attempted_per_step = attempted / config.n_steps.max(1);
        walls.push(wall);
        rates.push(attempted as f64 / wall);
    }
    Ok(EngineTiming {
        engine: kind,
        lanes,
        attempted_per_step,
        wall_seconds: median(&walls),
        attempts_per_second: median(&rates),
        conserved,
    })
}

/// Times sequential Kawasaki and MPKK at each lane count over
/// `config.n_steps` steps after one warmup step, `repeats` (at least 3)
/// times each, reporting medians.
pub fn run_benchmark(config: &RunConfig, lanes: &[usize], repeats: usize) -> Result<BenchReport> {
    if !validate_dims(config.dims).is_valid() {
        let s = suggest_dims(config.dims.l(), config.dims.m())?;
        return Err(Error::NoCoverage {
            l: config.dims.l(),
            m: config.dims.m(),
            suggested_l: s.l(),
            suggested_m: s.m(),
        });
    }
    if config.n_steps == 0 {
        return Err(Error::Config("benchmark needs n_steps >= 1".into()));
    }
    let repeats = repeats.max(3);
    let kawasaki = time_engine(config, EngineKind::Kawasaki, 1, repeats)?;
    let mpkk = lanes
        .iter()
        .map(|&l| time_engine(config, EngineKind::Mpkk, l.max(1), repeats))
        .collect::<Result<_>>()?;
    Ok(BenchReport {
        n_sites: config.dims.n(),
        n_steps: config.n_steps,
        repeats,
        kawasaki,
        mpkk,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalyzeMode {
    Clusters,
    Ffn,
    ImageFfn,
}

impl AnalyzeMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clusters" => Some(Self::Clusters),
            "ffn" => Some(Self::Ffn),
            "image_ffn" => Some(Self::ImageFfn),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AnalyzeOptions {
    pub species: SiteType,
    pub delta_col: u8,
    pub neighborhood: RasterNeighborhood,
    /// `Some(seed)` draws random neighbours; `None` reports the exact
    /// expectation over draws.
    pub seed: Option<u64>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            species: SiteType::A,
            delta_col: DEFAULT_DELTA_COL,
            neighborhood: RasterNeighborhood::Moore8,
            seed: None,
        }
    }
}

/// Frames of a trajectory or final-lattice file, with their steps.
pub fn read_frames(path: &Path) -> Result<Vec<(u64, Lattice)>> {
    let file = File::open(path).at(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::MalformedFrame {
        line: 1,
        reason: "empty file".into(),
    })?;
    let header = header.at(path)?;
    let fields: BTreeMap<&str, &str> = header
        .strip_prefix('#')
        .ok_or_else(|| Error::MalformedFrame {
            line: 1,
            reason: "expected a '# L=.. M=..' header".into(),
        })?
        .split_whitespace()
        .filter_map(|f| f.split_once('='))
        .collect();
    let field = |k: &str| -> Result<u64> {
        fields
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::MalformedFrame {
                line: 1,
                reason: format!("header lacks a numeric {k}"),
            })
    };
    let dims = LatticeDims::new(field("L")? as usize, field("M")? as usize)?;
    let (first, interval) = match fields.get("step") {
        Some(_) => (field("step")?, 0),
        None => (0, field("sample_interval")?),
    };
    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line = line.at(path)?;
        if line.is_empty() {
            continue;
        }
        let lattice = Lattice::from_frame_line(dims, &line, idx + 1)?;
        frames.push((first + interval * frames.len() as u64, lattice));
    }
    Ok(frames)
}

fn frame_step(path: &Path) -> Option<u64> {
    path.file_stem()?
        .to_str()?
        .strip_prefix("frame_")?
        .parse()
        .ok()
}

/// Snapshot files under `path` (a directory of `frame_<step>.pgm` files or a
/// single image), ordered by step.
pub fn snapshot_files(path: &Path) -> Result<Vec<(u64, PathBuf)>> {
    if path.is_dir() {
        let mut out = Vec::new();
        for entry in fs::read_dir(path).at(path)? {
            let p = entry.at(path)?.path();
            if let (Some(step), Some(_)) = (frame_step(&p), ImageFormat::from_path(&p)) {
                out.push((step, p));
            }
        }
        out.sort();
        Ok(out)
    } else {
        Ok(vec![(frame_step(path).unwrap_or(0), path.to_path_buf())])
    }
}

/// Recomputes an observable per frame; returns `(step, value)` rows.
pub fn run_analyze(path: &Path, mode: AnalyzeMode, opts: &AnalyzeOptions) -> Result<Vec<(u64, f64)>> {
    let stream = |step: u64| opts.seed.map(|s| RngStream::new(s).derive_str("analyze").derive(step));
    match mode {
        AnalyzeMode::Clusters | AnalyzeMode::Ffn => read_frames(path)?
            .into_iter()
            .map(|(step, lattice)| {
                let value = match mode {
                    AnalyzeMode::Clusters => {
                        let dist = cluster_size_distribution(&hoshen_kopelman(&lattice, opts.species));
                        average_cluster_size(&dist).unwrap_or(f64::NAN)
                    }
                    _ => match stream(step) {
                        Some(mut rng) => fraction_first_neighbors(&lattice, &mut rng),
                        None => fraction_first_neighbors_exact(&lattice),
                    },
                };
                Ok((step, value))
            })
            .collect(),
        AnalyzeMode::ImageFfn => snapshot_files(path)?
            .into_iter()
            .map(|(step, p)| {
                let snap = read_image(&p)?;
                let value = match stream(step) {
                    Some(mut rng) => image_ffn(&snap, opts.delta_col, opts.neighborhood, &mut rng)?,
                    None => image_ffn_exact(&snap, opts.delta_col, opts.neighborhood)?,
                };
                Ok((step, value))
            })
            .collect(),
    }
}

pub fn write_analysis_csv(rows: &[(u64, f64)], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "step,value")?;
    for (step, value) in rows {
        writeln!(out, "{step},{value}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "L=9\nM=7\nfraction_A=0.5\nomega_AB=0.8\nn_steps=1000\nseed=42";

    #[test]
    fn parses_with_defaults() {
        let c = parse_config(BASIC).unwrap();
        assert_eq!(c.engine, EngineKind::Mpkk);
        assert_eq!(c.sample_interval, 100);
        assert_eq!(c.snapshot_interval, 0);
        assert_eq!(c.render.target_width, 9);
        assert_eq!(c.render.delta_col, 35);
        assert_eq!(c.lanes, 1);
        assert_eq!(c.start, StartKind::Random);
        assert_eq!(c.model.omega_ab(), 0.8);
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "# a run\nL = 9  # row length\nM=7\n\nfraction_A=0.5\nomega_AB=0.8\nn_steps=10\nseed=1\nengine=kawasaki\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.engine, EngineKind::Kawasaki);
        assert_eq!(c.n_steps, 10);
    }

    #[test]
    fn invalid_coverage_suggests_dims() {
        let text = BASIC.replace("L=9", "L=8");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("L=9 M=7"), "{err}");
        let ok = format!("{text}\nengine=kawasaki");
        assert!(parse_config(&ok).is_ok());
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = parse_config(&format!("{BASIC}\nfoo=1")).unwrap_err().to_string();
        assert!(err.contains("foo"));
        for key in ["L", "M", "fraction_A", "omega_AB", "n_steps", "seed"] {
            let text: String = BASIC
                .lines()
                .filter(|l| !l.starts_with(&format!("{key}=")))
                .collect::<Vec<_>>()
                .join("\n");
            let err = parse_config(&text).unwrap_err().to_string();
            assert!(err.contains(key), "{key}: {err}");
        }
        assert!(parse_config(&format!("{BASIC}\nseed=2")).is_err());
        assert!(parse_config(&format!("{BASIC}\nsample_interval=0")).is_err());
        assert!(parse_config(&format!("{BASIC}\ndelta_col=0")).is_err());
    }

    #[test]
    fn gibbs_energies_in_config() {
        let text = BASIC.replace("omega_AB=0.8", "g_AA=-2\ng_AB=0.5\ng_BB=-1");
        assert_eq!(parse_config(&text).unwrap().model.omega_ab(), 2.0);
        let both = format!("{text}\nomega_AB=2");
        assert!(parse_config(&both).is_ok());
        let clash = format!("{text}\nomega_AB=1");
        assert!(parse_config(&clash).is_err());
        let partial = BASIC.replace("omega_AB=0.8", "g_AA=-2");
        assert!(parse_config(&partial).is_err());
    }

    #[test]
    fn zero_steps_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("{}\noutput_dir={}", BASIC.replace("n_steps=1000", "n_steps=0"), dir.path().display());
        let report = run_simulation(&parse_config(&text).unwrap()).unwrap();
        let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,"));
        assert_eq!(report.trajectory_frames, 1);
    }

    #[test]
    fn analysis_modes_on_simple_frames() {
        let dir = tempfile::tempdir().unwrap();
        let d = LatticeDims::new(9, 7).unwrap();
        let path = dir.path().join("t.txt");
        let mut single = vec![SiteType::B; 63];
        single[10] = SiteType::A;
        let single = Lattice::from_sites(d, single).unwrap();
        fs::write(
            &path,
            format!(
                "{}\n{}\n{}\n",
                trajectory_header(&d, 5),
                Lattice::uniform(d, SiteType::A).to_frame_line(),
                single.to_frame_line()
            ),
        )
        .unwrap();
        let opts = AnalyzeOptions::default();
        let ffn = run_analyze(&path, AnalyzeMode::Ffn, &opts).unwrap();
        assert_eq!(ffn[0], (0, 1.0));
        assert_eq!(ffn[1].0, 5);
        let clusters = run_analyze(&path, AnalyzeMode::Clusters, &opts).unwrap();
        assert_eq!(clusters[1], (5, 1.0));
        let stochastic = AnalyzeOptions { seed: Some(3), ..opts };
        assert_eq!(run_analyze(&path, AnalyzeMode::Ffn, &stochastic).unwrap()[0].1, 1.0);
        let mut out = Vec::new();
        write_analysis_csv(&clusters, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "step,value\n0,63\n5,1\n");
    }

    #[test]
    fn malformed_frame_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let d = LatticeDims::new(9, 7).unwrap();
        let path = dir.path().join("t.txt");
        let good = Lattice::uniform(d, SiteType::A).to_frame_line();
        fs::write(&path, format!("{}\n{good}\n{}\n", trajectory_header(&d, 1), &good[..60])).unwrap();
        match run_analyze(&path, AnalyzeMode::Ffn, &AnalyzeOptions::default()) {
            Err(Error::MalformedFrame { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = good.replacen('A', "x", 1);
        fs::write(&path, format!("{}\n{bad}\n", trajectory_header(&d, 1))).unwrap();
        assert!(matches!(
            run_analyze(&path, AnalyzeMode::Clusters, &AnalyzeOptions::default()),
            Err(Error::MalformedFrame { line: 2, .. })
        ));
    }

    #[test]
    fn bench_csv_columns() {
        let t = |engine, lanes, aps| EngineTiming {
            engine,
            lanes,
            attempted_per_step: 63,
            wall_seconds: 1.0,
            attempts_per_second: aps,
            conserved: true,
        };
        let report = BenchReport {
            n_sites: 63,
            n_steps: 10,
            repeats: 3,
            kawasaki: t(EngineKind::Kawasaki, 1, 100.0),
            mpkk: vec![t(EngineKind::Mpkk, 4, 250.0)],
        };
        assert_eq!(report.speedup(&report.mpkk[0]), 2.5);
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.ends_with("mpkk,4,63,10,1,250,2.5\n"), "{text}");
    }
}
