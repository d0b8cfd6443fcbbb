//! Command-line front end.
//!
//! Every subcommand produces one or more comma-separated tables with a
//! header row. Units are carried in the column names. Tables go to stdout,
//! and with `--out <dir>` each one is also written to `<dir>/<name>.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bch::{make_code, BchError};
use crate::bits::Bits;
use crate::enroll::{self, EnrollConfig, EnrollError, EnrollmentRecord};
use crate::fuzzy::{fe_gen, key_failure_prob, residual_min_entropy, FeConfig};
use crate::layout;
use crate::powersim::{self, cold_start_traced, CostTable, PowerModel, Trace};
use crate::protocol::{
    self, frames_per_attempt, prover_update, Channel, FirmwareImage, Nvm, PowerEnv, ProtocolError, ProverConfig,
    ProverDb, TamperPolicy, TokenSim, UpdateOutcome,
};
use crate::puf::{self, mix, DumpSet, PufDevice, PufError, SynthParams};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Enroll(#[from] EnrollError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Puf(#[from] PufError),
    #[error(transparent)]
    Bch(#[from] BchError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceSource {
    Synthetic,
    Dump(PathBuf),
}

impl FromStr for DeviceSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "synthetic" => Ok(DeviceSource::Synthetic),
            Some(("dump", path)) if !path.is_empty() => Ok(DeviceSource::Dump(path.into())),
            _ => Err(format!("expected `synthetic` or `dump:<path>`, got {s:?}")),
        }
    }
}

/// `n,k,t`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeArg {
    pub n: usize,
    pub k: usize,
    pub t: usize,
}

impl FromStr for CodeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad code {s:?}: {e}"))?;
        match parts[..] {
            [n, k, t] => Ok(CodeArg { n, k, t }),
            _ => Err(format!("expected n,k,t, got {s:?}")),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "secucode", version, about = "PUF-keyed firmware update simulator for RFID sensor tokens")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enroll devices and report CRP-block efficiency.
    Enroll(EnrollArgs),
    /// Run end-to-end update sessions under the power model.
    Update(UpdateArgs),
    /// Reliability, bias, failure-rate and entropy tables.
    Analyze(AnalyzeArgs),
    /// Enumerate responses consistent with observed helper data.
    Attack(AttackArgs),
    /// Cold-start success, latency and charge-budget tables.
    Power(PowerArgs),
    /// Capture readouts of a synthetic device into a dump file.
    DumpExport(DumpExportArgs),
    /// Validate a dump file and summarise its readouts.
    DumpImport(DumpImportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// `synthetic` or `dump:<path>`
    #[arg(long, default_value = "synthetic")]
    pub device: DeviceSource,
    /// Directory for CSV tables and other artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CodeOpts {
    /// BCH parameters as n,k,t
    #[arg(long, default_value = "31,16,3")]
    pub code: CodeArg,
    #[arg(long, default_value_t = 8)]
    pub blocks: usize,
}

impl CodeOpts {
    fn fe(&self) -> Result<FeConfig, CliError> {
        if self.blocks == 0 {
            return Err(usage("--blocks must be positive"));
        }
        let CodeArg { n, k, t } = self.code;
        Ok(FeConfig::new(make_code(n, k, t)?, self.blocks))
    }
}

#[derive(Args, Debug, Clone)]
pub struct EnrollArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of synthetic devices.
    #[arg(long, default_value_t = 20)]
    pub devices: usize,
    /// Share of strongly biased cells in synthetic devices.
    #[arg(long, default_value_t = 0.93)]
    pub stable_frac: f64,
    /// Minority probability of a stable cell at 25 °C.
    #[arg(long, default_value_t = 0.002)]
    pub noisy_epsilon: f64,
}

#[derive(Args, Debug, Clone)]
pub struct UpdateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub code: CodeOpts,
    #[arg(long, default_value_t = 20.0)]
    pub distance_cm: f64,
    #[arg(long, default_value_t = 30.0)]
    pub sleep_ms: f64,
    /// Demo image name or path to an image JSON file.
    #[arg(long, default_value = "accelerometer")]
    pub image: String,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value = "none")]
    pub tamper: TamperPolicy,
    #[arg(long, default_value_t = 25.0)]
    pub temperature: f64,
    /// Enrollment record to use instead of enrolling on the fly.
    #[arg(long)]
    pub enrollment: Option<PathBuf>,
    /// Unlimited power: no charging, brownouts or latency.
    #[arg(long)]
    pub unpowered: bool,
    #[arg(long)]
    pub reader_split: bool,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub code: CodeOpts,
    #[arg(long, default_value_t = 20)]
    pub devices: usize,
    /// Readouts per device and temperature.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
}

#[derive(Args, Debug, Clone)]
pub struct AttackArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "7,4,1")]
    pub code: CodeArg,
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    /// `none` or `helper` (flip one syndrome bit before enumerating).
    #[arg(long, default_value = "none")]
    pub tamper: TamperPolicy,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PowerArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "20,40,60,80")]
    pub distance_cm: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,10,30,50")]
    pub sleep_ms: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Distance for the single-charge budget histogram.
    #[arg(long, default_value_t = 50.0)]
    pub budget_distance_cm: f64,
    /// Also emit the voltage trace of one cold start at the first setting.
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DumpExportArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub device_id: u32,
    #[arg(long, value_delimiter = ',', default_value = "0,25,40")]
    pub temps: Vec<f64>,
    /// Readouts per temperature.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct DumpImportArgs {
    /// `dump:<path>`
    #[arg(long)]
    pub device: DeviceSource,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Table {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything a subcommand produced.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub exit_code: i32,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Tables in print order, each preceded by a `# name` line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tables.iter().enumerate() {
            if i > 0 {
                s.push('\n');
            }
            let _ = writeln!(s, "# {}", t.name);
            s.push_str(&t.to_csv());
        }
        s
    }
}

fn f(x: f64, digits: usize) -> String {
    format!("{x:.digits$}")
}

/// Three significant figures, as efficiency percentages are quoted.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (2 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn write_tables(report: &Report, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(dir) = out {
        ensure_dir(dir)?;
        for t in &report.tables {
            write_file(&dir.join(format!("{}.csv", t.name)), t.to_csv().as_bytes())?;
        }
    }
    Ok(())
}

fn load_dump(path: &Path) -> Result<DumpSet, CliError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let dump = DumpSet::read_from(std::io::BufReader::new(file))?;
    dump.validate()?;
    Ok(dump)
}

/// An empirical device model: each cell's power-up probability is its
/// observed share of ones, preferring readouts taken at 25 °C.
pub fn device_from_dump(dump: &DumpSet, rng_seed: u64) -> Result<PufDevice, CliError> {
    let nominal = dump.at(puf::NOMINAL_TEMP_C);
    let readouts: Vec<&Bits> = if nominal.is_empty() {
        dump.readouts.iter().map(|r| &r.bits).collect()
    } else {
        nominal.iter().map(|r| &r.bits).collect()
    };
    if readouts.is_empty() {
        return Err(PufError::EmptyInput.into());
    }
    let cells = readouts[0].len();
    let mut ones = vec![0u32; cells];
    for r in &readouts {
        for (o, b) in ones.iter_mut().zip(r.iter()) {
            *o += b as u32;
        }
    }
    let n = readouts.len() as f32;
    let probs = ones.into_iter().map(|o| o as f32 / n).collect();
    Ok(PufDevice::from_probs(dump.device_id, probs, rng_seed))
}

fn synthetic(seed: u64, index: u32, stable_frac: f64, eps: f64) -> Result<PufDevice, CliError> {
    let params = SynthParams {
        device_id: index,
        seed: mix(seed, index as u64),
        stable_frac,
        noisy_epsilon: eps,
        ..SynthParams::default()
    };
    Ok(puf::synth_device_with(&params)?)
}

fn default_synthetic(seed: u64, index: u32) -> Result<PufDevice, CliError> {
    let d = SynthParams::default();
    synthetic(seed, index, d.stable_frac, d.noisy_epsilon)
}

/// Enrollment of one device, from a dump when given one.
fn enroll_source(source: &DeviceSource, dev: &PufDevice, seed: u64) -> Result<EnrollmentRecord, CliError> {
    let cfg = EnrollConfig::default();
    Ok(match source {
        DeviceSource::Synthetic => enroll::enroll_device(dev, &cfg, seed)?,
        DeviceSource::Dump(path) => {
            let dump = load_dump(path)?;
            enroll::enroll_dumps(dump.device_id, &dump, &dump, &cfg)?
        }
    })
}

fn devices(common: &Common, count: usize) -> Result<Vec<PufDevice>, CliError> {
    match &common.device {
        DeviceSource::Synthetic => (0..count as u32).map(|i| default_synthetic(common.seed, i)).collect(),
        DeviceSource::Dump(path) => Ok(vec![device_from_dump(&load_dump(path)?, common.seed)?]),
    }
}

pub fn cmd_enroll(a: &EnrollArgs) -> Result<Report, CliError> {
    if a.devices == 0 {
        return Err(usage("--devices must be positive"));
    }
    let devs = match &a.common.device {
        DeviceSource::Synthetic => (0..a.devices as u32)
            .map(|i| synthetic(a.common.seed, i, a.stable_frac, a.noisy_epsilon))
            .collect::<Result<Vec<_>, _>>()?,
        DeviceSource::Dump(_) => devices(&a.common, 1)?,
    };
    let records = devs
        .par_iter()
        .map(|d| enroll_source(&a.common.device, d, mix(a.common.seed, 0xE000 + d.device_id as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut t = Table::new(
        "enrollment",
        &[
            "device_id",
            "stable_bytes",
            "balanced_bytes",
            "crp_blocks",
            "crp_bits",
            "efficiency_pct",
        ],
    );
    let mut db = ProverDb::default();
    for r in &records {
        t.push(vec![
            r.device_id.to_string(),
            r.meta.stable_bytes.to_string(),
            r.meta.balanced_bytes.to_string(),
            r.map.len().to_string(),
            r.map.available_bits().to_string(),
            sig3(100.0 * r.efficiency()),
        ]);
        db.enroll(r.clone())?;
    }
    if let Some(dir) = &a.common.out {
        ensure_dir(dir)?;
        for r in &records {
            let path = dir.join(format!("enrollment_{}.json", r.device_id));
            r.save(&path).map_err(|e| match e {
                EnrollError::Io(source) => CliError::Io { path, source },
                e => e.into(),
            })?;
        }
        db.save(dir.join("prover_db.json"))?;
    }
    Ok(Report {
        tables: vec![t],
        exit_code: 0,
    })
}

pub fn load_image(name: &str) -> Result<FirmwareImage, CliError> {
    if let Some(img) = protocol::demo_image(name) {
        return Ok(img);
    }
    let path = Path::new(name);
    if !path.exists() {
        let names: Vec<&str> = protocol::demo_images().iter().map(|(n, _)| *n).collect();
        return Err(usage(format!(
            "no demo image or file named {name:?}; demo images: {}",
            names.join(", ")
        )));
    }
    let img = FirmwareImage::load(path)?;
    img.check_segments()?;
    Ok(img)
}

/// Most frequent outcome; ties go to the earlier variant.
pub fn majority_outcome(outcomes: &[UpdateOutcome]) -> Option<UpdateOutcome> {
    let mut counts = BTreeMap::new();
    for o in outcomes {
        *counts.entry(*o).or_insert(0usize) += 1;
    }
    UpdateOutcome::ALL
        .iter()
        .filter_map(|o| counts.get(o).map(|&c| (c, *o)))
        .fold(None, |best: Option<(usize, UpdateOutcome)>, (c, o)| match best {
            Some((bc, _)) if bc >= c => best,
            _ => Some((c, o)),
        })
        .map(|(_, o)| o)
}

struct TrialRow {
    tamper: String,
    outcome: UpdateOutcome,
    attempts: usize,
    latency_ms: f64,
    frames: usize,
    commits: usize,
    foreign_commit: bool,
    transcript: String,
}

pub fn cmd_update(a: &UpdateArgs) -> Result<Report, CliError> {
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    if !(a.distance_cm > 0.0) || !(a.sleep_ms >= 0.0) {
        return Err(usage("--distance-cm must be positive and --sleep-ms non-negative"));
    }
    if !(puf::TEMP_MIN_C..=puf::TEMP_MAX_C).contains(&a.temperature) {
        return Err(usage(format!(
            "--temperature must lie in {}..={} °C",
            puf::TEMP_MIN_C,
            puf::TEMP_MAX_C
        )));
    }
    let fe = a.code.fe()?;
    if fe.key_bits() != 128 || fe.response_bits() > enroll::BLOCK_BITS {
        return Err(usage(format!(
            "update needs a 128-bit key from at most {} response bits; {} blocks of BCH({},{},{}) give {} key bits from {}",
            enroll::BLOCK_BITS,
            fe.blocks,
            fe.code.n,
            fe.code.k,
            fe.code.t,
            fe.key_bits(),
            fe.response_bits()
        )));
    }
    let image = load_image(&a.image)?;
    let seed = a.common.seed;
    let dev = devices(&a.common, 1)?.remove(0);
    let record = match &a.enrollment {
        Some(path) => {
            let r = EnrollmentRecord::load(path)?;
            if r.device_id != dev.device_id {
                return Err(usage(format!(
                    "enrollment is for device {} but the device is {}",
                    r.device_id, dev.device_id
                )));
            }
            r
        }
        None => enroll_source(&a.common.device, &dev, mix(seed, 0xE000 + dev.device_id as u64))?,
    };
    let nvm = Nvm::new(record.map.clone());
    let mut db = ProverDb::default();
    db.enroll(record)?;
    let cfg = ProverConfig {
        fe: fe.clone(),
        reader_split: a.reader_split,
        ..ProverConfig::default()
    };
    let frames = frames_per_attempt(&image, &cfg);

    // an earlier, clean session the adversary recorded
    let recorded = if matches!(a.tamper, TamperPolicy::Inject | TamperPolicy::Replay | TamperPolicy::Random) {
        let mut t = TokenSim::new(dev.clone(), fe.clone(), nvm.clone(), puf::NOMINAL_TEMP_C, mix(seed, 0x5EC0));
        prover_update(&db, dev.device_id, &image, &mut t, &cfg)?.transcript
    } else {
        Vec::new()
    };

    let transcript_dir = a.common.out.as_ref().map(|d| d.join("transcripts"));
    if let Some(d) = &transcript_dir {
        ensure_dir(d)?;
    }
    let flat = image.flatten();
    let rows = (0..a.trials as u64)
        .into_par_iter()
        .map(|i| -> Result<TrialRow, CliError> {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x7A00_0000 + i));
            let tamper = a.tamper.draw(&mut rng, &fe.code, fe.blocks, frames, &recorded);
            let mut token = TokenSim::new(dev.clone(), fe.clone(), nvm.clone(), a.temperature, mix(seed, i));
            if !a.unpowered {
                token = token.with_power(PowerEnv::new(a.distance_cm, a.sleep_ms), mix(seed, 0xB000_0000 + i));
            }
            let mut ch = Channel::new(token, tamper.clone(), fe.code.clone());
            let rep = prover_update(&db, dev.device_id, &image, &mut ch, &cfg)?;
            let transcript = match &transcript_dir {
                Some(d) => {
                    let path = d.join(format!("trial_{i}.txt"));
                    write_file(&path, protocol::transcript_to_string(&rep.transcript).as_bytes())?;
                    path.display().to_string()
                }
                None => String::new(),
            };
            let commits = &ch.inner.commits;
            Ok(TrialRow {
                tamper: format!("{tamper:?}").split([' ', '(']).next().unwrap_or_default().to_string(),
                outcome: rep.outcome,
                attempts: rep.attempts,
                latency_ms: ch.inner.elapsed_ms(),
                frames: rep.transcript.len(),
                commits: commits.len(),
                foreign_commit: commits.iter().any(|c| !flat.starts_with(&c.bytes)),
                transcript,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut t = Table::new(
        "sessions",
        &[
            "trial",
            "tamper",
            "outcome",
            "exit_code",
            "attempts",
            "latency_ms",
            "frames_sent",
            "commits",
            "foreign_commit",
            "transcript",
        ],
    );
    for (i, r) in rows.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            r.tamper.clone(),
            r.outcome.name().into(),
            r.outcome.exit_code().to_string(),
            r.attempts.to_string(),
            f(r.latency_ms, 3),
            r.frames.to_string(),
            r.commits.to_string(),
            r.foreign_commit.to_string(),
            r.transcript.clone(),
        ]);
    }
    let outcomes: Vec<UpdateOutcome> = rows.iter().map(|r| r.outcome).collect();
    let mut s = Table::new("outcomes", &["outcome", "exit_code", "sessions", "share"]);
    for o in UpdateOutcome::ALL {
        let c = outcomes.iter().filter(|&&x| x == o).count();
        s.push(vec![
            o.name().into(),
            o.exit_code().to_string(),
            c.to_string(),
            f(c as f64 / outcomes.len() as f64, 4),
        ]);
    }
    let committed: Vec<f64> = rows
        .iter()
        .filter(|r| r.outcome == UpdateOutcome::Committed)
        .map(|r| r.latency_ms)
        .collect();
    let mut m = Table::new("update_summary", &["metric", "value", "unit"]);
    m.push(vec!["image_bytes".into(), flat.len().to_string(), "B".into()]);
    m.push(vec!["distance".into(), a.distance_cm.to_string(), "cm".into()]);
    m.push(vec!["sleep".into(), a.sleep_ms.to_string(), "ms".into()]);
    m.push(vec![
        "mean_commit_latency".into(),
        if committed.is_empty() {
            "nan".into()
        } else {
            f(committed.iter().sum::<f64>() / committed.len() as f64, 3)
        },
        "ms".into(),
    ]);
    m.push(vec![
        "foreign_commits".into(),
        rows.iter().filter(|r| r.foreign_commit).count().to_string(),
        "sessions".into(),
    ]);
    let exit_code = majority_outcome(&outcomes).map_or(0, |o| o.exit_code());
    Ok(Report {
        tables: vec![t, s, m],
        exit_code,
    })
}

pub const ANALYZE_TEMPS_C: [f64; 9] = [-15.0, 0.0, 10.0, 20.0, 25.0, 30.0, 40.0, 60.0, 80.0];

fn puf_region(bits: &Bits) -> Bits {
    bits.slice(layout::PUF_START * 8, layout::PUF_END * 8)
}

fn histogram(t: &mut Table, stage: &str, values: &[f64], lo: f64, width: f64, bins: usize) {
    let mut counts = vec![0usize; bins];
    for &v in values {
        // nudge values sitting exactly on an edge into the upper bin
        let i = ((v - lo) / width + 1e-9).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[i] += 1;
    }
    for (i, c) in counts.into_iter().enumerate() {
        let a = lo + i as f64 * width;
        t.push(vec![stage.into(), f(a, 4), f(a + width, 4), c.to_string()]);
    }
}

fn config_label(fe: &FeConfig) -> String {
    format!("{}xBCH_{}_{}_{}", fe.blocks, fe.code.n, fe.code.k, fe.code.t)
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<Report, CliError> {
    if a.devices == 0 || a.trials == 0 {
        return Err(usage("--devices and --trials must be positive"));
    }
    let fe = a.code.fe()?;
    let seed = a.common.seed;
    let devs = devices(&a.common, a.devices)?;

    struct DeviceStats {
        raw_ber: Vec<f64>,
        enrolled_ber: Vec<f64>,
        bias_before: f64,
        bias_after: f64,
        efficiency: f64,
    }
    let stats = devs
        .par_iter()
        .map(|dev| -> Result<DeviceStats, CliError> {
            let dseed = mix(seed, 0xA000 + dev.device_id as u64);
            let record = enroll_source(&a.common.device, dev, mix(seed, 0xE000 + dev.device_id as u64))?;
            let nominal = DumpSet::capture(dev, &[puf::NOMINAL_TEMP_C], a.trials, mix(dseed, 1))?;
            let nominal_bits: Vec<Bits> = nominal.readouts.iter().map(|r| puf_region(&r.bits)).collect();
            let reference = majority(&nominal_bits);
            let bias_before = puf::bias(&nominal_bits)?;
            let bias_after = puf::bias(&record.references)?;
            let mut raw_ber = Vec::new();
            let mut enrolled_ber = Vec::new();
            for (ti, &temp) in ANALYZE_TEMPS_C.iter().enumerate() {
                let dump = DumpSet::capture(dev, &[temp], a.trials, mix(dseed, 100 + ti as u64))?;
                let full: Vec<Bits> = dump.readouts.into_iter().map(|r| r.bits).collect();
                let region: Vec<Bits> = full.iter().map(puf_region).collect();
                raw_ber.push(puf::ber(&reference, &region)?);
                enrolled_ber.push(enroll::enrolled_ber(&record, &full));
            }
            Ok(DeviceStats {
                raw_ber,
                enrolled_ber,
                bias_before,
                bias_after,
                efficiency: record.efficiency(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = stats.len() as f64;

    let mut ber = Table::new("ber_vs_temperature", &["temperature_C", "raw_ber", "enrolled_ber"]);
    let mut worst_legal = 0.0f64;
    for (ti, &temp) in ANALYZE_TEMPS_C.iter().enumerate() {
        let raw = stats.iter().map(|s| s.raw_ber[ti]).sum::<f64>() / n;
        let enrolled = stats.iter().map(|s| s.enrolled_ber[ti]).sum::<f64>() / n;
        if protocol::LEGAL_TEMP_C.contains(&temp) {
            worst_legal = worst_legal.max(enrolled);
        }
        ber.push(vec![f(temp, 1), f(raw, 6), f(enrolled, 6)]);
    }

    let mut hist = Table::new("bias_histogram", &["stage", "bias_low", "bias_high", "devices"]);
    let before: Vec<f64> = stats.iter().map(|s| s.bias_before).collect();
    let after: Vec<f64> = stats.iter().map(|s| s.bias_after).collect();
    histogram(&mut hist, "before", &before, 0.45, 0.0025, 40);
    histogram(&mut hist, "after", &after, 0.45, 0.0025, 40);

    let mut configs = vec![fe.clone()];
    for (n, k, t, blocks) in [(31, 16, 3, 8), (63, 24, 7, 5)] {
        let c = FeConfig::new(make_code(n, k, t)?, blocks);
        if !configs.iter().any(|x| x.code.n == n && x.code.k == k && x.blocks == blocks) {
            configs.push(c);
        }
    }
    let mut grid: Vec<f64> = (1..=30).map(|i| i as f64 * 0.001).collect();
    grid.push(0.0094);
    grid.sort_by(f64::total_cmp);
    let mut pfail = Table::new("pfail_vs_ber", &["config", "ber", "p_fail"]);
    for c in &configs {
        for &p in &grid {
            pfail.push(vec![config_label(c), f(p, 4), format!("{:.6e}", key_failure_prob(p, c))]);
        }
    }

    let mut ent = Table::new("residual_entropy", &["bias", "residual_min_entropy_bits"]);
    let mut biases: Vec<f64> = (0..=40).map(|i| 0.40 + i as f64 * 0.005).collect();
    biases.push(0.499);
    biases.sort_by(f64::total_cmp);
    for b in biases {
        ent.push(vec![f(b, 4), f(residual_min_entropy(b, &fe), 3)]);
    }

    let mut m = Table::new("analysis_summary", &["metric", "value", "unit"]);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    m.push(vec!["devices".into(), stats.len().to_string(), "count".into()]);
    m.push(vec!["mean_bias_before".into(), f(mean(&before), 5), "fraction".into()]);
    m.push(vec!["mean_bias_after".into(), f(mean(&after), 5), "fraction".into()]);
    m.push(vec!["max_enrolled_ber_0_40C".into(), f(worst_legal, 6), "fraction".into()]);
    m.push(vec![
        "p_fail_at_0.0094".into(),
        format!("{:.6e}", key_failure_prob(0.0094, &fe)),
        "probability".into(),
    ]);
    m.push(vec!["entropy_at_0.499".into(), f(residual_min_entropy(0.499, &fe), 3), "bits".into()]);
    m.push(vec!["entropy_at_0.5".into(), f(residual_min_entropy(0.5, &fe), 3), "bits".into()]);
    let eff: Vec<f64> = stats.iter().map(|s| 100.0 * s.efficiency).collect();
    m.push(vec!["mean_efficiency".into(), sig3(mean(&eff)), "pct".into()]);
    Ok(Report {
        tables: vec![ber, hist, pfail, ent, m],
        exit_code: 0,
    })
}

fn majority(readouts: &[Bits]) -> Bits {
    let len = readouts[0].len();
    let mut ones = vec![0usize; len];
    for r in readouts {
        for (o, b) in ones.iter_mut().zip(r.iter()) {
            *o += b as usize;
        }
    }
    Bits::from_bools(ones.into_iter().map(|o| 2 * o > readouts.len()).collect())
}

/// Largest code length the attack enumerates exhaustively.
pub const ATTACK_ENUMERATION_MAX_N: usize = 20;

pub fn cmd_attack(a: &AttackArgs) -> Result<Report, CliError> {
    if a.blocks == 0 {
        return Err(usage("--blocks must be positive"));
    }
    if !matches!(a.tamper, TamperPolicy::None | TamperPolicy::Helper) {
        return Err(usage("attack supports --tamper none or helper"));
    }
    let fe = CodeOpts {
        code: a.code,
        blocks: a.blocks,
    }
    .fe()?;
    let code = &fe.code;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let response = Bits::from_bools((0..fe.response_bits()).map(|_| rng.random()).collect());
    let (_, helper) = fe_gen(&response, &fe).expect("response length matches the config");
    let enumerate = code.n <= ATTACK_ENUMERATION_MAX_N;

    let mut t = Table::new(
        "coset_enumeration",
        &["block", "syndrome_hex", "enumerated", "candidates", "contains_response"],
    );
    let mut per_block = Vec::new();
    for b in 0..fe.blocks {
        let mut s = helper.block(&fe, b);
        if a.tamper == TamperPolicy::Helper {
            s ^= 1 << rng.random_range(0..code.parity_len());
        }
        let truth = response.slice(b * code.n, (b + 1) * code.n).to_u64();
        let (count, contains) = if enumerate {
            let members = code.coset_members(s);
            (members.len() as f64, members.contains(&truth).to_string())
        } else {
            (2f64.powi(code.k as i32), "not_enumerated".to_string())
        };
        per_block.push(count);
        t.push(vec![
            b.to_string(),
            format!("{s:x}"),
            enumerate.to_string(),
            format!("{count}"),
            contains,
        ]);
    }
    let default = FeConfig::default_config();
    let mut m = Table::new("attack_summary", &["metric", "value", "unit"]);
    m.push(vec!["config".into(), config_label(&fe), "".into()]);
    m.push(vec![
        "log2_candidates".into(),
        f(per_block.iter().map(|c| c.log2()).sum::<f64>(), 3),
        "bits".into(),
    ]);
    m.push(vec![
        "default_config".into(),
        config_label(&default),
        "".into(),
    ]);
    m.push(vec![
        "default_log2_complexity".into(),
        (default.code.k * default.blocks).to_string(),
        "bits".into(),
    ]);
    m.push(vec![
        "default_residual_entropy_at_0.499".into(),
        f(residual_min_entropy(0.499, &default), 3),
        "bits".into(),
    ]);
    Ok(Report {
        tables: vec![t, m],
        exit_code: 0,
    })
}

pub fn cmd_power(a: &PowerArgs) -> Result<Report, CliError> {
    if a.trials == 0 || a.distance_cm.is_empty() || a.sleep_ms.is_empty() {
        return Err(usage("need at least one distance, one sleep setting and one trial"));
    }
    if a.distance_cm.iter().any(|&d| !(d > 0.0)) || a.sleep_ms.iter().any(|&s| !(s >= 0.0)) {
        return Err(usage("distances must be positive and sleep settings non-negative"));
    }
    let model = PowerModel::default();
    let costs = CostTable::default();
    let grid: Vec<(f64, f64)> = a
        .distance_cm
        .iter()
        .flat_map(|&d| a.sleep_ms.iter().map(move |&s| (d, s)))
        .collect();
    let rows: Vec<(f64, f64, f64, Option<f64>)> = grid
        .par_iter()
        .map(|&(d, s)| {
            let mut ok = 0usize;
            let mut lat = 0.0;
            for i in 0..a.trials as u64 {
                let r = powersim::cold_start_session(&model, &costs, d, s, mix(a.seed, i));
                if r.success {
                    ok += 1;
                    lat += r.latency_ms.unwrap_or(0.0);
                }
            }
            (d, s, ok as f64 / a.trials as f64, (ok > 0).then(|| lat / ok as f64))
        })
        .collect();
    let mut t = Table::new(
        "cold_start",
        &["distance_cm", "sleep_ms", "trials", "success_rate", "mean_latency_ms"],
    );
    for (d, s, rate, lat) in rows {
        t.push(vec![
            d.to_string(),
            s.to_string(),
            a.trials.to_string(),
            f(rate, 4),
            lat.map_or("nan".into(), |l| f(l, 3)),
        ]);
    }

    let budgets = powersim::sample_budgets(&model, a.budget_distance_cm, a.trials.max(1000), mix(a.seed, 0xB0D6));
    let mut b = Table::new("charge_budget_histogram", &["distance_cm", "kcycles_low", "kcycles_high", "samples"]);
    let width = 50_000.0;
    let max = budgets.iter().cloned().fold(0.0, f64::max);
    let bins = ((max / width).floor() as usize + 1).min(200);
    let mut counts = vec![0usize; bins];
    for &x in &budgets {
        counts[((x / width) as usize).min(bins - 1)] += 1;
    }
    for (i, c) in counts.into_iter().enumerate() {
        b.push(vec![
            a.budget_distance_cm.to_string(),
            f(i as f64 * width / 1000.0, 0),
            f((i + 1) as f64 * width / 1000.0, 0),
            c.to_string(),
        ]);
    }
    let mut tables = vec![t, b];
    if a.trace {
        let mut tr = Trace::default();
        cold_start_traced(&model, &costs, a.distance_cm[0], a.sleep_ms[0], mix(a.seed, 0), &mut tr);
        let mut tt = Table::new("trace", &["time_ms", "v_cap_V", "event"]);
        for line in tr.to_csv().lines().skip(1) {
            tt.push(line.split(',').map(str::to_string).collect());
        }
        tables.push(tt);
    }
    Ok(Report { tables, exit_code: 0 })
}

fn dump_summary(dump: &DumpSet) -> Result<Table, CliError> {
    let mut t = Table::new("dump", &["device_id", "temperature_C", "readouts", "cells", "ones_fraction"]);
    for temp in dump.temperatures() {
        let bits: Vec<Bits> = dump.at(temp).into_iter().map(|r| r.bits.clone()).collect();
        t.push(vec![
            dump.device_id.to_string(),
            f(temp, 2),
            bits.len().to_string(),
            dump.cell_count().to_string(),
            f(puf::bias(&bits)?, 5),
        ]);
    }
    Ok(t)
}

pub fn cmd_dump_export(a: &DumpExportArgs) -> Result<Report, CliError> {
    if a.trials == 0 || a.temps.is_empty() {
        return Err(usage("need at least one temperature and one readout"));
    }
    let dev = default_synthetic(a.seed, a.device_id)?;
    let dump = DumpSet::capture(&dev, &a.temps, a.trials, mix(a.seed, 0xD0))?;
    ensure_dir(&a.out)?;
    let path = a.out.join(format!("device_{}.spuf", a.device_id));
    let mut buf = Vec::new();
    dump.write_to(&mut buf)?;
    write_file(&path, &buf)?;
    Ok(Report {
        tables: vec![dump_summary(&dump)?],
        exit_code: 0,
    })
}

pub fn cmd_dump_import(a: &DumpImportArgs) -> Result<Report, CliError> {
    let DeviceSource::Dump(path) = &a.device else {
        return Err(usage("dump-import needs --device dump:<path>"));
    };
    let dump = load_dump(path)?;
    Ok(Report {
        tables: vec![dump_summary(&dump)?],
        exit_code: 0,
    })
}

/// Runs a parsed command and writes its tables under `--out` if given.
pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let (report, out) = match &cli.command {
        Command::Enroll(a) => (cmd_enroll(a)?, a.common.out.as_deref()),
        Command::Update(a) => (cmd_update(a)?, a.common.out.as_deref()),
        Command::Analyze(a) => (cmd_analyze(a)?, a.common.out.as_deref()),
        Command::Attack(a) => (cmd_attack(a)?, a.out.as_deref()),
        Command::Power(a) => (cmd_power(a)?, a.out.as_deref()),
        Command::DumpExport(a) => (cmd_dump_export(a)?, None),
        Command::DumpImport(a) => (cmd_dump_import(a)?, a.out.as_deref()),
    };
    write_tables(&report, out)?;
    Ok(report)
}

/// Entry point for the binary: parse, run, print, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(report) => {
            print!("{}", report.render());
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
