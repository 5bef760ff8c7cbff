use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{debug, info, warn};

use camo::engine::{parse_chain, Deobfuscator, EngineError, ObfuscationProfile, Recovered};
use camo::features::{
    anova_f_scores, export_csv, extract_features_with_stats, zscore_apply, zscore_fit, select_k_best, Dataset,
    FeatureError,
};
use camo::harness::{
    labels_csv, parse_labels, parse_scenarios, render_overhead, render_report, replay, reports_csv, run_attack,
    run_scenario, synth_corpus, AttackPlan, CaptureSource, HarnessError, LabeledCapture, Scenario, VirtualClock,
};
use camo::models::{ModelError, ModelKind};
use camo::packet::{read_pcap, write_pcap, CaptureFile, PcapError};

/// Reversible traffic obfuscation and the traffic-analysis attack that
/// measures it.
#[derive(Debug, Parser)]
#[command(name = "camo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Obfuscate a pcap and print the overhead table.
    Obfuscate(Transform),
    /// Restore an obfuscated pcap; undecodable packets are counted and dropped.
    Deobfuscate(Transform),
    /// Write the per-packet feature matrix as CSV.
    Extract(Extract),
    /// Run an attack plan against original and obfuscated captures.
    Attack(Attack),
    /// Run every scenario in a scenario file.
    Scenario(ScenarioCmd),
    /// Generate the synthetic device corpus and its label file.
    Synth(Synth),
}

#[derive(Debug, Args)]
struct Transform {
    input: PathBuf,
    /// Profile file, or an inline technique chain such as `padding+delay`.
    #[arg(long)]
    profile: String,
    /// Overrides the profile's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Extract {
    input: PathBuf,
    /// CSV of `address,label` rows.
    #[arg(long)]
    labels: PathBuf,
    /// Keep only the k columns with the highest ANOVA F-score.
    #[arg(long)]
    k: Option<usize>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Attack {
    /// Original (unobfuscated) capture.
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "baseline")]
    plan: String,
    /// Obfuscated capture; range A for the retraining plans.
    #[arg(long)]
    obfuscated: Option<PathBuf>,
    /// Range-B capture for the retraining plans.
    #[arg(long)]
    obfuscated_b: Option<PathBuf>,
    /// Technique label for the report rows.
    #[arg(long, default_value = "obfuscated")]
    technique: String,
    #[arg(long, default_value = "knn,dt,rf,mlp")]
    classifiers: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    mlp_epochs: Option<usize>,
    /// CSV twin of the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScenarioCmd {
    file: PathBuf,
    /// Run only the named scenario.
    #[arg(long)]
    only: Option<String>,
    /// Overrides every scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV twin of all reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Synth {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 5)]
    devices: usize,
    #[arg(long, default_value_t = 40)]
    flows: usize,
}

/// A bad invocation that clap cannot catch.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

const EXIT_IO: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_PROFILE: u8 = 3;
const EXIT_LABELS: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<EngineError>() {
            return match e {
                EngineError::Profile(_) => EXIT_PROFILE,
                _ => EXIT_INPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return match e {
                HarnessError::Io(_) => EXIT_IO,
                HarnessError::Engine {
                    source: EngineError::Profile(_),
                    ..
                } => EXIT_PROFILE,
                HarnessError::Feature(FeatureError::DegenerateLabels)
                | HarnessError::Model(ModelError::DegenerateLabels) => EXIT_LABELS,
                _ => EXIT_INPUT,
            };
        }
        if matches!(cause.downcast_ref::<FeatureError>(), Some(FeatureError::DegenerateLabels))
            || matches!(cause.downcast_ref::<ModelError>(), Some(ModelError::DegenerateLabels))
        {
            return EXIT_LABELS;
        }
    }
    EXIT_INPUT
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        warn!("{e:#}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("CAMO_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().with_context(|| format!("CAMO_THREADS={v} is not a number"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Obfuscate(t) => obfuscate(&t),
        Command::Deobfuscate(t) => deobfuscate(&t),
        Command::Extract(e) => extract(&e),
        Command::Attack(a) => attack(&a),
        Command::Scenario(s) => scenario(&s),
        Command::Synth(s) => synth(&s),
    }
}

fn read_capture(path: &Path) -> Result<CaptureFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut capture = read_pcap(&bytes).map_err(|e: PcapError| anyhow!(e).context(format!("parsing {}", path.display())))?;
    capture.sort();
    Ok(capture)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn check_distinct(input: &Path, out: &Path) -> Result<()> {
    let same = match (fs::canonicalize(input), fs::canonicalize(out)) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == out,
    };
    if same {
        return Err(usage("output path must differ from the input path"));
    }
    Ok(())
}

/// A profile file if `spec` names one, otherwise an inline chain.
fn load_profile(spec: &str, seed: Option<u64>) -> Result<ObfuscationProfile> {
    let path = Path::new(spec);
    let mut profile = if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        ObfuscationProfile::parse(&text).with_context(|| format!("profile {spec}"))?
    } else {
        ObfuscationProfile::new(parse_chain(spec)?)
    };
    if let Some(s) = seed {
        profile.rng_seed = s;
    }
    profile.validate()?;
    Ok(profile)
}

fn load_labeled(input: &Path, labels: &Path) -> Result<LabeledCapture> {
    let capture = read_capture(input)?;
    let text = fs::read_to_string(labels).with_context(|| format!("reading {}", labels.display()))?;
    let labels = parse_labels(&text)?;
    Ok(LabeledCapture { capture, labels })
}

fn obfuscate(t: &Transform) -> Result<()> {
    check_distinct(&t.input, &t.out)?;
    let profile = load_profile(&t.profile, t.seed)?;
    let capture = read_capture(&t.input)?;
    let (obf, report) = replay(&capture, &profile, &mut VirtualClock::default())?;
    write_file(&t.out, &write_pcap(&obf))?;
    info!("wrote {} packets to {}", obf.len(), t.out.display());
    print!("{}", render_overhead(&[report]));
    Ok(())
}

fn deobfuscate(t: &Transform) -> Result<()> {
    check_distinct(&t.input, &t.out)?;
    let profile = load_profile(&t.profile, t.seed)?;
    let capture = read_capture(&t.input)?;
    let mut deobf = Deobfuscator::new(&profile)?;
    let mut restored = Vec::with_capacity(capture.len());
    let (mut mismatches, mut other) = (0usize, 0usize);
    for (i, p) in capture.packets.iter().enumerate() {
        match deobf.deobfuscate(p) {
            Ok(Recovered::Packet(r)) => restored.push(r),
            Ok(Recovered::Buffered { .. }) => {}
            Err(EngineError::ChecksumMismatch) => {
                mismatches += 1;
                debug!("packet {i}: checksum mismatch");
            }
            Err(e) => {
                other += 1;
                debug!("packet {i}: {e}");
            }
        }
    }
    let orphans = deobf.flush().len();
    if mismatches + other + orphans > 0 {
        warn!("{} packets could not be restored; wrong profile or seed?", mismatches + other + orphans);
    }
    let mut out = CaptureFile::new(capture.link_type, restored);
    out.sort();
    write_file(&t.out, &write_pcap(&out))?;
    println!("restored packets: {}", out.len());
    println!("checksum mismatches: {mismatches}");
    println!("orphan fragments: {orphans}");
    println!("other errors: {other}");
    Ok(())
}

fn extract(e: &Extract) -> Result<()> {
    let corpus = load_labeled(&e.input, &e.labels)?;
    let (mut ds, stats): (Dataset<f64>, _) = extract_features_with_stats(&corpus.capture, corpus.labeler());
    info!(
        "{} rows; skipped {} non-TCP/UDP, {} unlabeled, {} with missing values",
        stats.rows, stats.skipped_non_transport, stats.unlabeled, stats.dropped_missing
    );
    if let Some(k) = e.k {
        let z = zscore_apply(&zscore_fit(ds.view())?, ds.view())?;
        let cols = select_k_best(&anova_f_scores(z.view(), &ds.y)?, k)?;
        ds = ds.select_columns(&cols);
    }
    let csv = export_csv(&ds);
    match &e.out {
        Some(path) => write_file(path, &csv),
        None => io::stdout().write_all(&csv).context("writing stdout"),
    }
}

fn attack(a: &Attack) -> Result<()> {
    let plan: AttackPlan = a.plan.parse().map_err(|e: HarnessError| usage(e.to_string()))?;
    let classifiers = ModelKind::parse_list(&a.classifiers).map_err(|e| usage(e.to_string()))?;
    if plan != AttackPlan::Baseline && a.obfuscated.is_none() {
        return Err(usage(format!("plan {plan} needs --obfuscated")));
    }
    if matches!(plan, AttackPlan::FineTune | AttackPlan::Incremental) && a.obfuscated_b.is_none() {
        return Err(usage(format!("plan {plan} needs --obfuscated-b")));
    }
    let corpus = load_labeled(&a.input, &a.labels)?;
    let range_a = a.obfuscated.as_deref().map(read_capture).transpose()?;
    let range_b = a.obfuscated_b.as_deref().map(read_capture).transpose()?;

    let mut s = Scenario::new("attack", CaptureSource::Loaded(corpus.clone()), plan);
    s.classifiers = classifiers;
    s.seed = a.seed;
    s.k_features = a.k;
    s.folds = a.folds;
    if let Some(n) = a.mlp_epochs {
        s.hyper.mlp.epochs = n;
    }
    if s.plan != AttackPlan::Baseline {
        // Placeholder so validation sees a chain; the captures are given.
        s.profiles = vec![ObfuscationProfile::default()];
    }
    s.validate().map_err(|e| usage(e.to_string()))?;
    let report = run_attack(&s, &corpus, &a.technique, range_a.as_ref(), range_b.as_ref())?;
    print!("{}", render_report(&report));
    if let Some(out) = &a.out {
        write_file(out, reports_csv(&[report]).as_bytes())?;
    }
    Ok(())
}

fn scenario(c: &ScenarioCmd) -> Result<()> {
    let text = fs::read_to_string(&c.file).with_context(|| format!("reading {}", c.file.display()))?;
    let base = c.file.parent().unwrap_or(Path::new("."));
    let mut scenarios = parse_scenarios(&text, base)?;
    if let Some(name) = &c.only {
        scenarios.retain(|s| &s.name == name);
        if scenarios.is_empty() {
            return Err(usage(format!("no scenario named '{name}'")));
        }
    }
    let mut reports = Vec::with_capacity(scenarios.len());
    for (i, mut s) in scenarios.into_iter().enumerate() {
        if let Some(seed) = c.seed {
            s.seed = seed;
            for p in &mut s.profiles {
                p.rng_seed = seed;
            }
            if let CaptureSource::Synthetic { seed: ref mut corpus_seed, .. } = s.source {
                *corpus_seed = seed;
            }
        }
        info!("running scenario {}", s.name);
        let report = run_scenario(&s).with_context(|| format!("scenario {}", s.name))?;
        if i > 0 {
            println!();
        }
        print!("{}", render_report(&report));
        reports.push(report);
    }
    if let Some(out) = &c.out {
        write_file(out, reports_csv(&reports).as_bytes())?;
    }
    Ok(())
}

fn synth(s: &Synth) -> Result<()> {
    if s.out == s.labels {
        bail!(usage("--out and --labels must differ"));
    }
    let corpus = synth_corpus(s.seed, s.devices, s.flows).map_err(|e| usage(e.to_string()))?;
    write_file(&s.out, &write_pcap(&corpus.capture))?;
    write_file(&s.labels, labels_csv(&corpus.labels).as_bytes())?;
    info!(
        "{} packets from {} devices written to {}",
        corpus.capture.len(),
        corpus.labels.len(),
        s.out.display()
    );
    Ok(())
}
