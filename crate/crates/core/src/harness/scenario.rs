use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use super::{parse_labels, replay, synth_corpus, verify_round_trip, HarnessError, LabeledCapture, OverheadReport, VirtualClock};
use crate::engine::{parse_chain, ObfuscationProfile};
use crate::features::{anova_f_scores, extract_features, select_k_best, zscore_apply, zscore_fit, Dataset};
use crate::models::{
    compute_metrics, confusion_matrix, mix_half, stratified_kfold, train, Classifier, Confusion, Fold, Hyper, MetricsReport,
    Model, ModelError, ModelKind,
};
use crate::packet::read_pcap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackPlan {
    /// Train and test on original traffic.
    Baseline,
    /// Train on original traffic, test on obfuscated traffic.
    Naive,
    /// Continue training on a 50/50 mix of original and range-A traffic,
    /// test on range-B traffic.
    Incremental,
    /// Continue training on range-A traffic at a low rate, test on range B.
    FineTune,
}

impl AttackPlan {
    pub fn name(self) -> &'static str {
        match self {
            AttackPlan::Baseline => "baseline",
            AttackPlan::Naive => "naive",
            AttackPlan::Incremental => "incremental",
            AttackPlan::FineTune => "fine_tune",
        }
    }
}

impl fmt::Display for AttackPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackPlan {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(AttackPlan::Baseline),
            "naive" => Ok(AttackPlan::Naive),
            "incremental" | "incremental_train" => Ok(AttackPlan::Incremental),
            "fine_tune" | "finetune" => Ok(AttackPlan::FineTune),
            other => Err(HarnessError::Scenario(format!("unknown attack plan '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaptureSource {
    Synthetic {
        seed: u64,
        devices: usize,
        flows_per_device: usize,
    },
    Pcap {
        path: PathBuf,
        labels: PathBuf,
    },
    /// Already in memory; used by callers that load captures themselves.
    Loaded(LabeledCapture),
}

impl CaptureSource {
    pub fn load(&self) -> Result<LabeledCapture, HarnessError> {
        match self {
            CaptureSource::Synthetic {
                seed,
                devices,
                flows_per_device,
            } => synth_corpus(*seed, *devices, *flows_per_device),
            CaptureSource::Pcap { path, labels } => {
                let bytes = std::fs::read(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
                let mut capture = read_pcap(&bytes)?;
                capture.sort();
                let text =
                    std::fs::read_to_string(labels).map_err(|e| HarnessError::Io(format!("{}: {e}", labels.display())))?;
                Ok(LabeledCapture {
                    capture,
                    labels: parse_labels(&text)?,
                })
            }
            CaptureSource::Loaded(c) => {
                let mut c = c.clone();
                c.capture.sort();
                Ok(c)
            }
        }
    }
}

/// Range-B parameter overrides; unset fields keep the retrain variant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RangeOverrides {
    pub pad_min: Option<u32>,
    pub pad_max: Option<u32>,
    pub delay_min_us: Option<u64>,
    pub delay_max_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: CaptureSource,
    /// Range-A profiles, one report row per (classifier, profile).
    pub profiles: Vec<ObfuscationProfile>,
    pub range_b: RangeOverrides,
    pub plan: AttackPlan,
    pub classifiers: Vec<ModelKind>,
    pub seed: u64,
    pub folds: usize,
    /// Features kept by ANOVA selection; `None` keeps all of them.
    pub k_features: Option<usize>,
    pub hyper: Hyper,
    pub fine_tune_epochs: usize,
    pub fine_tune_lr: f64,
    pub incremental_epochs: usize,
}

impl Scenario {
    pub fn new(name: &str, source: CaptureSource, plan: AttackPlan) -> Self {
        Scenario {
            name: name.to_string(),
            source,
            profiles: Vec::new(),
            range_b: RangeOverrides::default(),
            plan,
            classifiers: vec![ModelKind::Knn, ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::Mlp],
            seed: 42,
            folds: 10,
            k_features: None,
            hyper: Hyper::default(),
            fine_tune_epochs: 50,
            fine_tune_lr: 1e-4,
            incremental_epochs: 50,
        }
    }

    /// The profile an adapted adversary is tested against.
    pub fn profile_b(&self, a: &ObfuscationProfile) -> ObfuscationProfile {
        let mut b = a.retrain_variant();
        let o = &self.range_b;
        b.pad_min = o.pad_min.unwrap_or(b.pad_min);
        b.pad_max = o.pad_max.unwrap_or(b.pad_max);
        b.delay_min_us = o.delay_min_us.unwrap_or(b.delay_min_us);
        b.delay_max_us = o.delay_max_us.unwrap_or(b.delay_max_us);
        b
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.plan != AttackPlan::Baseline && self.profiles.is_empty() {
            return Err(HarnessError::Scenario(format!(
                "scenario '{}': plan {} needs a technique_chain",
                self.name, self.plan
            )));
        }
        if self.classifiers.is_empty() {
            return Err(HarnessError::Scenario(format!("scenario '{}' has no classifiers", self.name)));
        }
        let retrains = matches!(self.plan, AttackPlan::FineTune | AttackPlan::Incremental);
        if retrains && self.classifiers.iter().any(|&k| k != ModelKind::Mlp) {
            return Err(HarnessError::Scenario(format!(
                "scenario '{}': plan {} retrains the neural network only",
                self.name, self.plan
            )));
        }
        if self.folds < 2 {
            return Err(HarnessError::Scenario(format!("scenario '{}': folds must be >= 2", self.name)));
        }
        for p in &self.profiles {
            p.validate()?;
            if retrains {
                self.profile_b(p).validate()?;
            }
        }
        Ok(())
    }
}

/// Parses scenario files: `[scenario NAME]` sections of `key = value` lines.
/// Relative capture paths resolve against `base_dir`.
///
/// Keys: `corpus` (`synthetic` or a pcap path), `labels`, `synth_seed`,
/// `devices`, `flows_per_device`, `plan`, `classifiers`, `technique_chain`
/// (several chains separated by `;`), `pad_min`, `pad_max`, `delay_min_us`,
/// `delay_max_us`, their `_b` range-B overrides, `seed`, `folds`, `k`,
/// `mlp_epochs`, `fine_tune_epochs`, `fine_tune_lr`, `incremental_epochs`.
pub fn parse_scenarios(text: &str, base_dir: &Path) -> Result<Vec<Scenario>, HarnessError> {
    let mut sections: Vec<(String, Vec<(usize, String, String)>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = head
                .trim()
                .strip_prefix("scenario")
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| HarnessError::Scenario(format!("line {lineno}: expected [scenario NAME]")))?;
            sections.push((name.to_string(), Vec::new()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Scenario(format!("line {lineno}: expected key = value")))?;
        let section = sections
            .last_mut()
            .ok_or_else(|| HarnessError::Scenario(format!("line {lineno}: key outside a [scenario] section")))?;
        section.1.push((lineno, k.trim().to_string(), v.trim().to_string()));
    }
    sections
        .into_iter()
        .map(|(name, kvs)| build_scenario(&name, &kvs, base_dir))
        .collect()
}

fn num<T: FromStr>(lineno: usize, key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse()
        .map_err(|_| HarnessError::Scenario(format!("line {lineno}: bad value '{v}' for {key}")))
}

fn build_scenario(name: &str, kvs: &[(usize, String, String)], base_dir: &Path) -> Result<Scenario, HarnessError> {
    let mut s = Scenario::new(name, CaptureSource::Loaded(empty_corpus()), AttackPlan::Baseline);
    let mut corpus = String::from("synthetic");
    let mut labels: Option<String> = None;
    let mut synth_seed: Option<u64> = None;
    let (mut devices, mut flows) = (5usize, 40usize);
    let mut chains: Vec<String> = Vec::new();
    let mut a = ObfuscationProfile::default();
    for (ln, key, v) in kvs {
        let ln = *ln;
        match key.as_str() {
            "corpus" => corpus = v.clone(),
            "labels" => labels = Some(v.clone()),
            "synth_seed" => synth_seed = Some(num(ln, key, v)?),
            "devices" => devices = num(ln, key, v)?,
            "flows_per_device" => flows = num(ln, key, v)?,
            "plan" => s.plan = v.parse()?,
            "classifiers" => s.classifiers = ModelKind::parse_list(v)?,
            "technique_chain" | "techniques" => {
                chains = v.split(';').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect()
            }
            "pad_min" => a.pad_min = num(ln, key, v)?,
            "pad_max" => a.pad_max = num(ln, key, v)?,
            "delay_min_us" => a.delay_min_us = num(ln, key, v)?,
            "delay_max_us" => a.delay_max_us = num(ln, key, v)?,
            "pad_min_b" => s.range_b.pad_min = Some(num(ln, key, v)?),
            "pad_max_b" => s.range_b.pad_max = Some(num(ln, key, v)?),
            "delay_min_us_b" => s.range_b.delay_min_us = Some(num(ln, key, v)?),
            "delay_max_us_b" => s.range_b.delay_max_us = Some(num(ln, key, v)?),
            "seed" => s.seed = num(ln, key, v)?,
            "folds" => s.folds = num(ln, key, v)?,
            "k" => {
                s.k_features = match v.as_str() {
                    "all" => None,
                    _ => Some(num(ln, key, v)?),
                }
            }
            "mlp_epochs" => s.hyper.mlp.epochs = num(ln, key, v)?,
            "fine_tune_epochs" => s.fine_tune_epochs = num(ln, key, v)?,
            "fine_tune_lr" => s.fine_tune_lr = num(ln, key, v)?,
            "incremental_epochs" => s.incremental_epochs = num(ln, key, v)?,
            other => return Err(HarnessError::Scenario(format!("line {ln}: unknown key '{other}'"))),
        }
    }
    s.source = if corpus.eq_ignore_ascii_case("synthetic") || corpus.eq_ignore_ascii_case("synth") {
        CaptureSource::Synthetic {
            seed: synth_seed.unwrap_or(s.seed),
            devices,
            flows_per_device: flows,
        }
    } else {
        let labels = labels.ok_or_else(|| {
            HarnessError::Scenario(format!("scenario '{name}': a pcap corpus needs a labels file"))
        })?;
        CaptureSource::Pcap {
            path: base_dir.join(corpus),
            labels: base_dir.join(labels),
        }
    };
    a.rng_seed = s.seed;
    s.profiles = chains
        .iter()
        .map(|c| {
            Ok(ObfuscationProfile {
                techniques: parse_chain(c)?,
                ..a.clone()
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    s.validate()?;
    Ok(s)
}

fn empty_corpus() -> LabeledCapture {
    LabeledCapture {
        capture: crate::packet::CaptureFile::new(crate::packet::LINKTYPE_ETHERNET, Vec::new()),
        labels: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub classifier: ModelKind,
    pub technique: String,
    /// `None` when there was no data to evaluate.
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scenario: String,
    pub plan: AttackPlan,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub overhead: Vec<OverheadReport>,
    /// Settings that shaped the numbers, such as retraining epochs.
    pub metadata: Vec<(String, String)>,
}

impl EvalReport {
    pub fn row(&self, classifier: ModelKind, technique: &str) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.classifier == classifier && r.technique == technique)
    }

    pub fn accuracy(&self, classifier: ModelKind, technique: &str) -> Option<f64> {
        self.row(classifier, technique)?.metrics.as_ref().map(|m| m.accuracy.mean)
    }
}

pub const BASELINE_TECHNIQUE: &str = "none";

/// Runs one scenario end to end. Every obfuscation leg is de-obfuscated and
/// checked before its traffic reaches the attack.
pub fn run_scenario(s: &Scenario) -> Result<EvalReport, HarnessError> {
    s.validate()?;
    let corpus = s.source.load()?;
    let label = corpus.labeler();
    let original: Dataset<f64> = extract_features(&corpus.capture, &label);
    let mut report = EvalReport {
        scenario: s.name.clone(),
        plan: s.plan,
        seed: s.seed,
        rows: Vec::new(),
        overhead: Vec::new(),
        metadata: metadata(s),
    };

    let obfuscate = |profile: &ObfuscationProfile| -> Result<(Dataset<f64>, OverheadReport), HarnessError> {
        let mut clock = VirtualClock::default();
        let (obf, overhead) = replay(&corpus.capture, profile, &mut clock)?;
        verify_round_trip(&corpus.capture, &obf, profile)?;
        Ok((extract_features(&obf, &label), overhead))
    };

    let mut targets: Vec<(String, Target)> = Vec::new();
    if s.plan == AttackPlan::Baseline {
        targets.push((BASELINE_TECHNIQUE.to_string(), make_target(s.plan, None, None)));
    }
    for profile in s.profiles.iter().filter(|_| s.plan != AttackPlan::Baseline) {
        let technique = profile.chain_name();
        let (range_a, overhead) = obfuscate(profile)?;
        report.overhead.push(overhead);
        let range_b = if s.plan == AttackPlan::Naive {
            None
        } else {
            let (range_b, mut overhead_b) = obfuscate(&s.profile_b(profile))?;
            overhead_b.technique = format!("{technique} (range B)");
            report.overhead.push(overhead_b);
            Some(range_b)
        };
        targets.push((technique, make_target(s.plan, Some(range_a), range_b)));
    }
    score(s, &original, &targets, &mut report)?;
    Ok(report)
}

/// Runs an attack plan on captures that were obfuscated elsewhere.
/// `range_a` is required by every plan except baseline; `range_b` by the
/// retraining plans. The scenario's capture source and profiles are ignored.
pub fn run_attack(
    s: &Scenario,
    corpus: &LabeledCapture,
    technique: &str,
    range_a: Option<&crate::packet::CaptureFile>,
    range_b: Option<&crate::packet::CaptureFile>,
) -> Result<EvalReport, HarnessError> {
    let label = corpus.labeler();
    let original: Dataset<f64> = extract_features(&corpus.capture, &label);
    let mut report = EvalReport {
        scenario: s.name.clone(),
        plan: s.plan,
        seed: s.seed,
        rows: Vec::new(),
        overhead: Vec::new(),
        metadata: metadata(s),
    };
    let missing = |what: &str| HarnessError::Scenario(format!("plan {} needs {what} traffic", s.plan));
    let target = match s.plan {
        AttackPlan::Baseline => make_target(s.plan, None, None),
        AttackPlan::Naive => {
            let a = range_a.ok_or_else(|| missing("obfuscated"))?;
            make_target(s.plan, Some(extract_features(a, &label)), None)
        }
        _ => {
            let a = range_a.ok_or_else(|| missing("range-A obfuscated"))?;
            let b = range_b.ok_or_else(|| missing("range-B obfuscated"))?;
            make_target(
                s.plan,
                Some(extract_features(a, &label)),
                Some(extract_features(b, &label)),
            )
        }
    };
    let technique = if s.plan == AttackPlan::Baseline {
        BASELINE_TECHNIQUE
    } else {
        technique
    };
    score(s, &original, &[(technique.to_string(), target)], &mut report)?;
    Ok(report)
}

fn make_target(plan: AttackPlan, range_a: Option<Dataset<f64>>, range_b: Option<Dataset<f64>>) -> Target {
    match (plan, range_a) {
        (AttackPlan::Baseline, _) | (_, None) => Target {
            test: None,
            adapt: Adapt::None,
        },
        (AttackPlan::Naive, a) => Target {
            test: a,
            adapt: Adapt::None,
        },
        (AttackPlan::FineTune, Some(a)) => Target {
            test: range_b,
            adapt: Adapt::FineTune(a),
        },
        (AttackPlan::Incremental, Some(a)) => Target {
            test: range_b,
            adapt: Adapt::Incremental(a),
        },
    }
}

fn score(
    s: &Scenario,
    original: &Dataset<f64>,
    targets: &[(String, Target)],
    report: &mut EvalReport,
) -> Result<(), HarnessError> {
    let target_refs: Vec<&Target> = targets.iter().map(|(_, t)| t).collect();
    for &kind in &s.classifiers {
        let metrics = evaluate(s, kind, original, &target_refs)?;
        for ((technique, _), m) in targets.iter().zip(metrics) {
            report.rows.push(EvalRow {
                classifier: kind,
                technique: technique.clone(),
                metrics: m,
            });
        }
    }
    Ok(())
}

fn metadata(s: &Scenario) -> Vec<(String, String)> {
    let mut m = vec![
        ("folds".to_string(), s.folds.to_string()),
        (
            "k_features".to_string(),
            s.k_features.map_or("all".to_string(), |k| k.to_string()),
        ),
        ("mlp_epochs".to_string(), s.hyper.mlp.epochs.to_string()),
    ];
    match s.plan {
        AttackPlan::FineTune => {
            m.push(("fine_tune_epochs".into(), s.fine_tune_epochs.to_string()));
            m.push(("fine_tune_lr".into(), s.fine_tune_lr.to_string()));
        }
        AttackPlan::Incremental => {
            m.push(("incremental_epochs".into(), s.incremental_epochs.to_string()));
            m.push(("incremental_mix".into(), "50/50 original/range A".into()));
        }
        _ => {}
    }
    if matches!(s.plan, AttackPlan::FineTune | AttackPlan::Incremental) {
        for p in &s.profiles {
            let b = s.profile_b(p);
            m.push((
                format!("range_b[{}]", p.chain_name()),
                format!(
                    "{} pad {}..{} delay {}..{} us",
                    b.chain_name(),
                    b.pad_min,
                    b.pad_max,
                    b.delay_min_us,
                    b.delay_max_us
                ),
            ));
        }
    }
    m
}

#[derive(Debug, Clone)]
enum Adapt {
    None,
    FineTune(Dataset<f64>),
    Incremental(Dataset<f64>),
}

/// Where a trained fold model is evaluated. `test: None` means the original
/// dataset's own test split.
#[derive(Debug, Clone)]
struct Target {
    test: Option<Dataset<f64>>,
    adapt: Adapt,
}

/// Per-fold preprocessing fitted on the original training rows.
struct Prep {
    scaler: crate::features::ZScoreModel<f64>,
    columns: Vec<usize>,
}

impl Prep {
    fn apply(&self, d: &Dataset<f64>) -> Result<Array2<f64>, HarnessError> {
        let z = zscore_apply(&self.scaler, d.view())?;
        Ok(z.select(Axis(1), &self.columns))
    }
}

/// Stratified k-fold evaluation. Fold `i` trains one model on the original
/// dataset's training split, then scores it on split `i` of every target.
fn evaluate(
    s: &Scenario,
    kind: ModelKind,
    original: &Dataset<f64>,
    targets: &[&Target],
) -> Result<Vec<Option<MetricsReport>>, HarnessError> {
    if original.is_empty() {
        return Ok(vec![None; targets.len()]);
    }
    let folds_train = stratified_kfold(&original.y, s.folds, s.seed)?;
    let split = |d: &Dataset<f64>| -> Result<Option<Vec<Fold>>, HarnessError> {
        if d.is_empty() {
            Ok(None)
        } else {
            Ok(Some(stratified_kfold(&d.y, s.folds, s.seed)?))
        }
    };
    let mut plans = Vec::with_capacity(targets.len());
    for t in targets {
        let test = t.test.as_ref().unwrap_or(original);
        let test_folds = match &t.test {
            None => Some(folds_train.clone()),
            Some(d) => split(d)?,
        };
        let adapt_folds = match &t.adapt {
            Adapt::None => None,
            Adapt::FineTune(d) | Adapt::Incremental(d) => split(d)?,
        };
        let n_classes = original.n_classes().max(test.n_classes());
        plans.push(FoldPlan {
            test,
            test_folds,
            adapt: &t.adapt,
            adapt_folds,
            n_classes,
        });
    }
    let per_fold = (0..s.folds)
        .into_par_iter()
        .map(|i| run_fold(s, kind, i, original, &folds_train[i], &plans))
        .collect::<Result<Vec<Vec<Option<Confusion>>>, HarnessError>>()?;
    (0..targets.len())
        .map(|t| {
            let confusions: Option<Vec<Confusion>> = per_fold.iter().map(|f| f[t].clone()).collect();
            confusions.map(|c| compute_metrics(&c)).transpose().map_err(HarnessError::from)
        })
        .collect()
}

struct FoldPlan<'a> {
    test: &'a Dataset<f64>,
    test_folds: Option<Vec<Fold>>,
    adapt: &'a Adapt,
    adapt_folds: Option<Vec<Fold>>,
    n_classes: usize,
}

fn run_fold(
    s: &Scenario,
    kind: ModelKind,
    i: usize,
    original: &Dataset<f64>,
    fold_train: &Fold,
    plans: &[FoldPlan<'_>],
) -> Result<Vec<Option<Confusion>>, HarnessError> {
    let tr = original.select_rows(&fold_train.train);
    let scaler = zscore_fit(tr.view())?;
    let z = zscore_apply(&scaler, tr.view())?;
    let columns = match s.k_features {
        Some(k) => select_k_best(&anova_f_scores(z.view(), &tr.y)?, k)?,
        None => (0..z.ncols()).collect(),
    };
    let prep = Prep { scaler, columns };
    let x_train = z.select(Axis(1), &prep.columns);
    let base = train(kind, x_train.view(), &tr.y, &s.hyper)?;

    let mut out = Vec::with_capacity(plans.len());
    for plan in plans {
        let Some(test_folds) = &plan.test_folds else {
            out.push(None);
            continue;
        };
        let adapted;
        let model = match (plan.adapt, &plan.adapt_folds) {
            (Adapt::None, _) => &base,
            (_, None) => {
                out.push(None);
                continue;
            }
            (Adapt::FineTune(d) | Adapt::Incremental(d), Some(folds)) => {
                let Model::Mlp(mlp) = &base else {
                    return Err(HarnessError::Model(ModelError::Config(
                        "only the neural network supports retraining".into(),
                    )));
                };
                let a = d.select_rows(&folds[i].train);
                let xa = prep.apply(&a)?;
                adapted = Model::Mlp(match plan.adapt {
                    Adapt::FineTune(_) => mlp.fine_tune(xa.view(), &a.y, s.fine_tune_epochs, s.fine_tune_lr)?,
                    _ => {
                        let mix_seed = s.seed.wrapping_add(i as u64);
                        let (xm, ym) = mix_half(x_train.view(), &tr.y, xa.view(), &a.y, mix_seed);
                        mlp.incremental_train(xm.view(), &ym, s.incremental_epochs)?
                    }
                });
                &adapted
            }
        };
        let te = plan.test.select_rows(&test_folds[i].test);
        let pred = model.predict(prep.apply(&te)?.view())?;
        out.push(Some(confusion_matrix(&te.y, &pred, plan.n_classes)?));
    }
    Ok(out)
}
