//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any criterion fails.

use std::net::Ipv4Addr;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use camo::engine::{splice, unsplice, ObfuscationProfile, RecoveryHeader, TechniqueId, HEADER_LEN};
use camo::features::{anova_f_scores, zscore_apply, zscore_fit};
use camo::harness::{
    parse_scenarios, replay, reports_csv, run_scenario, verify_round_trip, EvalReport, VirtualClock,
    BASELINE_TECHNIQUE,
};
use camo::models::{stratified_kfold, Classifier, DecisionTreeModel, KnnConfig, KnnModel, MlpConfig, MlpModel, ModelKind, TreeConfig};
use camo::packet::{CaptureFile, Packet, Timestamp, LINKTYPE_ETHERNET};

const SCENARIO_FILE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/degradation.scn");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// `n` packets spread over 60 TCP and UDP flows, timestamps non-decreasing,
/// payload lengths uniform in `0..=1400`.
fn random_capture(n: usize, seed: u64) -> CaptureFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flows: Vec<(bool, (Ipv4Addr, u16), (Ipv4Addr, u16))> = (0..60)
        .map(|i| {
            let dev = Ipv4Addr::new(10, 0, (i / 20) as u8, (i % 20 + 2) as u8);
            let srv = Ipv4Addr::new(203, 0, 113, rng.gen_range(1..=9));
            (rng.gen_bool(0.5), (dev, rng.gen_range(1024..65000)), (srv, rng.gen_range(1..1024)))
        })
        .collect();
    let mut us = 1_700_000_000u64 * 1_000_000;
    let packets = (0..n)
        .map(|_| {
            us += rng.gen_range(0..5_000);
            let (tcp, a, b) = flows[rng.gen_range(0..flows.len())];
            let (src, dst) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let mut payload = vec![0u8; rng.gen_range(0..=1400)];
            rng.fill(payload.as_mut_slice());
            let ts = Timestamp::from_micros(us);
            if tcp {
                Packet::tcp(ts, src, dst, payload)
            } else {
                Packet::udp(ts, src, dst, payload)
            }
        })
        .collect();
    CaptureFile::new(LINKTYPE_ETHERNET, packets)
}

/// One packet per flow, so delays are never clamped by an earlier packet.
fn isolated_packets(n: usize) -> CaptureFile {
    let packets = (0..n)
        .map(|i| {
            Packet::udp(
                Timestamp::new(1_000, 0),
                (Ipv4Addr::new(10, 1, (i / 250) as u8, (i % 250) as u8), 40_000),
                (Ipv4Addr::new(198, 51, 100, 1), 5683),
                vec![0xAB; 32],
            )
        })
        .collect();
    CaptureFile::new(LINKTYPE_ETHERNET, packets)
}

fn round_trip() -> Outcome {
    let capture = random_capture(10_000, 1);
    let chains: Vec<Vec<TechniqueId>> = TechniqueId::ALL
        .iter()
        .map(|&t| vec![t])
        .chain([
            vec![TechniqueId::Padding, TechniqueId::Delay],
            vec![TechniqueId::PadXor],
            vec![TechniqueId::Fragment, TechniqueId::Delay],
        ])
        .collect();
    let start = Instant::now();
    let mut failures = Vec::new();
    for chain in &chains {
        let profile = ObfuscationProfile::new(chain.clone()).with_seed(77);
        let result = replay(&capture, &profile, &mut VirtualClock::default())
            .and_then(|(obf, _)| verify_round_trip(&capture, &obf, &profile));
        if let Err(e) = result {
            failures.push(format!("{}: {e}", profile.chain_name()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 30.0;
    outcome(
        pass,
        format!(
            "{} profiles x 10000 packets, {} failed, {secs:.2} s (limit 30 s){}",
            chains.len(),
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(": {}", failures.join("; ")) }
        ),
    )
}

fn header_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0usize;
    for &t in TechniqueId::ALL.iter() {
        for _ in 0..1000 {
            let h = RecoveryHeader::new(t, rng.gen()).chained(rng.gen());
            let enc = h.encode().expect("clean header encodes");
            if enc.len() != 4 || RecoveryHeader::decode(enc) != Ok(h) {
                bad += 1;
            }
            let body: Vec<u8> = (0..rng.gen_range(0..300)).map(|_| rng.gen()).collect();
            let headers = vec![h; rng.gen_range(1..=2)];
            let seq = rng.gen();
            let wire = splice(&body, &headers, seq).expect("splice");
            if wire.len() != body.len() + HEADER_LEN * headers.len() {
                bad += 1;
            }
            match unsplice(&wire, seq) {
                Ok((hs, b)) if b == body && hs.len() == headers.len() && hs[0].param == h.param => {}
                _ => bad += 1,
            }
        }
    }
    let capture = random_capture(2_000, 3);
    let delay = ObfuscationProfile::new(vec![TechniqueId::Delay]).with_seed(5);
    let (_, report) = replay(&capture, &delay, &mut VirtualClock::default()).expect("delay replay");
    let delay_added = report.obfuscated_bytes as i64 - report.original_bytes as i64;
    outcome(
        bad == 0 && delay_added == 0,
        format!(
            "{} techniques x 1000 params, {bad} mismatches; 4-byte headers; delay added {delay_added} bytes",
            TechniqueId::ALL.len()
        ),
    )
}

fn padding_overhead() -> Outcome {
    let capture = random_capture(10_000, 4);
    let profile = ObfuscationProfile::new(vec![TechniqueId::Padding]).with_seed(42);
    let (_, report) = replay(&capture, &profile, &mut VirtualClock::default()).expect("padding replay");
    let added = report.mean_bytes_added().unwrap_or(f64::NAN);
    let pad = added - HEADER_LEN as f64;
    outcome(
        (pad - 128.5).abs() <= 3.0 && profile.pad_min == 1 && profile.pad_max == 256,
        format!("mean pad {pad:.3} bytes excluding header (target 128.5 +- 3)"),
    )
}

fn zscore() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_mean, mut worst_sd, mut const_ok) = (0f64, 0f64, true);
    for _ in 0..50 {
        let rows = rng.gen_range(2..200);
        let cols = rng.gen_range(1..8);
        let scale: f64 = rng.gen_range(1e-3..1e6);
        let mut x = Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0) * scale + scale);
        let constant = rng.gen_range(0..cols);
        x.column_mut(constant).fill(3.25);
        let z = zscore_apply(&zscore_fit(x.view()).expect("fit"), x.view()).expect("apply");
        for (j, col) in z.axis_iter(Axis(1)).enumerate() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if j == constant {
                const_ok &= col.iter().all(|&v| v == 0.0);
            } else {
                worst_mean = worst_mean.max(mean.abs());
                worst_sd = worst_sd.max((sd - 1.0).abs());
            }
        }
    }
    outcome(
        worst_mean < 1e-9 && worst_sd < 1e-9 && const_ok,
        format!("50 matrices: max |mean| {worst_mean:.2e}, max |sd-1| {worst_sd:.2e}, constant columns zero: {const_ok}"),
    )
}

/// Textbook one-way ANOVA, one feature at a time.
fn brute_force_f(x: &Array2<f64>, y: &[usize], classes: usize) -> Vec<f64> {
    let n = y.len();
    (0..x.ncols())
        .map(|j| {
            let grand = (0..n).map(|i| x[[i, j]]).sum::<f64>() / n as f64;
            let mut ss_between = 0.0;
            let mut ss_within = 0.0;
            for c in 0..classes {
                let members: Vec<f64> = (0..n).filter(|&i| y[i] == c).map(|i| x[[i, j]]).collect();
                let m = members.iter().sum::<f64>() / members.len() as f64;
                ss_between += members.len() as f64 * (m - grand).powi(2);
                ss_within += members.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            }
            (ss_between / (classes - 1) as f64) / (ss_within / (n - classes) as f64)
        })
        .collect()
}

fn anova_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0f64;
    for _ in 0..100 {
        let classes = rng.gen_range(2..=4);
        let rows = rng.gen_range(2 * classes..=20);
        let cols = rng.gen_range(1..=5);
        let mut y: Vec<usize> = (0..rows).map(|i| if i < classes { i } else { rng.gen_range(0..classes) }).collect();
        y.shuffle(&mut rng);
        let x = Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-50.0..50.0));
        let got = anova_f_scores(x.view(), &y).expect("anova");
        for (g, w) in got.iter().zip(brute_force_f(&x, &y, classes)) {
            worst = worst.max((g - w).abs() / w.abs().max(f64::MIN_POSITIVE));
        }
    }
    outcome(worst < 1e-9, format!("100 matrices, max relative error {worst:.2e} (limit 1e-9)"))
}

fn mlp_gradient_error() -> f64 {
    let cfg = MlpConfig {
        hidden: vec![6, 5, 4],
        seed: 3,
        ..Default::default()
    };
    let mut m = MlpModel::<f64>::init(4, 3, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for b in m.parameters_mut().1.iter_mut() {
        b.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
    }
    let x = Array2::from_shape_simple_fn((7, 4), || rng.gen_range(-1.5..1.5));
    let y: Vec<usize> = (0..7).map(|i| i % 3).collect();
    let (g, _) = m.gradients(x.view(), &y);
    let eps = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + b.abs()).max(1e-7);
    let mut worst = 0f64;
    let mut probe = |m: &mut MlpModel<f64>, set: &dyn Fn(&mut MlpModel<f64>, f64), analytic: f64| {
        set(m, eps);
        let up = m.loss(x.view(), &y);
        set(m, -2.0 * eps);
        let down = m.loss(x.view(), &y);
        set(m, eps);
        worst = worst.max(rel(analytic, (up - down) / (2.0 * eps)));
    };
    for l in 0..g.weights.len() {
        for ((r, c), &a) in g.weights[l].indexed_iter() {
            probe(&mut m, &|m, d| m.parameters_mut().0[l][[r, c]] += d, a);
        }
        for (j, &a) in g.biases[l].indexed_iter() {
            probe(&mut m, &|m, d| m.parameters_mut().1[l][j] += d, a);
        }
    }
    worst
}

fn classifier_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Array2::from_shape_simple_fn((300, 6), || rng.gen_range(-10.0..10.0));
    let y: Vec<usize> = (0..300).map(|_| rng.gen_range(0..5)).collect();
    let tree = DecisionTreeModel::fit(x.view(), &y, &TreeConfig::default()).expect("tree");
    let tree_acc = tree.predict(x.view()).expect("predict").iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / 300.0;

    let one = Array2::from_elem((1, 6), 0.5);
    let knn = KnnModel::fit(one.view(), &[3], KnnConfig::default()).expect("knn");
    let knn_ok = knn.predict(x.view()).expect("predict").iter().all(|&p| p == 3);

    let grad = mlp_gradient_error();
    outcome(
        tree_acc == 1.0 && knn_ok && grad < 1e-3,
        format!(
            "tree training accuracy {:.4}; 1-row kNN predicts its class: {knn_ok}; MLP gradient max rel error {grad:.2e} (limit 1e-3)",
            tree_acc
        ),
    )
}

fn stratified_folds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut problems = Vec::new();
    for case in 0..50 {
        let classes = rng.gen_range(2..=6);
        let mut y: Vec<usize> = (0..classes)
            .flat_map(|c| std::iter::repeat_n(c, rng.gen_range(10..80)))
            .collect();
        y.shuffle(&mut rng);
        let folds = match stratified_kfold(&y, 10, rng.gen()) {
            Ok(f) => f,
            Err(e) => {
                problems.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let mut seen = vec![0usize; y.len()];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            let mut all: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
            all.sort_unstable();
            if all != (0..y.len()).collect::<Vec<_>>() {
                problems.push(format!("case {case}: train and test do not partition the rows"));
            }
            for c in 0..classes {
                let n_c = y.iter().filter(|&&v| v == c).count() as f64;
                let in_fold = f.test.iter().filter(|&&i| y[i] == c).count() as f64;
                if (in_fold - n_c / 10.0).abs() > 1.0 {
                    problems.push(format!("case {case}: class {c} has {in_fold} in a fold, expected ~{:.1}", n_c / 10.0));
                }
            }
        }
        if folds.len() != 10 || seen.iter().any(|&s| s != 1) {
            problems.push(format!("case {case}: test folds are not an exact partition"));
        }
    }
    outcome(
        problems.is_empty(),
        format!("50 label vectors, 10 folds: {}", if problems.is_empty() { "exact partitions, counts within 1".into() } else { problems.join("; ") }),
    )
}

fn run_suite() -> Result<(Vec<EvalReport>, f64), String> {
    let text = std::fs::read_to_string(SCENARIO_FILE).map_err(|e| format!("{SCENARIO_FILE}: {e}"))?;
    let base = Path::new(SCENARIO_FILE).parent().unwrap_or(Path::new("."));
    let scenarios = parse_scenarios(&text, base).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let reports = scenarios
        .iter()
        .map(|s| run_scenario(s).map_err(|e| format!("scenario {}: {e}", s.name)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((reports, start.elapsed().as_secs_f64()))
}

fn degradation(run: &Result<(Vec<EvalReport>, f64), String>) -> Outcome {
    let (reports, secs) = match run {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("suite failed: {e}")),
    };
    let find = |name: &str| reports.iter().find(|r| r.scenario == name);
    let acc = |name: &str, kind: ModelKind, technique: &str| find(name).and_then(|r| r.accuracy(kind, technique));
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}", v * 100.0));

    let rf_base = acc("baseline", ModelKind::RandomForest, BASELINE_TECHNIQUE);
    let rf_pad = acc("naive", ModelKind::RandomForest, "padding");
    let rf_cd = acc("naive", ModelKind::RandomForest, "const_pad+delay");
    let mlp_base = acc("baseline", ModelKind::Mlp, BASELINE_TECHNIQUE);
    let mlp_naive = acc("naive", ModelKind::Mlp, "padding");
    let mlp_ft = acc("fine_tune", ModelKind::Mlp, "padding");
    let epochs_capped = find("baseline").is_some_and(|r| {
        r.metadata.iter().any(|(k, v)| k == "mlp_epochs" && v.parse::<usize>().is_ok_and(|e| e <= 100))
    });

    let drop = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| (a - b) * 100.0);
    let checks = [
        rf_base.is_some_and(|a| a >= 0.95),
        drop(rf_base, rf_pad).is_some_and(|d| d >= 25.0),
        drop(rf_base, rf_cd).is_some_and(|d| d >= 40.0),
        mlp_ft.zip(mlp_naive).is_some_and(|(f, n)| f > n),
        drop(mlp_base, mlp_ft).is_some_and(|d| d >= 20.0),
        *secs < 600.0 && epochs_capped,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "RF baseline {}% (>= 95); RF padding {}% (drop >= 25); RF const_pad+delay {}% (drop >= 40); \
             MLP baseline {}%, naive padding {}%, fine_tune padding {}% (must beat naive, stay >= 20 below baseline); \
             suite {secs:.1} s with MLP <= 100 epochs: {epochs_capped} (limit 600 s)",
            pct(rf_base),
            pct(rf_pad),
            pct(rf_cd),
            pct(mlp_base),
            pct(mlp_naive),
            pct(mlp_ft)
        ),
    )
}

fn delay_distribution() -> Outcome {
    let capture = isolated_packets(10_000);
    let profile = ObfuscationProfile::new(vec![TechniqueId::Delay]).with_seed(42);
    let (obf, _) = replay(&capture, &profile, &mut VirtualClock::default()).expect("delay replay");
    let base = capture.packets[0].ts;
    let delays: Vec<f64> = obf.packets.iter().map(|p| p.ts.secs_since(base)).collect();
    let min = delays.iter().copied().fold(f64::INFINITY, f64::min);
    let max = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = delays.iter().sum::<f64>() / delays.len() as f64;
    outcome(
        delays.len() == 10_000 && min >= 0.01 && max <= 0.1 && (mean - 0.055).abs() <= 0.002,
        format!("{} delays: min {min:.6} s, max {max:.6} s, mean {mean:.6} s (target 0.055 +- 0.002)", delays.len()),
    )
}

fn without_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(first: &Result<(Vec<EvalReport>, f64), String>) -> Outcome {
    let (a, b) = match (first, run_suite()) {
        (Ok((a, _)), Ok((b, _))) => (reports_csv(a), reports_csv(&b)),
        (Err(e), _) => return outcome(false, format!("first run failed: {e}")),
        (_, Err(e)) => return outcome(false, format!("second run failed: {e}")),
    };
    let same = without_timing(&a) == without_timing(&b);
    outcome(
        same && !a.is_empty(),
        format!("two runs of the scenario suite, {} CSV lines each, identical without the timing column: {same}", a.lines().count()),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 lossless round trip", round_trip()),
        ("2 header protocol", header_protocol()),
        ("3 padding overhead", padding_overhead()),
        ("4 z-score normalization", zscore()),
        ("5 ANOVA oracle", anova_oracle()),
        ("6 classifier sanity", classifier_sanity()),
        ("7 stratified 10-fold", stratified_folds()),
    ];
    let suite = run_suite();
    results.push(("8 degradation", degradation(&suite)));
    results.push(("9 delay distribution", delay_distribution()));
    results.push(("10 determinism", determinism(&suite)));

    let mut failed = 0;
    for (name, o) in &results {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
