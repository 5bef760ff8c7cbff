use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use camo::packet::{read_pcap, write_pcap};
use tempfile::TempDir;

fn camo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camo"))
        .args(args)
        .env("CAMO_THREADS", "2")
        .output()
        .expect("spawn camo")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn count_line(report: &str, prefix: &str) -> usize {
    report
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no '{prefix}' line in:\n{report}"))
        .trim()
        .parse()
        .unwrap()
}

struct Corpus {
    dir: TempDir,
    pcap: PathBuf,
    labels: PathBuf,
}

impl Corpus {
    fn new(devices: usize, flows: usize) -> Corpus {
        let dir = TempDir::new().unwrap();
        let pcap = dir.path().join("corpus.pcap");
        let labels = dir.path().join("labels.csv");
        let out = camo(&[
            "synth",
            "--out",
            s(&pcap),
            "--labels",
            s(&labels),
            "--devices",
            &devices.to_string(),
            "--flows",
            &flows.to_string(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Corpus { dir, pcap, labels }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn obfuscate(&self, profile: &str, seed: u64, name: &str) -> PathBuf {
        let out = self.path(name);
        let o = camo(&["obfuscate", s(&self.pcap), "--profile", profile, "--seed", &seed.to_string(), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    }
}

#[test]
fn obfuscate_then_deobfuscate_restores_payloads() {
    let c = Corpus::new(3, 8);
    let obf = c.obfuscate("padding+fragment+delay", 9, "obf.pcap");
    let back = c.path("back.pcap");
    let o = camo(&["deobfuscate", s(&obf), "--profile", "padding+fragment+delay", "--seed", "9", "--out", s(&back)]);
    assert!(o.status.success());
    assert_eq!(count_line(&stdout(&o), "checksum mismatches:"), 0);

    let orig = read_pcap(&fs::read(&c.pcap).unwrap()).unwrap();
    let restored = read_pcap(&fs::read(&back).unwrap()).unwrap();
    assert_eq!(orig.len(), restored.len());
    let key = |p: &camo::packet::Packet| (p.flow_key(), p.payload.clone());
    let mut a: Vec<_> = orig.packets.iter().map(key).collect();
    let mut b: Vec<_> = restored.packets.iter().map(key).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}

#[test]
fn obfuscate_prints_overhead_table() {
    let c = Corpus::new(2, 5);
    let out = c.path("o.pcap");
    let o = camo(&["obfuscate", s(&c.pcap), "--profile", "delay", "--out", s(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("Bytes added/pkt"), "{text}");
    assert!(text.contains("| delay"), "{text}");
}

#[test]
fn profile_file_is_accepted() {
    let c = Corpus::new(2, 5);
    let profile = c.path("p.profile");
    fs::write(&profile, "technique_chain = padding\npad_min = 4\npad_max = 4\nseed = 3\n").unwrap();
    let obf = c.path("o.pcap");
    let o = camo(&["obfuscate", s(&c.pcap), "--profile", s(&profile), "--out", s(&obf)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let before = read_pcap(&fs::read(&c.pcap).unwrap()).unwrap();
    let after = read_pcap(&fs::read(&obf).unwrap()).unwrap();
    let bytes = |cf: &camo::packet::CaptureFile| cf.packets.iter().map(|p| p.payload.len()).sum::<usize>();
    // 4-byte header plus exactly 4 pad bytes per packet.
    assert_eq!(bytes(&after), bytes(&before) + 8 * before.len());
}

#[test]
fn missing_input_exits_1() {
    let dir = TempDir::new().unwrap();
    let o = camo(&[
        "obfuscate",
        s(&dir.path().join("absent.pcap")),
        "--profile",
        "padding",
        "--out",
        s(&dir.path().join("o.pcap")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_technique_exits_3() {
    let c = Corpus::new(2, 3);
    let o = camo(&["obfuscate", s(&c.pcap), "--profile", "padding+teleport", "--out", s(&c.path("o.pcap"))]);
    assert_eq!(o.status.code(), Some(3));
    let o = camo(&["obfuscate", s(&c.pcap), "--profile", "padding", "--out", s(&c.pcap)]);
    assert_eq!(o.status.code(), Some(2), "output over input must be refused");
}

#[test]
fn malformed_pcap_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.pcap");
    fs::write(&bad, b"not a capture at all").unwrap();
    let o = camo(&["obfuscate", s(&bad), "--profile", "padding", "--out", s(&dir.path().join("o.pcap"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_corrupted_packet_counts_one_mismatch() {
    let c = Corpus::new(3, 6);
    let obf = c.obfuscate("padding", 21, "obf.pcap");
    let mut cap = read_pcap(&fs::read(&obf).unwrap()).unwrap();
    let victim = cap.len() / 2;
    for b in cap.packets[victim].payload.iter_mut() {
        *b = b.wrapping_add(1);
    }
    let bad = c.path("bad.pcap");
    fs::write(&bad, write_pcap(&cap)).unwrap();
    let back = c.path("back.pcap");
    let o = camo(&["deobfuscate", s(&bad), "--profile", "padding", "--seed", "21", "--out", s(&back)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(count_line(&text, "checksum mismatches:"), 1, "{text}");
    assert_eq!(count_line(&text, "other errors:"), 0, "{text}");
    assert_eq!(count_line(&text, "restored packets:"), cap.len() - 1, "{text}");
}

#[test]
fn wrong_seed_fails_checksums() {
    let c = Corpus::new(3, 6);
    let obf = c.obfuscate("padding", 21, "obf.pcap");
    let n = read_pcap(&fs::read(&obf).unwrap()).unwrap().len();
    let o = camo(&["deobfuscate", s(&obf), "--profile", "padding", "--seed", "22", "--out", s(&c.path("b.pcap"))]);
    assert!(o.status.success());
    let mismatches = count_line(&stdout(&o), "checksum mismatches:");
    assert!(mismatches * 10 >= n * 9, "{mismatches} of {n}");
}

#[test]
fn baseline_attack_reports_each_classifier() {
    let c = Corpus::new(3, 10);
    let csv = c.path("r.csv");
    let o = camo(&[
        "attack",
        s(&c.pcap),
        "--labels",
        s(&c.labels),
        "--plan",
        "baseline",
        "--classifiers",
        "knn,dt,rf",
        "--folds",
        "3",
        "--out",
        s(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for title in ["kNN", "Decision Tree", "Random Forest"] {
        assert!(text.contains(&format!("| {title}")), "{text}");
    }
    let body = fs::read_to_string(&csv).unwrap();
    assert_eq!(body.lines().count(), 4, "{body}");
}

#[test]
fn naive_attack_without_obfuscated_capture_is_usage_error() {
    let c = Corpus::new(2, 4);
    let o = camo(&["attack", s(&c.pcap), "--labels", s(&c.labels), "--plan", "naive", "--classifiers", "dt"]);
    assert_eq!(o.status.code(), Some(2));
    let o = camo(&["attack", s(&c.pcap), "--labels", s(&c.labels), "--plan", "fine_tune", "--classifiers", "mlp"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_label_exits_4() {
    let c = Corpus::new(2, 4);
    let one = c.path("one.csv");
    fs::write(&one, "address,label\n192.168.1.10,a\n").unwrap();
    let o = camo(&["attack", s(&c.pcap), "--labels", s(&one), "--classifiers", "dt", "--folds", "2"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn seeded_runs_are_identical() {
    let c = Corpus::new(3, 8);
    let obf = c.obfuscate("padding", 7, "obf.pcap");
    let run = |name: &str| {
        let csv = c.path(name);
        let o = camo(&[
            "attack",
            s(&c.pcap),
            "--labels",
            s(&c.labels),
            "--plan",
            "naive",
            "--obfuscated",
            s(&obf),
            "--technique",
            "padding",
            "--classifiers",
            "dt,rf,mlp",
            "--mlp-epochs",
            "5",
            "--folds",
            "3",
            "--seed",
            "7",
            "--out",
            s(&csv),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(csv).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn synth_labels_join_extracted_rows() {
    let c = Corpus::new(4, 5);
    let labels = fs::read_to_string(&c.labels).unwrap();
    let label_set: BTreeSet<String> = labels.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    assert_eq!(label_set.len(), 4);

    let o = camo(&["extract", s(&c.pcap), "--labels", s(&c.labels)]);
    assert!(o.status.success());
    let csv = stdout(&o);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let packets = read_pcap(&fs::read(&c.pcap).unwrap()).unwrap().len();
    assert_eq!(rows.len(), packets, "every packet belongs to a labelled device");
    let seen: BTreeSet<String> = rows.iter().map(|r| r.rsplit(',').next().unwrap().to_string()).collect();
    assert_eq!(seen, label_set);
}

#[test]
fn extract_with_k_keeps_k_columns() {
    let c = Corpus::new(3, 4);
    let out = c.path("f.csv");
    let o = camo(&["extract", s(&c.pcap), "--labels", s(&c.labels), "--k", "3", "--out", s(&out)]);
    assert!(o.status.success());
    let header = fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 4, "{header}");
}

#[test]
fn scenario_file_runs() {
    let c = Corpus::new(2, 4);
    let file = c.path("s.scn");
    fs::write(
        &file,
        "[scenario quick]\ncorpus = corpus.pcap\nlabels = labels.csv\nplan = naive\nclassifiers = dt\ntechnique_chain = padding; delay\nfolds = 2\n",
    )
    .unwrap();
    let csv = c.path("s.csv");
    let o = camo(&["scenario", s(&file), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = fs::read_to_string(&csv).unwrap();
    assert_eq!(body.lines().count(), 3, "{body}");
    assert!(stdout(&o).contains("Bytes added/pkt"));
}
