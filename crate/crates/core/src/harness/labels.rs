use std::collections::HashMap;
use std::net::Ipv4Addr;

use super::HarnessError;

/// Parses `address,label` rows. An optional header row is skipped. Labels
/// that are all non-negative integers are used as class ids; otherwise
/// names get ids in order of first appearance.
pub fn parse_labels(text: &str) -> Result<Vec<(Ipv4Addr, usize)>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut raw: Vec<(Ipv4Addr, String)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Labels(e.to_string()))?;
        if rec.len() != 2 {
            return Err(HarnessError::Labels(format!("line {}: expected address,label", i + 1)));
        }
        match rec[0].parse::<Ipv4Addr>() {
            Ok(addr) => raw.push((addr, rec[1].to_string())),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(HarnessError::Labels(format!("line {}: bad address '{}'", i + 1, &rec[0]))),
        }
    }
    let numeric: Option<Vec<usize>> = raw.iter().map(|(_, l)| l.parse().ok()).collect();
    let ids = numeric.unwrap_or_else(|| {
        let mut names: HashMap<&str, usize> = HashMap::new();
        raw.iter()
            .map(|(_, l)| {
                let next = names.len();
                *names.entry(l.as_str()).or_insert(next)
            })
            .collect()
    });
    let mut seen = HashMap::new();
    let mut out = Vec::with_capacity(raw.len());
    for ((addr, _), id) in raw.iter().zip(ids) {
        if let Some(prev) = seen.insert(*addr, id) {
            if prev != id {
                return Err(HarnessError::Labels(format!("{addr} labeled twice")));
            }
            continue;
        }
        out.push((*addr, id));
    }
    Ok(out)
}

pub fn labels_csv(labels: &[(Ipv4Addr, usize)]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["address", "label"]).expect("in-memory write");
    for (addr, id) in labels {
        w.write_record([addr.to_string(), id.to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}
