use ndarray::Array2;

use super::{Dataset, FeatureError};
use crate::Scalar;

const LABEL_COLUMN: &str = "label";

/// Renders a dataset as CSV: feature columns then `label`, six decimals.
pub fn export_csv<T: Scalar>(dataset: &Dataset<T>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(Vec::new());
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(LABEL_COLUMN);
    w.write_record(&header).expect("in-memory write");
    for (row, label) in dataset.x.outer_iter().zip(&dataset.y) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{:.6}", v.as_f64())).collect();
        rec.push(label.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn import_csv<T: Scalar>(bytes: &[u8]) -> Result<Dataset<T>, FeatureError> {
    let bad = |m: String| FeatureError::MalformedCsv(m);
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let n = header.len();
    if n == 0 || &header[n - 1] != LABEL_COLUMN {
        return Err(bad("last column must be 'label'".into()));
    }
    let names: Vec<String> = header.iter().take(n - 1).map(str::to_string).collect();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != n {
            return Err(bad(format!("row {} has {} fields, expected {n}", i + 1, rec.len())));
        }
        for field in rec.iter().take(n - 1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: '{field}' is not a number", i + 1)))?;
            data.push(T::of(v));
        }
        let label = rec[n - 1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: bad label '{}'", i + 1, &rec[n - 1])))?;
        y.push(label);
    }
    let x = Array2::from_shape_vec((y.len(), n - 1), data).map_err(|e| bad(e.to_string()))?;
    Dataset::new(x, y, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = Dataset::<f64>::empty(names());
        assert_eq!(export_csv(&d), b"a,b,label\n");
        assert_eq!(import_csv::<f64>(&export_csv(&d)).unwrap(), d);
    }

    #[test]
    fn one_row_round_trip() {
        let d = Dataset::new(array![[0.1234567, -2.5]], vec![3], names()).unwrap();
        let text = export_csv(&d);
        assert_eq!(text, b"a,b,label\n0.123457,-2.500000,3\n");
        let back: Dataset<f64> = import_csv(&text).unwrap();
        assert_eq!(back.y, d.y);
        assert!((back.x[[0, 0]] - d.x[[0, 0]]).abs() <= 1e-6);
    }

    #[test]
    fn malformed_inputs() {
        for bad in [&b"a,b\n1,2\n"[..], b"a,label\n1,2,3\n", b"a,label\nx,1\n", b"a,label\n1,-1\n"] {
            assert!(matches!(import_csv::<f64>(bad), Err(FeatureError::MalformedCsv(_))), "{bad:?}");
        }
    }
}
