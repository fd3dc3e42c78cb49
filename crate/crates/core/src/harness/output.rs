use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};

use super::ExperimentKind;

pub const CSV_HEADER: [&str; 10] = [
    "kind", "scheme", "scenario", "n", "d01", "d02", "seed", "metric", "value", "runtime_s",
];

/// One measured quantity of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub kind: ExperimentKind,
    pub scheme: String,
    pub scenario: String,
    pub n: usize,
    pub d01: f64,
    pub d02: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub runtime_s: Option<f64>,
}

impl ResultRecord {
    fn cmp_key(&self, other: &Self) -> Ordering {
        (self.kind, &self.scheme, &self.scenario, self.n)
            .cmp(&(other.kind, &other.scheme, &other.scenario, other.n))
            .then(self.d01.total_cmp(&other.d01))
            .then(self.d02.total_cmp(&other.d02))
            .then(self.seed.cmp(&other.seed))
            .then(self.metric.cmp(&other.metric))
    }
}

pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(ResultRecord::cmp_key);
}

/// Ten significant digits.
fn float(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn format_csv(records: &[ResultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Parse(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        if !r.value.is_finite() {
            return Err(Error::Numerical(format!("metric {} has non-finite value {}", r.metric, r.value)));
        }
        w.write_record([
            r.kind.label().to_string(),
            r.scheme.clone(),
            r.scenario.clone(),
            r.n.to_string(),
            float(r.d01),
            float(r.d02),
            r.seed.to_string(),
            r.metric.clone(),
            float(r.value),
            r.runtime_s.map(float).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(format!("csv: {e}")))
}

pub fn emit_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    std::fs::write(path, format_csv(records)?).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| Error::Parse(format!("csv header: {e}")))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected csv header {header:?}")));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Parse(format!("bad {what} {s:?}")))
    };
    rd.records()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse(format!("csv: {e}")))?;
            let runtime = &row[9];
            Ok(ResultRecord {
                kind: ExperimentKind::parse(&row[0])?,
                scheme: row[1].to_string(),
                scenario: row[2].to_string(),
                n: row[3].parse().map_err(|_| Error::Parse(format!("bad n {:?}", &row[3])))?,
                d01: num(&row[4], "d01")?,
                d02: num(&row[5], "d02")?,
                seed: row[6].parse().map_err(|_| Error::Parse(format!("bad seed {:?}", &row[6])))?,
                metric: row[7].to_string(),
                value: num(&row[8], "value")?,
                runtime_s: if runtime.is_empty() { None } else { Some(num(runtime, "runtime")?) },
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(value: f64, seed: u64) -> ResultRecord {
        ResultRecord {
            kind: ExperimentKind::NSweep,
            scheme: "drl-single".into(),
            scenario: "S1".into(),
            n: 8,
            d01: 1.0,
            d02: 49.0,
            seed,
            metric: "sum_rate".into(),
            value,
            runtime_s: None,
        }
    }

    fn round10(x: f64) -> f64 {
        float(x).parse().unwrap()
    }

    #[test]
    fn empty_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(format_csv(&[record(f64::NAN, 1)]).is_err());
    }

    #[test]
    fn io_error_names_path() {
        let err = emit_csv(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    #[test]
    fn sorting_is_by_key() {
        let mut rs = vec![record(1.0, 3), record(2.0, 1), record(3.0, 2)];
        sort_records(&mut rs);
        assert_eq!(rs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    proptest! {
        #[test]
        fn round_trip_at_ten_digits(values in prop::collection::vec(-1e6f64..1e6, 0..20), rt in prop::option::of(0.0f64..100.0)) {
            let rs: Vec<ResultRecord> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| ResultRecord { runtime_s: rt, ..record(v, i as u64) })
                .collect();
            let text = format_csv(&rs).unwrap();
            let back = parse_csv(&text).unwrap();
            prop_assert_eq!(back.len(), rs.len());
            for (a, b) in rs.iter().zip(&back) {
                prop_assert_eq!(round10(a.value), b.value);
                prop_assert_eq!(a.runtime_s.map(round10), b.runtime_s);
                prop_assert_eq!(&a.scheme, &b.scheme);
                prop_assert_eq!(a.seed, b.seed);
            }
            prop_assert_eq!(format_csv(&back).unwrap(), text);
        }
    }
}
