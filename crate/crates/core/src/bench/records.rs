//! CSV rows produced by the benchmarks, with writers and loaders.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BENCH_HEADER: &str =
    "estimator,spec,n,S,lambda,tau,seed,cosine,l0_norm,zero_fraction,wall_time_s";
pub const AGGREGATE_HEADER: &str =
    "estimator,spec,n,S,lambda,tau,runs,cosine_mean,cosine_std,l0_norm_mean,zero_fraction_mean";
pub const BIAS_HEADER: &str =
    "spec,seed,lambda,component,exact_grad,imle_unscaled,imle_scaled,bias";
pub const TRAJECTORY_HEADER: &str = "step,loss,lambda,g_bar,alpha";

/// One (seed, estimator, sample count) measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub estimator: String,
    pub spec: String,
    pub n: usize,
    #[serde(rename = "S")]
    pub samples: usize,
    pub lambda: String,
    pub tau: f64,
    pub seed: u64,
    pub cosine: f64,
    pub l0_norm: f64,
    pub zero_fraction: f64,
    pub wall_time_s: f64,
}

/// Mean and sample standard deviation over seeds for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub estimator: String,
    pub spec: String,
    pub n: usize,
    #[serde(rename = "S")]
    pub samples: usize,
    pub lambda: String,
    pub tau: f64,
    pub runs: usize,
    pub cosine_mean: f64,
    pub cosine_std: f64,
    pub l0_norm_mean: f64,
    pub zero_fraction_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub spec: String,
    pub seed: u64,
    pub lambda: f64,
    pub component: usize,
    pub exact_grad: f64,
    pub imle_unscaled: f64,
    pub imle_scaled: f64,
    pub bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub loss: f64,
    pub lambda: f64,
    pub g_bar: f64,
    pub alpha: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Groups records by everything except the seed, in order of first appearance.
pub fn aggregate(records: &[BenchRecord]) -> Vec<AggregateRow> {
    let mut groups: Vec<(&BenchRecord, Vec<&BenchRecord>)> = Vec::new();
    for r in records {
        let same = |k: &&BenchRecord| {
            k.estimator == r.estimator
                && k.spec == r.spec
                && k.n == r.n
                && k.samples == r.samples
                && k.lambda == r.lambda
                && k.tau.to_bits() == r.tau.to_bits()
        };
        match groups.iter_mut().find(|(k, _)| same(k)) {
            Some((_, members)) => members.push(r),
            None => groups.push((r, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(k, members)| {
            let cos: Vec<f64> = members.iter().map(|r| r.cosine).collect();
            let l0: Vec<f64> = members.iter().map(|r| r.l0_norm).collect();
            let zf: Vec<f64> = members.iter().map(|r| r.zero_fraction).collect();
            AggregateRow {
                estimator: k.estimator.clone(),
                spec: k.spec.clone(),
                n: k.n,
                samples: k.samples,
                lambda: k.lambda.clone(),
                tau: k.tau,
                runs: members.len(),
                cosine_mean: mean(&cos),
                cosine_std: sample_std(&cos),
                l0_norm_mean: mean(&l0),
                zero_fraction_mean: mean(&zf),
            }
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes rows with a header line; an empty slice still writes the header.
pub fn write_csv<T: Serialize, W: Write>(out: W, header: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header.split(',')).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Reads rows, rejecting files whose header differs from `header`.
pub fn read_csv<T: DeserializeOwned, R: Read>(input: R, header: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let found = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(Error::Io(format!("unexpected header `{found}`")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn write_records<W: Write>(out: W, rows: &[BenchRecord]) -> Result<()> {
    write_csv(out, BENCH_HEADER, rows)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<BenchRecord>> {
    read_csv(input, BENCH_HEADER)
}

pub fn write_aggregate<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    write_csv(out, AGGREGATE_HEADER, rows)
}

pub fn write_bias<W: Write>(out: W, rows: &[BiasRow]) -> Result<()> {
    write_csv(out, BIAS_HEADER, rows)
}

pub fn read_bias<R: Read>(input: R) -> Result<Vec<BiasRow>> {
    read_csv(input, BIAS_HEADER)
}

pub fn write_trajectory<W: Write>(out: W, rows: &[TrajectoryPoint]) -> Result<()> {
    write_csv(out, TRAJECTORY_HEADER, rows)
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryPoint>> {
    read_csv(input, TRAJECTORY_HEADER)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(estimator: &str, seed: u64, cosine: f64) -> BenchRecord {
        BenchRecord {
            estimator: estimator.into(),
            spec: "categorical:50".into(),
            n: 50,
            samples: 10,
            lambda: "adaptive".into(),
            tau: 1.0,
            seed,
            cosine,
            l0_norm: 2.0,
            zero_fraction: 0.5,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn header_and_round_trip() {
        let rows = vec![
            rec("aimle-central", 0, 0.25),
            rec("aimle-central", 1, -0.1 / 3.0),
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some(BENCH_HEADER));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_records(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn empty_file_keeps_header() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), BENCH_HEADER);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "step,loss\n1,2\n";
        assert!(read_records(text.as_bytes()).is_err());
    }

    #[test]
    fn aggregate_groups_by_configuration() {
        let rows = vec![rec("a", 0, 0.2), rec("b", 0, 0.9), rec("a", 1, 0.4)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].estimator, "a");
        assert_eq!(agg[0].runs, 2);
        assert!((agg[0].cosine_mean - 0.3).abs() < 1e-15);
        assert!((agg[0].cosine_std - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg[1].cosine_std, 0.0);
    }

    #[test]
    fn trajectory_round_trip() {
        let pts = vec![
            TrajectoryPoint {
                step: 0,
                loss: 3.5,
                lambda: 0.0,
                g_bar: 1.0,
                alpha: 0.001,
            },
            TrajectoryPoint {
                step: 1,
                loss: 3.25,
                lambda: 1e-4,
                g_bar: 0.9,
                alpha: 0.002,
            },
        ];
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &pts).unwrap();
        assert_eq!(read_trajectory(buf.as_slice()).unwrap(), pts);
    }
}
