//! Run metrics and their CSV form.
//!
//! Layers and stop depths are 1-based in every emitted file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::LayerMaskSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    pub layer: usize,
    pub node_sparsity: f64,
    pub edge_sparsity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub epoch: usize,
    pub layer: usize,
    pub mean_distance: f64,
    pub zero_norm: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EdgesRemoved,
    NodesStopped,
    /// Nothing could be removed; `count` is zero.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub epoch: usize,
    pub layer: usize,
    pub kind: EventKind,
    pub count: usize,
}

/// Node counts per stop depth; `never` holds nodes that were not stopped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StopHistogram {
    pub depth: usize,
    pub stopped: BTreeMap<usize, usize>,
    pub never: usize,
}

impl StopHistogram {
    pub fn from_masks(masks: &LayerMaskSet) -> Self {
        let mut h = StopHistogram {
            depth: masks.depth(),
            ..Default::default()
        };
        for stop in masks.stop_depths() {
            match stop {
                Some(r) => *h.stopped.entry(*r).or_default() += 1,
                None => h.never += 1,
            }
        }
        h
    }

    pub fn total(&self) -> usize {
        self.never + self.stopped.values().sum::<usize>()
    }

    pub fn num_stopped(&self) -> usize {
        self.stopped.values().sum()
    }

    /// `(bucket, count)` for depths `1..=depth` then `inf`.
    pub fn rows(&self) -> Vec<(String, usize)> {
        let mut rows: Vec<(String, usize)> = (1..=self.depth)
            .map(|d| (d.to_string(), self.stopped.get(&d).copied().unwrap_or(0)))
            .collect();
        rows.push(("inf".to_string(), self.never));
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: Vec<EpochRecord>,
    pub sparsity: Vec<LayerSparsity>,
    pub distances: Vec<DistanceRecord>,
    pub stops: StopHistogram,
    pub events: Vec<PruneEvent>,
    /// Chosen by validation accuracy over the final training phase.
    pub best: Option<BestEpoch>,
    pub wall_clock_secs: f64,
    pub zero_norm_rows: usize,
}

impl RunReport {
    pub fn best_test_acc(&self) -> Option<f64> {
        self.best.and_then(|b| b.test_acc)
    }

    pub fn final_edge_sparsity(&self) -> Vec<f64> {
        self.sparsity.iter().map(|s| s.edge_sparsity).collect()
    }

    /// Mean distance at `layer` (1-based) for the probe taken at `epoch`.
    pub fn mean_distance(&self, epoch: usize, layer: usize) -> Option<f64> {
        self.distances
            .iter()
            .find(|d| d.epoch == epoch && d.layer == layer)
            .map(|d| d.mean_distance)
    }

    /// Writes `report.csv`, `sparsity.csv`, `distances.csv`, `stops.csv`
    /// and `events.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join("report.csv"), &self.epochs)?;
        write_rows(&dir.join("sparsity.csv"), &self.sparsity)?;
        write_rows(&dir.join("distances.csv"), &self.distances)?;
        write_rows(&dir.join("events.csv"), &self.events)?;

        let mut w = csv::Writer::from_path(dir.join("stops.csv"))?;
        w.write_record(["stop_depth", "nodes"])?;
        for (bucket, count) in self.stops.rows() {
            w.write_record([bucket, count.to_string()])?;
        }
        w.flush()?;

        let mut summary = File::create(dir.join("summary.json"))?;
        let best = serde_json::json!({
            "best": self.best,
            "wall_clock_secs": self.wall_clock_secs,
            "zero_norm_rows": self.zero_norm_rows,
            "stopped_nodes": self.stops.num_stopped(),
        });
        writeln!(summary, "{}", serde_json::to_string_pretty(&best)?)?;
        Ok(())
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        // header only, so the file still parses as an empty table
        let header = match path.file_name().and_then(|n| n.to_str()) {
            Some("distances.csv") => vec!["epoch", "layer", "mean_distance", "zero_norm"],
            Some("events.csv") => vec!["epoch", "layer", "kind", "count"],
            Some("sparsity.csv") => vec!["layer", "node_sparsity", "edge_sparsity"],
            _ => vec!["epoch", "train_loss", "train_acc", "val_acc", "test_acc"],
        };
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one of the CSV tables back.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = RunReport {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 1.5,
                    train_acc: 0.25,
                    val_acc: Some(0.5),
                    test_acc: None,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 1.25,
                    train_acc: 0.5,
                    val_acc: Some(0.75),
                    test_acc: Some(0.5),
                },
            ],
            sparsity: vec![LayerSparsity {
                layer: 1,
                node_sparsity: 1.0,
                edge_sparsity: 0.5,
            }],
            stops: StopHistogram {
                depth: 2,
                stopped: [(2, 3)].into_iter().collect(),
                never: 4,
            },
            ..Default::default()
        };
        report.write_csv(dir.path()).unwrap();
        let epochs: Vec<EpochRecord> = read_rows(&dir.path().join("report.csv")).unwrap();
        assert_eq!(epochs, report.epochs);
        let sp: Vec<LayerSparsity> = read_rows(&dir.path().join("sparsity.csv")).unwrap();
        assert_eq!(sp, report.sparsity);
        let d: Vec<DistanceRecord> = read_rows(&dir.path().join("distances.csv")).unwrap();
        assert!(d.is_empty());
        let stops = std::fs::read_to_string(dir.path().join("stops.csv")).unwrap();
        assert_eq!(stops, "stop_depth,nodes\n1,0\n2,3\ninf,4\n");
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[0.8]), (0.8, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
