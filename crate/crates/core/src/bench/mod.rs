//! Workload generator and reporting: the file-size read sweep and a
//! training-loop I/O emulator, both driven through the client facade.

mod dataset;
mod workload;

pub use dataset::{
    class_file_name, file_content, gen_dataset, DatasetFile, GeneratedDataset, DIGEST_FILE, VAL_DIR,
};
pub use workload::{epoch_order, run_random_reads, run_read_sweep, run_training_emulation};

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};

/// Version of the CSV layout written by [`BenchReport::to_csv`].
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "schema_version,kind,label,file_size,files,nodes,threads,bytes,seconds,bandwidth_bytes_per_s,files_per_s,local_hit_fraction";

/// Per-iteration compute time typical of single-GPU image classification.
pub const COMPUTE_DELAY_PRESET: Duration = Duration::from_millis(500);

/// Desk-scale file counts are the full-scale counts divided by this.
pub const SCALE_DOWN: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SizeClass {
    pub name: String,
    pub size: u64,
    pub count: u32,
}

impl SizeClass {
    pub fn new(name: &str, size: u64, count: u32) -> SizeClass {
        SizeClass {
            name: name.into(),
            size,
            count,
        }
    }
}

/// `128K:1024` style: a size with optional K/M/G suffix, then a count.
impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<SizeClass> {
        let bad = || Error::InvalidArgument(format!("size class {s:?}, expected SIZE:COUNT like 128K:1024"));
        let (size, count) = s.split_once(':').ok_or_else(bad)?;
        let size = size.trim();
        let (digits, mult) = match size.chars().last().map(|c| c.to_ascii_uppercase()) {
            Some('K') => (&size[..size.len() - 1], 1u64 << 10),
            Some('M') => (&size[..size.len() - 1], 1 << 20),
            Some('G') => (&size[..size.len() - 1], 1 << 30),
            _ => (size, 1),
        };
        let n: u64 = digits.parse().map_err(|_| bad())?;
        Ok(SizeClass {
            name: size.to_ascii_uppercase(),
            size: n.checked_mul(mult).ok_or_else(bad)?,
            count: count.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub classes: Vec<SizeClass>,
    /// Reader threads per node-process.
    pub threads: u32,
    pub epochs: u32,
    /// Mini-batch size per process.
    pub batch: u32,
    pub seed: u64,
    /// Sleep after every mini-batch.
    pub compute_delay: Duration,
    /// Files in the validation directory (`val/`), read once per epoch.
    pub val_files: u32,
    pub checkpoint_bytes: u64,
    /// Directory the per-epoch checkpoints are written under.
    pub checkpoint_dir: String,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            classes: BenchSpec::scaled_classes(),
            threads: 4,
            epochs: 1,
            batch: 64,
            seed: 42,
            compute_delay: Duration::ZERO,
            val_files: 0,
            checkpoint_bytes: 1 << 20,
            checkpoint_dir: "ckpt".into(),
        }
    }
}

impl BenchSpec {
    /// Full-scale counts 128Ki / 32Ki / 8Ki / 2Ki, divided by [`SCALE_DOWN`].
    pub fn scaled_classes() -> Vec<SizeClass> {
        Self::full_scale_classes()
            .into_iter()
            .map(|c| SizeClass {
                count: c.count / SCALE_DOWN,
                ..c
            })
            .collect()
    }

    pub fn full_scale_classes() -> Vec<SizeClass> {
        vec![
            SizeClass::new("128K", 128 << 10, 128 << 10),
            SizeClass::new("512K", 512 << 10, 32 << 10),
            SizeClass::new("2M", 2 << 20, 8 << 10),
            SizeClass::new("8M", 8 << 20, 2 << 10),
        ]
    }

    pub fn val_file_size(&self) -> u64 {
        self.classes.first().map_or(128 << 10, |c| c.size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument("threads and batch must be at least 1".into()));
        }
        let mut names: Vec<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.classes.len() || names.contains(&VAL_DIR) {
            return Err(Error::InvalidArgument("size class names must be distinct and not 'val'".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// `sweep`, `random` or `train_epoch`.
    pub kind: String,
    /// Size class name or `epochN`.
    pub label: String,
    pub file_size: u64,
    /// Files read across all node-processes.
    pub files: u64,
    pub nodes: u32,
    pub threads: u32,
    pub bytes: u64,
    pub seconds: f64,
    pub local_hit_fraction: f64,
}

impl BenchRow {
    pub fn bandwidth(&self) -> f64 {
        if self.seconds > 0.0 {
            self.bytes as f64 / self.seconds
        } else {
            0.0
        }
    }

    pub fn files_per_sec(&self) -> f64 {
        if self.seconds > 0.0 {
            self.files as f64 / self.seconds
        } else {
            0.0
        }
    }
}

/// Counts from one training emulation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrainingAccounting {
    pub epochs: u32,
    pub training_reads: u64,
    pub val_reads: u64,
    /// Complete cluster-wide passes over the validation set.
    pub val_passes: u64,
    pub checkpoints_committed: u64,
    /// Checkpoints every node-process could stat with the right size.
    pub checkpoints_visible: u64,
    pub startup_stats: u64,
    pub startup_readdirs: u64,
    /// SHA-256 of the planned access order; identical for identical seeds.
    pub access_digest: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub wall_seconds: f64,
    pub training: Option<TrainingAccounting>,
}

impl BenchReport {
    pub fn row(&self, kind: &str, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.kind == kind && r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{CSV_SCHEMA_VERSION},{},{},{},{},{},{},{},{:.6},{:.1},{:.3},{:.4}",
                r.kind,
                r.label,
                r.file_size,
                r.files,
                r.nodes,
                r.threads,
                r.bytes,
                r.seconds,
                r.bandwidth(),
                r.files_per_sec(),
                r.local_hit_fraction
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_size_classes() {
        let c: SizeClass = "128K:1024".parse().unwrap();
        assert_eq!(c, SizeClass::new("128K", 131072, 1024));
        let c: SizeClass = "2m:8".parse().unwrap();
        assert_eq!((c.size, c.count), (2 << 20, 8));
        assert_eq!("100:3".parse::<SizeClass>().unwrap().size, 100);
        assert!("12Q:1".parse::<SizeClass>().is_err());
        assert!("128K".parse::<SizeClass>().is_err());
    }

    #[test]
    fn default_classes_are_scaled_down() {
        let counts: Vec<u32> = BenchSpec::default().classes.iter().map(|c| c.count).collect();
        assert_eq!(counts, [1024, 256, 64, 16]);
    }

    #[test]
    fn csv_has_declared_columns() {
        let report = BenchReport {
            rows: vec![BenchRow {
                kind: "sweep".into(),
                label: "128K".into(),
                file_size: 131072,
                files: 10,
                nodes: 1,
                threads: 4,
                bytes: 1310720,
                seconds: 2.0,
                local_hit_fraction: 1.0,
            }],
            ..Default::default()
        };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let cols: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(cols.len(), CSV_HEADER.split(',').count());
        assert_eq!(cols[0], "1");
        assert_eq!(cols[9], "655360.0");
        assert_eq!(cols[10], "5.000");
    }
}
