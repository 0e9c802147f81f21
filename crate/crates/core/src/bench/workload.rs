use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{file_content, BenchReport, BenchRow, BenchSpec, DatasetFile, GeneratedDataset, TrainingAccounting};
use crate::client::FanStore;
use crate::error::{Error, Result};
use crate::partition::FileMeta;

/// Cluster-wide (opens, remote fetches), summed over the clients' nodes.
fn open_counts(clients: &[FanStore]) -> Result<(u64, u64)> {
    let mut totals = (0, 0);
    for c in clients {
        let s = c.node_stats()?;
        totals.0 += s.opens;
        totals.1 += s.remote_fetches;
    }
    Ok(totals)
}

fn hit_fraction(before: (u64, u64), after: (u64, u64)) -> f64 {
    let opens = after.0 - before.0;
    let remote = after.1 - before.1;
    if opens == 0 {
        1.0
    } else {
        (opens - remote) as f64 / opens as f64
    }
}

/// Keeps the first error reported by any worker.
#[derive(Default)]
struct FirstError(Mutex<Option<Error>>);

impl FirstError {
    fn record(&self, e: Error) {
        self.0.lock().unwrap().get_or_insert(e);
    }

    fn failed(&self) -> bool {
        self.0.lock().unwrap().is_some()
    }

    fn into_result(self) -> Result<()> {
        match self.0.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn read_verified(client: &FanStore, ds: &GeneratedDataset, f: &DatasetFile) -> Result<u64> {
    let bytes = client.read_file(&client.mount().to_mounted(&f.path))?;
    ds.verify(&f.path, &bytes)?;
    Ok(bytes.len() as u64)
}

/// Reads `files` on every client with `threads` workers each. Client `r`
/// starts at a different offset so the clients do not move in lockstep.
fn read_everything(
    clients: &[FanStore],
    ds: &GeneratedDataset,
    files: &[&DatasetFile],
    threads: u32,
) -> Result<u64> {
    let bytes = AtomicU64::new(0);
    let err = FirstError::default();
    let n = files.len();
    std::thread::scope(|s| {
        for (rank, client) in clients.iter().enumerate() {
            let shift = rank * n / clients.len().max(1);
            for t in 0..threads as usize {
                let (bytes, err) = (&bytes, &err);
                s.spawn(move || {
                    for k in (t..n).step_by(threads as usize) {
                        if err.failed() {
                            return;
                        }
                        match read_verified(client, ds, files[(k + shift) % n]) {
                            Ok(b) => {
                                bytes.fetch_add(b, Ordering::Relaxed);
                            }
                            Err(e) => err.record(e),
                        }
                    }
                });
            }
        }
    });
    err.into_result()?;
    Ok(bytes.into_inner())
}

/// Every client reads every file of each size class completely, one
/// class at a time; one row per class.
pub fn run_read_sweep(spec: &BenchSpec, ds: &GeneratedDataset, clients: &[FanStore]) -> Result<BenchReport> {
    spec.validate()?;
    let wall = Instant::now();
    let mut report = BenchReport::default();
    for class in &spec.classes {
        let files = ds.class_files(&class.name);
        if files.is_empty() {
            return Err(Error::InvalidArgument(format!("dataset has no files of class {}", class.name)));
        }
        let before = open_counts(clients)?;
        let start = Instant::now();
        let bytes = read_everything(clients, ds, &files, spec.threads)?;
        let seconds = start.elapsed().as_secs_f64();
        let after = open_counts(clients)?;
        let row = BenchRow {
            kind: "sweep".into(),
            label: class.name.clone(),
            file_size: class.size,
            files: (files.len() * clients.len()) as u64,
            nodes: clients.len() as u32,
            threads: spec.threads,
            bytes,
            seconds,
            local_hit_fraction: hit_fraction(before, after),
        };
        info!(
            "sweep {}: {:.1} MB/s, local hits {:.3}",
            row.label,
            row.bandwidth() / 1e6,
            row.local_hit_fraction
        );
        report.rows.push(row);
    }
    report.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(report)
}

/// `reads_per_client` uniformly random file reads on every client.
pub fn run_random_reads(
    spec: &BenchSpec,
    ds: &GeneratedDataset,
    clients: &[FanStore],
    reads_per_client: u64,
) -> Result<BenchReport> {
    let files = ds.training_files();
    if files.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let before = open_counts(clients)?;
    let bytes = AtomicU64::new(0);
    let err = FirstError::default();
    let start = Instant::now();
    std::thread::scope(|s| {
        for (rank, client) in clients.iter().enumerate() {
            for t in 0..spec.threads {
                let (bytes, err, files) = (&bytes, &err, &files);
                let share = reads_per_client / u64::from(spec.threads)
                    + u64::from(u64::from(t) < reads_per_client % u64::from(spec.threads));
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((rank as u64) << 32) ^ u64::from(t));
                    for _ in 0..share {
                        if err.failed() {
                            return;
                        }
                        let f = files[rng.gen_range(0..files.len())];
                        match read_verified(client, ds, f) {
                            Ok(b) => {
                                bytes.fetch_add(b, Ordering::Relaxed);
                            }
                            Err(e) => err.record(e),
                        }
                    }
                });
            }
        }
    });
    err.into_result()?;
    let seconds = start.elapsed().as_secs_f64();
    let after = open_counts(clients)?;
    Ok(BenchReport {
        rows: vec![BenchRow {
            kind: "random".into(),
            label: "all".into(),
            file_size: 0,
            files: reads_per_client * clients.len() as u64,
            nodes: clients.len() as u32,
            threads: spec.threads,
            bytes: bytes.into_inner(),
            seconds,
            local_hit_fraction: hit_fraction(before, after),
        }],
        wall_seconds: seconds,
        training: None,
    })
}

/// Shuffled order of `n` training files for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(epoch));
    order.shuffle(&mut rng);
    order
}

/// Walks the whole tree from the mount root, stat-ing every entry.
fn metadata_storm(client: &FanStore) -> Result<(u64, u64)> {
    let (mut stats, mut readdirs) = (0, 0);
    let mut stack = vec![client.mount().prefix().to_string()];
    while let Some(dir) = stack.pop() {
        readdirs += 1;
        for name in client.fs_readdir(&dir)? {
            let p = format!("{dir}/{name}");
            stats += 1;
            if client.fs_stat(&p)?.is_dir() {
                stack.push(p);
            }
        }
    }
    Ok((stats, readdirs))
}

/// Reads `files` with `threads` workers; returns bytes.
fn read_batch(client: &FanStore, ds: &GeneratedDataset, files: &[&DatasetFile], threads: u32) -> Result<u64> {
    if threads <= 1 || files.len() <= 1 {
        return files.iter().map(|f| read_verified(client, ds, f)).sum();
    }
    let bytes = AtomicU64::new(0);
    let err = FirstError::default();
    std::thread::scope(|s| {
        for t in 0..threads as usize {
            let (bytes, err) = (&bytes, &err);
            s.spawn(move || {
                for f in files.iter().skip(t).step_by(threads as usize) {
                    match read_verified(client, ds, f) {
                        Ok(b) => {
                            bytes.fetch_add(b, Ordering::Relaxed);
                        }
                        Err(e) => return err.record(e),
                    }
                }
            });
        }
    });
    err.into_result()?;
    Ok(bytes.into_inner())
}

/// Emulates data-parallel training with one process per client.
///
/// Startup: every process walks the namespace (readdir + stat storm).
/// Each epoch: the training set is shuffled and dealt round-robin to the
/// processes, which read their share in mini-batches of `spec.batch` with
/// `spec.threads` threads; the validation set is then read once
/// cluster-wide, split across processes; finally rank 0 writes a
/// checkpoint and every process checks that it can see it.
pub fn run_training_emulation(spec: &BenchSpec, ds: &GeneratedDataset, clients: &[FanStore]) -> Result<BenchReport> {
    spec.validate()?;
    if clients.is_empty() {
        return Err(Error::InvalidArgument("no clients".into()));
    }
    let wall = Instant::now();
    let train = ds.training_files();
    let val = ds.validation_files();
    let ranks = clients.len();
    let mut acct = TrainingAccounting {
        epochs: spec.epochs,
        ..Default::default()
    };

    let storm: Vec<Result<(u64, u64)>> = std::thread::scope(|s| {
        let joins: Vec<_> = clients.iter().map(|c| s.spawn(move || metadata_storm(c))).collect();
        joins.into_iter().map(|j| j.join().expect("storm worker panicked")).collect()
    });
    for r in storm {
        let (stats, readdirs) = r?;
        acct.startup_stats += stats;
        acct.startup_readdirs += readdirs;
    }

    let mut access = Sha256::new();
    let mut report = BenchReport::default();
    for epoch in 0..spec.epochs {
        let order = epoch_order(train.len(), spec.seed, epoch);
        let shards: Vec<Vec<&DatasetFile>> = (0..ranks)
            .map(|r| order.iter().skip(r).step_by(ranks).map(|&i| train[i]).collect())
            .collect();
        let val_shards: Vec<Vec<&DatasetFile>> = (0..ranks)
            .map(|r| val.iter().skip(r).step_by(ranks).copied().collect())
            .collect();
        for (r, shard) in shards.iter().enumerate() {
            for f in shard {
                access.update(format!("{epoch} {r} {}\n", f.path));
            }
        }

        let before = open_counts(clients)?;
        let start = Instant::now();
        let train_reads = AtomicU64::new(0);
        let val_reads = AtomicU64::new(0);
        let bytes = AtomicU64::new(0);
        let err = FirstError::default();
        std::thread::scope(|s| {
            for (r, client) in clients.iter().enumerate() {
                let (shard, vshard) = (&shards[r], &val_shards[r]);
                let (train_reads, val_reads, bytes, err) = (&train_reads, &val_reads, &bytes, &err);
                s.spawn(move || {
                    for batch in shard.chunks(spec.batch as usize) {
                        if err.failed() {
                            return;
                        }
                        match read_batch(client, ds, batch, spec.threads) {
                            Ok(b) => {
                                bytes.fetch_add(b, Ordering::Relaxed);
                                train_reads.fetch_add(batch.len() as u64, Ordering::Relaxed);
                            }
                            Err(e) => return err.record(e),
                        }
                        if !spec.compute_delay.is_zero() {
                            std::thread::sleep(spec.compute_delay);
                        }
                    }
                    match read_batch(client, ds, vshard, spec.threads) {
                        Ok(b) => {
                            bytes.fetch_add(b, Ordering::Relaxed);
                            val_reads.fetch_add(vshard.len() as u64, Ordering::Relaxed);
                        }
                        Err(e) => err.record(e),
                    }
                });
            }
        });
        err.into_result()?;
        let seconds = start.elapsed().as_secs_f64();
        let after = open_counts(clients)?;
        let epoch_train = train_reads.into_inner();
        let epoch_val = val_reads.into_inner();
        acct.training_reads += epoch_train;
        acct.val_reads += epoch_val;
        if !val.is_empty() && epoch_val == val.len() as u64 {
            acct.val_passes += 1;
        }

        let ckpt = checkpoint_path(spec, epoch);
        let content = file_content(spec.seed ^ 0xC4EC, &ckpt, spec.checkpoint_bytes);
        let mounted = clients[0].mount().to_mounted(&ckpt);
        clients[0].write_file(&mounted, &content)?;
        acct.checkpoints_committed += 1;
        let seen: Vec<Result<FileMeta>> = std::thread::scope(|s| {
            let joins: Vec<_> = clients
                .iter()
                .map(|c| {
                    let p = c.mount().to_mounted(&ckpt);
                    s.spawn(move || c.fs_stat(&p))
                })
                .collect();
            joins.into_iter().map(|j| j.join().expect("stat worker panicked")).collect()
        });
        if seen
            .into_iter()
            .all(|m| m.is_ok_and(|m| m.size_bytes == spec.checkpoint_bytes))
        {
            acct.checkpoints_visible += 1;
        }

        let row = BenchRow {
            kind: "train_epoch".into(),
            label: format!("epoch{epoch}"),
            file_size: 0,
            files: epoch_train + epoch_val,
            nodes: ranks as u32,
            threads: spec.threads,
            bytes: bytes.into_inner(),
            seconds,
            local_hit_fraction: hit_fraction(before, after),
        };
        info!("epoch {epoch}: {:.1} items/s", row.files_per_sec());
        report.rows.push(row);
    }
    acct.access_digest = hex::encode(access.finalize());
    report.training = Some(acct);
    report.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(report)
}

fn checkpoint_path(spec: &BenchSpec, epoch: u32) -> String {
    let dir = spec.checkpoint_dir.trim_matches('/');
    if dir.is_empty() {
        format!("epoch{epoch:03}.ckpt")
    } else {
        format!("{dir}/epoch{epoch:03}.ckpt")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(100, 5, 0);
        assert_eq!(a, epoch_order(100, 5, 0));
        assert_ne!(a, epoch_order(100, 5, 1));
        assert_ne!(a, epoch_order(100, 6, 0));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn hit_fraction_uses_deltas() {
        assert_eq!(hit_fraction((10, 5), (14, 8)), 0.25);
        assert_eq!(hit_fraction((3, 3), (3, 3)), 1.0);
    }
}
