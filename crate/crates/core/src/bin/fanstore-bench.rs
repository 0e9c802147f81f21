use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fanstore::bench::{self, BenchReport, BenchSpec, GeneratedDataset, SizeClass};
use fanstore::client::{DaemonClient, FanStore, MountMap};
use fanstore::cluster::{ClusterConfig, ClusterSetup, LocalCluster};
use fanstore::codec::CodecId;
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};
use fanstore::Error;

/// Benchmark driver: generate a corpus, run the file-size read sweep, or
/// emulate a training loop's I/O.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic corpus and its digest sidecar.
    Gen(GenArgs),
    /// Every node-process reads every file of each size class.
    Sweep(RunArgs),
    /// Emulate data-parallel training I/O.
    Train(TrainArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// SIZE:COUNT, repeatable (default: the four scaled-down classes).
    #[arg(long = "class")]
    classes: Vec<String>,
    /// Use the full-scale counts instead of the scaled-down defaults.
    #[arg(long)]
    full_scale: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Files in the val/ directory.
    #[arg(long, default_value_t = 0)]
    val_files: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Nodes run as threads of this process.
    InProcess,
    /// One fanstored child process per node.
    Process,
}

#[derive(Args)]
struct RunArgs {
    /// Directory produced by `gen`.
    #[arg(long)]
    dataset: PathBuf,
    /// Attach to running daemons described by this cluster config instead
    /// of starting a local cluster.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    nodes: u32,
    #[arg(long, default_value_t = 1)]
    replication: u32,
    /// Directories replicated to every node (repeatable).
    #[arg(long = "replicate-dir")]
    replicate_dirs: Vec<String>,
    #[arg(long, default_value_t = 16)]
    partitions: u32,
    /// Pack with the LZSS codec.
    #[arg(long)]
    compress: bool,
    #[arg(long, value_enum, default_value_t = Mode::Process)]
    mode: Mode,
    /// Scratch directory for packed data and node stores.
    #[arg(long)]
    work: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    threads: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the CSV report here as well as to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1)]
    epochs: u32,
    #[arg(long, default_value_t = 64)]
    batch: u32,
    /// Sleep per mini-batch, in milliseconds.
    #[arg(long, default_value_t = 0)]
    compute_delay_ms: u64,
    /// Use the 500 ms per-iteration preset.
    #[arg(long)]
    preset_delay: bool,
    #[arg(long, default_value_t = 1 << 20)]
    checkpoint_bytes: u64,
    #[arg(long, default_value = "ckpt")]
    checkpoint_dir: String,
}

/// Clients plus whatever keeps their cluster alive.
struct Session {
    clients: Vec<FanStore>,
    _cluster: Option<LocalCluster>,
}

fn open_session(args: &RunArgs, ds: &GeneratedDataset) -> fanstore::Result<Session> {
    if let Some(cfg) = &args.config {
        let config = ClusterConfig::load(cfg)?;
        let mount = match &config.mount_prefix {
            Some(m) => MountMap::new(m)?,
            None => MountMap::default_for_user(),
        };
        let transport = config.transport_options();
        let clients = config
            .nodes
            .iter()
            .map(|n| {
                let c = DaemonClient::connect(&n.address(), &transport)?;
                Ok(FanStore::new(mount.clone(), Arc::new(c)))
            })
            .collect::<fanstore::Result<_>>()?;
        return Ok(Session { clients, _cluster: None });
    }

    let work = match &args.work {
        Some(w) => w.clone(),
        None => std::env::temp_dir().join(format!("fanstore-bench-{}", std::process::id())),
    };
    let packed = work.join("packed");
    let options = if args.compress {
        PackOptions::compressed(CodecId::LZSS)
    } else {
        PackOptions::default()
    };
    pack_dataset(&ds.paths(), &ds.root, args.partitions, &options, &packed)?;
    let mut setup = ClusterSetup::new(args.nodes).replication(args.replication);
    setup.replicated_dirs = args.replicate_dirs.clone();
    let manifest = packed.join(MANIFEST_FILE_NAME);
    let nodes = work.join("nodes");
    let cluster = match args.mode {
        Mode::InProcess => LocalCluster::start_in_process(&setup, &manifest, &nodes)?,
        Mode::Process => LocalCluster::spawn_processes(&setup, &manifest, &nodes, &daemon_path()?)?,
    };
    let clients = (0..cluster.node_count()).map(|i| cluster.client(i)).collect();
    Ok(Session {
        clients,
        _cluster: Some(cluster),
    })
}

fn daemon_path() -> fanstore::Result<PathBuf> {
    let exe = std::env::current_exe()?;
    let candidate = exe.with_file_name("fanstored");
    if candidate.exists() {
        Ok(candidate)
    } else {
        Err(Error::InvalidArgument(format!(
            "fanstored not found next to {}; use --mode in-process",
            exe.display()
        )))
    }
}

fn emit(report: &BenchReport, csv: Option<&Path>) -> fanstore::Result<()> {
    let text = report.to_csv();
    print!("{text}");
    if let Some(p) = csv {
        std::fs::write(p, &text)?;
    }
    if let Some(t) = &report.training {
        eprintln!("{}", serde_json::to_string_pretty(t).expect("accounting serializes"));
    }
    Ok(())
}

fn spec_for(args: &RunArgs, ds: &GeneratedDataset) -> BenchSpec {
    BenchSpec {
        classes: ds.classes(),
        threads: args.threads,
        seed: args.seed,
        ..BenchSpec::default()
    }
}

fn run(cli: Cli) -> fanstore::Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let classes = if !a.classes.is_empty() {
                a.classes.iter().map(|c| c.parse()).collect::<fanstore::Result<Vec<SizeClass>>>()?
            } else if a.full_scale {
                BenchSpec::full_scale_classes()
            } else {
                BenchSpec::scaled_classes()
            };
            let spec = BenchSpec {
                classes,
                seed: a.seed,
                val_files: a.val_files,
                ..BenchSpec::default()
            };
            let ds = bench::gen_dataset(&spec, &a.out)?;
            println!("{} files, {} bytes in {}", ds.len(), ds.total_bytes(), a.out.display());
            Ok(())
        }
        Command::Sweep(a) => {
            let ds = GeneratedDataset::load(&a.dataset)?;
            let session = open_session(&a, &ds)?;
            let report = bench::run_read_sweep(&spec_for(&a, &ds), &ds, &session.clients)?;
            emit(&report, a.csv.as_deref())
        }
        Command::Train(t) => {
            let ds = GeneratedDataset::load(&t.run.dataset)?;
            let session = open_session(&t.run, &ds)?;
            let spec = BenchSpec {
                epochs: t.epochs,
                batch: t.batch,
                compute_delay: if t.preset_delay {
                    bench::COMPUTE_DELAY_PRESET
                } else {
                    Duration::from_millis(t.compute_delay_ms)
                },
                checkpoint_bytes: t.checkpoint_bytes,
                checkpoint_dir: t.checkpoint_dir.clone(),
                ..spec_for(&t.run, &ds)
            };
            let report = bench::run_training_emulation(&spec, &ds, &session.clients)?;
            emit(&report, t.run.csv.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fanstore-bench: {e}");
            let integrity = matches!(&e, Error::Corrupt(m) if m.starts_with("integrity"));
            ExitCode::from(if integrity { 3 } else { 1 })
        }
    }
}
