use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fanstore::cluster::{bootstrap, BootstrapOptions, ClusterConfig};

/// Node daemon: loads this node's partitions, serves peers and local
/// clients, and runs until killed.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Cluster config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    node_id: u32,
    /// Manifest written by the packer.
    #[arg(long)]
    manifest: PathBuf,
    /// Override the config's replication factor.
    #[arg(long)]
    replication: Option<u32>,
    /// Replicate this directory to every node (repeatable).
    #[arg(long = "replicate-dir")]
    replicate_dirs: Vec<String>,
    /// Place every partition on every node.
    #[arg(long)]
    full_broadcast: bool,
    /// Where to copy missing partitions from (default: the manifest's directory).
    #[arg(long)]
    partition_source: Option<PathBuf>,
}

fn run(args: Args) -> fanstore::Result<()> {
    let mut config = ClusterConfig::load(&args.config)?;
    if let Some(r) = args.replication {
        config.replication = r;
    }
    config.replicated_dirs.extend(args.replicate_dirs);
    config.full_broadcast |= args.full_broadcast;
    let options = BootstrapOptions {
        partition_source: args.partition_source,
        ..Default::default()
    };
    let node = bootstrap(&config, args.node_id, &args.manifest, &options)?;
    let addr = node.listen_addr().map(|a| a.to_string()).unwrap_or_default();
    println!("fanstored node {} ready on {addr}", node.id());
    loop {
        std::thread::park();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fanstored: {e}");
            ExitCode::FAILURE
        }
    }
}
