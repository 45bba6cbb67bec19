//! LAN gateway server.

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use autonoma::config::ServiceConfig;
use autonoma::gateway::{qr_payload, Gateway, PairingRegistry};
use autonoma_core::netfilter::Cidr;
use clap::Parser;
use qrcode::render::unicode::Dense1x2;
use qrcode::QrCode;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::TcpListener;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "autonoma", version, about = "Serve the Autonoma workflow engine on the local network")]
struct Cli {
    /// Address to listen on, e.g. 192.168.1.10:8787.
    #[arg(long)]
    bind: Option<std::net::SocketAddr>,
    /// TOML configuration file. AUTONOMA_CONFIG is used when absent.
    #[arg(long, env = "AUTONOMA_CONFIG")]
    config: Option<PathBuf>,
    /// Allowed client network; repeat to allow several. Replaces the
    /// configured allowlist.
    #[arg(long = "allow-cidr", value_name = "CIDR")]
    allow_cidr: Vec<Cidr>,
    /// Issue a pairing token and print it as a QR code. Type `pair` on
    /// stdin later for another one.
    #[arg(long)]
    print_qr: bool,
    /// Start even when the bind address is outside the allowlist.
    #[arg(long)]
    allow_non_lan_bind: bool,
    /// Data directory for conversations and the audit log.
    #[arg(long)]
    storage_root: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

fn print_pairing(pairing: &PairingRegistry, host: IpAddr, port: u16) {
    let session = pairing.issue();
    let payload = qr_payload(host, port, &session.token);
    match QrCode::new(payload.as_bytes()) {
        Ok(code) => println!("{}", code.render::<Dense1x2>().quiet_zone(true).build()),
        Err(e) => eprintln!("cannot render QR code: {e}"),
    }
    println!("{payload}");
    println!("token valid for {} s, binds to the first client that uses it", session.ttl.as_secs());
}

async fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ServiceConfig::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(bind) = cli.bind {
        cfg.bind = bind;
    }
    if !cli.allow_cidr.is_empty() {
        cfg.allowlist = cli.allow_cidr.clone();
    }
    if let Some(root) = cli.storage_root {
        cfg.storage_root = root;
    }
    cfg.allow_non_lan_bind |= cli.allow_non_lan_bind;
    cfg.validate()?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    cfg.check_bind()?;

    let gateway = Gateway::from_config(&cfg)?;
    let listener = TcpListener::bind(cfg.bind).await?;
    let local = listener.local_addr()?;
    tracing::info!(addr = %local, storage = %cfg.storage_root.display(), "listening");
    if local.ip().is_unspecified() {
        tracing::warn!("bound to all interfaces; the QR payload carries the unspecified address");
    }

    if cli.print_qr {
        let pairing: Arc<PairingRegistry> = gateway.pairing().clone();
        print_pairing(&pairing, local.ip(), local.port());
        tokio::spawn(async move {
            let mut lines = BufReader::new(tokio::io::stdin()).lines();
            while let Ok(Some(line)) = lines.next_line().await {
                if line.trim() == "pair" {
                    print_pairing(&pairing, local.ip(), local.port());
                }
            }
        });
    }

    gateway
        .serve(listener, async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("AUTONOMA_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("autonoma: {e}");
            ExitCode::FAILURE
        }
    }
}
