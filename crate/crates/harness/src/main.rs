use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use expresso_harness::attack;
use expresso_harness::bench::{self, Format};
use expresso_harness::deploy::{Deployment, DeploymentConfig, Setup, UserSpec};
use expresso_harness::scenario::{self, ScenarioScript};
use expresso_idp::{IdentityProvider, IdpConfig};
use expresso_oidf::{Registry, RegistryConfig};
use expresso_rp::{RelyingParty, RpConfig};
use tokio::net::TcpListener;

#[derive(Parser)]
#[command(name = "expresso", about = "Run, exercise and measure a single-sign-on deployment with hidden relying parties")]
struct Cli {
    /// Ceremony contributors per artifact set.
    #[arg(long, default_value_t = 3, global = true)]
    contributors: usize,
    /// Seed for the local phase-1 parameters.
    #[arg(long, default_value = "expresso", global = true)]
    seed: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start services, all in this process or one role per process.
    Up(UpArgs),
    /// Run a scenario file.
    Scenario {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Time proving, verification, token issuance and whole logins.
    Bench {
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run an attack drill; exits nonzero if the attack succeeds.
    Attack {
        #[arg(value_enum)]
        kind: AttackKind,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Integrity,
    Collusion,
    Revocation,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Role {
    All,
    Oidf,
    Idp,
    Rp,
}

#[derive(clap::Args)]
struct UpArgs {
    #[arg(long, value_enum, default_value_t = Role::All)]
    role: Role,
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: SocketAddr,
    #[arg(long, default_value = "idp")]
    idp_id: String,
    /// Registry base URL (idp and rp roles).
    #[arg(long)]
    registry_url: Option<String>,
    /// IdP base URL (rp role).
    #[arg(long)]
    idp_url: Option<String>,
    /// Artifact sets to mint up front (oidf and all roles).
    #[arg(long, default_value_t = 4)]
    pool: usize,
    /// Registry log directory (oidf role).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// `name:password` accounts (idp role).
    #[arg(long = "user")]
    users: Vec<String>,
    /// RP name (rp role) or number of RPs to register (all role).
    #[arg(long, default_value = "rp")]
    rp_name: String,
    #[arg(long, default_value_t = 2)]
    rps: usize,
    /// Restart-recovery directory (rp role).
    #[arg(long)]
    state_dir: Option<PathBuf>,
}

fn setup(cli: &Cli) -> anyhow::Result<Setup> {
    let names: Vec<String> = (0..cli.contributors.max(1)).map(|i| format!("contributor-{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    eprintln!("running phase 1 and initialising phase 2 ...");
    Setup::membership(&refs, cli.seed.as_bytes())
}

async fn deployment(cli: &Cli, config: DeploymentConfig) -> anyhow::Result<Deployment> {
    let s = tokio::task::block_in_place(|| setup(cli))?;
    eprintln!("minting {} artifact sets ...", config.pool_size);
    Deployment::start(config, s.source).await
}

async fn wait_for_shutdown() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn up(cli: &Cli, args: &UpArgs) -> anyhow::Result<bool> {
    match args.role {
        Role::All => {
            let dep = deployment(
                cli,
                DeploymentConfig {
                    pool_size: args.pool,
                    ..DeploymentConfig::default()
                },
            )
            .await?;
            println!("registry  {}", dep.oidf_url);
            println!("idp       {}", dep.idp_url);
            for i in 0..args.rps {
                let name = format!("rp{i}");
                let h = dep.add_rp(&name).await?;
                println!("{name:<9} {} (redirect handle {})", h.callback_url, h.proxy_handle);
            }
            wait_for_shutdown().await;
        }
        Role::Oidf => {
            let s = tokio::task::block_in_place(|| setup(cli))?;
            let config = RegistryConfig {
                enrolled: vec![args.idp_id.clone()],
                data_dir: args.data_dir.clone(),
                low_watermark: 1,
                replenish_batch: 1,
            };
            let pool = args.pool;
            let registry = tokio::task::block_in_place(|| -> anyhow::Result<Arc<Registry>> {
                let r = Arc::new(Registry::open(config, s.source)?);
                if r.pending() < pool {
                    r.replenish(pool - r.pending())?;
                }
                Ok(r)
            })?;
            let listener = TcpListener::bind(args.listen).await?;
            println!("registry  http://{}", listener.local_addr()?);
            tokio::select! {
                r = expresso_oidf::serve(registry, listener) => r?,
                _ = wait_for_shutdown() => {}
            }
        }
        Role::Idp => {
            let registry_url = args.registry_url.as_deref().context("--registry-url is required")?;
            let idp = Arc::new(IdentityProvider::new(IdpConfig::new(&args.idp_id, registry_url)));
            for spec in &args.users {
                let (name, password) = spec.split_once(':').context("--user takes name:password")?;
                idp.add_user(name, password, UserSpec::new(name, password).attributes)?;
            }
            let listener = TcpListener::bind(args.listen).await?;
            println!("idp       http://{}", listener.local_addr()?);
            tokio::select! {
                r = expresso_idp::serve(idp, listener) => r?,
                _ = wait_for_shutdown() => {}
            }
        }
        Role::Rp => {
            let registry_url = args.registry_url.as_deref().context("--registry-url is required")?;
            let idp_url = args.idp_url.as_deref().context("--idp-url is required")?;
            let proxy = format!("https://redirect.example/{}", args.rp_name);
            let mut config = RpConfig::new(&args.rp_name, idp_url, &args.idp_id, registry_url, &proxy);
            config.bind_address = Some(args.listen.ip());
            config.state_dir = args.state_dir.clone();
            let rp = Arc::new(RelyingParty::new(config)?);
            let restored = args.state_dir.is_some() && rp.restore().await.is_ok();
            if !restored {
                rp.register().await?;
            }
            rp.generate_proof().await?;
            let timer = rp.spawn_refresh_timer(std::time::Duration::from_secs(30));
            let listener = TcpListener::bind(args.listen).await?;
            println!("callback  http://{}/callback (redirect handle {proxy})", listener.local_addr()?);
            tokio::select! {
                r = expresso_rp::serve_callback(rp, listener) => r?,
                _ = wait_for_shutdown() => {}
            }
            timer.abort();
        }
    }
    Ok(true)
}

async fn run(cli: Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Up(args) => up(&cli, args).await,
        Command::Scenario { file, format } => {
            let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
            let script = ScenarioScript::parse(&text)?;
            let config = DeploymentConfig {
                pool_size: 1 + script
                    .steps
                    .iter()
                    .filter(|(_, s)| matches!(s, scenario::Step::DeregisterRp(_) | scenario::Step::IntegrityAttack { .. }))
                    .count(),
                ..DeploymentConfig::default()
            };
            let dep = deployment(&cli, config).await?;
            match scenario::run(&dep, &script).await {
                Ok(result) => {
                    for s in &result.steps {
                        println!("line {:>3}  ok  {}", s.line, s.detail);
                    }
                    if let Some(report) = &result.report {
                        println!("{}", report.emit(*format)?);
                    }
                    Ok(true)
                }
                Err(failure) => {
                    eprintln!("{failure}");
                    Ok(false)
                }
            }
        }
        Command::Bench { reps, format } => {
            let dep = deployment(&cli, DeploymentConfig::default()).await?;
            let report = bench::run(&dep, "bench-rp", "user0", *reps).await?;
            println!("{}", report.emit(*format)?);
            Ok(report.is_consistent())
        }
        Command::Attack { kind, trials } => {
            let dep = deployment(&cli, DeploymentConfig::default()).await?;
            let ok = match kind {
                AttackKind::Integrity => {
                    let report = attack::integrity(&dep, dep.source.clone(), *trials).await?;
                    println!("{}", serde_json::to_string_pretty(&report)?);
                    report.holds()
                }
                AttackKind::Collusion => {
                    dep.add_rp("rp-a").await?;
                    dep.add_rp("rp-b").await?;
                    let users: Vec<String> = dep.config.users.iter().map(|u| u.username.clone()).collect();
                    let report = attack::collusion(&dep, "rp-a", "rp-b", &users, 3).await?;
                    println!("{}", serde_json::to_string_pretty(&report)?);
                    report.holds()
                }
                AttackKind::Revocation => {
                    dep.add_rp("revoked").await?;
                    dep.add_rp("remaining").await?;
                    let report = attack::revocation(&dep, "revoked", &["remaining".into()], "user0", *trials).await?;
                    println!("{}", serde_json::to_string_pretty(&report)?);
                    report.holds()
                }
            };
            Ok(ok)
        }
    }
}

#[tokio::main(flavor = "multi_thread")]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("property violated");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
