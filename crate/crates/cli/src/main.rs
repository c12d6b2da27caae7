use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ledger_oauth::access::{LedgerReader, LedgerWriter};
use ledger_oauth::client_sdk::Client;
use ledger_oauth::keys::{Address, Keypair, PublicKey};
use ledger_oauth::registry::TokenId;
use ledger_oauth_cli::config::{ClientConfig, NodeConfig, Role};
use ledger_oauth_cli::demo::{run_scenario, Scenario};
use ledger_oauth_cli::node::{self, RunningNode};
use ledger_oauth_cli::remote::{RemoteAuth, RemoteLedger, RemoteResource};

#[derive(Parser)]
#[command(name = "ledger-oauth", version, about = "Ledger-backed OAuth 2.0 nodes and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ledger node.
    Ledger {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Authorization server.
    As {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Resource server.
    Rs {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Writes a new key file.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Client operations against running nodes.
    Client {
        #[arg(long)]
        config: PathBuf,
        #[command(subcommand)]
        action: ClientAction,
    },
    /// Runs an end-to-end scenario on a local cluster.
    Demo {
        scenario: Scenario,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum RunAction {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum ClientAction {
    /// Registers this client's key with the authorization server.
    Register,
    /// Issues a grant as the resource owner.
    Grant {
        #[arg(long)]
        owner_credential: String,
        #[arg(long)]
        resource: String,
        /// Defaults to this client's address.
        #[arg(long)]
        client: Option<Address>,
        #[arg(long, default_value_t = 600)]
        ttl: u64,
    },
    /// Redeems a grant for an access token.
    Token {
        #[arg(long)]
        grant: String,
        #[arg(long)]
        resource: String,
    },
    /// Accesses the resource named by a token.
    Access {
        #[arg(long, conflicts_with = "token_id")]
        jwt: Option<String>,
        /// Reads the JWT from the ledger instead.
        #[arg(long)]
        token_id: Option<TokenId>,
    },
    /// Approves a delegee and prints the JWT it should present.
    Delegate {
        #[arg(long)]
        token_id: TokenId,
        #[arg(long)]
        delegee: PublicKey,
    },
    /// Pays for and claims a reserved token.
    Claim {
        #[arg(long)]
        token_id: TokenId,
    },
    /// Lists tokens owned by this client, rebuilt from the ledger.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Demo { scenario, seed } => {
            let mut out = std::io::stdout();
            match run_scenario(scenario, seed, &mut out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        command => match dispatch(command) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Ledger { action: RunAction::Run { config } } => run_node(Role::Ledger, &config),
        Command::As { action: RunAction::Run { config } } => run_node(Role::As, &config),
        Command::Rs { action: RunAction::Run { config } } => run_node(Role::Rs, &config),
        Command::Keygen { out } => {
            let keys = Keypair::generate();
            std::fs::write(&out, keys.to_key_file())
                .with_context(|| format!("writing {}", out.display()))?;
            println!("address {}", keys.address());
            println!("public_key {}", keys.public());
            Ok(())
        }
        Command::Client { config, action } => run_client(&config, action),
        Command::Demo { .. } => unreachable!("handled in main"),
    }
}

fn run_node(role: Role, path: &Path) -> anyhow::Result<()> {
    let config = NodeConfig::load(path)?;
    if config.role() != role {
        bail!("{} is a {} configuration, not {role}", path.display(), config.role());
    }
    let node: RunningNode = match &config {
        NodeConfig::Ledger(c) => node::start_ledger(c)?,
        NodeConfig::As(c) => node::start_auth_from_config(c)?,
        NodeConfig::Rs(c) => node::start_resource_from_config(c)?,
        NodeConfig::Client(_) => bail!("client configurations cannot be run"),
    };
    println!("{role} listening on {}", node.url());
    wait_for_signal()?;
    node.stop().map_err(anyhow::Error::msg)?;
    println!("{role} stopped");
    Ok(())
}

fn wait_for_signal() -> anyhow::Result<()> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        #[cfg(unix)]
        {
            let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())?;
            tokio::select! {
                r = tokio::signal::ctrl_c() => r,
                _ = term.recv() => Ok(()),
            }
        }
        #[cfg(not(unix))]
        tokio::signal::ctrl_c().await
    })?;
    Ok(())
}

fn run_client(path: &Path, action: ClientAction) -> anyhow::Result<()> {
    let NodeConfig::Client(cfg) = NodeConfig::load(path)? else {
        bail!("{} is not a client configuration", path.display());
    };
    let ClientConfig {
        ledger_rpc,
        as_url,
        rs_url,
        key,
    } = cfg;
    let keys = Keypair::from_key_file(
        &std::fs::read_to_string(&key).with_context(|| format!("reading {}", key.display()))?,
    )?;
    let ledger = Arc::new(RemoteLedger::new(&ledger_rpc));
    let client = Client::new(keys, ledger.clone() as Arc<dyn LedgerWriter>);
    let auth = RemoteAuth::new(&as_url);
    let rs = RemoteResource::new(&rs_url);

    match action {
        ClientAction::Register => {
            let reg = client.register(&auth)?;
            println!("registered {}", reg.client_address);
        }
        ClientAction::Grant {
            owner_credential,
            resource,
            client: who,
            ttl,
        } => {
            let grant = auth.grant(&owner_credential, who.unwrap_or(client.address()), &resource, ttl)?;
            println!("grant_id {}", grant.grant_id);
        }
        ClientAction::Token { grant, resource } => {
            let token = client.request_access_token(&auth, &grant, &resource)?;
            println!("token_id {}", token.token_id);
            println!("block {}", token.included_block);
            println!("jwt {}", token.jwt);
        }
        ClientAction::Access { jwt, token_id } => {
            let jwt = match (jwt, token_id) {
                (Some(j), _) => j,
                (None, Some(id)) => ledger.token_uri(&id)?,
                (None, None) => bail!("pass --jwt or --token-id"),
            };
            let session = client.access_resource(&rs, &jwt)?;
            println!("session {}", session.session_id);
            println!("payload {}", session.payload);
        }
        ClientAction::Delegate { token_id, delegee } => {
            println!("jwt {}", client.delegate_token(&token_id, &delegee)?);
        }
        ClientAction::Claim { token_id } => {
            let receipt = client.pay_and_claim(&token_id)?;
            println!("claimed in block {}", receipt.block_number);
        }
        ClientAction::List => {
            for t in client.list_owned_tokens()? {
                println!("{} {}", t.token_id, t.jwt);
            }
        }
    }
    Ok(())
}
