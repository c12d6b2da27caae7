//! Node configuration: `key = value` text files with environment overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Every role accepts
//! a fixed set of keys; anything else is an error. A key `k` for role `r`
//! can be overridden by the environment variable `R_K` (upper case, dots
//! turned into underscores), e.g. `RS_CONTRACT_ADDRESS`. Resource servers
//! list hosted resources as `resource.<uri> = <payload>`.

use std::collections::BTreeMap;
use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ledger_oauth::keys::Address;
use ledger_oauth::ledger::{Credit, DEFAULT_BLOCK_INTERVAL_MS};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing `role`")]
    MissingRole,
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("role {role} requires `{key}`")]
    MissingKey { role: Role, key: &'static str },
    #[error("role {role} does not accept `{key}`")]
    UnknownKey { role: Role, key: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Ledger,
    As,
    Rs,
    Client,
}

impl Role {
    fn keys(self) -> &'static [&'static str] {
        match self {
            Role::Ledger => &[
                "listen",
                "data_dir",
                "block_interval_ms",
                "gas_price",
                "faucet",
                "genesis_timestamp",
            ],
            Role::As => &[
                "listen",
                "ledger_rpc",
                "operator_key",
                "root_key",
                "admin_credential",
                "owner_credential",
                "token_lifetime",
            ],
            Role::Rs => &[
                "listen",
                "ledger_rpc",
                "contract_address",
                "state_dir",
                "max_session_ttl",
                "clock_skew",
                "poll_interval_ms",
            ],
            Role::Client => &["ledger_rpc", "as_url", "rs_url", "key"],
        }
    }

    fn env_prefix(self) -> &'static str {
        match self {
            Role::Ledger => "LEDGER",
            Role::As => "AS",
            Role::Rs => "RS",
            Role::Client => "CLIENT",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Ledger => "ledger",
            Role::As => "as",
            Role::Rs => "rs",
            Role::Client => "client",
        })
    }
}

impl FromStr for Role {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ledger" => Ok(Role::Ledger),
            "as" => Ok(Role::As),
            "rs" => Ok(Role::Rs),
            "client" => Ok(Role::Client),
            other => Err(ConfigError::UnknownRole(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerNodeConfig {
    pub listen: SocketAddr,
    pub data_dir: Option<PathBuf>,
    pub block_interval_ms: u64,
    pub gas_price: u64,
    pub faucet: Vec<Credit>,
    pub genesis_timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsNodeConfig {
    pub listen: SocketAddr,
    pub ledger_rpc: String,
    pub operator_key: PathBuf,
    /// When set and no registry exists yet, the node deploys one.
    pub root_key: Option<PathBuf>,
    pub admin_credential: String,
    pub owner_credential: String,
    pub token_lifetime: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsNodeConfig {
    pub listen: SocketAddr,
    pub ledger_rpc: String,
    pub contract_address: Address,
    pub resources: BTreeMap<String, String>,
    /// Holds the block cursor and the session store across restarts.
    pub state_dir: Option<PathBuf>,
    pub max_session_ttl: u64,
    pub clock_skew: u64,
    pub poll_interval_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientConfig {
    pub ledger_rpc: String,
    pub as_url: String,
    pub rs_url: String,
    pub key: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeConfig {
    Ledger(LedgerNodeConfig),
    As(AsNodeConfig),
    Rs(RsNodeConfig),
    Client(ClientConfig),
}

impl NodeConfig {
    pub fn role(&self) -> Role {
        match self {
            NodeConfig::Ledger(_) => Role::Ledger,
            NodeConfig::As(_) => Role::As,
            NodeConfig::Rs(_) => Role::Rs,
            NodeConfig::Client(_) => Role::Client,
        }
    }

    /// Reads `path`, applying overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse_with_env(&text, |k| std::env::var(k).ok())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_env(text, |_| None)
    }

    pub fn parse_with_env(
        text: &str,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        let role: Role = values
            .remove("role")
            .ok_or(ConfigError::MissingRole)?
            .parse()?;

        let mut resources = BTreeMap::new();
        for (key, value) in std::mem::take(&mut values) {
            match key.strip_prefix("resource.") {
                Some(uri) if role == Role::Rs && !uri.is_empty() => {
                    resources.insert(uri.to_string(), value);
                }
                _ if role.keys().contains(&key.as_str()) => {
                    values.insert(key, value);
                }
                _ => return Err(ConfigError::UnknownKey { role, key }),
            }
        }
        for key in role.keys() {
            let var = format!("{}_{}", role.env_prefix(), key.to_uppercase());
            if let Some(v) = env(&var) {
                values.insert(key.to_string(), v);
            }
        }

        let mut f = Fields { role, values };
        Ok(match role {
            Role::Ledger => NodeConfig::Ledger(LedgerNodeConfig {
                listen: f.required("listen")?,
                data_dir: f.optional("data_dir")?,
                block_interval_ms: f.or("block_interval_ms", DEFAULT_BLOCK_INTERVAL_MS)?,
                gas_price: f.or("gas_price", 0)?,
                faucet: match f.take("faucet") {
                    Some(v) => parse_faucet(&v)?,
                    None => Vec::new(),
                },
                genesis_timestamp: f.or("genesis_timestamp", 0)?,
            }),
            Role::As => NodeConfig::As(AsNodeConfig {
                listen: f.required("listen")?,
                ledger_rpc: f.required("ledger_rpc")?,
                operator_key: f.required("operator_key")?,
                root_key: f.optional("root_key")?,
                admin_credential: f.required("admin_credential")?,
                owner_credential: f.required("owner_credential")?,
                token_lifetime: f.or("token_lifetime", 3600)?,
            }),
            Role::Rs => {
                if resources.is_empty() {
                    return Err(ConfigError::MissingKey {
                        role,
                        key: "resource.<uri>",
                    });
                }
                NodeConfig::Rs(RsNodeConfig {
                    listen: f.required("listen")?,
                    ledger_rpc: f.required("ledger_rpc")?,
                    contract_address: f.required("contract_address")?,
                    resources,
                    state_dir: f.optional("state_dir")?,
                    max_session_ttl: f.or("max_session_ttl", 900)?,
                    clock_skew: f.or("clock_skew", 0)?,
                    poll_interval_ms: f.or("poll_interval_ms", 200)?,
                })
            }
            Role::Client => NodeConfig::Client(ClientConfig {
                ledger_rpc: f.required("ledger_rpc")?,
                as_url: f.required("as_url")?,
                rs_url: f.required("rs_url")?,
                key: f.required("key")?,
            }),
        })
    }
}

/// `0xaddr:amount` entries separated by commas.
fn parse_faucet(v: &str) -> Result<Vec<Credit>, ConfigError> {
    let bad = |reason: String| ConfigError::InvalidValue {
        key: "faucet".into(),
        reason,
    };
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (a, n) = entry
                .split_once(':')
                .ok_or_else(|| bad(format!("{entry:?} is not address:amount")))?;
            Ok(Credit {
                address: a.trim().parse().map_err(|e| bad(format!("{a}: {e}")))?,
                amount: n.trim().parse().map_err(|e| bad(format!("{n}: {e}")))?,
            })
        })
        .collect()
}

struct Fields {
    role: Role,
    values: BTreeMap<String, String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn parse<T: FromStr>(key: &str, v: String) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
            key: key.into(),
            reason: e.to_string(),
        })
    }

    fn required<T: FromStr>(&mut self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let v = self.take(key).ok_or(ConfigError::MissingKey {
            role: self.role,
            key,
        })?;
        Self::parse(key, v)
    }

    fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.take(key).map(|v| Self::parse(key, v)).transpose()
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.optional(key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RS: &str = "
        # resource server
        role = rs
        listen = 127.0.0.1:0
        ledger_rpc = http://127.0.0.1:8545
        contract_address = 0x1111111111111111111111111111111111111111
        resource.urn:thing:lamp = on
    ";

    #[test]
    fn parses_rs() {
        let NodeConfig::Rs(c) = NodeConfig::parse(RS).unwrap() else {
            panic!("wrong role")
        };
        assert_eq!(c.resources["urn:thing:lamp"], "on");
        assert_eq!(c.max_session_ttl, 900);
    }

    #[test]
    fn missing_contract_address() {
        let text = RS.replace("contract_address", "# contract_address");
        assert_eq!(
            NodeConfig::parse(&text),
            Err(ConfigError::MissingKey {
                role: Role::Rs,
                key: "contract_address"
            })
        );
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert!(matches!(
            NodeConfig::parse(&format!("{RS}\ncolour = blue")),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            NodeConfig::parse(&format!("{RS}\nclock_skew = 1\nclock_skew = 2")),
            Err(ConfigError::Duplicate { .. })
        ));
        assert!(matches!(
            NodeConfig::parse("role = ledger\nlisten = 127.0.0.1:0\nresource.x = y"),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn env_overrides() {
        let c = NodeConfig::parse_with_env(RS, |k| {
            (k == "RS_CLOCK_SKEW").then(|| "5".to_string())
        })
        .unwrap();
        let NodeConfig::Rs(c) = c else { panic!() };
        assert_eq!(c.clock_skew, 5);
    }

    #[test]
    fn ledger_faucet_list() {
        let text = format!(
            "role = ledger\nlisten = 127.0.0.1:0\nblock_interval_ms = 0\nfaucet = 0x{}:10, 0x{}:0",
            "11".repeat(20),
            "22".repeat(20)
        );
        let NodeConfig::Ledger(c) = NodeConfig::parse(&text).unwrap() else {
            panic!()
        };
        assert_eq!(c.faucet.len(), 2);
        assert_eq!(c.faucet[0].amount, 10);
        assert_eq!(c.block_interval_ms, 0);
        assert!(matches!(
            NodeConfig::parse("role = ledger\nlisten = 127.0.0.1:0\nfaucet = nope"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }
}
