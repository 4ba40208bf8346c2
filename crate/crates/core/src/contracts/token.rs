//! Fungible token engine shared by three standards.
//!
//! * `erc20`: plain transfers. Sending to a contract without a token fallback
//!   succeeds and the amount is recorded as lost on the recipient.
//! * `erc223`: the same transfer is rejected.
//! * `erc777`: `send` consults the interface registry for a `tokensReceived`
//!   implementer. In strict mode contracts without one are refused.
//!
//! Lost tokens stay in the recipient's balance, so the sum of all balances
//! always equals the supply and `lost <= balance` holds per account.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::registry::{self, TOKENS_RECEIVED};
use super::{arg, bool_arg, load, num_arg, save, text_args, ContractStore, Overlay};
use crate::chaincode::{Chaincode, ChaincodeError, SimContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenStandard {
    Erc20,
    Erc223,
    Erc777,
}

impl TokenStandard {
    pub const ALL: [TokenStandard; 3] = [TokenStandard::Erc20, TokenStandard::Erc223, TokenStandard::Erc777];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenStandard::Erc20 => "erc20",
            TokenStandard::Erc223 => "erc223",
            TokenStandard::Erc777 => "erc777",
        }
    }
}

impl fmt::Display for TokenStandard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenStandard {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TokenStandard::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown token standard `{s}`"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAccount {
    pub balance: u64,
    /// Portion of `balance` that arrived at a contract unable to move it.
    pub lost: u64,
    pub is_contract: bool,
    pub has_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMeta {
    pub admin: String,
    pub supply: u64,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("token not initialized")]
    NotInitialized,
    #[error("token already initialized")]
    AlreadyInitialized,
    #[error("insufficient balance: have {balance}, need {requested}")]
    InsufficientBalance { balance: u64, requested: u64 },
    #[error("allowance exceeded: allowed {allowed}, requested {requested}")]
    AllowanceExceeded { allowed: u64, requested: u64 },
    #[error("{0} is a contract without a token fallback")]
    NoFallback(String),
    #[error("{0} has no tokensReceived implementer")]
    NoReceiverHook(String),
    #[error("{caller} is not authorized to {action}")]
    Unauthorized { caller: String, action: String },
    #[error("balance overflow")]
    Overflow,
    #[error("{method} is not part of {standard}")]
    UnknownMethod { standard: TokenStandard, method: String },
    #[error(transparent)]
    Host(#[from] ChaincodeError),
}

impl From<TokenError> for ChaincodeError {
    fn from(e: TokenError) -> Self {
        match e {
            TokenError::Host(inner) => inner,
            other => ChaincodeError::runtime(other),
        }
    }
}

/// Storage plus the registry lookup `erc777` needs.
pub trait TokenHost: ContractStore {
    fn receiver_hook(&mut self, address: &str) -> Result<Option<String>, ChaincodeError>;
}

impl<S: TokenHost> TokenHost for Overlay<'_, S> {
    fn receiver_hook(&mut self, address: &str) -> Result<Option<String>, ChaincodeError> {
        self.inner().receiver_hook(address)
    }
}

/// An in-memory world where the token and the registry share one map.
impl TokenHost for std::collections::BTreeMap<String, Vec<u8>> {
    fn receiver_hook(&mut self, address: &str) -> Result<Option<String>, ChaincodeError> {
        registry::lookup(self, address, TOKENS_RECEIVED)
    }
}

pub(crate) const META_KEY: &str = "meta";
pub(crate) const ACCOUNT_PREFIX: &str = "acct\u{1f}";

fn account_key(address: &str) -> String {
    format!("{ACCOUNT_PREFIX}{address}")
}

fn allowance_key(owner: &str, spender: &str) -> String {
    format!("allow\u{1f}{owner}\u{1f}{spender}")
}

fn operator_key(holder: &str, operator: &str) -> String {
    format!("op\u{1f}{holder}\u{1f}{operator}")
}

/// A chaincode caller `cc:X` controls its own sub-addresses `cc:X/...`.
pub fn controls(caller: &str, address: &str) -> bool {
    address == caller
        || (caller.starts_with("cc:") && address.strip_prefix(caller).is_some_and(|rest| rest.starts_with('/')))
}

fn account(store: &mut impl ContractStore, address: &str) -> Result<TokenAccount, TokenError> {
    Ok(load(store, &account_key(address))?.unwrap_or_default())
}

fn meta(store: &mut impl ContractStore) -> Result<TokenMeta, TokenError> {
    load(store, META_KEY)?.ok_or(TokenError::NotInitialized)
}

fn allowance(store: &mut impl ContractStore, owner: &str, spender: &str) -> Result<u64, TokenError> {
    Ok(load(store, &allowance_key(owner, spender))?.unwrap_or(0))
}

fn is_operator(store: &mut impl ContractStore, holder: &str, operator: &str) -> Result<bool, TokenError> {
    Ok(load(store, &operator_key(holder, operator))?.unwrap_or(false))
}

/// Decides whether `to` accepts tokens. `Ok(true)` means accepted but lost.
fn recipient_check(
    host: &mut impl TokenHost,
    standard: TokenStandard,
    to: &str,
    dst: &TokenAccount,
) -> Result<bool, TokenError> {
    let stranded = dst.is_contract && !dst.has_fallback;
    match standard {
        TokenStandard::Erc20 => Ok(stranded),
        TokenStandard::Erc223 if stranded => Err(TokenError::NoFallback(to.to_string())),
        TokenStandard::Erc223 => Ok(false),
        TokenStandard::Erc777 => {
            if host.receiver_hook(to)?.is_some() {
                return Ok(false);
            }
            if dst.is_contract && meta(host)?.strict {
                return Err(TokenError::NoReceiverHook(to.to_string()));
            }
            Ok(stranded)
        }
    }
}

fn move_funds(
    host: &mut impl TokenHost,
    standard: TokenStandard,
    from: &str,
    to: &str,
    amount: u64,
) -> Result<(), TokenError> {
    let mut src = account(host, from)?;
    if src.balance < amount {
        return Err(TokenError::InsufficientBalance {
            balance: src.balance,
            requested: amount,
        });
    }
    if from == to {
        return Ok(());
    }
    let mut dst = account(host, to)?;
    let lost = recipient_check(host, standard, to, &dst)?;
    src.balance -= amount;
    src.lost = src.lost.min(src.balance);
    dst.balance = dst.balance.checked_add(amount).ok_or(TokenError::Overflow)?;
    if lost {
        dst.lost += amount;
    }
    save(host, &account_key(from), &src)?;
    save(host, &account_key(to), &dst)?;
    Ok(())
}

/// Moves funds the caller controls outright or was approved to spend.
fn transfer_from(
    host: &mut impl TokenHost,
    standard: TokenStandard,
    caller: &str,
    from: &str,
    to: &str,
    value: u64,
) -> Result<(), TokenError> {
    if controls(caller, from) {
        return move_funds(host, standard, from, to, value);
    }
    let allowed = allowance(host, from, caller)?;
    if value > allowed {
        return Err(TokenError::AllowanceExceeded {
            allowed,
            requested: value,
        });
    }
    move_funds(host, standard, from, to, value)?;
    save(host, &allowance_key(from, caller), &(allowed - value))?;
    Ok(())
}

fn ok() -> String {
    "true".to_string()
}

/// Executes `method` of `standard` on behalf of `caller`.
///
/// Administrative methods common to all standards: `init(supply[, strict])`
/// makes the caller admin and holder of the whole supply, and
/// `declareAccount(address, isContract, hasFallback)` (admin only) marks
/// recipients as contracts. `transferBatch(from, to, value, ...)` runs several
/// `transferFrom` legs in order, each seeing the balances the previous legs
/// left, and writes every touched key once.
pub fn token_invoke(
    host: &mut impl TokenHost,
    standard: TokenStandard,
    method: &str,
    caller: &str,
    args: &[String],
) -> Result<String, TokenError> {
    let erc777 = standard == TokenStandard::Erc777;
    match method {
        "init" => {
            if load::<TokenMeta>(host, META_KEY)?.is_some() {
                return Err(TokenError::AlreadyInitialized);
            }
            let supply = num_arg(args, 0, "supply")?;
            let strict = if args.len() > 1 { bool_arg(args, 1, "strict")? } else { true };
            let meta = TokenMeta {
                admin: caller.to_string(),
                supply,
                strict,
            };
            save(host, META_KEY, &meta)?;
            let mut acct = account(host, caller)?;
            acct.balance = supply;
            save(host, &account_key(caller), &acct)?;
            Ok(ok())
        }
        "declareAccount" => {
            if meta(host)?.admin != caller {
                return Err(TokenError::Unauthorized {
                    caller: caller.to_string(),
                    action: "declare accounts".into(),
                });
            }
            let address = arg(args, 0, "address")?;
            let mut acct = account(host, address)?;
            acct.is_contract = bool_arg(args, 1, "isContract")?;
            acct.has_fallback = bool_arg(args, 2, "hasFallback")?;
            save(host, &account_key(address), &acct)?;
            Ok(ok())
        }
        "totalSupply" => Ok(meta(host)?.supply.to_string()),
        "balanceOf" => Ok(account(host, arg(args, 0, "owner")?)?.balance.to_string()),
        "lostBalanceOf" => Ok(account(host, arg(args, 0, "owner")?)?.lost.to_string()),
        "allowance" => Ok(allowance(host, arg(args, 0, "owner")?, arg(args, 1, "spender")?)?.to_string()),
        "transfer" => {
            let to = arg(args, 0, "to")?;
            move_funds(host, standard, caller, to, num_arg(args, 1, "value")?)?;
            Ok(ok())
        }
        "approve" => {
            let spender = arg(args, 0, "spender")?;
            save(host, &allowance_key(caller, spender), &num_arg(args, 1, "value")?)?;
            Ok(ok())
        }
        "transferFrom" => {
            let (from, to) = (arg(args, 0, "from")?, arg(args, 1, "to")?);
            transfer_from(host, standard, caller, from, to, num_arg(args, 2, "value")?)?;
            Ok(ok())
        }
        "transferBatch" => {
            if args.len() % 3 != 0 {
                return Err(ChaincodeError::runtime("transferBatch takes (from, to, value) triples").into());
            }
            let mut overlay = Overlay::new(host);
            for leg in args.chunks(3) {
                let value = num_arg(leg, 2, "value")?;
                transfer_from(&mut overlay, standard, caller, &leg[0], &leg[1], value)?;
            }
            overlay.flush()?;
            Ok(ok())
        }
        "send" if erc777 => {
            let to = arg(args, 0, "to")?;
            move_funds(host, standard, caller, to, num_arg(args, 1, "value")?)?;
            Ok(ok())
        }
        "operatorSend" if erc777 => {
            let (from, to) = (arg(args, 0, "from")?, arg(args, 1, "to")?);
            if !controls(caller, from) && !is_operator(host, from, caller)? {
                return Err(TokenError::Unauthorized {
                    caller: caller.to_string(),
                    action: format!("send on behalf of {from}"),
                });
            }
            move_funds(host, standard, from, to, num_arg(args, 2, "value")?)?;
            Ok(ok())
        }
        "authorizeOperator" | "revokeOperator" if erc777 => {
            let operator = arg(args, 0, "operator")?;
            if operator == caller {
                return Err(TokenError::Unauthorized {
                    caller: caller.to_string(),
                    action: "change its own operator status".into(),
                });
            }
            save(host, &operator_key(caller, operator), &(method == "authorizeOperator"))?;
            Ok(ok())
        }
        "isOperatorFor" if erc777 => {
            let (operator, holder) = (arg(args, 0, "operator")?, arg(args, 1, "holder")?);
            Ok((operator == holder || is_operator(host, holder, operator)?).to_string())
        }
        "tokensReceived" if erc777 => Ok(host.receiver_hook(arg(args, 0, "address")?)?.unwrap_or_default()),
        other => Err(TokenError::UnknownMethod {
            standard,
            method: other.to_string(),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenAudit {
    pub supply: u64,
    pub total_balance: u128,
    pub total_lost: u128,
}

/// Recomputes supply conservation from raw contract entries (keys relative
/// to the token's namespace).
pub fn audit<'a>(entries: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> Result<TokenAudit, String> {
    let mut supply = None;
    let (mut total_balance, mut total_lost) = (0u128, 0u128);
    for (key, value) in entries {
        if key == META_KEY {
            let meta: TokenMeta = serde_json::from_slice(value).map_err(|e| e.to_string())?;
            supply = Some(meta.supply);
        } else if let Some(address) = key.strip_prefix(ACCOUNT_PREFIX) {
            let acct: TokenAccount = serde_json::from_slice(value).map_err(|e| e.to_string())?;
            if acct.lost > acct.balance {
                return Err(format!("{address}: lost {} exceeds balance {}", acct.lost, acct.balance));
            }
            total_balance += u128::from(acct.balance);
            total_lost += u128::from(acct.lost);
        }
    }
    let supply = supply.unwrap_or(0);
    if total_balance != u128::from(supply) {
        return Err(format!("balances sum to {total_balance}, supply is {supply}"));
    }
    Ok(TokenAudit {
        supply,
        total_balance,
        total_lost,
    })
}

/// Token chaincode. `erc777` looks receivers up through `registry_id`.
#[derive(Debug, Clone)]
pub struct TokenChaincode {
    pub standard: TokenStandard,
    pub registry_id: String,
}

impl TokenChaincode {
    pub fn new(standard: TokenStandard) -> Self {
        TokenChaincode {
            standard,
            registry_id: "registry".to_string(),
        }
    }
}

struct SimHost<'c, 'a> {
    ctx: &'c mut SimContext<'a>,
    registry_id: &'c str,
}

impl ContractStore for SimHost<'_, '_> {
    fn read(&mut self, key: &str) -> Result<Option<Vec<u8>>, ChaincodeError> {
        self.ctx.read(key)
    }

    fn write(&mut self, key: &str, value: Vec<u8>) -> Result<(), ChaincodeError> {
        self.ctx.write(key, value)
    }
}

impl TokenHost for SimHost<'_, '_> {
    fn receiver_hook(&mut self, address: &str) -> Result<Option<String>, ChaincodeError> {
        let args = [address.as_bytes().to_vec(), TOKENS_RECEIVED.as_bytes().to_vec()];
        let out = self.ctx.invoke_chaincode(self.registry_id, "lookup", &args)?;
        Ok((!out.is_empty()).then(|| String::from_utf8_lossy(&out).into_owned()))
    }
}

impl Chaincode for TokenChaincode {
    fn invoke(&self, ctx: &mut SimContext<'_>, operation: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        let args = text_args(args)?;
        let caller = ctx.caller();
        let mut host = SimHost {
            ctx,
            registry_id: &self.registry_id,
        };
        Ok(token_invoke(&mut host, self.standard, operation, &caller, &args)?.into_bytes())
    }
}
