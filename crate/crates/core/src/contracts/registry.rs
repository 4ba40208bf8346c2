//! Interface registry: any address may declare which implementer handles a
//! named interface for it, and anyone may look that up.

use serde::{Deserialize, Serialize};

use super::{arg, load, save, text_args, ContractStore};
use crate::chaincode::{Chaincode, ChaincodeError, SimContext};

/// Interface name consulted by ERC777-style sends.
pub const TOKENS_RECEIVED: &str = "tokensReceived";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub address: String,
    pub interface_name: String,
    pub implementer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("{caller} may not manage interfaces of {address}")]
    Unauthorized { caller: String, address: String },
    #[error("unknown registry method {0}")]
    UnknownMethod(String),
    #[error(transparent)]
    Host(#[from] ChaincodeError),
}

impl From<RegistryError> for ChaincodeError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Host(inner) => inner,
            other => ChaincodeError::runtime(other),
        }
    }
}

fn entry_key(address: &str, interface: &str) -> String {
    format!("entry\u{1f}{address}\u{1f}{interface}")
}

fn manager_key(address: &str) -> String {
    format!("manager\u{1f}{address}")
}

fn manager_of(store: &mut impl ContractStore, address: &str) -> Result<String, ChaincodeError> {
    Ok(load::<String>(store, &manager_key(address))?.unwrap_or_else(|| address.to_string()))
}

pub fn lookup(store: &mut impl ContractStore, address: &str, interface: &str) -> Result<Option<String>, ChaincodeError> {
    Ok(load::<RegistryEntry>(store, &entry_key(address, interface))?.map(|e| e.implementer))
}

/// Dispatches `register`, `setManager`, `getManager` and `lookup`.
/// `lookup` returns the empty string when no implementer is registered.
pub fn registry_invoke(
    store: &mut impl ContractStore,
    method: &str,
    caller: &str,
    args: &[String],
) -> Result<String, RegistryError> {
    match method {
        "register" => {
            let (address, interface, implementer) =
                (arg(args, 0, "address")?, arg(args, 1, "interface")?, arg(args, 2, "implementer")?);
            if manager_of(store, address)? != caller {
                return Err(RegistryError::Unauthorized {
                    caller: caller.to_string(),
                    address: address.to_string(),
                });
            }
            let entry = RegistryEntry {
                address: address.to_string(),
                interface_name: interface.to_string(),
                implementer: implementer.to_string(),
            };
            save(store, &entry_key(address, interface), &entry)?;
            Ok(String::new())
        }
        "setManager" => {
            let (address, manager) = (arg(args, 0, "address")?, arg(args, 1, "manager")?);
            if manager_of(store, address)? != caller {
                return Err(RegistryError::Unauthorized {
                    caller: caller.to_string(),
                    address: address.to_string(),
                });
            }
            save(store, &manager_key(address), &manager.to_string())?;
            Ok(String::new())
        }
        "getManager" => Ok(manager_of(store, arg(args, 0, "address")?)?),
        "lookup" => Ok(lookup(store, arg(args, 0, "address")?, arg(args, 1, "interface")?)?.unwrap_or_default()),
        other => Err(RegistryError::UnknownMethod(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RegistryChaincode;

impl Chaincode for RegistryChaincode {
    fn invoke(&self, ctx: &mut SimContext<'_>, operation: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        let args = text_args(args)?;
        let caller = ctx.caller();
        Ok(registry_invoke(ctx, operation, &caller, &args)?.into_bytes())
    }
}
