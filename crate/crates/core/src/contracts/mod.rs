//! Built-in chaincodes: fungible tokens (ERC20/ERC223/ERC777 semantics), an
//! interface registry, the house-rental contract, and test chaincodes.
//!
//! Each contract is written against [`ContractStore`], so the same logic runs
//! inside a chaincode simulation and over a plain in-memory map in tests.

pub mod registry;
pub mod rental;
pub mod testing;
pub mod token;

use serde::{de::DeserializeOwned, Serialize};
use std::collections::BTreeMap;

use crate::chaincode::{ChaincodeError, SimContext};

/// String-keyed storage a contract keeps its state in.
pub trait ContractStore {
    fn read(&mut self, key: &str) -> Result<Option<Vec<u8>>, ChaincodeError>;
    fn write(&mut self, key: &str, value: Vec<u8>) -> Result<(), ChaincodeError>;
}

impl ContractStore for BTreeMap<String, Vec<u8>> {
    fn read(&mut self, key: &str) -> Result<Option<Vec<u8>>, ChaincodeError> {
        Ok(self.get(key).cloned())
    }

    fn write(&mut self, key: &str, value: Vec<u8>) -> Result<(), ChaincodeError> {
        self.insert(key.to_string(), value);
        Ok(())
    }
}

/// Buffers writes over another store so later reads in the same call see
/// them. Nothing reaches the inner store until [`Overlay::flush`].
pub struct Overlay<'s, S> {
    inner: &'s mut S,
    pending: BTreeMap<String, Vec<u8>>,
}

impl<'s, S: ContractStore> Overlay<'s, S> {
    pub fn new(inner: &'s mut S) -> Self {
        Overlay {
            inner,
            pending: BTreeMap::new(),
        }
    }

    pub fn inner(&mut self) -> &mut S {
        self.inner
    }

    /// Writes every buffered key once, in key order.
    pub fn flush(self) -> Result<(), ChaincodeError> {
        for (key, value) in self.pending {
            self.inner.write(&key, value)?;
        }
        Ok(())
    }
}

impl<S: ContractStore> ContractStore for Overlay<'_, S> {
    fn read(&mut self, key: &str) -> Result<Option<Vec<u8>>, ChaincodeError> {
        match self.pending.get(key) {
            Some(v) => Ok(Some(v.clone())),
            None => self.inner.read(key),
        }
    }

    fn write(&mut self, key: &str, value: Vec<u8>) -> Result<(), ChaincodeError> {
        self.pending.insert(key.to_string(), value);
        Ok(())
    }
}

impl ContractStore for SimContext<'_> {
    fn read(&mut self, key: &str) -> Result<Option<Vec<u8>>, ChaincodeError> {
        self.get_state(key.as_bytes())
    }

    fn write(&mut self, key: &str, value: Vec<u8>) -> Result<(), ChaincodeError> {
        self.put_state(key.as_bytes(), value)
    }
}

pub(crate) fn load<T: DeserializeOwned>(store: &mut impl ContractStore, key: &str) -> Result<Option<T>, ChaincodeError> {
    match store.read(key)? {
        None => Ok(None),
        Some(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| ChaincodeError::runtime(format!("corrupt state at {key}: {e}"))),
    }
}

pub(crate) fn save<T: Serialize>(store: &mut impl ContractStore, key: &str, value: &T) -> Result<(), ChaincodeError> {
    store.write(key, serde_json::to_vec(value).expect("contract state serializes"))
}

/// Decodes all arguments as UTF-8 text.
pub(crate) fn text_args(args: &[Vec<u8>]) -> Result<Vec<String>, ChaincodeError> {
    args.iter()
        .map(|a| String::from_utf8(a.clone()).map_err(|_| ChaincodeError::runtime("argument is not UTF-8")))
        .collect()
}

pub(crate) fn arg<'a>(args: &'a [String], i: usize, name: &str) -> Result<&'a str, ChaincodeError> {
    args.get(i)
        .map(String::as_str)
        .ok_or_else(|| ChaincodeError::runtime(format!("missing argument `{name}`")))
}

pub(crate) fn num_arg(args: &[String], i: usize, name: &str) -> Result<u64, ChaincodeError> {
    arg(args, i, name)?
        .parse()
        .map_err(|_| ChaincodeError::runtime(format!("argument `{name}` is not an unsigned integer")))
}

pub(crate) fn bool_arg(args: &[String], i: usize, name: &str) -> Result<bool, ChaincodeError> {
    match arg(args, i, name)? {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ChaincodeError::runtime(format!("argument `{name}` is not a boolean"))),
    }
}
