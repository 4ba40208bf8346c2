//! Small chaincodes used by tests and scenarios: a raw key-value store, an
//! infinite loop and a self-recursive caller.

use crate::chaincode::{Chaincode, ChaincodeError, SimContext};

fn arg<'a>(args: &'a [Vec<u8>], i: usize) -> Result<&'a [u8], ChaincodeError> {
    args.get(i)
        .map(Vec::as_slice)
        .ok_or_else(|| ChaincodeError::runtime(format!("missing argument {i}")))
}

/// Raw key-value operations over its own namespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct KvChaincode;

impl Chaincode for KvChaincode {
    fn invoke(&self, ctx: &mut SimContext<'_>, operation: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        match operation {
            "get" => Ok(ctx.get_state(arg(args, 0)?)?.unwrap_or_default()),
            "put" => {
                ctx.put_state(arg(args, 0)?, arg(args, 1)?.to_vec())?;
                Ok(Vec::new())
            }
            "del" => {
                ctx.del_state(arg(args, 0)?)?;
                Ok(Vec::new())
            }
            "put_then_get" => {
                ctx.put_state(arg(args, 0)?, arg(args, 1)?.to_vec())?;
                Ok(ctx.get_state(arg(args, 0)?)?.unwrap_or_default())
            }
            "swap" => {
                let (a, b) = (arg(args, 0)?, arg(args, 1)?);
                let va = ctx.get_state(a)?.unwrap_or_default();
                let vb = ctx.get_state(b)?.unwrap_or_default();
                ctx.put_state(a, vb)?;
                ctx.put_state(b, va)?;
                Ok(Vec::new())
            }
            "history" => Ok(ctx.get_history_for_key(arg(args, 0)?)?.len().to_string().into_bytes()),
            "call" => {
                let callee = String::from_utf8_lossy(arg(args, 0)?).into_owned();
                let op = String::from_utf8_lossy(arg(args, 1)?).into_owned();
                ctx.invoke_chaincode(&callee, &op, &args[2..])
            }
            other => Err(ChaincodeError::UnknownOperation(other.to_string())),
        }
    }
}

/// Never terminates on its own; only the step budget stops it.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoopChaincode;

impl Chaincode for LoopChaincode {
    fn invoke(&self, ctx: &mut SimContext<'_>, _operation: &str, _args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        loop {
            ctx.step()?;
        }
    }
}

/// `down(n)` invokes itself `n` more times and returns the depth reached.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecursiveChaincode;

impl Chaincode for RecursiveChaincode {
    fn invoke(&self, ctx: &mut SimContext<'_>, operation: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        if operation != "down" {
            return Err(ChaincodeError::UnknownOperation(operation.to_string()));
        }
        let n: u64 = std::str::from_utf8(arg(args, 0)?)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ChaincodeError::runtime("bad depth"))?;
        if n == 0 {
            return Ok(ctx.depth().to_string().into_bytes());
        }
        let id = ctx.chaincode_id().to_string();
        ctx.invoke_chaincode(&id, "down", &[(n - 1).to_string().into_bytes()])
    }
}
