//! Deterministic simulator of an execute-order-validate permissioned ledger,
//! with lottery consensus, a spending-condition script VM and built-in
//! contracts.

pub mod chaincode;
pub mod codec;
pub mod contracts;
pub mod crypto;
pub mod endorsement;
pub mod ledger;
pub mod lottery;
pub mod state;
pub mod validation;
pub mod netsim;
pub mod ordering;
pub mod harness;
pub mod script;
