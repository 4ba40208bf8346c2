//! House rental agreement between a landlord and a tenant.
//!
//! [`Rental`] is a pure state machine: every call returns the list of
//! [`Effect`]s (token movements out of the contract address and events) it
//! causes. [`RentalChaincode`] wires it to the token chaincode: the paid
//! value moves into `cc:<id>/<lease>` and the payments out of it in a single
//! token call.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::{arg, load, num_arg, save, text_args};
use crate::chaincode::{Chaincode, ChaincodeError, SimContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Created,
    Active,
    Terminated,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RentPaid {
    pub month: u64,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RentalTerms {
    pub house: String,
    pub rent: u64,
    pub security_deposit: u64,
    pub term_length: u64,
    pub time_created: u64,
    pub oracle: String,
    pub oracle_fee: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rental {
    pub status: Status,
    pub landlord: String,
    pub tenant: Option<String>,
    pub house: String,
    pub rent: u64,
    pub security_deposit: u64,
    pub late_fee: u64,
    pub term_length: u64,
    pub rents_paid: Vec<RentPaid>,
    pub terms_breached: bool,
    pub time_created: u64,
    pub oracle: String,
    pub oracle_fee: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    /// Move `amount` from the contract's own balance to `to`.
    Pay { to: String, amount: u64 },
    Event { name: String, detail: String },
}

impl Effect {
    fn pay(to: &str, amount: u64) -> Self {
        Effect::Pay {
            to: to.to_string(),
            amount,
        }
    }

    fn event(name: &str, detail: &str) -> Self {
        Effect::Event {
            name: name.to_string(),
            detail: detail.to_string(),
        }
    }
}

/// Ambient values of one call.
#[derive(Clone, Copy, Debug, Default)]
pub struct CallEnv<'a> {
    pub caller: &'a str,
    pub paid: u64,
    /// Contract balance including `paid`.
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RentalError {
    #[error("caller is not the tenant")]
    NotTenant,
    #[error("caller is not the landlord")]
    NotLandlord,
    #[error("caller is not the oracle")]
    NotOracle,
    #[error("terms are breached")]
    TermsBreached,
    #[error("the landlord cannot lease their own house")]
    LandlordCannotLease,
    #[error("status is {actual}, expected {expected}")]
    WrongStatus { expected: Status, actual: Status },
    #[error("paid {paid}, expected exactly {expected}")]
    WrongValue { expected: u64, paid: u64 },
    #[error("contract balance {balance} cannot cover {needed}")]
    InsufficientBalance { balance: u64, needed: u64 },
    #[error("contract is terminated")]
    Frozen,
    #[error("unknown rental method {0}")]
    UnknownMethod(String),
    #[error(transparent)]
    Host(#[from] ChaincodeError),
}

impl From<RentalError> for ChaincodeError {
    fn from(e: RentalError) -> Self {
        match e {
            RentalError::Host(inner) => inner,
            other => ChaincodeError::runtime(other),
        }
    }
}

impl Rental {
    /// Deployment by the landlord.
    pub fn new(landlord: &str, terms: RentalTerms) -> Self {
        Rental {
            status: Status::Created,
            landlord: landlord.to_string(),
            tenant: None,
            house: terms.house,
            rent: terms.rent,
            security_deposit: terms.security_deposit,
            late_fee: 0,
            term_length: terms.term_length,
            rents_paid: Vec::new(),
            terms_breached: false,
            time_created: terms.time_created,
            oracle: terms.oracle,
            oracle_fee: terms.oracle_fee,
        }
    }

    fn only_tenant(&self, caller: &str) -> Result<(), RentalError> {
        match &self.tenant {
            Some(t) if t == caller => Ok(()),
            _ => Err(RentalError::NotTenant),
        }
    }

    fn only_landlord(&self, caller: &str) -> Result<(), RentalError> {
        if caller == self.landlord {
            Ok(())
        } else {
            Err(RentalError::NotLandlord)
        }
    }

    fn require_status(&self, expected: Status) -> Result<(), RentalError> {
        if self.status == expected {
            Ok(())
        } else {
            Err(RentalError::WrongStatus {
                expected,
                actual: self.status,
            })
        }
    }

    fn require_value(paid: u64, expected: u64) -> Result<(), RentalError> {
        if paid == expected {
            Ok(())
        } else {
            Err(RentalError::WrongValue { expected, paid })
        }
    }

    fn not_frozen(&self) -> Result<(), RentalError> {
        if self.status == Status::Terminated {
            Err(RentalError::Frozen)
        } else {
            Ok(())
        }
    }

    pub fn set_late_fee(&mut self, env: CallEnv<'_>, fee: u64) -> Result<Vec<Effect>, RentalError> {
        self.only_landlord(env.caller)?;
        self.require_status(Status::Created)?;
        Self::require_value(env.paid, 0)?;
        self.late_fee = fee;
        Ok(Vec::new())
    }

    pub fn begin_lease(&mut self, env: CallEnv<'_>) -> Result<Vec<Effect>, RentalError> {
        if self.terms_breached {
            return Err(RentalError::TermsBreached);
        }
        if env.caller == self.landlord {
            return Err(RentalError::LandlordCannotLease);
        }
        self.require_status(Status::Created)?;
        Self::require_value(env.paid, self.security_deposit)?;
        self.tenant = Some(env.caller.to_string());
        self.status = Status::Active;
        Ok(vec![Effect::pay(&self.landlord, env.paid), Effect::event("contractActive", "")])
    }

    pub fn pay_rent(&mut self, env: CallEnv<'_>) -> Result<Vec<Effect>, RentalError> {
        self.only_tenant(env.caller)?;
        self.require_status(Status::Active)?;
        Self::require_value(env.paid, self.rent + self.late_fee)?;
        self.rents_paid.push(RentPaid {
            month: self.rents_paid.len() as u64 + 1,
            amount: env.paid,
        });
        Ok(vec![Effect::pay(&self.landlord, env.paid)])
    }

    /// Sends the breach query to the oracle if the contract can pay its fee.
    pub fn check_terms(&mut self, env: CallEnv<'_>) -> Result<Vec<Effect>, RentalError> {
        self.not_frozen()?;
        if self.oracle_fee > env.balance {
            return Ok(vec![Effect::event(
                "LogNewOraclizeQuery",
                "query was NOT sent, please add funds to cover the query fee",
            )]);
        }
        let mut effects = vec![Effect::event("LogNewOraclizeQuery", "query was sent, standing by for the answer")];
        if self.oracle_fee > 0 {
            effects.push(Effect::pay(&self.oracle, self.oracle_fee));
        }
        Ok(effects)
    }

    pub fn oracle_callback(&mut self, env: CallEnv<'_>, breached: bool) -> Result<Vec<Effect>, RentalError> {
        if env.caller != self.oracle {
            return Err(RentalError::NotOracle);
        }
        self.not_frozen()?;
        self.terms_breached = breached;
        Ok(if breached {
            vec![Effect::event("termBreached", "")]
        } else {
            Vec::new()
        })
    }

    /// Refunds the deposit unless terms were breached, then sends whatever
    /// remains to the landlord and freezes the contract.
    pub fn terminate(&mut self, env: CallEnv<'_>) -> Result<Vec<Effect>, RentalError> {
        self.only_landlord(env.caller)?;
        self.require_status(Status::Active)?;
        let mut effects = Vec::new();
        let mut remaining = env.balance;
        if !self.terms_breached {
            if remaining < self.security_deposit {
                return Err(RentalError::InsufficientBalance {
                    balance: remaining,
                    needed: self.security_deposit,
                });
            }
            let tenant = self.tenant.clone().expect("active lease has a tenant");
            effects.push(Effect::pay(&tenant, self.security_deposit));
            remaining -= self.security_deposit;
        }
        effects.push(Effect::event("contractTerminated", ""));
        if remaining > 0 {
            effects.push(Effect::pay(&self.landlord, remaining));
        }
        self.status = Status::Terminated;
        Ok(effects)
    }

    pub fn token_fallback(&mut self, env: CallEnv<'_>) -> Result<Vec<Effect>, RentalError> {
        self.not_frozen()?;
        Ok(if env.balance > 0 {
            vec![Effect::pay(&self.landlord, env.balance)]
        } else {
            Vec::new()
        })
    }

    /// Read-only accessors by method name.
    pub fn get(&self, method: &str) -> Option<String> {
        Some(match method {
            "getStatus" => self.status.to_string(),
            "getLandlord" => self.landlord.clone(),
            "getTenant" => self.tenant.clone().unwrap_or_default(),
            "getHouse" => self.house.clone(),
            "getTimeCreated" => self.time_created.to_string(),
            "getTermLength" => self.term_length.to_string(),
            "getRent" => self.rent.to_string(),
            "getSecurityDeposit" => self.security_deposit.to_string(),
            "getLateFee" => self.late_fee.to_string(),
            "getTermsBreached" => self.terms_breached.to_string(),
            "getRentsPaid" => serde_json::to_string(&self.rents_paid).expect("serializable"),
            _ => return None,
        })
    }

    /// Dispatches a mutating call; `args` excludes the lease id and value.
    pub fn call(&mut self, method: &str, env: CallEnv<'_>, args: &[String]) -> Result<Vec<Effect>, RentalError> {
        match method {
            "setLateFee" => self.set_late_fee(env, num_arg(args, 0, "fee")?),
            "beginLease" => self.begin_lease(env),
            "payRent" => self.pay_rent(env),
            "checkTerms" => self.check_terms(env),
            "oracleCallback" => {
                let breached = super::bool_arg(args, 0, "breached")?;
                self.oracle_callback(env, breached)
            }
            "terminateContract" => self.terminate(env),
            "tokenFallback" => self.token_fallback(env),
            other => Err(RentalError::UnknownMethod(other.to_string())),
        }
    }
}

/// Rental chaincode holding any number of leases.
///
/// * `create(lease, house, rent, deposit, termLength, timeCreated, oracle, oracleFee)`
///   deploys a lease with the client as landlord.
/// * Getters take `(lease)`.
/// * Every other method takes `(lease, paidValue, args...)`. A non-zero paid
///   value is pulled from the caller with `transferFrom`, so the caller must
///   have approved `cc:<rental id>` on the token first.
#[derive(Debug, Clone)]
pub struct RentalChaincode {
    pub token_id: String,
}

impl Default for RentalChaincode {
    fn default() -> Self {
        RentalChaincode {
            token_id: "token".to_string(),
        }
    }
}

fn lease_key(lease: &str) -> String {
    format!("lease\u{1f}{lease}")
}

/// Token address holding a lease's funds.
pub fn contract_address(rental_id: &str, lease: &str) -> String {
    format!("cc:{rental_id}/{lease}")
}

impl RentalChaincode {
    fn token(&self, ctx: &mut SimContext<'_>, op: &str, args: &[&str]) -> Result<String, ChaincodeError> {
        let args: Vec<Vec<u8>> = args.iter().map(|a| a.as_bytes().to_vec()).collect();
        let out = ctx.invoke_chaincode(&self.token_id, op, &args)?;
        String::from_utf8(out).map_err(|_| ChaincodeError::runtime("token returned non-UTF-8"))
    }
}

impl Chaincode for RentalChaincode {
    fn invoke(&self, ctx: &mut SimContext<'_>, operation: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        let args = text_args(args)?;
        let caller = ctx.caller();
        let lease = arg(&args, 0, "lease")?;
        let key = lease_key(lease);
        if operation == "create" {
            if load::<Rental>(ctx, &key)?.is_some() {
                return Err(ChaincodeError::runtime(format!("lease {lease} already exists")));
            }
            let terms = RentalTerms {
                house: arg(&args, 1, "house")?.to_string(),
                rent: num_arg(&args, 2, "rent")?,
                security_deposit: num_arg(&args, 3, "deposit")?,
                term_length: num_arg(&args, 4, "termLength")?,
                time_created: num_arg(&args, 5, "timeCreated")?,
                oracle: arg(&args, 6, "oracle")?.to_string(),
                oracle_fee: num_arg(&args, 7, "oracleFee")?,
            };
            save(ctx, &key, &Rental::new(&caller, terms))?;
            return Ok(Vec::new());
        }
        let mut rental: Rental =
            load(ctx, &key)?.ok_or_else(|| ChaincodeError::runtime(format!("unknown lease {lease}")))?;
        if let Some(value) = rental.get(operation) {
            return Ok(value.into_bytes());
        }
        let paid = num_arg(&args, 1, "paidValue")?;
        let address = contract_address(ctx.chaincode_id(), lease);
        let held: u64 = self
            .token(ctx, "balanceOf", &[&address])?
            .parse()
            .map_err(|_| ChaincodeError::runtime("token returned a non-numeric balance"))?;
        let env = CallEnv {
            caller: &caller,
            paid,
            balance: held + paid,
        };
        let effects = rental.call(operation, env, &args[2..])?;
        let mut legs = Vec::new();
        if paid > 0 {
            legs.extend([caller.clone(), address.clone(), paid.to_string()]);
        }
        for effect in &effects {
            match effect {
                Effect::Pay { to, amount } => legs.extend([address.clone(), to.clone(), amount.to_string()]),
                Effect::Event { name, detail } => ctx.emit(name, format!("{lease}:{detail}").into_bytes()),
            }
        }
        if !legs.is_empty() {
            let legs: Vec<&str> = legs.iter().map(String::as_str).collect();
            self.token(ctx, "transferBatch", &legs)?;
        }
        save(ctx, &key, &rental)?;
        Ok(serde_json::to_vec(&effects).expect("serializable"))
    }
}
