//! `ssa oracle`: exact or plain Monte Carlo reference values.

use std::fmt::Write as _;

use ssa_core::oracles::{
    credit_cmc, saw_enumerate, wcm_enumerate, OracleError, OracleMethod, OracleResult, SawSymmetry,
};

use crate::config::{ModelKind, Resolved};
use crate::error::Failure;
use crate::output::{self, num};

pub const ORACLE_HEADER: &str = "quantity,at,value,standard_error,method,work";

fn method_name(m: OracleMethod) -> &'static str {
    match m {
        OracleMethod::Enumeration => "enumeration",
        OracleMethod::Dfs => "dfs",
        OracleMethod::PlainMc => "plain_mc",
    }
}

fn refused(e: OracleError) -> Failure {
    match e {
        OracleError::Invalid(msg) => Failure::Config(msg),
        other => Failure::Oracle(other.to_string()),
    }
}

fn row(out: &mut String, quantity: &str, at: f64, r: &OracleResult) {
    let _ = writeln!(
        out,
        "{quantity},{},{},{},{},{}",
        num(at),
        num(r.value),
        num(r.standard_error),
        method_name(r.method),
        r.work
    );
}

pub fn oracle_table(r: &Resolved, symmetric: bool) -> Result<String, Failure> {
    let mut out = String::from(ORACLE_HEADER);
    out.push('\n');
    match r.model {
        ModelKind::Wcm => {
            let inst = &r.wcm()?.instance;
            let exact = wcm_enumerate(inst.weights(), inst.gamma()).map_err(refused)?;
            row(&mut out, "tail", inst.gamma(), &exact.tail);
            if let Some(c) = &exact.cond_exp {
                row(&mut out, "condexp", inst.gamma(), c);
            }
        }
        ModelKind::Credit => {
            let section = r.credit()?;
            let pf = section
                .portfolio
                .build()
                .map_err(|e| Failure::Config(e.to_string()))?;
            for &v in &section.vars {
                let cmc = credit_cmc(&pf, v, section.oracle_samples, r.run.seed).map_err(refused)?;
                row(&mut out, "tail", v, &cmc.tail);
                row(&mut out, "cvar", v, &cmc.cvar);
            }
        }
        ModelKind::Saw => {
            let symmetry = if symmetric { SawSymmetry::Eightfold } else { SawSymmetry::None };
            for n in r.saw()?.n.to_vec() {
                let exact = saw_enumerate(n, symmetry).map_err(refused)?;
                row(&mut out, "count", n as f64, &exact.count_result());
                row(&mut out, "delta", n as f64, &exact.delta_result());
            }
        }
    }
    Ok(out)
}

pub fn cmd_oracle(r: &Resolved, symmetric: bool) -> anyhow::Result<()> {
    let table = oracle_table(r, symmetric)?;
    output::write_text(r.csv.as_deref(), &table)
}
