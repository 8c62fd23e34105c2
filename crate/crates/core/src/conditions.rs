//! Verdicts for the structural conditions on a model that can be checked
//! exactly or by bounded search.

use serde::Serialize;

use crate::diagnostics::check_survival;
use crate::error::Result;
use crate::model::ModelSpec;
use crate::support::{check_allowability, check_positivity, enumerate_semigroup, search_l1_l2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
    /// A bounded search found no certificate.
    Unknown,
}

impl Status {
    fn of(b: bool) -> Self {
        if b {
            Status::Holds
        } else {
            Status::Fails
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Holds => "holds",
            Status::Fails => "fails",
            Status::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub condition: u32,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

/// Conditions 1, 2, 3, 5, 7 and 9, with semigroup and witness searches up to
/// product length `depth`.
pub fn check_conditions(spec: &ModelSpec, depth: usize) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let en = spec.expected_n();
    out.push(Verdict {
        condition: 1,
        name: "branching",
        status: Status::of(en > 1.0 && en.is_finite()),
        detail: format!("E[N] = {en}, N >= 1 and A_i != 0 on every atom"),
    });

    let enumeration = enumerate_semigroup(spec, depth)?;
    let allowable = check_allowability(&enumeration);
    let positive = check_positivity(&enumeration);
    out.push(Verdict {
        condition: 2,
        name: "allowability and positivity",
        status: Status::of(allowable && positive),
        detail: format!(
            "{} products up to length {depth}: allowable = {allowable}, positive element = {positive}",
            enumeration.elements.len()
        ),
    });

    let witnesses = search_l1_l2(spec, depth)?;
    let status = match (&witnesses.l1, &witnesses.l2) {
        (Some(_), Some(_)) => Status::Holds,
        _ => Status::Unknown,
    };
    let radius =
        |w: &Option<crate::support::Witness>| w.as_ref().map_or("none".to_string(), |w| format!("{:.6}", w.radius));
    out.push(Verdict {
        condition: 3,
        name: "l1/l2 witnesses",
        status,
        detail: format!("r(l1) = {}, r(l2) = {} within depth {depth}", radius(&witnesses.l1), radius(&witnesses.l2)),
    });

    let iid = spec.check_conditional_iid();
    out.push(Verdict {
        condition: 5,
        name: "conditionally i.i.d. weights",
        status: Status::of(iid),
        detail: "A_1, A_2, ... i.i.d. given N".into(),
    });

    let fk = spec.check_furstenberg_kesten();
    out.push(Verdict {
        condition: 7,
        name: "entry ratio bound",
        status: Status::of(fk.holds),
        detail: format!("max A_1(i,j) <= c min A_1(i,j) with c = {}", fk.c),
    });

    let survival = check_survival(spec);
    out.push(Verdict {
        condition: 9,
        name: "survival of directions",
        status: Status::of(survival.holds),
        detail: format!("N(t) >= 1 a.s.: {}, P[N(t) = 1] < 1: {}", survival.never_extinct, survival.not_always_single),
    });
    Ok(out)
}
