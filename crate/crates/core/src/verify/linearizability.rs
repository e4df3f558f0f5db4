//! Linearizability checking for single-object histories.
//!
//! Depth-first search over linearization orders with memoization on
//! (linearized set, model state). Operations without a response may take
//! effect at any point after their invocation, or not at all.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use crate::protocol::NONE_MARKER;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub client: u32,
    pub input: String,
    /// `None` if the operation never completed.
    pub output: Option<String>,
    pub invoke: u64,
    pub response: Option<u64>,
}

impl Operation {
    pub fn complete(client: u32, input: &str, output: &str, invoke: u64, response: u64) -> Self {
        Self {
            client,
            input: input.to_string(),
            output: Some(output.to_string()),
            invoke,
            response: Some(response),
        }
    }

    pub fn pending(client: u32, input: &str, invoke: u64) -> Self {
        Self {
            client,
            input: input.to_string(),
            output: None,
            invoke,
            response: None,
        }
    }
}

/// Sequential specification.
pub trait Model: Clone + Eq + Hash {
    /// State after applying `input`, if `output` is a legal result. A missing
    /// output is always legal.
    fn step(&self, input: &str, output: Option<&str>) -> Option<Self>;
}

/// Every operation returns its input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EchoModel;

impl Model for EchoModel {
    fn step(&self, input: &str, output: Option<&str>) -> Option<Self> {
        output.is_none_or(|o| o == input).then_some(EchoModel)
    }
}

/// One register of the key-value store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RegisterModel(pub Option<String>);

impl Model for RegisterModel {
    fn step(&self, input: &str, output: Option<&str>) -> Option<Self> {
        let mut parts = input.splitn(3, ' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("GET"), Some(_), None) => {
                let want = self.0.as_deref().unwrap_or(NONE_MARKER);
                output.is_none_or(|o| o == want).then(|| self.clone())
            }
            (Some("PUT"), Some(_), Some(v)) => output
                .is_none_or(|o| o == "OK")
                .then(|| RegisterModel(Some(v.to_string()))),
            _ => output.is_none_or(|o| o == "ERR").then(|| self.clone()),
        }
    }
}

/// Key an operation touches, for splitting key-value histories.
pub fn kv_key(input: &str) -> &str {
    input.split(' ').nth(1).unwrap_or("")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckResult {
    Linearizable,
    /// No order exists; the message names the smallest stuck prefix found.
    NotLinearizable(String),
    /// The search budget ran out.
    Inconclusive,
}

impl CheckResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, CheckResult::Linearizable)
    }
}

pub const DEFAULT_BUDGET: u64 = 2_000_000;

#[derive(Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn clear(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }
}

struct Search<'a, M: Model> {
    ops: &'a [Operation],
    done: Bits,
    remaining_complete: usize,
    seen: HashSet<(Bits, M)>,
    budget: u64,
    deepest: usize,
    depth: usize,
}

impl<M: Model> Search<'_, M> {
    fn run(&mut self, state: &M) -> Option<bool> {
        if self.remaining_complete == 0 {
            return Some(true);
        }
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;
        if !self.seen.insert((self.done.clone(), state.clone())) {
            return Some(false);
        }
        // an op may go next only if it was invoked before every pending
        // completed op returned
        let horizon = self
            .ops
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.done.get(*i))
            .filter_map(|(_, o)| o.response)
            .min()
            .unwrap_or(u64::MAX);
        for i in 0..self.ops.len() {
            let op = &self.ops[i];
            if self.done.get(i) || op.invoke > horizon {
                continue;
            }
            let Some(next) = state.step(&op.input, op.output.as_deref()) else {
                continue;
            };
            self.done.set(i);
            if op.response.is_some() {
                self.remaining_complete -= 1;
            }
            self.depth += 1;
            self.deepest = self.deepest.max(self.depth);
            let r = self.run(&next);
            self.depth -= 1;
            self.done.clear(i);
            if op.response.is_some() {
                self.remaining_complete += 1;
            }
            match r {
                Some(false) => {}
                other => return other,
            }
        }
        Some(false)
    }
}

pub fn check<M: Model>(ops: &[Operation], init: M, budget: u64) -> CheckResult {
    let mut ops = ops.to_vec();
    ops.sort_by_key(|o| o.invoke);
    let mut s = Search {
        ops: &ops,
        done: Bits::new(ops.len()),
        remaining_complete: ops.iter().filter(|o| o.response.is_some()).count(),
        seen: HashSet::new(),
        budget,
        deepest: 0,
        depth: 0,
    };
    match s.run(&init) {
        Some(true) => CheckResult::Linearizable,
        Some(false) => {
            let stuck = ops
                .iter()
                .filter(|o| o.response.is_some())
                .nth(s.deepest.min(ops.len().saturating_sub(1)))
                .map(|o| format!("client {} {:?} -> {:?}", o.client, o.input, o.output))
                .unwrap_or_default();
            CheckResult::NotLinearizable(format!(
                "no valid order after {} operations; near {stuck}",
                s.deepest
            ))
        }
        None => CheckResult::Inconclusive,
    }
}

pub fn check_echo(ops: &[Operation], budget: u64) -> CheckResult {
    check(ops, EchoModel, budget)
}

/// Checks each key separately; a key-value history is linearizable iff every
/// per-key history is.
pub fn check_kv(ops: &[Operation], budget: u64) -> CheckResult {
    let mut by_key: BTreeMap<&str, Vec<Operation>> = BTreeMap::new();
    for op in ops {
        by_key.entry(kv_key(&op.input)).or_default().push(op.clone());
    }
    let mut inconclusive = false;
    for (key, part) in by_key {
        match check(&part, RegisterModel::default(), budget) {
            CheckResult::Linearizable => {}
            CheckResult::NotLinearizable(w) => {
                return CheckResult::NotLinearizable(format!("key {key}: {w}"))
            }
            CheckResult::Inconclusive => inconclusive = true,
        }
    }
    if inconclusive {
        CheckResult::Inconclusive
    } else {
        CheckResult::Linearizable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(client: u32, input: &str, output: &str, invoke: u64, response: u64) -> Operation {
        Operation::complete(client, input, output, invoke, response)
    }

    #[test]
    fn sequential_register_history() {
        let h = [
            c(0, "PUT x 1", "OK", 0, 1),
            c(0, "GET x", "1", 2, 3),
            c(1, "PUT x 2", "OK", 4, 5),
            c(1, "GET x", "2", 6, 7),
        ];
        assert!(check_kv(&h, DEFAULT_BUDGET).is_ok());
    }

    #[test]
    fn stale_read_after_completed_write_is_caught() {
        let h = [c(0, "PUT x 1", "OK", 0, 1), c(1, "GET x", NONE_MARKER, 2, 3)];
        assert!(matches!(
            check_kv(&h, DEFAULT_BUDGET),
            CheckResult::NotLinearizable(_)
        ));
    }

    #[test]
    fn pending_write_may_or_may_not_apply() {
        let seen = [Operation::pending(0, "PUT x 1", 0), c(1, "GET x", "1", 1, 2)];
        let unseen = [Operation::pending(0, "PUT x 1", 0), c(1, "GET x", NONE_MARKER, 1, 2)];
        assert!(check_kv(&seen, DEFAULT_BUDGET).is_ok());
        assert!(check_kv(&unseen, DEFAULT_BUDGET).is_ok());
    }

    #[test]
    fn tiny_budget_is_inconclusive() {
        let h: Vec<_> = (0..6).map(|i| c(i, "PUT x 1", "OK", 0, 100)).collect();
        let mut h = h;
        h.push(c(9, "GET x", "2", 0, 100));
        assert_eq!(check_kv(&h, 3), CheckResult::Inconclusive);
    }

    #[test]
    fn echo_requires_identity() {
        assert!(check_echo(&[c(0, "a", "a", 0, 1)], 100).is_ok());
        assert!(!check_echo(&[c(0, "a", "b", 0, 1)], 100).is_ok());
    }
}
