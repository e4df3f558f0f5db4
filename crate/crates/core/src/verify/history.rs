use std::collections::BTreeMap;

use crate::trace::{Observation, RunTrace};

use super::linearizability::Operation;

/// Client operations from a trace, timestamped by record index.
pub fn history(trace: &RunTrace) -> Vec<Operation> {
    let mut open: BTreeMap<(u32, u64), usize> = BTreeMap::new();
    let mut ops: Vec<Operation> = Vec::new();
    for (i, _, o) in trace.observations() {
        match o {
            Observation::ClientInvoke { client, request_id, op } => {
                open.insert((*client, *request_id), ops.len());
                ops.push(Operation::pending(*client, op, i as u64));
            }
            Observation::ClientComplete { client, request_id, result, .. } => {
                if let Some(k) = open.remove(&(*client, *request_id)) {
                    ops[k].output = Some(result.clone());
                    ops[k].response = Some(i as u64);
                }
            }
            _ => {}
        }
    }
    ops
}
