//! Hand-built histories with known answers, used to validate the checker.

use crate::protocol::NONE_MARKER;

use super::linearizability::{check_echo, check_kv, CheckResult, Operation, DEFAULT_BUDGET};

pub struct Fixture {
    pub name: &'static str,
    pub kv: bool,
    pub ops: Vec<Operation>,
    pub linearizable: bool,
}

impl Fixture {
    pub fn check(&self) -> CheckResult {
        if self.kv {
            check_kv(&self.ops, DEFAULT_BUDGET)
        } else {
            check_echo(&self.ops, DEFAULT_BUDGET)
        }
    }

    /// Whether the checker returns the expected answer.
    pub fn holds(&self) -> bool {
        match self.check() {
            CheckResult::Linearizable => self.linearizable,
            CheckResult::NotLinearizable(_) => !self.linearizable,
            CheckResult::Inconclusive => false,
        }
    }
}

fn c(client: u32, input: &str, output: &str, invoke: u64, response: u64) -> Operation {
    Operation::complete(client, input, output, invoke, response)
}

fn p(client: u32, input: &str, invoke: u64) -> Operation {
    Operation::pending(client, input, invoke)
}

const NONE: &str = NONE_MARKER;

fn kv(name: &'static str, linearizable: bool, ops: Vec<Operation>) -> Fixture {
    Fixture {
        name,
        kv: true,
        ops,
        linearizable,
    }
}

pub fn all() -> Vec<Fixture> {
    let mut out = vec![
        // ---- linearizable ----
        kv("single-client-sequence", true, vec![
            c(0, "GET a", NONE, 0, 1),
            c(0, "PUT a 1", "OK", 2, 3),
            c(0, "GET a", "1", 4, 5),
        ]),
        kv("concurrent-writes-either-order", true, vec![
            c(0, "PUT a 1", "OK", 0, 10),
            c(1, "PUT a 2", "OK", 1, 9),
            c(2, "GET a", "1", 11, 12),
        ]),
        kv("read-overlapping-write-sees-old", true, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(1, "PUT a 2", "OK", 2, 8),
            c(2, "GET a", "1", 3, 4),
        ]),
        kv("read-overlapping-write-sees-new", true, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(1, "PUT a 2", "OK", 2, 8),
            c(2, "GET a", "2", 3, 4),
        ]),
        kv("pending-write-visible", true, vec![
            p(0, "PUT a 7", 0),
            c(1, "GET a", "7", 5, 6),
        ]),
        kv("pending-write-invisible", true, vec![
            p(0, "PUT a 7", 0),
            c(1, "GET a", NONE, 5, 6),
        ]),
        kv("independent-keys", true, vec![
            c(0, "PUT a 1", "OK", 0, 5),
            c(1, "PUT b 2", "OK", 1, 4),
            c(0, "GET b", "2", 6, 7),
            c(1, "GET a", "1", 6, 8),
        ]),
        kv("two-readers-agree-mid-write", true, vec![
            c(0, "PUT a 1", "OK", 0, 20),
            c(1, "GET a", NONE, 1, 2),
            c(2, "GET a", "1", 3, 4),
            c(1, "GET a", "1", 5, 6),
        ]),
        kv("write-then-overwrite-chain", true, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(1, "PUT a 2", "OK", 2, 3),
            c(2, "PUT a 3", "OK", 4, 5),
            c(0, "GET a", "3", 6, 7),
        ]),
        kv("malformed-op-returns-err", true, vec![
            c(0, "DEL a", "ERR", 0, 1),
            c(0, "GET a", NONE, 2, 3),
        ]),
        Fixture {
            name: "echo-concurrent",
            kv: false,
            ops: vec![c(0, "x", "x", 0, 5), c(1, "y", "y", 1, 3), p(2, "z", 2)],
            linearizable: true,
        },
        // ---- not linearizable ----
        kv("stale-read-after-write", false, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(1, "GET a", NONE, 2, 3),
        ]),
        kv("divergent-reads-without-write", false, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(1, "GET a", "1", 2, 3),
            c(2, "GET a", "2", 4, 5),
        ]),
        kv("read-of-never-written-value", false, vec![c(0, "GET a", "9", 0, 1)]),
        kv("new-then-old-reads", false, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(1, "PUT a 2", "OK", 2, 20),
            c(2, "GET a", "2", 3, 4),
            c(3, "GET a", "1", 5, 6),
        ]),
        kv("write-lost-after-ack", false, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(0, "PUT a 2", "OK", 2, 3),
            c(1, "GET a", "1", 4, 5),
        ]),
        kv("bad-write-ack", false, vec![c(0, "PUT a 1", "ERR", 0, 1)]),
        kv("readers-see-opposite-orders", false, vec![
            c(0, "PUT a 1", "OK", 0, 10),
            c(1, "PUT a 2", "OK", 0, 10),
            c(2, "GET a", "1", 11, 12),
            c(3, "GET a", "2", 13, 14),
            c(2, "GET a", "1", 15, 16),
        ]),
        kv("pending-write-seen-then-unseen", false, vec![
            p(0, "PUT a 7", 0),
            c(1, "GET a", "7", 5, 6),
            c(2, "GET a", NONE, 7, 8),
        ]),
        kv("violation-on-second-key", false, vec![
            c(0, "PUT a 1", "OK", 0, 1),
            c(1, "GET a", "1", 2, 3),
            c(0, "PUT b 1", "OK", 4, 5),
            c(1, "GET b", NONE, 6, 7),
        ]),
        Fixture {
            name: "echo-wrong-result",
            kv: false,
            ops: vec![c(0, "x", "x", 0, 1), c(1, "y", "x", 2, 3)],
            linearizable: false,
        },
    ];
    // a wider concurrent batch to exercise memoization
    let mut wide = Vec::new();
    for i in 0..8u32 {
        wide.push(c(i, &format!("PUT w {i}"), "OK", 0, 100));
    }
    wide.push(c(9, "GET w", "5", 101, 102));
    out.push(kv("eight-concurrent-writers", true, wide.clone()));
    wide.push(c(9, "GET w", "6", 103, 104));
    out.push(kv("eight-writers-then-flip", false, wide));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_gets_its_expected_answer() {
        let all = all();
        assert!(all.iter().filter(|f| f.linearizable).count() >= 10);
        assert!(all.iter().filter(|f| !f.linearizable).count() >= 10);
        for f in &all {
            assert!(f.holds(), "{}: {:?}", f.name, f.check());
        }
    }
}
