//! Pinned input/output vectors for the default algorithms. The data files
//! live under `testdata/golden/` and were produced with an unrelated
//! implementation; `selftest` and the unit tests both replay them.

use super::{chain_extend, ChainHash, CryptoSuite, Digest, MacKey, RealCrypto};

const SHA256: &str = include_str!("../../testdata/golden/sha256.txt");
const HMAC: &str = include_str!("../../testdata/golden/hmac_sha256_16.txt");
const ED25519: &str = include_str!("../../testdata/golden/ed25519.txt");
const CHAIN: &str = include_str!("../../testdata/golden/chain.txt");

#[derive(Debug, Clone)]
pub struct VectorResult {
    pub family: &'static str,
    pub line: usize,
    pub pass: bool,
}

fn decode(field: &str) -> Vec<u8> {
    if field == "-" {
        Vec::new()
    } else {
        hex::decode(field).expect("golden file holds hex")
    }
}

fn lines(data: &str) -> impl Iterator<Item = (usize, Vec<&str>, Vec<&str>)> + '_ {
    data.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let (lhs, rhs) = line.split_once("->")?;
        Some((
            i + 1,
            lhs.split_whitespace().collect(),
            rhs.split_whitespace().collect(),
        ))
    })
}

pub fn check_all() -> Vec<VectorResult> {
    let suite = RealCrypto;
    let mut out = Vec::new();
    for (line, input, output) in lines(SHA256) {
        let pass = suite.digest(&decode(input[0])).to_hex() == output[0];
        out.push(VectorResult { family: "sha256", line, pass });
    }
    for (line, input, output) in lines(HMAC) {
        let key = decode(input[0]);
        // keys in the file are 32 octets, matching MacKey
        let pass = key.len() == 32 && {
            let tag = suite.mac_raw(&MacKey(key.try_into().unwrap()), &decode(input[1]));
            tag.to_hex() == output[0]
        };
        out.push(VectorResult { family: "hmac-sha256-16", line, pass });
    }
    for (line, input, output) in lines(ED25519) {
        let seed: [u8; 32] = decode(input[0]).try_into().unwrap();
        let msg = decode(input[1]);
        let key = suite.keypair_from_seed(&seed);
        let sig = suite.sign(&key, &msg);
        let pass = key.verifying_key().to_hex() == output[0]
            && sig.to_hex() == output[1]
            && suite.verify(&key.verifying_key(), &msg, &sig);
        out.push(VectorResult { family: "ed25519", line, pass });
    }
    for (line, input, output) in lines(CHAIN) {
        let prev = ChainHash::from_hex(input[0]).unwrap();
        let digest = Digest::from_hex(input[1]).unwrap();
        let seq: u64 = input[2].parse().unwrap();
        let pass = chain_extend(&prev, &digest, seq).to_hex() == output[0];
        out.push(VectorResult { family: "chain", line, pass });
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn every_golden_vector_matches() {
        let results = super::check_all();
        assert!(results.len() >= 15);
        for r in &results {
            assert!(r.pass, "{} vector at line {} failed", r.family, r.line);
        }
    }
}
