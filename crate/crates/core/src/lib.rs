//! NeoBFT state machine replication over a software emulation of
//! authenticated ordered multicast, driven by a seeded discrete-event
//! simulator and checked by trace auditors and a linearizability oracle.

pub mod aom;
pub mod codec;
pub mod crypto;
pub mod harness;
pub mod protocol;
pub mod sim;
pub mod trace;
pub mod verify;
pub mod wire;
