pub mod analysis;
pub mod channel;
pub mod codec;
pub mod galois;
pub mod harness;
pub mod phase1;
pub mod phase2;
pub mod scenario;
