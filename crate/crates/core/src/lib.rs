//! Deterministic discrete-event simulator of a multi-vendor, sliced
//! Open RAN deployment: RU/DU/CU nodes, a minimal slice-aware 5G core, and a
//! near-RT RIC hosting a slice manager and a digital-twin xApp over an
//! E2-style TLV interface.

pub mod sim;
pub mod core5g;
pub mod radio;
pub mod ran;
pub mod e2;
pub mod ric;
pub mod scenario;
pub mod world;
pub mod report;
