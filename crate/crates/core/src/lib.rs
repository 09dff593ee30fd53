//! PEM electrolyzer system models: electrochemistry, mass and energy balances,
//! degradation, price handling, operating-schedule and design optimization,
//! and levelized cost accounting.

pub mod balances;
pub mod degradation;
pub mod electrochem;
pub mod prices;
pub mod thermo;
pub mod design;
pub mod economics;
pub mod schedule;
pub mod storage;
pub mod simulate;
pub mod scenario;
