//! Planning models for distributing scarce medical resources under
//! uncertain demand.

pub mod dro;
pub mod evaluation;
pub mod formulations;
pub mod instance;
pub mod io;
pub mod scenario;
