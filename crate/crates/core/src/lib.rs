pub mod energy;
pub mod error;
pub mod experiments;
pub mod hds;
pub mod io;
pub mod model;
pub mod ode;
pub mod par;
pub mod schrodinger;
