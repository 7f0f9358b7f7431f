//! Physics-informed neural network and finite-difference solvers for the 1D
//! Fisher–KPP equation `u_t = D·u_xx + R·u·(1 − u)`.

pub mod autodiff;
pub mod fdm;
pub mod metrics;
pub mod network;
pub mod optimize;
pub mod physics;
pub mod pinn;
