pub mod error;
pub mod levy;
pub mod quadrature;
pub mod rng;
pub mod kernels;
pub mod volterra;
pub mod stransform;
pub mod charfn;
pub mod itoverify;
pub mod config;
pub mod cli;
