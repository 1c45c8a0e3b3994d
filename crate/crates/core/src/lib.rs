pub mod cli;
pub mod detector;
pub mod empirical;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod noise;
pub mod quadrature;
