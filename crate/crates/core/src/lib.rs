pub mod controller;
pub mod error;
pub mod estimator;
pub mod feeder;
pub mod harness;
pub mod measurement;
pub mod sensitivity;
pub mod sim;
pub mod topology;
