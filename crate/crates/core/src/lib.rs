pub mod corpus;
pub mod grl;
pub mod harness;
pub mod nn;
pub mod optim;
pub mod synth;
