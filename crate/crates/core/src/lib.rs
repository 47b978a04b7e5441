#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advisor;
pub mod ledger;
pub mod metrics;
pub mod planner;
pub mod policy;
pub mod predictor;
pub mod rng;
pub mod session;
pub mod simuser;
pub mod world;
