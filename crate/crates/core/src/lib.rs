pub mod values;
pub mod similarity;
pub mod bugspec;
pub mod cli;
pub mod context;
pub mod harness;
pub mod llm;
pub mod mutation;
pub mod pairing;
pub mod prompting;
pub mod repair;
pub mod report;
pub mod testcase;
