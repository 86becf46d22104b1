//! Checkpoint merging by task-vector arithmetic, plus a scoring harness for
//! visually-grounded programming questions.

pub mod dedup;
pub mod judgeclient;
pub mod scorer;
pub mod sweep;
pub mod taskvec;
pub mod tensorstore;
