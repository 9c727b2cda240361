//! Front ends for the avaface engine: the `avaface` command line and the
//! HTTP service the browser viewer talks to.

pub mod cli;
pub mod service;
pub mod settings;
