pub mod model;
pub mod registry;
pub mod modules;
mod topology;
pub mod validation;
pub mod concretize;
pub mod exec;
pub mod fixtures;
pub mod sweep;
pub mod xosc;
