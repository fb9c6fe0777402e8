pub mod egg_domain;
pub mod error;
pub mod gamma_tools;
pub mod quadrature;
pub mod taylor;
pub mod kernel;
pub mod analysis;
pub mod report;
pub mod suite;
