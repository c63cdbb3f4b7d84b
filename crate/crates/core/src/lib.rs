pub mod cli;
pub mod constants;
pub mod csl;
pub mod exclusion;
pub mod geometry;
pub mod optomech;
pub mod quadrature;
