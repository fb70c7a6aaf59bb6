pub mod apply;
pub mod cycle;
pub mod eval;
pub mod fit;
pub mod import;
pub mod sweep;
pub mod synth;
pub mod theory;
pub mod two_path;

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Orthogonal,
    OrthogonalCentered,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}
