//! Topology-constrained segmentation of neuron membranes.
//!
//! A membrane probability map is filtered, cut into watershed fragments and
//! vectorized into a planar boundary graph. An integer program over directed
//! boundary edges, junction states and region labels then selects closed,
//! gap-free membranes.

pub mod filters;
pub mod ilpmodel;
pub mod imagery;
pub mod learn;
pub mod metrics;
pub mod pipeline;
pub mod plangraph;
pub mod priors;
pub mod scalar;
pub mod segment;
pub mod solve;
pub mod synth;
pub mod watershed;

pub use scalar::Scalar;

pub type Map = imagery::ProbabilityMap<f64>;
pub type Model = ilpmodel::IlpModel<f64>;
pub type Solution = solve::IlpSolution<f64>;
pub type Priors = priors::PriorTable<f64>;
pub type Response = filters::OrientedResponse<f64>;
pub type Scene = synth::Scene<f64>;

pub type Map32 = imagery::ProbabilityMap<f32>;
pub type Model32 = ilpmodel::IlpModel<f32>;
pub type Solution32 = solve::IlpSolution<f32>;
