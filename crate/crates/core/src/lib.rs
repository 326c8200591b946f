//! Spiking convolution-free network with MAT neurons, STDP feature learning
//! and a ReSuMe-trained readout.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod network;
pub mod neuron;
pub mod plasticity;
pub mod spikes;
pub mod topology;
pub mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Phase};
pub use config::RunConfig;
pub use data::{make_synthetic, Dataset, DatasetSpec, ImageSample};
pub use encoding::{calibrate_ik, EncodingConfig};
pub use error::{Result, SnnError};
pub use network::{ClassificationResult, Network, SimulationConfig};
pub use neuron::{NeuronParams, NeuronState, Sign};
pub use plasticity::{PlasticityMode, ResumeParams, StdpParams, SynapsePopulation};
pub use spikes::SpikeRecord;
pub use topology::{build_network, NatCsnnConfig, NetworkTopology, ProjectionId};
pub use training::{evaluate, monte_carlo_weight_search, run_phase1, run_phase2, EvaluationReport};
