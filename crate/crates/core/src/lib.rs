//! Lightweight intrusion detection for CAN bus traffic.
//!
//! A small multi-layer perceptron whose layer widths scale with the number of
//! traffic classes classifies individual CAN frames (arbitration ID plus eight
//! data bytes) as normal traffic or one of several attack types.
//!
//! * [`canio`]: log-line parsing and feature extraction
//! * [`dataset`]: corpus loaders, splits, synthetic traffic
//! * [`nncore`]: the network, loss and backpropagation
//! * [`trainer`]: RMSprop mini-batch training and evaluation
//! * [`metrics`]: confusion-matrix metrics and cross-fold stability
//! * [`tuner`]: random search with k-fold cross-validation
//! * [`rtdetect`]: streaming detection with latency accounting
//! * [`modelfile`]: text model persistence
//! * [`bench`]: allocation rule versus fixed-width layers

pub mod bench;
pub mod canio;
pub mod dataset;
pub mod metrics;
pub mod modelfile;
pub mod nncore;
pub mod rtdetect;
pub mod trainer;
pub mod tuner;

pub use canio::{ClassLabel, FeatureVector, RawCanFrame};
pub use dataset::Dataset;
pub use nncore::{Model, ModelArchitecture};
pub use trainer::TrainConfig;
