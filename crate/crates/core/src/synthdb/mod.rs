//! Synthetic real/fake fingerprint corpora.

pub mod corpus;
pub mod degrade;
pub mod generator;

pub use corpus::{
    build_corpus, Capture, CorpusManifest, CorpusSpec, Realness, SampleKey, SampleRecord, SensorKind, SensorProfile,
};
pub use degrade::{degrade_to_fake, degrade_with_severity, Cooperation};
pub use generator::{
    generate_fingerprint, impression, GeneratorParams, ImpressionJitter, MasterPrint, Placement, SingularKind,
    SingularPoint,
};
