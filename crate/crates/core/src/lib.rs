//! Sound matching for a compact modular synthesizer.
//!
//! The toolkit renders a 78-parameter synthesizer voice, scores candidate
//! sounds against a target with a mel-scaled multi-resolution STFT loss,
//! and searches the parameter space with nine derivative-free and
//! gradient-style optimizers. Fitted patches can be edited, analyzed, and
//! used to fit a Gaussian model for sampling new sounds.

pub mod audio;
pub mod optim;
pub mod params;
pub mod patch;
pub mod spectral;
pub mod synth;
