pub mod expr;
pub mod formulations;
pub mod poly;
pub mod problem;
pub mod report;
pub mod sampler;
pub mod sdp;
pub mod semialg;
pub mod sos;
pub mod system;
