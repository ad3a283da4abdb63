pub mod condprob;
pub mod coupling;
pub mod edge;
pub mod factor;
pub mod harness;
pub mod hypergraph;
pub mod oracle;
pub mod par;
pub mod process;
pub mod seed;
pub mod suniform;
pub mod timing;
