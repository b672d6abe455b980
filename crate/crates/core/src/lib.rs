//! Unsupervised vector-quantized graph embeddings for mixed-integer programs.
//!
//! The pipeline turns an MPS instance into a bipartite variable/constraint
//! graph, encodes it with a two-layer message-passing network, snaps every
//! node to its nearest codeword, and trains the whole stack to reconstruct
//! the graph. The per-instance histogram of code assignments is the
//! instance embedding; codewords are the node embeddings. Downstream heads
//! predict integrality gaps (turned into pseudo-cuts) and variable hints.
//!
//! A small exact solver ([`minisolve`]) provides labels and ground truth.

pub mod mip;
pub mod seed;
pub mod geninst;
pub mod minisolve;
pub mod bigraph;
pub mod diffcore;
pub mod vqgae;
pub mod trainer;
pub mod heads;
pub mod embed;
pub mod analysis;
