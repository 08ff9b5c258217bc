//! Sub-seed derivation.
//!
//! Every randomized stage draws from its own ChaCha8 stream whose seed is
//! derived from the master seed, a purpose tag and an index:
//!
//! ```text
//! sub_seed = u64::from_le_bytes(SHA-256(master_le || purpose_utf8 || 0x00 || index_le)[0..8])
//! ```
//!
//! Changing the seed of one stage (say the scenario sampler) therefore never
//! perturbs another stage (say weight initialization).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub mod purpose {
    pub const SCENARIO: &str = "scenario";
    pub const TRACE: &str = "trace";
    pub const INIT: &str = "init";
    pub const RANDOM_INIT: &str = "random-init";
    pub const MAML_BATCH: &str = "maml-batch";
    pub const JOINT_BATCH: &str = "joint-batch";
    pub const TRAIN_TASKS: &str = "train-tasks";
    pub const TEST_TASKS: &str = "test-tasks";
}

pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(master: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, index))
}
