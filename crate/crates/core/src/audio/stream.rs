use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// Deterministic random source keyed by `(root_seed, item_id)`.
///
/// The key is a SHA-256 digest of the seed and id; draws come from a ChaCha20
/// block counter under that key, so a stream depends on nothing but its key
/// and how many values were taken from it.
#[derive(Debug, Clone)]
pub struct RandomStream {
    root_seed: u64,
    item_id: Vec<u8>,
    rng: ChaCha20Rng,
}

/// Opens the stream for one item.
pub fn derive_stream(root_seed: u64, item_id: impl AsRef<[u8]>) -> RandomStream {
    let item_id = item_id.as_ref().to_vec();
    let mut h = Sha256::new();
    h.update(b"uspeech/stream/v1");
    h.update(root_seed.to_le_bytes());
    h.update((item_id.len() as u64).to_le_bytes());
    h.update(&item_id);
    let key: [u8; 32] = h.finalize().into();
    RandomStream {
        root_seed,
        item_id,
        rng: ChaCha20Rng::from_seed(key),
    }
}

impl RandomStream {
    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn item_id(&self) -> &[u8] {
        &self.item_id
    }

    /// Independent child stream, keyed by this stream's id plus `label`.
    /// Does not consume draws from `self`.
    pub fn substream(&self, label: &str) -> RandomStream {
        let mut id = self.item_id.clone();
        id.push(b'/');
        id.extend_from_slice(label.as_bytes());
        derive_stream(self.root_seed, id)
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
