//! Reproducible random streams keyed by `(replication, purpose)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Each tag yields an independent stream for
/// the same replication index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    FieldX,
    FieldXPrime,
    FieldY,
    Locations,
    Bootstrap,
    Population,
    Panel,
    Other(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::FieldX => 1,
            Purpose::FieldXPrime => 2,
            Purpose::FieldY => 3,
            Purpose::Locations => 4,
            Purpose::Bootstrap => 5,
            Purpose::Population => 6,
            Purpose::Panel => 7,
            Purpose::Other(t) => 0x1_0000_0000 | u64::from(t),
        }
    }
}

/// Stream identifier; `index` distinguishes sub-streams such as bootstrap
/// resample `b` within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub replication: u64,
    pub purpose: Purpose,
    pub index: u64,
}

impl StreamId {
    pub fn new(replication: u64, purpose: Purpose) -> Self {
        Self {
            replication,
            purpose,
            index: 0,
        }
    }

    pub fn with_index(self, index: u64) -> Self {
        Self { index, ..self }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 keyed by the master seed, positioned on the stream selected by
/// hashing the stream id.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        let stream = splitmix64(
            splitmix64(splitmix64(id.replication) ^ id.purpose.tag()).wrapping_add(id.index),
        );
        inner.set_stream(stream);
        Self { inner }
    }

    /// Stream for an ad hoc computation outside any experiment.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, StreamId::new(0, Purpose::Other(0)))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
