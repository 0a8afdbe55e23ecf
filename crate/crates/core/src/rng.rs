//! Seeded noise streams. Each purpose draws from its own ChaCha stream so that
//! enabling one feature never shifts the draws seen by another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// ε used to sample h_t and VE corruptions.
    Sample,
    /// ε′ of the auxiliary-variable direction.
    Aux,
    /// ε_T, ε′_T of the initialisation.
    Init,
    /// Fixed restricted-encoding noise ε₀.
    Encode,
    /// Forward step of the fractional re-initialisation.
    Reinit,
    /// Monte-Carlo objective estimates.
    Objective,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Sample => 1,
            Stream::Aux => 2,
            Stream::Init => 3,
            Stream::Encode => 4,
            Stream::Reinit => 5,
            Stream::Objective => 6,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

#[derive(Debug, Clone)]
pub struct NoiseStreams {
    sample: ChaCha8Rng,
    aux: ChaCha8Rng,
    init: ChaCha8Rng,
    encode: ChaCha8Rng,
    reinit: ChaCha8Rng,
    objective: ChaCha8Rng,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            sample: stream_rng(seed, Stream::Sample),
            aux: stream_rng(seed, Stream::Aux),
            init: stream_rng(seed, Stream::Init),
            encode: stream_rng(seed, Stream::Encode),
            reinit: stream_rng(seed, Stream::Reinit),
            objective: stream_rng(seed, Stream::Objective),
        }
    }

    pub fn get(&mut self, stream: Stream) -> &mut ChaCha8Rng {
        match stream {
            Stream::Sample => &mut self.sample,
            Stream::Aux => &mut self.aux,
            Stream::Init => &mut self.init,
            Stream::Encode => &mut self.encode,
            Stream::Reinit => &mut self.reinit,
            Stream::Objective => &mut self.objective,
        }
    }

    pub fn normal<T: Real>(&mut self, stream: Stream, n: usize) -> Vec<T> {
        normal_vec(self.get(stream), n)
    }
}

pub fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::lit(z)
}

pub fn normal_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| normal(rng)).collect()
}
