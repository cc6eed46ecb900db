//! Seeded random streams.
//!
//! Every generator draws from its own ChaCha stream, selected by a fixed
//! label. All streams share the run seed, so adding a generator never
//! perturbs the draws of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    PowerLaw,
    Telegraph,
    Jumps,
    Flux,
    Shots,
    Geometry,
}

impl Substream {
    pub fn label(self) -> &'static str {
        match self {
            Substream::PowerLaw => "powerlaw",
            Substream::Telegraph => "telegraph",
            Substream::Jumps => "jumps",
            Substream::Flux => "flux",
            Substream::Shots => "shots",
            Substream::Geometry => "geometry",
        }
    }

    fn id(self) -> u64 {
        match self {
            Substream::PowerLaw => 1,
            Substream::Telegraph => 2,
            Substream::Jumps => 3,
            Substream::Flux => 4,
            Substream::Shots => 5,
            Substream::Geometry => 6,
        }
    }
}

pub fn stream(seed: u64, which: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
