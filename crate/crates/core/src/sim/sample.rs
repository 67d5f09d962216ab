use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Symmetric Lomax (Pareto II) noise by inverse CDF: `|x| = U^(-1/alpha) - 1`
/// with a random sign, so `P(|x| > t) = (1 + t)^(-alpha)`.
///
/// For `alpha > 2` samples are rescaled to unit variance, using
/// `E[x^2] = 2 / ((alpha - 1)(alpha - 2))`. An infinite
/// `alpha` is the Gaussian limit and draws standard normals.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricPareto {
    alpha: f64,
    norm: f64,
}

impl SymmetricPareto {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0, "tail index must be positive");
        let norm = if alpha.is_finite() && alpha > 2.0 {
            let var = 2.0 / ((alpha - 1.0) * (alpha - 2.0));
            1.0 / var.sqrt()
        } else {
            1.0
        };
        Self { alpha, norm }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Distribution<f64> for SymmetricPareto {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.alpha.is_infinite() {
            return StandardNormal.sample(rng);
        }
        // 1 - [0, 1) keeps u away from zero.
        let u: f64 = 1.0 - rng.random::<f64>();
        let magnitude = (u.powf(-1.0 / self.alpha) - 1.0) * self.norm;
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

/// Independent random stream for one purpose of one seed.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// Stream identifiers. The high bits name the purpose; the low bits carry
/// a layer, channel or chunk index.
pub mod purpose {
    pub const BULK: u64 = 1 << 48;
    pub const LATENT: u64 = 2 << 48;
    pub const DOMINANT: u64 = 3 << 48;
    pub const LABEL: u64 = 4 << 48;
    pub const MIX: u64 = 5 << 48;
    pub const INJECT: u64 = 6 << 48;

    pub fn indexed(base: u64, hi: u64, lo: u64) -> u64 {
        base | (hi << 24) | lo
    }
}
