//! Shamir sharing over the BLS12-381 scalar field.

use bls12_381::Scalar;
use ff::Field;
use rand::RngCore;

use crate::error::{Error, Result};

/// Polynomial with coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<Scalar>,
}

impl Polynomial {
    /// Random polynomial of degree `k − 1` with `q(0) = secret`.
    pub fn random(secret: Scalar, k: usize, rng: &mut dyn RngCore) -> Self {
        assert!(k >= 1, "threshold must be positive");
        let mut coeffs = Vec::with_capacity(k);
        coeffs.push(secret);
        coeffs.extend((1..k).map(|_| Scalar::random(&mut *rng)));
        Self { coeffs }
    }

    pub fn evaluate(&self, x: u64) -> Scalar {
        let x = Scalar::from(x);
        self.coeffs.iter().rev().fold(Scalar::zero(), |acc, c| acc * x + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// `n` shares of `secret` at `x = 1..=n`, any `k` of which reconstruct it.
pub fn share(secret: Scalar, k: usize, n: usize, rng: &mut dyn RngCore) -> Result<Vec<(u64, Scalar)>> {
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("threshold {k} outside 1..={n}")));
    }
    let poly = Polynomial::random(secret, k, rng);
    Ok((1..=n as u64).map(|x| (x, poly.evaluate(x))).collect())
}

/// Lagrange coefficient of `x_i` at zero over the point set `xs`.
pub fn lagrange_at_zero(xs: &[u64], x_i: u64) -> Scalar {
    let xi = Scalar::from(x_i);
    let (num, den) = xs.iter().filter(|&&x| x != x_i).fold(
        (Scalar::one(), Scalar::one()),
        |(num, den), &x| {
            let xj = Scalar::from(x);
            (num * (-xj), den * (xi - xj))
        },
    );
    num * den.invert().expect("distinct interpolation points")
}

/// Interpolates the shares at zero.
pub fn reconstruct(shares: &[(u64, Scalar)]) -> Scalar {
    let xs: Vec<u64> = shares.iter().map(|(x, _)| *x).collect();
    shares
        .iter()
        .fold(Scalar::zero(), |acc, (x, y)| acc + lagrange_at_zero(&xs, *x) * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn any_k_shares_reconstruct() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for (k, n) in [(1, 1), (1, 4), (2, 3), (3, 5), (5, 5)] {
            let secret = Scalar::random(&mut rng);
            let mut shares = share(secret, k, n, &mut rng).unwrap();
            for _ in 0..5 {
                shares.shuffle(&mut rng);
                assert_eq!(reconstruct(&shares[..k]), secret);
            }
            assert_eq!(reconstruct(&shares), secret);
        }
    }

    #[test]
    fn fewer_than_k_shares_miss() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..100 {
            let secret = Scalar::random(&mut rng);
            let mut shares = share(secret, 3, 5, &mut rng).unwrap();
            shares.shuffle(&mut rng);
            assert_ne!(reconstruct(&shares[..2]), secret);
        }
    }

    #[test]
    fn lagrange_small_field_values() {
        // points {1, 2}: λ1 = 2, λ2 = −1
        assert_eq!(lagrange_at_zero(&[1, 2], 1), Scalar::from(2u64));
        assert_eq!(lagrange_at_zero(&[1, 2], 2), -Scalar::one());
        let poly = Polynomial { coeffs: vec![Scalar::from(7u64), Scalar::from(3u64)] };
        assert_eq!(poly.evaluate(2), Scalar::from(13u64));
        assert_eq!(poly.degree(), 1);
    }

    #[test]
    fn invalid_threshold() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(share(Scalar::one(), 0, 3, &mut rng).is_err());
        assert!(share(Scalar::one(), 4, 3, &mut rng).is_err());
    }
}
