//! Linear secret sharing down a policy tree, over the P-256 scalar field.
//!
//! Shares are emitted per leaf in pre-order. Reconstruction returns a set of
//! (leaf index, coefficient) pairs with `sum(coeff * share) = secret`.

use p256::elliptic_curve::ff::Field;
use p256::Scalar;
use rand_core::CryptoRngCore;

use super::policy::{Attribute, PolicyNode};

pub(crate) fn share(node: &PolicyNode, secret: Scalar, rng: &mut impl CryptoRngCore, out: &mut Vec<Scalar>) {
    match node {
        PolicyNode::Leaf(_) => out.push(secret),
        PolicyNode::Or(children) => {
            for c in children {
                share(c, secret, rng, out);
            }
        }
        PolicyNode::And(children) => {
            let mut rest = secret;
            let last = children.len() - 1;
            for (i, c) in children.iter().enumerate() {
                let part = if i == last { rest } else { Scalar::random(&mut *rng) };
                rest -= part;
                share(c, part, rng, out);
            }
        }
        PolicyNode::Threshold { k, children } => {
            // f(0) = secret, degree k - 1, child i receives f(i) for i = 1..=n.
            let coeffs: Vec<Scalar> = std::iter::once(secret)
                .chain((1..*k).map(|_| Scalar::random(&mut *rng)))
                .collect();
            for (i, c) in children.iter().enumerate() {
                let x = Scalar::from(i as u64 + 1);
                let y = coeffs.iter().rev().fold(Scalar::ZERO, |acc, a| acc * x + a);
                share(c, y, rng, out);
            }
        }
    }
}

/// Lagrange coefficient at zero for point `xi` among `xs`.
pub(crate) fn lagrange_at_zero(xi: u64, xs: &[u64]) -> Scalar {
    let mut num = Scalar::ONE;
    let mut den = Scalar::ONE;
    for &xj in xs.iter().filter(|&&xj| xj != xi) {
        num *= Scalar::from(xj);
        den *= Scalar::from(xj) - Scalar::from(xi);
    }
    // xs are distinct and nonzero, so den != 0.
    num * den.invert().unwrap()
}

/// Reconstruction coefficients for leaves where `have(attr, leaf_index)` holds,
/// or `None` if the available leaves do not satisfy the tree.
pub(crate) fn reconstruct(node: &PolicyNode, have: &dyn Fn(&Attribute, usize) -> bool) -> Option<Vec<(usize, Scalar)>> {
    let mut idx = 0;
    walk(node, have, &mut idx)
}

fn walk(node: &PolicyNode, have: &dyn Fn(&Attribute, usize) -> bool, idx: &mut usize) -> Option<Vec<(usize, Scalar)>> {
    match node {
        PolicyNode::Leaf(a) => {
            let i = *idx;
            *idx += 1;
            have(a, i).then(|| vec![(i, Scalar::ONE)])
        }
        PolicyNode::And(children) => {
            // Every subtree is walked so leaf indices stay aligned.
            let parts: Vec<_> = children.iter().map(|c| walk(c, have, idx)).collect();
            parts.into_iter().try_fold(Vec::new(), |mut acc, p| {
                acc.extend(p?);
                Some(acc)
            })
        }
        PolicyNode::Or(children) => {
            let parts: Vec<_> = children.iter().map(|c| walk(c, have, idx)).collect();
            parts.into_iter().flatten().next()
        }
        PolicyNode::Threshold { k, children } => {
            let parts: Vec<_> = children.iter().map(|c| walk(c, have, idx)).collect();
            let chosen: Vec<(u64, Vec<(usize, Scalar)>)> = parts
                .into_iter()
                .enumerate()
                .filter_map(|(i, p)| p.map(|p| (i as u64 + 1, p)))
                .take(*k)
                .collect();
            if chosen.len() < *k {
                return None;
            }
            let xs: Vec<u64> = chosen.iter().map(|(x, _)| *x).collect();
            let mut out = Vec::new();
            for (x, coeffs) in chosen {
                let l = lagrange_at_zero(x, &xs);
                out.extend(coeffs.into_iter().map(|(i, c)| (i, c * l)));
            }
            Some(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abe::policy::AccessPolicy;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    fn combine(coeffs: &[(usize, Scalar)], shares: &[Scalar]) -> Scalar {
        coeffs.iter().fold(Scalar::ZERO, |acc, (i, c)| acc + *c * shares[*i])
    }

    #[test]
    fn threshold_shares_recombine_from_any_k() {
        let p: AccessPolicy = "THRESHOLD(2, x:a, x:b, x:c)".parse().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let secret = Scalar::random(&mut rng);
        let mut shares = Vec::new();
        share(p.root(), secret, &mut rng, &mut shares);
        for pair in [[0usize, 1], [0, 2], [1, 2]] {
            let c = reconstruct(p.root(), &|_, i| pair.contains(&i)).unwrap();
            assert_eq!(combine(&c, &shares), secret);
        }
        assert!(reconstruct(p.root(), &|_, i| i == 1).is_none());
    }

    #[test]
    fn nested_and_or_recombine() {
        let p: AccessPolicy = "AND(x:a, OR(x:b, AND(x:c, x:d)), THRESHOLD(1, x:e))".parse().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let secret = Scalar::random(&mut rng);
        let mut shares = Vec::new();
        share(p.root(), secret, &mut rng, &mut shares);
        assert_eq!(shares.len(), 5);
        let c = reconstruct(p.root(), &|_, i| [0, 2, 3, 4].contains(&i)).unwrap();
        assert_eq!(combine(&c, &shares), secret);
        assert!(reconstruct(p.root(), &|_, i| [0, 2, 4].contains(&i)).is_none());
    }

    #[test]
    fn single_and_share_is_not_the_secret() {
        let p: AccessPolicy = "AND(x:a, x:b)".parse().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let secret = Scalar::random(&mut rng);
        let mut shares = Vec::new();
        share(p.root(), secret, &mut rng, &mut shares);
        assert_ne!(shares[0], secret);
        assert_ne!(shares[1], secret);
        assert_eq!(shares[0] + shares[1], secret);
    }
}
