use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StyleMatrix;

/// Above this many combinations the space is never materialized.
const ENUMERATION_LIMIT: u128 = 1 << 20;

/// One recombined caption. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentedText {
    pub text_id: String,
    /// `permutation[k]` is the sub-sentence placed in slot `k`.
    pub permutation: Vec<usize>,
    /// `style_choices[i]` is the style used for sub-sentence `i`.
    pub style_choices: Vec<usize>,
    pub rendered: String,
}

/// `n! · m^n`, or `None` if it does not fit in a `u128`.
pub fn combination_count(n: usize, m: usize) -> Option<u128> {
    let mut total: u128 = 1;
    for k in 1..=n as u128 {
        total = total.checked_mul(k)?.checked_mul(m as u128)?;
    }
    Some(total)
}

type Selection = (Vec<usize>, Vec<usize>);

/// Decodes `index < n!·m^n`: the low part picks styles in base `m`, the
/// high part is the permutation's Lehmer code.
fn decode(mut index: u128, n: usize, m: usize) -> Selection {
    let mut choices = vec![0; n];
    for c in choices.iter_mut() {
        *c = (index % m as u128) as usize;
        index /= m as u128;
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut perm = Vec::with_capacity(n);
    for k in (1..=n).rev() {
        let digit = (index % k as u128) as usize;
        index /= k as u128;
        perm.push(pool.remove(digit));
    }
    (perm, choices)
}

fn draw(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Selection {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let choices = (0..n).map(|_| rng.random_range(0..m)).collect();
    (perm, choices)
}

/// Samples `count` selections uniformly from the `n!·m^n` space.
///
/// Selections are distinct while `count` does not exceed the space. Beyond
/// that every selection appears once, in shuffled order, followed by draws
/// with replacement. The output is a pure function of the matrix, `count`
/// and `seed`.
pub fn reorganize(text_id: &str, matrix: &StyleMatrix, count: usize, seed: u64) -> Vec<AugmentedText> {
    let (n, m) = (matrix.n(), matrix.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = combination_count(n, m);
    let wanted = count as u128;

    let selections: Vec<Selection> = match total {
        Some(total) if total <= ENUMERATION_LIMIT && wanted.saturating_mul(2) > total => {
            let mut all: Vec<Selection> = (0..total).map(|i| decode(i, n, m)).collect();
            all.shuffle(&mut rng);
            if wanted <= total {
                all.truncate(count);
            } else {
                for _ in 0..(wanted - total) {
                    let extra = draw(&mut rng, n, m);
                    all.push(extra);
                }
            }
            all
        }
        _ => {
            // sparse relative to the space: rejection sampling stays cheap
            let mut seen = HashSet::with_capacity(count);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let s = draw(&mut rng, n, m);
                if seen.insert(s.clone()) {
                    out.push(s);
                }
            }
            out
        }
    };

    selections
        .into_iter()
        .map(|(permutation, style_choices)| AugmentedText {
            text_id: text_id.to_string(),
            rendered: matrix.render(&permutation, &style_choices),
            permutation,
            style_choices,
        })
        .collect()
}
