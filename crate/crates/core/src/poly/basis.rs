//! Graded-lexicographic monomial bases.
//!
//! Within one degree the exponent tuples are listed in strictly decreasing
//! lexicographic order, so for `n = 2, d = 2` the basis is
//! `x1^2, x1 x2, x2^2`. Indices are computed in closed form with the
//! combinatorial number system, which keeps `index_of` allocation free.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::PolyError;

/// Binomial coefficient `C(n, k)`, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of monomials of exact degree `d` in `n` variables.
pub fn basis_len(n: usize, d: usize) -> usize {
    if n == 0 {
        return usize::from(d == 0);
    }
    binomial(n + d - 1, d)
}

/// Position of `exp` inside the degree-`sum(exp)` basis.
///
/// The rank is the number of tuples with the same degree that compare
/// lexicographically greater than `exp`.
pub fn rank(exp: &[u32]) -> usize {
    let n = exp.len();
    let mut remaining: usize = exp.iter().map(|&e| e as usize).sum();
    let mut r = 0;
    for (i, &e) in exp.iter().enumerate() {
        let e = e as usize;
        let tail = n - i - 1;
        if tail == 0 {
            break;
        }
        if remaining > e {
            // tuples agreeing on the prefix with a larger entry at i
            r += binomial(remaining - e - 1 + tail, tail);
        }
        remaining -= e;
    }
    r
}

/// Ordered monomial exponents of a fixed degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    n: usize,
    degree: usize,
    // flattened, `n` entries per monomial
    exponents: Vec<u32>,
}

impl MonomialBasis {
    pub fn new(n: usize, degree: usize) -> Result<Self, PolyError> {
        if n == 0 {
            return Err(PolyError::ZeroVariables);
        }
        let len = basis_len(n, degree);
        let mut exponents = Vec::with_capacity(len * n);
        let mut current = vec![0u32; n];
        fill(&mut current, 0, degree as u32, &mut exponents);
        debug_assert_eq!(exponents.len(), len * n);
        Ok(Self {
            n,
            degree,
            exponents,
        })
    }

    /// Shared, lazily built basis. Bases are immutable so one copy per
    /// `(n, degree)` is kept for the lifetime of the process.
    pub fn shared(n: usize, degree: usize) -> Result<Arc<Self>, PolyError> {
        static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Arc<MonomialBasis>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(b) = cache.read().unwrap().get(&(n, degree)) {
            return Ok(b.clone());
        }
        let basis = Arc::new(Self::new(n, degree)?);
        cache
            .write()
            .unwrap()
            .entry((n, degree))
            .or_insert_with(|| basis.clone());
        Ok(basis)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, index: usize) -> &[u32] {
        &self.exponents[index * self.n..(index + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.exponents.chunks_exact(self.n)
    }

    pub fn index_of(&self, exp: &[u32]) -> Option<usize> {
        if exp.len() != self.n || exp.iter().map(|&e| e as usize).sum::<usize>() != self.degree {
            return None;
        }
        Some(rank(exp))
    }
}

fn fill(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<u32>) {
    let n = current.len();
    if pos == n - 1 {
        current[pos] = remaining;
        out.extend_from_slice(current);
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill(current, pos + 1, remaining - e, out);
    }
    current[pos] = 0;
}

/// Index table for products of a degree-`a` and a degree-`b` monomial:
/// entry `i * len_b + j` is the index of `m_i * m_j` in the degree `a + b`
/// basis.
pub(crate) fn product_table(n: usize, a: usize, b: usize) -> Arc<Vec<u32>> {
    type Table = HashMap<(usize, usize, usize), Arc<Vec<u32>>>;
    static CACHE: OnceLock<RwLock<Table>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.read().unwrap().get(&(n, a, b)) {
        return t.clone();
    }
    let ba = MonomialBasis::shared(n, a).expect("n >= 1");
    let bb = MonomialBasis::shared(n, b).expect("n >= 1");
    let mut table = Vec::with_capacity(ba.len() * bb.len());
    let mut buf = vec![0u32; n];
    for ea in ba.iter() {
        for eb in bb.iter() {
            for k in 0..n {
                buf[k] = ea[k] + eb[k];
            }
            table.push(rank(&buf) as u32);
        }
    }
    let table = Arc::new(table);
    cache
        .write()
        .unwrap()
        .entry((n, a, b))
        .or_insert_with(|| table.clone());
    table
}
