//! Semi-graphoid closure over bitmask atoms: symmetry, decomposition, weak union, contraction.

use std::collections::{HashMap, HashSet};

/// `(a, b, c)` reads `a _||_ b | c`; masks are disjoint and `a`, `b` nonempty.
pub type Triple = (u64, u64, u64);

#[derive(Debug, Default, Clone)]
pub struct Closure {
    set: HashSet<Triple>,
    by_left_given: HashMap<(u64, u64), Vec<u64>>,
}

/// Nonempty proper submasks of `m`.
fn proper_submasks(m: u64) -> impl Iterator<Item = u64> {
    let mut sub = m;
    std::iter::from_fn(move || {
        if sub == 0 {
            return None;
        }
        sub = (sub - 1) & m;
        (sub != 0).then_some(sub)
    })
}

/// Nonempty submasks of `m`, including `m`.
fn submasks(m: u64) -> impl Iterator<Item = u64> {
    std::iter::once(m).filter(|&x| x != 0).chain(proper_submasks(m))
}

impl Closure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.set.contains(&t)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Adds `t` and closes under the axioms.
    pub fn add(&mut self, t: Triple) {
        let mut work = vec![t];
        while let Some(t) = work.pop() {
            let (a, b, c) = t;
            debug_assert!(a != 0 && b != 0 && a & b == 0 && a & c == 0 && b & c == 0);
            if !self.set.insert(t) {
                continue;
            }
            self.by_left_given.entry((a, c)).or_default().push(b);
            work.push((b, a, c));
            for sub in proper_submasks(b) {
                work.push((a, sub, c));
                work.push((a, b & !sub, c | sub));
            }
            // t as the first premise: (a, b, c) and (a, w, c+b) give (a, b+w, c).
            if let Some(ws) = self.by_left_given.get(&(a, c | b)) {
                for &w in ws {
                    work.push((a, b | w, c));
                }
            }
            // t as the second premise: (a, s, c-s) and (a, b, c) give (a, s+b, c-s).
            for s in submasks(c) {
                if self.set.contains(&(a, s, c & !s)) {
                    work.push((a, s | b, c & !s));
                }
            }
        }
    }

    pub fn from_triples(ts: impl IntoIterator<Item = Triple>) -> Self {
        let mut c = Closure::new();
        for t in ts {
            c.add(t);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: u64 = 1;
    const B: u64 = 2;
    const C: u64 = 4;
    const D: u64 = 8;

    #[test]
    fn symmetry_and_decomposition() {
        let cl = Closure::from_triples([(A, B | C, 0)]);
        assert!(cl.contains((B | C, A, 0)));
        assert!(cl.contains((A, B, 0)));
        assert!(cl.contains((C, A, 0)));
        assert!(cl.contains((A, B, C)));
        assert!(!cl.contains((A, B, D)));
    }

    #[test]
    fn contraction() {
        let cl = Closure::from_triples([(A, B, C), (A, D, C | B)]);
        assert!(cl.contains((A, B | D, C)));
        assert!(cl.contains((A, D, C)));
    }

    #[test]
    fn contraction_other_order() {
        let cl = Closure::from_triples([(A, D, C | B), (A, B, C)]);
        assert!(cl.contains((A, B | D, C)));
    }

    #[test]
    fn no_intersection_axiom() {
        let cl = Closure::from_triples([(A, B, C), (A, C, B)]);
        assert!(!cl.contains((A, B | C, 0)));
    }
}
