//! Boolean (0/1) matrices over bitset rows.
//!
//! Used for transition-support questions: reachability, recurrent classes
//! and primitivity. Working on the pattern avoids the underflow that plagues
//! floating-point matrix powers.

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoolMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BoolMatrix {
    pub fn zeros(n: usize) -> Self {
        let words = n.div_ceil(WORD).max(1);
        BoolMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i);
        }
        m
    }

    /// Support pattern of a real matrix given as rows: `P(i,j) > 0`.
    pub fn support<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &p) in row.as_ref().iter().enumerate() {
                if p > 0.0 {
                    m.set(i, j);
                }
            }
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if f(i, j) {
                    m.set(i, j);
                }
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / WORD] >> (j % WORD) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / WORD] |= 1 << (j % WORD);
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Boolean product `self * rhs`.
    pub fn mul(&self, rhs: &BoolMatrix) -> BoolMatrix {
        assert_eq!(self.n, rhs.n);
        let mut out = BoolMatrix::zeros(self.n);
        for i in 0..self.n {
            let dst = i * self.words;
            for j in 0..self.n {
                if self.get(i, j) {
                    for (w, &b) in rhs.row(j).iter().enumerate() {
                        out.bits[dst + w] |= b;
                    }
                }
            }
        }
        out
    }

    pub fn or_assign(&mut self, rhs: &BoolMatrix) {
        for (a, b) in self.bits.iter_mut().zip(&rhs.bits) {
            *a |= b;
        }
    }

    pub fn all_true(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j)))
    }

    pub fn row_is_empty(&self, i: usize) -> bool {
        self.row(i).iter().all(|&w| w == 0)
    }

    /// Reflexive-transitive closure (`i` reaches `j` in zero or more steps).
    pub fn reachability(&self) -> BoolMatrix {
        let mut reach = BoolMatrix::identity(self.n);
        reach.or_assign(self);
        loop {
            let next = reach.mul(&reach);
            if next == reach {
                return reach;
            }
            reach = next;
        }
    }

    pub fn is_irreducible(&self) -> bool {
        self.reachability().all_true()
    }

    /// Closed communicating classes, i.e. the recurrent classes of any chain
    /// with this support.
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let reach = self.reachability();
        let mut assigned = vec![false; self.n];
        let mut classes = Vec::new();
        for i in 0..self.n {
            if assigned[i] {
                continue;
            }
            let class: Vec<usize> = (0..self.n)
                .filter(|&j| reach.get(i, j) && reach.get(j, i))
                .collect();
            for &j in &class {
                assigned[j] = true;
            }
            // closed iff everything reachable from i is back in the class
            let closed = (0..self.n).all(|j| !reach.get(i, j) || reach.get(j, i));
            if closed {
                classes.push(class);
            }
        }
        classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_closure() {
        // 0 -> 1 -> 2, 2 -> 2
        let a = BoolMatrix::from_fn(3, |i, j| (i + 1 == j) || (i == 2 && j == 2));
        let a2 = a.mul(&a);
        assert!(a2.get(0, 2));
        assert!(!a2.get(0, 1));
        let r = a.reachability();
        assert!(r.get(0, 2) && r.get(0, 0) && !r.get(2, 0));
        assert!(!a.is_irreducible());
        assert_eq!(a.recurrent_classes(), vec![vec![2]]);
    }

    #[test]
    fn wide_matrices_cross_word_boundaries() {
        let n = 130;
        let cycle = BoolMatrix::from_fn(n, |i, j| j == (i + 1) % n);
        assert!(cycle.is_irreducible());
        assert_eq!(cycle.recurrent_classes().len(), 1);
        let id = BoolMatrix::identity(n);
        assert_eq!(id.recurrent_classes().len(), n);
    }
}
