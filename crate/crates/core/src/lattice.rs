//! Finite Heisenberg-quotient lattice.
//!
//! The model manifold is the compact quotient of the real Heisenberg group by
//! its integer lattice, in polarized coordinates where the group law reads
//! `(x, y, t) * (x', y', t') = (x + x', y + y', t + t' + x y')`. The
//! discretization samples the refined subgroup `{(i/N, j/N, k/N^2)}` and
//! quotients by the integer subgroup acting on the left. In the integer
//! coordinates `(i, j, k)` used throughout this module the group law is
//! `(i, j, k) * (i', j', k') = (i + i', j + j', k + k' + i j')` and the
//! integer subgroup consists of the triples `(aN, bN, cN^2)`.
//!
//! Nodes carry the uniform volume weight `1/N^4`; the stencil joins each node
//! to its right translates by the four horizontal generators. Right
//! multiplication commutes with the left quotient, so the stencil is
//! well-defined on cosets and its edge relation is symmetric.

use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Scalar;

/// Grid resolution descriptor. Spacing is `1/N` in the two horizontal
/// directions and `1/N^2` along the center direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    n: u32,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice resolution must be at least 2, got {0}")]
    ResolutionTooSmall(u32),
}

impl LatticeSpec {
    pub fn new(n: u32) -> Result<Self, LatticeError> {
        if n < 2 {
            return Err(LatticeError::ResolutionTooSmall(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn resolution(&self) -> u32 {
        self.n
    }

    /// Total number of cosets, `N^4`.
    #[inline]
    pub fn node_count(&self) -> usize {
        let n = self.n as usize;
        n * n * n * n
    }
}

/// Canonical left-coset representative: `i, j` in `[0, N)`, `k` in `[0, N^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    pub i: i64,
    pub j: i64,
    pub k: i64,
}

impl LatticePoint {
    #[inline]
    pub fn as_triple(&self) -> [i64; 3] {
        [self.i, self.j, self.k]
    }
}

/// Group product in integer coordinates.
#[inline]
pub fn heisenberg_mul(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]]
}

/// Group inverse in integer coordinates.
#[inline]
pub fn heisenberg_inv(a: [i64; 3]) -> [i64; 3] {
    [-a[0], -a[1], -a[2] + a[0] * a[1]]
}

/// Reduces an arbitrary integer triple to its canonical left-coset
/// representative.
///
/// Reduction order: first `i` (with `a = -floor(i/N)`, `i += aN`,
/// `k += a*j*N`), then `j` mod `N` (`k` unchanged), then `k` mod `N^2`.
pub fn canonicalize(i: i64, j: i64, k: i64, n: u32) -> LatticePoint {
    let n = n as i64;
    let a = -i.div_euclid(n);
    let i = i + a * n;
    let k = k + a * j * n;
    let j = j.rem_euclid(n);
    let k = k.rem_euclid(n * n);
    LatticePoint { i, j, k }
}

/// The four stencil generators: right multiplication by `X`, `X^-1`, `Y`,
/// `Y^-1` where `X = (1,0,0)` and `Y = (0,1,0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    XPlus,
    XMinus,
    YPlus,
    YMinus,
}

impl Generator {
    pub const ALL: [Generator; 4] = [
        Generator::XPlus,
        Generator::XMinus,
        Generator::YPlus,
        Generator::YMinus,
    ];

    #[inline]
    pub fn element(&self) -> [i64; 3] {
        match self {
            Generator::XPlus => [1, 0, 0],
            Generator::XMinus => [-1, 0, 0],
            Generator::YPlus => [0, 1, 0],
            Generator::YMinus => [0, -1, 0],
        }
    }

    #[inline]
    pub fn inverse(&self) -> Generator {
        match self {
            Generator::XPlus => Generator::XMinus,
            Generator::XMinus => Generator::XPlus,
            Generator::YPlus => Generator::YMinus,
            Generator::YMinus => Generator::YPlus,
        }
    }
}

/// The quotient lattice: canonical indexing plus the precomputed 4-neighbor
/// stencil. Immutable after construction.
#[derive(Debug)]
pub struct Lattice {
    spec: LatticeSpec,
    /// Neighbor node ids in generator order `[X+, X-, Y+, Y-]`.
    neighbors: Vec<[u32; 4]>,
}

impl Lattice {
    pub fn new(n: u32) -> Result<Arc<Self>, LatticeError> {
        let spec = LatticeSpec::new(n)?;
        let count = spec.node_count();
        let mut neighbors = Vec::with_capacity(count);
        for id in 0..count {
            let p = point_of_index(id, n);
            let mut row = [0u32; 4];
            for (slot, gen) in Generator::ALL.iter().enumerate() {
                let q = canonical_mul(p, gen.element(), n);
                row[slot] = index_of_point(q, n) as u32;
            }
            neighbors.push(row);
        }
        Ok(Arc::new(Self { spec, neighbors }))
    }

    #[inline]
    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    #[inline]
    pub fn resolution(&self) -> u32 {
        self.spec.n
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.spec.node_count()
    }

    /// Uniform node volume `1/N^4`; the total volume is exactly 1.
    #[inline]
    pub fn node_volume<T: Scalar>(&self) -> T {
        T::one() / T::of_usize(self.node_count())
    }

    /// Horizontal mesh spacing `h = 1/N`.
    #[inline]
    pub fn spacing<T: Scalar>(&self) -> T {
        T::one() / T::of_usize(self.spec.n as usize)
    }

    #[inline]
    pub fn index_of(&self, p: LatticePoint) -> usize {
        index_of_point(p, self.spec.n)
    }

    #[inline]
    pub fn point_of(&self, id: usize) -> LatticePoint {
        point_of_index(id, self.spec.n)
    }

    #[inline]
    pub fn canonicalize(&self, i: i64, j: i64, k: i64) -> LatticePoint {
        canonicalize(i, j, k, self.spec.n)
    }

    /// The canonical nodes reached by right multiplication with the four
    /// generators, in the order `[X+, X-, Y+, Y-]`.
    pub fn neighbors(&self, p: LatticePoint) -> [LatticePoint; 4] {
        let row = self.neighbors[self.index_of(p)];
        row.map(|id| self.point_of(id as usize))
    }

    #[inline]
    pub fn neighbor_ids(&self, id: usize) -> [u32; 4] {
        self.neighbors[id]
    }

    #[inline]
    pub fn neighbor_id(&self, id: usize, gen: Generator) -> u32 {
        let slot = match gen {
            Generator::XPlus => 0,
            Generator::XMinus => 1,
            Generator::YPlus => 2,
            Generator::YMinus => 3,
        };
        self.neighbors[id][slot]
    }

    /// Right translation of a canonical point by an arbitrary group element.
    #[inline]
    pub fn translate(&self, p: LatticePoint, g: [i64; 3]) -> LatticePoint {
        canonical_mul(p, g, self.spec.n)
    }

    /// Node coordinates `(x, y, t) = (i/N, j/N, k/N^2)`.
    pub fn coordinates<T: Scalar>(&self, p: LatticePoint) -> (T, T, T) {
        let n = T::of_usize(self.spec.n as usize);
        let x = T::of_f64(p.i as f64) / n;
        let y = T::of_f64(p.j as f64) / n;
        let t = T::of_f64(p.k as f64) / (n * n);
        (x, y, t)
    }

    /// Breadth-first count of nodes reachable from the identity coset along
    /// the stencil; the Cayley graph is connected iff this equals
    /// `node_count`.
    pub fn reachable_from_origin(&self) -> usize {
        let count = self.node_count();
        let mut seen = vec![false; count];
        let mut queue = std::collections::VecDeque::new();
        seen[0] = true;
        queue.push_back(0usize);
        let mut visited = 1usize;
        while let Some(id) = queue.pop_front() {
            for nb in self.neighbors[id] {
                let nb = nb as usize;
                if !seen[nb] {
                    seen[nb] = true;
                    visited += 1;
                    queue.push_back(nb);
                }
            }
        }
        visited
    }
}

#[inline]
fn canonical_mul(p: LatticePoint, g: [i64; 3], n: u32) -> LatticePoint {
    let prod = heisenberg_mul(p.as_triple(), g);
    canonicalize(prod[0], prod[1], prod[2], n)
}

#[inline]
fn index_of_point(p: LatticePoint, n: u32) -> usize {
    let n = n as usize;
    ((p.i as usize) * n + p.j as usize) * n * n + p.k as usize
}

#[inline]
fn point_of_index(id: usize, n: u32) -> LatticePoint {
    let n = n as usize;
    let n2 = n * n;
    let k = id % n2;
    let rest = id / n2;
    let j = rest % n;
    let i = rest / n;
    LatticePoint {
        i: i as i64,
        j: j as i64,
        k: k as i64,
    }
}
