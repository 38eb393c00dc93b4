//! Torus geometry `Z_L^d` with a block decomposition into `n^d` cubes of
//! side `W` (so `L = nW`), periodic ℓ¹ distances, canonical coordinate
//! windows, linear index encodings, and Fourier grids on the block torus.
//!
//! Sites carry canonical representatives in `⟦−(L−1)/2, (L−1)/2⟧` when `L`
//! is odd and in `⟦−L/2, L/2−1⟧` when `L` is even. The central `W`-cube is
//! block `0`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Maximum supported dimension. Desk-scale studies use d ≤ 3; the extra
/// slot keeps `Pt` copyable without heap traffic in hot loops.
pub const MAX_DIM: usize = 4;

/// A point of a periodic integer lattice (site or block coordinates).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Pt {
    c: [i64; MAX_DIM],
    d: usize,
}

impl Pt {
    pub fn new(coords: &[i64]) -> Self {
        assert!(coords.len() <= MAX_DIM, "dimension > {MAX_DIM}");
        let mut c = [0i64; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Pt { c, d: coords.len() }
    }

    pub fn zero(d: usize) -> Self {
        Pt { c: [0; MAX_DIM], d }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[i64] {
        &self.c[..self.d]
    }

    pub fn coord(&self, i: usize) -> i64 {
        self.c[i]
    }
}

/// Canonical representative of `v` on the torus of side `l`:
/// `⟦−(l−1)/2, (l−1)/2⟧` for odd `l`, `⟦−l/2, l/2−1⟧` for even `l`.
pub fn periodic_rep_scalar(v: i64, l: i64) -> i64 {
    debug_assert!(l >= 1);
    let hi = (l - 1) / 2;
    let r = v.rem_euclid(l);
    if r > hi {
        r - l
    } else {
        r
    }
}

/// Componentwise canonical representative on the torus of side `l`.
pub fn periodic_rep(v: Pt, l: i64) -> Pt {
    let mut out = v;
    for i in 0..v.d {
        out.c[i] = periodic_rep_scalar(v.c[i], l);
    }
    out
}

/// The torus `Z_L^d` divided into `n^d` cubic blocks of side `W`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TorusLattice {
    d: usize,
    w: i64,
    n: i64,
}

impl TorusLattice {
    pub fn new(d: usize, w: i64, n: i64) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "dimension d = {d} outside 1..={MAX_DIM}"
            )));
        }
        if w < 1 || n < 1 {
            return Err(Error::InvalidParameter(format!(
                "block side W = {w} and blocks per side n = {n} must be ≥ 1"
            )));
        }
        let lat = TorusLattice { d, w, n };
        if lat.n_sites_checked().is_none() {
            return Err(Error::InvalidParameter(format!(
                "lattice volume ({}^{d}) overflows usize",
                w * n
            )));
        }
        Ok(lat)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Block side W.
    pub fn block_side(&self) -> i64 {
        self.w
    }

    /// Blocks per side n.
    pub fn blocks_per_side(&self) -> i64 {
        self.n
    }

    /// Torus side L = nW.
    pub fn side(&self) -> i64 {
        self.n * self.w
    }

    fn n_sites_checked(&self) -> Option<usize> {
        let l = self.side() as usize;
        let mut v: usize = 1;
        for _ in 0..self.d {
            v = v.checked_mul(l)?;
        }
        Some(v)
    }

    /// Total number of sites N = L^d.
    pub fn n_sites(&self) -> usize {
        self.n_sites_checked().expect("volume overflow")
    }

    /// Number of blocks n^d.
    pub fn n_blocks(&self) -> usize {
        (self.n as usize).pow(self.d as u32)
    }

    /// Sites per block W^d.
    pub fn block_volume(&self) -> usize {
        (self.w as usize).pow(self.d as u32)
    }

    /// Canonical representative of a site displacement.
    pub fn rep(&self, v: Pt) -> Pt {
        periodic_rep(v, self.side())
    }

    /// Canonical representative of a block displacement.
    pub fn block_rep(&self, v: Pt) -> Pt {
        periodic_rep(v, self.n)
    }

    /// Periodic ℓ¹ distance between sites.
    pub fn dist_l1(&self, x: Pt, y: Pt) -> i64 {
        debug_assert_eq!(x.d, self.d);
        debug_assert_eq!(y.d, self.d);
        let l = self.side();
        (0..self.d)
            .map(|i| periodic_rep_scalar(x.c[i] - y.c[i], l).abs())
            .sum()
    }

    /// Regularized distance `⟨x−y⟩ = ‖x−y‖_L + W`.
    pub fn bracket(&self, x: Pt, y: Pt) -> i64 {
        self.dist_l1(x, y) + self.w
    }

    /// Periodic ℓ¹ distance on the block torus.
    pub fn block_dist(&self, a: Pt, b: Pt) -> i64 {
        debug_assert_eq!(a.d, self.d);
        (0..self.d)
            .map(|i| periodic_rep_scalar(a.c[i] - b.c[i], self.n).abs())
            .sum()
    }

    /// Regularized block distance `⟨[x]−[y]⟩ = ‖[x]−[y]‖_n + 1`.
    pub fn block_bracket(&self, a: Pt, b: Pt) -> i64 {
        self.block_dist(a, b) + 1
    }

    /// The block containing site `x`, as canonical block coordinates.
    /// The central cube `⟦−⌊W/2⌋, …⟧^d` maps to block 0.
    pub fn block_of(&self, x: Pt) -> Pt {
        debug_assert_eq!(x.d, self.d);
        let mut b = Pt::zero(self.d);
        let half = self.w / 2;
        for i in 0..self.d {
            let c = periodic_rep_scalar(x.c[i], self.side());
            b.c[i] = periodic_rep_scalar((c + half).div_euclid(self.w), self.n);
        }
        b
    }

    fn encode_with(v: Pt, l: i64, d: usize) -> usize {
        let hi = (l - 1) / 2;
        let lo = hi - (l - 1);
        let mut idx: usize = 0;
        for i in 0..d {
            let u = periodic_rep_scalar(v.c[i], l) - lo;
            debug_assert!((0..l).contains(&u));
            idx = idx * l as usize + u as usize;
        }
        idx
    }

    fn decode_with(mut idx: usize, l: i64, d: usize) -> Pt {
        let hi = (l - 1) / 2;
        let lo = hi - (l - 1);
        let mut p = Pt::zero(d);
        for i in (0..d).rev() {
            p.c[i] = (idx % l as usize) as i64 + lo;
            idx /= l as usize;
        }
        p
    }

    /// Linear site index in `[0, N)`: row-major over coordinates shifted to
    /// `[0, L)`, last coordinate fastest.
    pub fn encode(&self, x: Pt) -> usize {
        Self::encode_with(x, self.side(), self.d)
    }

    pub fn decode(&self, idx: usize) -> Pt {
        Self::decode_with(idx, self.side(), self.d)
    }

    /// Linear block index in `[0, n^d)`.
    pub fn block_encode(&self, b: Pt) -> usize {
        Self::encode_with(b, self.n, self.d)
    }

    pub fn block_decode(&self, idx: usize) -> Pt {
        Self::decode_with(idx, self.n, self.d)
    }

    /// Block index of each site, indexed by linear site index.
    pub fn site_block_table(&self) -> Vec<usize> {
        (0..self.n_sites())
            .map(|i| self.block_encode(self.block_of(self.decode(i))))
            .collect()
    }

    /// Within-block offset `{x}`: the representative of `x` in the central
    /// block, so that `x = W·[x] + {x}` up to the torus identification.
    pub fn block_offset(&self, x: Pt) -> Pt {
        debug_assert_eq!(x.d, self.d);
        let half = self.w / 2;
        let mut o = Pt::zero(self.d);
        for i in 0..self.d {
            let c = periodic_rep_scalar(x.c[i], self.side());
            let b = (c + half).div_euclid(self.w);
            o.c[i] = c - b * self.w;
        }
        o
    }

    /// Linear index of a within-block offset in `[0, W^d)`, row-major over
    /// the central cube.
    pub fn offset_encode(&self, o: Pt) -> usize {
        Self::encode_with(o, self.w, self.d)
    }

    /// Linear block index of the displacement `[a] − [b]`.
    pub fn block_displacement(&self, a: usize, b: usize) -> usize {
        let pa = self.block_decode(a);
        let pb = self.block_decode(b);
        let mut v = Pt::zero(self.d);
        for i in 0..self.d {
            v.c[i] = pa.c[i] - pb.c[i];
        }
        self.block_encode(self.block_rep(v))
    }

    /// ℓ¹ norm of the canonical representative of block index `b`.
    pub fn block_index_norm(&self, b: usize) -> i64 {
        self.block_decode(b)
            .coords()
            .iter()
            .map(|&c| c.abs())
            .sum()
    }

    /// True if blocks `a`, `b` are nearest neighbors on the block torus.
    pub fn blocks_adjacent(&self, a: usize, b: usize) -> bool {
        let pa = self.block_decode(a);
        let pb = self.block_decode(b);
        self.block_dist(pa, pb) == 1
    }
}

/// Momenta `p ∈ (2π/n · Z_n)^d` with canonical integer representatives.
/// Contains `p = 0` exactly once; `exp(i p·x)` over the grid is an
/// orthogonal family under the counting measure.
pub fn fourier_grid(n: i64, d: usize) -> Vec<Vec<f64>> {
    assert!(n >= 1 && d >= 1);
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let count = (n as usize).pow(d as u32);
    (0..count)
        .map(|idx| {
            let k = TorusLattice::decode_with(idx, n, d);
            k.coords().iter().map(|&ki| step * ki as f64).collect()
        })
        .collect()
}
