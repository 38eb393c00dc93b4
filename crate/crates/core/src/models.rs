//! The random block ensembles: block Anderson, Anderson orbital, Wegner
//! orbital, and GUE (the single-block special case).
//!
//! A Hamiltonian sample is `H = λΨ + V`, where `V` is block diagonal with
//! i.i.d. GUE blocks (entry variance `W^{-d}`) and `Ψ` is the
//! model-dependent interaction. Sampling is pure in
//! `(spec, sample_index)`: disjoint indices can be drawn concurrently and
//! reproduce bitwise across worker counts.

use crate::lattice::{Pt, TorusLattice};
use crate::rng::{realized_seed, stream_rng, StreamTag};
use crate::{CMat, Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ModelKind {
    BlockAnderson,
    AndersonOrbital,
    WegnerOrbital,
    /// One `N×N` GUE block; identical in distribution to the Wegner
    /// orbital model with `n = 1`.
    Gue,
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::BlockAnderson => "ba",
            ModelKind::AndersonOrbital => "ao",
            ModelKind::WegnerOrbital => "wo",
            ModelKind::Gue => "gue",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ba" | "block-anderson" | "blockanderson" => Ok(ModelKind::BlockAnderson),
            "ao" | "anderson-orbital" | "andersonorbital" => Ok(ModelKind::AndersonOrbital),
            "wo" | "wegner-orbital" | "wegnerorbital" => Ok(ModelKind::WegnerOrbital),
            "gue" => Ok(ModelKind::Gue),
            other => Err(Error::InvalidParameter(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Model kind, geometry, coupling, and base seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub lat: TorusLattice,
    pub lambda: f64,
    /// When set, `λ = W^{-ξ}` was requested.
    pub xi: Option<f64>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, lat: TorusLattice, lambda: f64, seed: u64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coupling λ = {lambda} must be a finite nonnegative real"
            )));
        }
        Ok(ModelSpec { kind, lat, lambda, xi: None, seed })
    }

    /// Specify the coupling through the exponent: `λ = W^{-ξ}`.
    pub fn with_xi(kind: ModelKind, lat: TorusLattice, xi: f64, seed: u64) -> Result<Self> {
        if !xi.is_finite() || xi < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "exponent ξ = {xi} must be a finite nonnegative real"
            )));
        }
        let lambda = (lat.block_side() as f64).powf(-xi);
        Ok(ModelSpec { kind, lat, lambda, xi: Some(xi), seed })
    }

    /// `1 + 2dλ²` for the Wegner orbital model, `1` otherwise: the row sum
    /// of the variance matrix `S` (and normalization of the free
    /// semicircle rescaling).
    pub fn variance_row_sum(&self) -> f64 {
        match self.kind {
            ModelKind::WegnerOrbital => {
                1.0 + 2.0 * self.lat.dim() as f64 * self.lambda * self.lambda
            }
            _ => 1.0,
        }
    }
}

/// One realized Hamiltonian `H = λΨ + V`.
#[derive(Clone, Debug)]
pub struct HamiltonianSample {
    pub h: CMat,
    pub spec: ModelSpec,
    pub sample_index: u64,
    /// Realized 64-bit seed of the potential stream.
    pub realized_seed: u64,
}

/// Closed-form scale parameters of a model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScaleParams {
    /// Neighbor-block interaction strength `Λ_Ψ`.
    pub lambda_psi: f64,
    /// Inverse diffusion strength `β(λ) = W^d/(λ² Λ_Ψ²)`.
    pub beta: f64,
    /// `𝔥_λ = β(λ)/W^d`, the square of the local-law fluctuation scale.
    pub h_lambda: f64,
    /// Smallest resolvable broadening `η_* = β(λ)^{-1} (W/L)^{d-5}`.
    pub eta_star: f64,
    /// Thouless time `t_Th = β(λ) L²/W²`.
    pub t_thouless: f64,
    /// Delocalization condition `λ Λ_Ψ ≥ W^{d/4}` (at 𝔡 = 0).
    pub deloc_condition: bool,
}

/// `Λ_Ψ`: root-mean-square Hilbert-Schmidt norm of one neighbor block of Ψ.
pub fn interaction_strength(kind: ModelKind, lat: &TorusLattice) -> f64 {
    let w = lat.block_side() as f64;
    let d = lat.dim() as f64;
    match kind {
        ModelKind::BlockAnderson => w.powf((d - 1.0) / 2.0),
        ModelKind::AndersonOrbital | ModelKind::WegnerOrbital | ModelKind::Gue => {
            w.powf(d / 2.0)
        }
    }
}

/// Evaluate the closed-form scale parameters. Errors when `λ = 0`, where
/// the β-dependent scales are undefined.
pub fn scale_params(spec: &ModelSpec) -> Result<ScaleParams> {
    if spec.lambda == 0.0 {
        return Err(Error::CouplingZero("β(λ) and derived scales"));
    }
    let lat = &spec.lat;
    let d = lat.dim() as f64;
    let w = lat.block_side() as f64;
    let l = lat.side() as f64;
    let lambda_psi = interaction_strength(spec.kind, lat);
    let beta = w.powf(d) / (spec.lambda * spec.lambda * lambda_psi * lambda_psi);
    let h_lambda = beta / w.powf(d);
    let eta_star = (w / l).powf(d - 5.0) / beta;
    let t_thouless = beta * l * l / (w * w);
    let deloc_condition = spec.lambda * lambda_psi >= w.powf(d / 4.0);
    Ok(ScaleParams { lambda_psi, beta, h_lambda, eta_star, t_thouless, deloc_condition })
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

/// Site indices of every block, the inner list indexed by the
/// within-block offset index, so position `i` refers to the same offset
/// `{x}` in every block.
fn block_site_lists(lat: &TorusLattice) -> Vec<Vec<usize>> {
    let mut lists = vec![vec![usize::MAX; lat.block_volume()]; lat.n_blocks()];
    for site in 0..lat.n_sites() {
        let p = lat.decode(site);
        let block = lat.block_encode(lat.block_of(p));
        let off = lat.offset_encode(lat.block_offset(p));
        lists[block][off] = site;
    }
    debug_assert!(lists.iter().all(|l| l.iter().all(|&s| s != usize::MAX)));
    lists
}

/// Sample the block potential `V`: independent GUE blocks with entry
/// variance `W^{-d}` (off-diagonal complex, diagonal real).
pub fn sample_potential(spec: &ModelSpec, sample_index: u64) -> CMat {
    let lat = &spec.lat;
    let n_sites = lat.n_sites();
    let var = 1.0 / lat.block_volume() as f64;
    let mut rng = stream_rng(spec.seed, sample_index, StreamTag::Potential);
    let mut v = CMat::zeros(n_sites, n_sites);
    for sites in block_site_lists(lat) {
        for (a, &x) in sites.iter().enumerate() {
            let diag_sd = var.sqrt();
            let g: f64 = rng.sample(StandardNormal);
            v[(x, x)] = Complex64::new(diag_sd * g, 0.0);
            for &y in sites.iter().skip(a + 1) {
                let e = complex_gaussian(&mut rng, var);
                v[(x, y)] = e;
                v[(y, x)] = e.conj();
            }
        }
    }
    v
}

/// Unordered adjacent block pairs `(a, b)` with `a < b`, sorted.
fn adjacent_block_pairs(lat: &TorusLattice) -> Vec<(usize, usize)> {
    let nb = lat.n_blocks();
    let mut pairs = Vec::new();
    for a in 0..nb {
        for b in (a + 1)..nb {
            if lat.blocks_adjacent(a, b) {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Build the interaction `Ψ`. Deterministic for BA/AO; for WO one Ginibre
/// block per unordered neighbor pair, Hermitized. GUE has no interaction.
pub fn build_interaction(spec: &ModelSpec, sample_index: u64) -> CMat {
    let lat = &spec.lat;
    let n_sites = lat.n_sites();
    let mut psi = CMat::zeros(n_sites, n_sites);
    match spec.kind {
        ModelKind::Gue => {}
        ModelKind::BlockAnderson => {
            let one = Complex64::new(1.0, 0.0);
            for x in 0..n_sites {
                let px = lat.decode(x);
                for dim in 0..lat.dim() {
                    let mut c = [0i64; crate::lattice::MAX_DIM];
                    c[..lat.dim()].copy_from_slice(px.coords());
                    c[dim] += 1;
                    let y = lat.encode(Pt::new(&c[..lat.dim()]));
                    if y != x {
                        psi[(x, y)] = one;
                        psi[(y, x)] = one;
                    }
                }
            }
        }
        ModelKind::AndersonOrbital => {
            // block adjacency ⊗ I_W: sites couple iff their blocks are
            // neighbors and their within-block offsets coincide
            let one = Complex64::new(1.0, 0.0);
            let lists = block_site_lists(lat);
            for (a, b) in adjacent_block_pairs(lat) {
                for (&x, &y) in lists[a].iter().zip(lists[b].iter()) {
                    debug_assert_eq!(lat.block_offset(lat.decode(x)), lat.block_offset(lat.decode(y)));
                    psi[(x, y)] = one;
                    psi[(y, x)] = one;
                }
            }
        }
        ModelKind::WegnerOrbital => {
            let var = 1.0 / lat.block_volume() as f64;
            let mut rng = stream_rng(spec.seed, sample_index, StreamTag::Interaction);
            let lists = block_site_lists(lat);
            for (a, b) in adjacent_block_pairs(lat) {
                for &x in &lists[a] {
                    for &y in &lists[b] {
                        let e = complex_gaussian(&mut rng, var);
                        psi[(x, y)] = e;
                        psi[(y, x)] = e.conj();
                    }
                }
            }
        }
    }
    psi
}

/// Assemble `H = λΨ + V`, reproducible from `(spec.seed, sample_index)`.
pub fn assemble(spec: &ModelSpec, sample_index: u64) -> HamiltonianSample {
    let v = sample_potential(spec, sample_index);
    let mut h = v;
    if spec.lambda != 0.0 && spec.kind != ModelKind::Gue {
        let psi = build_interaction(spec, sample_index);
        let lam = Complex64::new(spec.lambda, 0.0);
        h += psi * lam;
    }
    HamiltonianSample {
        h,
        spec: *spec,
        sample_index,
        realized_seed: realized_seed(spec.seed, sample_index, StreamTag::Potential),
    }
}

const DUMP_MAGIC: [u8; 4] = *b"RBSO";

/// Write a sample as a 32-byte header followed by row-major little-endian
/// complex entries.
///
/// Header layout: magic `RBSO`, version (1), kind tag, dimension, bytes per
/// entry (8 or 16), `W` (u32), `n` (u32), seed (u64), sample index (u64).
pub fn write_sample_dump<W: Write>(
    out: &mut W,
    sample: &HamiltonianSample,
    double_precision: bool,
) -> Result<()> {
    let lat = &sample.spec.lat;
    let kind_tag = match sample.spec.kind {
        ModelKind::BlockAnderson => 0u8,
        ModelKind::AndersonOrbital => 1,
        ModelKind::WegnerOrbital => 2,
        ModelKind::Gue => 3,
    };
    out.write_all(&DUMP_MAGIC)?;
    out.write_all(&[1u8, kind_tag, lat.dim() as u8, if double_precision { 16 } else { 8 }])?;
    out.write_all(&(lat.block_side() as u32).to_le_bytes())?;
    out.write_all(&(lat.blocks_per_side() as u32).to_le_bytes())?;
    out.write_all(&sample.spec.seed.to_le_bytes())?;
    out.write_all(&sample.sample_index.to_le_bytes())?;
    let n = lat.n_sites();
    for r in 0..n {
        for c in 0..n {
            let e = sample.h[(r, c)];
            if double_precision {
                out.write_all(&e.re.to_le_bytes())?;
                out.write_all(&e.im.to_le_bytes())?;
            } else {
                out.write_all(&(e.re as f32).to_le_bytes())?;
                out.write_all(&(e.im as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(d: usize, w: i64, n: i64) -> TorusLattice {
        TorusLattice::new(d, w, n).unwrap()
    }

    fn max_abs(m: &CMat) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn single_site_potential_is_standard_normal_scalar() {
        let spec = ModelSpec::new(ModelKind::Gue, lat(1, 1, 1), 0.0, 11).unwrap();
        let v = sample_potential(&spec, 0);
        assert_eq!(v.nrows(), 1);
        assert_eq!(v[(0, 0)].im, 0.0);
    }

    #[test]
    fn potential_is_hermitian_and_block_diagonal() {
        let spec = ModelSpec::new(ModelKind::BlockAnderson, lat(1, 3, 3), 0.1, 5).unwrap();
        let v = sample_potential(&spec, 2);
        assert_eq!(max_abs(&(v.clone() - v.adjoint())), 0.0);
        let table = spec.lat.site_block_table();
        for x in 0..9 {
            for y in 0..9 {
                if table[x] != table[y] {
                    assert_eq!(v[(x, y)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn ba_interaction_is_circulant_adjacency() {
        let spec = ModelSpec::new(ModelKind::BlockAnderson, lat(1, 1, 5), 1.0, 0).unwrap();
        let psi = build_interaction(&spec, 0);
        for x in 0..5usize {
            for y in 0..5usize {
                let px = spec.lat.decode(x);
                let py = spec.lat.decode(y);
                let expect = if spec.lat.dist_l1(px, py) == 1 { 1.0 } else { 0.0 };
                assert_eq!(psi[(x, y)].re, expect);
                assert_eq!(psi[(x, y)].im, 0.0);
            }
        }
    }

    #[test]
    fn ao_interaction_is_block_adjacency_tensor_identity() {
        let spec = ModelSpec::new(ModelKind::AndersonOrbital, lat(1, 2, 3), 1.0, 0).unwrap();
        let psi = build_interaction(&spec, 0);
        assert_eq!(psi.nrows(), 6);
        let table = spec.lat.site_block_table();
        for x in 0..6usize {
            for y in 0..6usize {
                let adjacent = spec.lat.blocks_adjacent(table[x], table[y]);
                let same_offset = spec.lat.block_offset(spec.lat.decode(x))
                    == spec.lat.block_offset(spec.lat.decode(y));
                let expect = if adjacent && same_offset { 1.0 } else { 0.0 };
                assert_eq!(psi[(x, y)], Complex64::new(expect, 0.0), "entry ({x},{y})");
            }
        }
    }

    #[test]
    fn wo_row_variance_matches_laplacian_weight() {
        // Σ_y E|Ψ_xy|² = 2d; Monte Carlo over realizations
        let spec = ModelSpec::new(ModelKind::WegnerOrbital, lat(1, 2, 5), 1.0, 77).unwrap();
        let n_samples = 4000;
        let mut acc = 0.0;
        for i in 0..n_samples {
            let psi = build_interaction(&spec, i);
            acc += (0..10).map(|y| psi[(0, y)].norm_sqr()).sum::<f64>();
        }
        let mean = acc / n_samples as f64;
        // variance of one |Ψ_xy|² is O(W^{-2d}); stderr of the row sum is
        // about sqrt(2d) * W^{-d/2} / sqrt(n) ≈ 0.016 here
        assert!((mean - 2.0).abs() < 0.1, "row variance {mean}");
    }

    #[test]
    fn potential_entry_variance_empirical() {
        let spec = ModelSpec::new(ModelKind::Gue, lat(1, 2, 1), 0.0, 3).unwrap();
        let n = 100_000u64;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let v = sample_potential(&spec, i);
            let a = v[(0, 1)].norm_sqr();
            s += a;
            s2 += a * a;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let stderr = (var / n as f64).sqrt();
        // E|V_xy|² = W^{-d} = 1/2 within 5 stderr
        assert!((mean - 0.5).abs() < 5.0 * stderr, "mean {mean} stderr {stderr}");
    }

    #[test]
    fn assembly_is_deterministic_and_hermitian() {
        let spec = ModelSpec::new(ModelKind::WegnerOrbital, lat(1, 2, 3), 0.4, 123).unwrap();
        let a = assemble(&spec, 9);
        let b = assemble(&spec, 9);
        assert_eq!(a.h, b.h);
        assert_eq!(max_abs(&(a.h.clone() - a.h.adjoint())), 0.0);
        let c = assemble(&spec, 10);
        assert_ne!(a.h, c.h);
    }

    #[test]
    fn gue_equals_wegner_orbital_with_one_block() {
        let wo = ModelSpec::new(ModelKind::WegnerOrbital, lat(1, 4, 1), 0.7, 42).unwrap();
        let gue = ModelSpec::new(ModelKind::Gue, lat(1, 4, 1), 0.7, 42).unwrap();
        assert_eq!(assemble(&wo, 0).h, assemble(&gue, 0).h);
    }

    #[test]
    fn lambda_zero_keeps_h_block_diagonal() {
        let spec = ModelSpec::new(ModelKind::WegnerOrbital, lat(1, 2, 3), 0.0, 8).unwrap();
        let s = assemble(&spec, 0);
        let table = spec.lat.site_block_table();
        for x in 0..6 {
            for y in 0..6 {
                if table[x] != table[y] {
                    assert_eq!(s.h[(x, y)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn scale_params_closed_forms() {
        // WO, d=1, W=10, λ=0.5: Λ_Ψ=√10, β=4, 𝔥=0.4, t_Th=4n²
        let spec = ModelSpec::new(ModelKind::WegnerOrbital, lat(1, 10, 3), 0.5, 0).unwrap();
        let p = scale_params(&spec).unwrap();
        assert!((p.lambda_psi - 10f64.sqrt()).abs() < 1e-12);
        assert!((p.beta - 4.0).abs() < 1e-12);
        assert!((p.h_lambda - 0.4).abs() < 1e-12);
        assert!((p.t_thouless - 4.0 * 9.0).abs() < 1e-9);

        // BA, d=3, W=4: Λ_Ψ = W^{(d-1)/2} = 4
        let ba = ModelSpec::new(ModelKind::BlockAnderson, lat(3, 4, 1), 0.3, 0).unwrap();
        assert!((scale_params(&ba).unwrap().lambda_psi - 4.0).abs() < 1e-12);

        let zero = ModelSpec::new(ModelKind::WegnerOrbital, lat(1, 4, 2), 0.0, 0).unwrap();
        assert!(scale_params(&zero).is_err());
    }

    #[test]
    fn xi_sets_lambda() {
        let spec = ModelSpec::with_xi(ModelKind::WegnerOrbital, lat(1, 4, 2), 0.5, 0).unwrap();
        assert!((spec.lambda - 0.5f64).abs() < 1e-15); // 4^{-1/2}
    }

    #[test]
    fn interaction_strength_empirical_wo() {
        // E ‖Ψ_{[x][y]}‖²_HS = W^d for one neighbor pair
        let spec = ModelSpec::new(ModelKind::WegnerOrbital, lat(1, 2, 3), 1.0, 19).unwrap();
        let lists = super::block_site_lists(&spec.lat);
        let mut acc = 0.0;
        let n_samples = 3000;
        for i in 0..n_samples {
            let psi = build_interaction(&spec, i);
            let mut hs = 0.0;
            for &x in &lists[0] {
                for &y in &lists[1] {
                    hs += psi[(x, y)].norm_sqr();
                }
            }
            acc += hs;
        }
        let mean = acc / n_samples as f64;
        let expect = interaction_strength(ModelKind::WegnerOrbital, &spec.lat).powi(2);
        assert!((mean - expect).abs() < 0.15, "HS² mean {mean} vs {expect}");
    }

    #[test]
    fn dump_header_is_32_bytes() {
        let spec = ModelSpec::new(ModelKind::Gue, lat(1, 2, 1), 0.0, 1).unwrap();
        let s = assemble(&spec, 0);
        let mut buf = Vec::new();
        write_sample_dump(&mut buf, &s, true).unwrap();
        assert_eq!(buf.len(), 32 + 16 * 4);
        assert_eq!(&buf[..4], b"RBSO");
    }
}
