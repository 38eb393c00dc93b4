//! Python bindings exposing the main types and operations: torus
//! geometry, model sampling, the deterministic kernels, Ward residuals,
//! and the renormalization checks. Complex scalars cross the boundary as
//! `(re, im)` tuples; matrices as row-major interleaved `[re, im, …]`.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rbso::greens::{resolvent, ward_check};
use rbso::lattice::{periodic_rep_scalar, Pt, TorusLattice};
use rbso::mfield::{KernelSet, SpectralPoint};
use rbso::models::{assemble, scale_params, ModelKind, ModelSpec};
use rbso::renorm::{
    delta_coeff, fourth_cumulant_sum, iota as iota_rs, loop_mc_compare, loop_sum_distinct,
    loop_sum_distinct_brute, texp_second_order_check, LoopStructure,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn c(t: (f64, f64)) -> Complex64 {
    Complex64::new(t.0, t.1)
}

fn tup(z: Complex64) -> (f64, f64) {
    (z.re, z.im)
}

/// Torus geometry `Z_L^d` with blocks of side `W`.
#[pyclass(name = "Lattice", skip_from_py_object)]
#[derive(Clone)]
struct PyLattice {
    inner: TorusLattice,
}

#[pymethods]
impl PyLattice {
    #[new]
    fn new(d: usize, w: i64, n: i64) -> PyResult<Self> {
        Ok(PyLattice { inner: TorusLattice::new(d, w, n).map_err(err)? })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn w(&self) -> i64 {
        self.inner.block_side()
    }

    #[getter]
    fn n(&self) -> i64 {
        self.inner.blocks_per_side()
    }

    #[getter]
    fn l(&self) -> i64 {
        self.inner.side()
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    #[getter]
    fn n_blocks(&self) -> usize {
        self.inner.n_blocks()
    }

    fn periodic_rep(&self, v: Vec<i64>) -> Vec<i64> {
        v.into_iter()
            .map(|c| periodic_rep_scalar(c, self.inner.side()))
            .collect()
    }

    fn dist(&self, x: Vec<i64>, y: Vec<i64>) -> i64 {
        self.inner.dist_l1(Pt::new(&x), Pt::new(&y))
    }

    fn bracket(&self, x: Vec<i64>, y: Vec<i64>) -> i64 {
        self.inner.bracket(Pt::new(&x), Pt::new(&y))
    }

    fn block_of(&self, x: Vec<i64>) -> Vec<i64> {
        self.inner.block_of(Pt::new(&x)).coords().to_vec()
    }

    fn encode(&self, x: Vec<i64>) -> usize {
        self.inner.encode(Pt::new(&x))
    }

    fn decode(&self, idx: usize) -> Vec<i64> {
        self.inner.decode(idx).coords().to_vec()
    }

    fn fourier_grid(&self) -> Vec<Vec<f64>> {
        rbso::lattice::fourier_grid(self.inner.blocks_per_side(), self.inner.dim())
    }
}

/// A model specification: kind (`ba`, `ao`, `wo`, `gue`), geometry,
/// coupling, and base seed.
#[pyclass(name = "Model", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    spec: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(kind: &str, d: usize, w: i64, n: i64, lam: f64, seed: u64) -> PyResult<Self> {
        let kind = ModelKind::parse(kind).map_err(err)?;
        let lat = TorusLattice::new(d, w, n).map_err(err)?;
        let spec = ModelSpec::new(kind, lat, lam, seed).map_err(err)?;
        Ok(PyModel { spec })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.spec.lat.n_sites()
    }

    /// Closed-form scale parameters as a dict.
    fn scale_params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let p = scale_params(&self.spec).map_err(err)?;
        let json = serde_json::to_string(&p).map_err(err)?;
        let loads = py.import("json")?.getattr("loads")?;
        loads.call1((json,))
    }

    /// One Hamiltonian realization as `(n, [re, im, re, im, …])`
    /// row-major.
    fn sample(&self, index: u64) -> (usize, Vec<f64>) {
        let h = assemble(&self.spec, index);
        let n = h.h.nrows();
        let mut flat = Vec::with_capacity(2 * n * n);
        for r in 0..n {
            for cidx in 0..n {
                let e = h.h[(r, cidx)];
                flat.push(e.re);
                flat.push(e.im);
            }
        }
        (n, flat)
    }

    /// Max relative Ward residual of one realization at `z = e + iη`.
    fn ward_residual(&self, index: u64, e: f64, eta: f64) -> PyResult<f64> {
        let z = SpectralPoint::new(e, eta).map_err(err)?;
        let h = assemble(&self.spec, index);
        let g = resolvent(&h, z).map_err(err)?;
        Ok(ward_check(&g.g, z))
    }

    /// Self-consistent `m(z)` as `(re, im, residual)`.
    fn solve_m(&self, e: f64, eta: f64) -> PyResult<(f64, f64, f64)> {
        let z = SpectralPoint::new(e, eta).map_err(err)?;
        let sol = rbso::mfield::solve_m(&self.spec, z).map_err(err)?;
        Ok((sol.m.re, sol.m.im, sol.residual))
    }

    /// Block kernel rows of `ϑ̊` from the direct projected inversion and
    /// from the Fourier symbol.
    fn theta_ring_rows(&self, e: f64, eta: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let z = SpectralPoint::new(e, eta).map_err(err)?;
        let ks = KernelSet::build(&self.spec, z).map_err(err)?;
        let four = ks.theta_ring_fourier_row().map_err(err)?;
        Ok((ks.theta_ring_row, four))
    }

    /// Circulant block row of `S⁺` as `(re, im)` pairs.
    fn splus_row(&self, e: f64, eta: f64) -> PyResult<Vec<(f64, f64)>> {
        let z = SpectralPoint::new(e, eta).map_err(err)?;
        let ks = KernelSet::build(&self.spec, z).map_err(err)?;
        Ok(ks.splus_row.iter().map(|&v| tup(v)).collect())
    }

    /// Fourth-cumulant row sum as `((re, im), ratio)`.
    fn fourth_cumulant_sum(&self, e: f64, eta: f64, kappa4: f64) -> PyResult<((f64, f64), f64)> {
        let z = SpectralPoint::new(e, eta).map_err(err)?;
        let out = fourth_cumulant_sum(&self.spec, z, kappa4).map_err(err)?;
        Ok((out.value, out.ratio))
    }

    /// Second-order expansion residual report as a JSON string.
    #[pyo3(signature = (e, eta, a, b1, b2, n_samples, workers = 0))]
    #[allow(clippy::too_many_arguments)]
    fn texp_check(
        &self,
        e: f64,
        eta: f64,
        a: usize,
        b1: usize,
        b2: usize,
        n_samples: u64,
        workers: usize,
    ) -> PyResult<String> {
        let z = SpectralPoint::new(e, eta).map_err(err)?;
        let rep = texp_second_order_check(&self.spec, z, (a, b1, b2), n_samples, workers)
            .map_err(err)?;
        serde_json::to_string(&rep).map_err(err)
    }

    /// Fractional-moment decay fit `(slope, slope_stderr)` at real `e`.
    #[pyo3(signature = (e, s, n_samples, workers = 0))]
    fn frac_moment_slope(
        &self,
        e: f64,
        s: f64,
        n_samples: u64,
        workers: usize,
    ) -> PyResult<(f64, f64)> {
        let rep = rbso::spectra::frac_moment_decay(&self.spec, e, s, n_samples, workers)
            .map_err(err)?;
        Ok((rep.slope, rep.slope_stderr))
    }
}

/// Semicircle Stieltjes transform `m_sc(e + iη)` as `(re, im)`.
#[pyfunction]
fn msc(e: f64, eta: f64) -> PyResult<(f64, f64)> {
    let z = SpectralPoint::new(e, eta).map_err(err)?;
    Ok(tup(rbso::mfield::msc(z).map_err(err)?))
}

/// `ι = m²/(1 − m²)`.
#[pyfunction]
fn iota(m: (f64, f64)) -> PyResult<(f64, f64)> {
    Ok(tup(iota_rs(c(m)).map_err(err)?))
}

/// Tabulated `Δ(Π)` for `pi0`, `pi1`, `pi2` at a given `m`.
#[pyfunction]
fn delta_pi(structure: &str, m: (f64, f64)) -> PyResult<(f64, f64)> {
    let st = match structure {
        "pi0" => LoopStructure::pi0(),
        "pi1" => LoopStructure::pi1(),
        "pi2" => LoopStructure::pi2(),
        other => return Err(PyValueError::new_err(format!("unknown structure '{other}'"))),
    };
    Ok(tup(delta_coeff(&st, c(m)).map_err(err)?.value))
}

/// Distinct-index 4-loop sum on one GUE resolvent, via
/// inclusion–exclusion and brute force: `(fast, brute)` as `(re, im)`
/// pairs.
#[pyfunction]
fn loop_sum_check(n: usize, seed: u64, e: f64, eta: f64) -> PyResult<((f64, f64), (f64, f64))> {
    let lat = TorusLattice::new(1, n as i64, 1).map_err(err)?;
    let spec = ModelSpec::new(ModelKind::Gue, lat, 0.0, seed).map_err(err)?;
    let h = assemble(&spec, 0);
    let z = SpectralPoint::new(e, eta).map_err(err)?;
    let g = resolvent(&h, z).map_err(err)?;
    Ok((tup(loop_sum_distinct(&g.g)), tup(loop_sum_distinct_brute(&g.g))))
}

/// GUE loop-sum renormalization report as a JSON string.
#[pyfunction]
#[pyo3(signature = (n_dim, e, epsilon0, n_samples, seed, workers = 0, gate_c = 5.0))]
fn loop_mc(
    n_dim: usize,
    e: f64,
    epsilon0: f64,
    n_samples: u64,
    seed: u64,
    workers: usize,
    gate_c: f64,
) -> PyResult<String> {
    let rep =
        loop_mc_compare(n_dim, e, epsilon0, n_samples, seed, workers, gate_c).map_err(err)?;
    serde_json::to_string(&rep).map_err(err)
}

#[pymodule]
fn rbso_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(msc, m)?)?;
    m.add_function(wrap_pyfunction!(iota, m)?)?;
    m.add_function(wrap_pyfunction!(delta_pi, m)?)?;
    m.add_function(wrap_pyfunction!(loop_sum_check, m)?)?;
    m.add_function(wrap_pyfunction!(loop_mc, m)?)?;
    Ok(())
}
