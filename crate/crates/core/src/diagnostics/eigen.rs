use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linsolve::LuFactorization;
use crate::mesh::SimplicialSurface;
use crate::sparse::CsrMatrix;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMode {
    /// Most negative eigenvalue.
    SmallestAlgebraic,
    /// Eigenvalue closest to zero.
    SmallestMagnitude,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    /// Krylov dimension of the Lanczos stage.
    pub krylov_dim: usize,
    pub max_refinements: usize,
    /// Certification threshold relative to ‖H‖∞.
    pub residual_factor: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            krylov_dim: 60,
            max_refinements: 30,
            residual_factor: 1e-8,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HessianProbeResult {
    pub smallest_eigenvalue: f64,
    /// ‖Hv − λv‖₂ for the unit eigenvector estimate v.
    pub residual: f64,
    /// Lanczos steps plus refinement solves.
    pub iterations: usize,
    /// ‖H‖∞, the scale the residual is certified against.
    pub matrix_norm: f64,
}

impl HessianProbeResult {
    pub fn certified(&self, factor: f64) -> bool {
        self.residual <= factor * self.matrix_norm.max(f64::MIN_POSITIVE)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn shifted(a: &CsrMatrix, sigma: f64) -> CsrMatrix {
    let n = a.nrows();
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        t.extend(a.row(i).map(|(j, v)| (i, j, v)));
        t.push((i, i, -sigma));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Factorizes A − σI, nudging σ when it hits the spectrum exactly.
fn factor_shifted(a: &CsrMatrix, sigma: f64, scale: f64) -> Result<(LuFactorization, f64)> {
    let mut s = sigma;
    let mut last = None;
    for attempt in 0..6 {
        match LuFactorization::new(&shifted(a, s)) {
            Ok(lu) => return Ok((lu, s)),
            Err(e) => last = Some(e),
        }
        s = sigma - scale * 1e-10 * 10f64.powi(attempt);
    }
    Err(last.unwrap_or(Error::SingularSystem {
        size: a.nrows(),
        condition: f64::INFINITY,
    }))
}

/// Lanczos with full reorthogonalization; returns Ritz values and vectors.
fn lanczos(
    n: usize,
    m: usize,
    seed: u64,
    mut op: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..m {
        let mut w = op(&basis[j])?;
        let a = dot(&basis[j], &w);
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let scale = alpha.iter().chain(&beta).fold(0.0_f64, |s, v| s.max(v.abs()));
        let bnorm = normalize(&mut w);
        if j + 1 == m || bnorm <= 1e-12 * scale.max(1.0) {
            break;
        }
        beta.push(bnorm);
        basis.push(w);
    }
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let vectors = (0..k)
        .map(|c| {
            let mut v = vec![0.0; n];
            for (r, b) in basis.iter().enumerate().take(k) {
                let y = eig.eigenvectors[(r, c)];
                v.iter_mut().zip(b).for_each(|(x, bi)| *x += y * bi);
            }
            normalize(&mut v);
            v
        })
        .collect();
    Ok((eig.eigenvalues.iter().copied().collect(), vectors, k))
}

fn rayleigh_residual(a: &CsrMatrix, v: &[f64]) -> (f64, f64) {
    let av = a.mul_vec(v);
    let lambda = dot(v, &av);
    let r = av
        .iter()
        .zip(v)
        .map(|(x, y)| (x - lambda * y).powi(2))
        .sum::<f64>()
        .sqrt();
    (lambda, r)
}

/// Smallest eigenvalue of a symmetric sparse matrix in the chosen sense.
///
/// A Lanczos pass (on A for the algebraic mode, on a shift-inverted A for
/// the magnitude mode) gives a starting pair. Shift-invert Rayleigh
/// quotient iteration then refines it until ‖Av − λv‖ ≤ factor·‖A‖∞.
pub fn smallest_eigenvalue(a: &CsrMatrix, mode: EigenMode, opts: &ProbeOptions) -> Result<HessianProbeResult> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if opts.krylov_dim == 0 {
        return Err(Error::InvalidArgument("krylov dimension must be positive".into()));
    }
    let norm = a.norm_inf();
    if norm == 0.0 {
        return Ok(HessianProbeResult {
            smallest_eigenvalue: 0.0,
            residual: 0.0,
            iterations: 0,
            matrix_norm: 0.0,
        });
    }
    let m = opts.krylov_dim.min(n);
    let (mut lambda, mut v, mut iterations) = match mode {
        EigenMode::SmallestAlgebraic => {
            let (vals, vecs, k) = lanczos(n, m, opts.seed, |x| Ok(a.mul_vec(x)))?;
            let idx = (0..vals.len()).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
            (vals[idx], vecs[idx].clone(), k)
        }
        EigenMode::SmallestMagnitude => {
            // a tiny offset keeps the factorization regular on exact null spaces
            let (lu, _) = factor_shifted(a, -1e-10 * norm, norm)?;
            let (vals, vecs, k) = lanczos(n, m, opts.seed, |x| lu.solve(x))?;
            let idx = (0..vals.len())
                .max_by(|&i, &j| vals[i].abs().total_cmp(&vals[j].abs()))
                .unwrap();
            let (lambda, _) = rayleigh_residual(a, &vecs[idx]);
            (lambda, vecs[idx].clone(), k)
        }
    };
    let target = opts.residual_factor * norm;
    let (mut l, mut residual) = rayleigh_residual(a, &v);
    lambda = if l.is_finite() { l } else { lambda };
    for _ in 0..opts.max_refinements {
        if residual <= target {
            break;
        }
        let (lu, _) = factor_shifted(a, lambda, norm)?;
        let mut w = match lu.solve(&v) {
            Ok(w) => w,
            // the shift sits on an eigenvalue to working precision
            Err(_) => break,
        };
        if normalize(&mut w) == 0.0 {
            break;
        }
        iterations += 1;
        let (l_new, r_new) = rayleigh_residual(a, &w);
        v = w;
        l = l_new;
        residual = r_new;
        lambda = l;
    }
    Ok(HessianProbeResult {
        smallest_eigenvalue: lambda,
        residual,
        iterations,
        matrix_norm: norm,
    })
}

/// Probe of the assembled 3n×3n Hessian of E_S at f, with `krylov_dim`
/// Lanczos vectors.
pub fn smallest_hessian_eigenvalue(
    surface: &SimplicialSurface,
    f: &[Vec3],
    krylov_dim: usize,
    mode: EigenMode,
) -> Result<HessianProbeResult> {
    let h = crate::energy::assemble_global_hessian(surface, f)?;
    let opts = ProbeOptions {
        krylov_dim,
        ..ProbeOptions::default()
    };
    smallest_eigenvalue(&h, mode, &opts)
}
