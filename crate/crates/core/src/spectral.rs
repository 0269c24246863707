//! Per-element generalized eigenproblems, the auxiliary space and the
//! projection `pi` onto it.
//!
//! On each coarse element `K_i` the pair `(Acal_{K_i}, S_{K_i})` is solved
//! densely on all nodes of the closed element. The first `l` eigenvectors span
//! the local auxiliary space; they are kept both as computed (for residual
//! checks) and as an `s`-orthonormal basis of the same span, which defines
//! `pi` as the `s`-orthogonal projection. Auxiliary functions are
//! discontinuous across elements, so `pi v` is represented per element.

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Par, Side};
use rayon::prelude::*;

use crate::assembly::SparseOperator;
use crate::error::{CemError, Result};
use crate::grid::CellBox;
use crate::instance::Instance;

/// Eigen data of one coarse element, vectors in the element's box-local
/// numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementEigen {
    pub element: usize,
    pub cells: CellBox,
    /// Real parts of the `l + 1` smallest eigenvalues (`l` at full local
    /// dimension), ascending.
    pub eigenvalues: Vec<f64>,
    /// Largest `|Im lambda| / max(|lambda|, 1)` among the retained values.
    pub max_imag: f64,
    /// Computed eigenvectors (real parts, or real/imaginary parts of a
    /// conjugate pair), each normalized in the `s`-norm.
    pub raw: Vec<Vec<f64>>,
    /// `s`-orthonormal basis of `span(raw)`.
    pub basis: Vec<Vec<f64>>,
    /// `S_{K_i} basis_j`: coefficient functionals of `pi`.
    pub s_basis: Vec<Vec<f64>>,
    /// Largest relative eigen-residual of the computed pairs.
    pub residual: f64,
}

impl ElementEigen {
    pub fn l(&self) -> usize {
        self.basis.len()
    }

    /// `lambda^{l+1}`, infinite when `l` is the full local dimension.
    pub fn next_eigenvalue(&self) -> f64 {
        self.eigenvalues.get(self.l()).copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxSpace {
    pub l: usize,
    pub symmetrize: bool,
    pub elements: Vec<ElementEigen>,
}

impl AuxSpace {
    pub fn num_functions(&self) -> usize {
        self.l * self.elements.len()
    }
}

/// Local matrices of the spectral problem on one element.
pub fn element_pencil(inst: &Instance, element: usize, symmetrize: bool) -> Result<(SparseOperator, SparseOperator)> {
    let f = inst.element_forms(element)?;
    let a = f.acal_form();
    let a = if symmetrize {
        SparseOperator::lin_comb(&[(0.5, &a), (0.5, &a.transpose())])?
    } else {
        a
    };
    Ok((a, f.s_form))
}

/// Solves `Acal_{K_i} phi = lambda S_{K_i} phi` for element `element`, keeping
/// `l` eigenvectors and `l + 1` eigenvalues.
pub fn solve_local_spectral(inst: &Instance, element: usize, l: usize, symmetrize: bool) -> Result<ElementEigen> {
    let cells = inst.coarse().cell_box(element);
    let (a_sp, s_sp) = element_pencil(inst, element, symmetrize)?;
    let n = a_sp.nrows();
    if l > n {
        return Err(CemError::InvalidInput(format!("l_m = {l} exceeds the {n} local dofs of element {element}")));
    }
    let eig_err = |reason: String| CemError::Eigen { element, reason };
    let a = a_sp.to_dense();
    let s = s_sp.to_dense();
    let llt = s.llt(Side::Lower).map_err(|e| eig_err(format!("s-form not positive definite: {e:?}")))?;
    let lmat = llt.L().to_owned();
    // C = L^-1 A L^-T
    let mut x = a.clone();
    solve_lower_triangular_in_place(lmat.as_ref(), x.as_mut(), Par::Seq);
    let mut ct = x.transpose().to_owned();
    solve_lower_triangular_in_place(lmat.as_ref(), ct.as_mut(), Par::Seq);
    let c = ct.transpose().to_owned();

    // (re, im) eigenvalues and eigenvectors of C, sorted by real part.
    let mut pairs: Vec<(f64, f64, Vec<f64>, Vec<f64>)> = if symmetrize {
        let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
        let e = c.self_adjoint_eigen(Side::Lower).map_err(|e| eig_err(format!("{e:?}")))?;
        (0..n)
            .map(|k| (e.S()[k], 0.0, e.U().col(k).iter().copied().collect(), vec![0.0; n]))
            .collect()
    } else {
        let e = c.eigen().map_err(|e| eig_err(format!("{e:?}")))?;
        (0..n)
            .map(|k| {
                let u = e.U().col(k);
                (e.S()[k].re, e.S()[k].im, u.iter().map(|z| z.re).collect(), u.iter().map(|z| z.im).collect())
            })
            .collect()
    };
    if pairs.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(eig_err("non-finite eigenvalue".into()));
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));

    // Back-transform phi = L^-T y.
    let lt = lmat.transpose().to_owned();
    let back = |y: &[f64]| -> Vec<f64> {
        let mut m = Mat::from_fn(n, 1, |i, _| y[i]);
        solve_upper_triangular_in_place(lt.as_ref(), m.as_mut(), Par::Seq);
        (0..n).map(|i| m[(i, 0)]).collect()
    };

    let a_norm = a_sp.frobenius_norm();
    let s_norm = s_sp.frobenius_norm();
    let mut eigenvalues = Vec::with_capacity(l + 1);
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(l);
    let mut max_imag = 0.0f64;
    let mut residual = 0.0f64;
    let mut k = 0;
    while raw.len() < l {
        let (re, im, ref yr, ref yi) = pairs[k];
        max_imag = max_imag.max(im.abs() / re.hypot(im).max(1.0));
        let pr = back(yr);
        let pi = back(yi);
        residual = residual.max(complex_residual(&a_sp, &s_sp, a_norm, s_norm, (re, im), &pr, &pi));
        if im.abs() > 1e-12 * re.abs().max(1.0) && k + 1 < pairs.len() && raw.len() + 1 < l {
            // Conjugate pair: its real invariant subspace is spanned by Re and Im.
            raw.push(pr);
            raw.push(pi);
            eigenvalues.push(re);
            eigenvalues.push(pairs[k + 1].0);
            k += 2;
        } else {
            raw.push(pr);
            eigenvalues.push(re);
            k += 1;
        }
    }
    if l < n {
        let (re, im) = (pairs[l].0, pairs[l].1);
        max_imag = max_imag.max(im.abs() / re.hypot(im).max(1.0));
        eigenvalues.push(re);
    }

    for v in raw.iter_mut() {
        let nrm = s_sp.quad(v).sqrt();
        if !(nrm > 0.0) {
            return Err(eig_err("zero eigenvector".into()));
        }
        v.iter_mut().for_each(|x| *x /= nrm);
    }
    let basis = s_orthonormalize(&s_sp, &raw).ok_or_else(|| eig_err("dependent eigenvectors".into()))?;
    let s_basis = basis.iter().map(|b| s_sp.mul_vec(b)).collect();
    Ok(ElementEigen { element, cells, eigenvalues, max_imag, raw, basis, s_basis, residual })
}

fn complex_residual(
    a: &SparseOperator,
    s: &SparseOperator,
    a_norm: f64,
    s_norm: f64,
    (re, im): (f64, f64),
    pr: &[f64],
    pi: &[f64],
) -> f64 {
    // (A - lambda S)(pr + i pi)
    let (apr, api, spr, spi) = (a.mul_vec(pr), a.mul_vec(pi), s.mul_vec(pr), s.mul_vec(pi));
    let mut r2 = 0.0;
    for k in 0..pr.len() {
        let rr = apr[k] - (re * spr[k] - im * spi[k]);
        let ri = api[k] - (re * spi[k] + im * spr[k]);
        r2 += rr * rr + ri * ri;
    }
    let vn = pr.iter().chain(pi).map(|x| x * x).sum::<f64>().sqrt();
    r2.sqrt() / ((a_norm + re.hypot(im) * s_norm) * vn)
}

/// Modified Gram-Schmidt in the `s` inner product, two passes.
fn s_orthonormalize(s: &SparseOperator, vs: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let sq = s.mul_vec(q);
                let c: f64 = sq.iter().zip(&w).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nrm = s.quad(&w).sqrt();
        if !(nrm > 1e-10) {
            return None;
        }
        w.iter_mut().for_each(|x| *x /= nrm);
        out.push(w);
    }
    Some(out)
}

/// Builds the auxiliary space on every coarse element.
pub fn build_aux_space(inst: &Instance, l: usize, symmetrize: bool) -> Result<AuxSpace> {
    if l == 0 {
        return Err(CemError::InvalidInput("l_m must be at least 1".into()));
    }
    let elements = (0..inst.coarse().num_elements())
        .into_par_iter()
        .map(|e| solve_local_spectral(inst, e, l, symmetrize))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuxSpace { l, symmetrize, elements })
}

/// `(Lambda, Lambda')`: smallest `lambda^{l+1}` and largest `lambda^l` over
/// elements.
pub fn lambda_stats(aux: &AuxSpace) -> (f64, f64) {
    let lam = aux.elements.iter().map(ElementEigen::next_eigenvalue).fold(f64::INFINITY, f64::min);
    let lam_p = aux.elements.iter().map(|e| e.eigenvalues[e.l() - 1]).fold(f64::NEG_INFINITY, f64::max);
    (lam, lam_p)
}

/// The `s`-orthogonal projection onto the auxiliary space.
#[derive(Clone, Copy, Debug)]
pub struct PiProjector<'a> {
    pub aux: &'a AuxSpace,
}

impl<'a> PiProjector<'a> {
    pub fn new(aux: &'a AuxSpace) -> Self {
        Self { aux }
    }

    /// Coefficients of `pi v` on element `e`, given the element-local part of `v`.
    pub fn coeffs_local(&self, e: usize, v_local: &[f64]) -> Vec<f64> {
        self.aux.elements[e]
            .s_basis
            .iter()
            .map(|sb| sb.iter().zip(v_local).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Coefficients of `pi v` for a global fine vector, element-major.
    pub fn coeffs(&self, inst: &Instance, v: &[f64]) -> Vec<f64> {
        self.aux
            .elements
            .iter()
            .flat_map(|el| self.coeffs_local(el.element, &el.cells.gather(inst.fine(), v)))
            .collect()
    }

    /// `pi v` restricted to element `e`, box-local.
    pub fn apply_local(&self, e: usize, v_local: &[f64]) -> Vec<f64> {
        let c = self.coeffs_local(e, v_local);
        let el = &self.aux.elements[e];
        let mut out = vec![0.0; v_local.len()];
        for (cj, b) in c.iter().zip(&el.basis) {
            out.iter_mut().zip(b).for_each(|(o, x)| *o += cj * x);
        }
        out
    }

    /// `pi v` as element pieces.
    pub fn apply(&self, inst: &Instance, v: &[f64]) -> Vec<Vec<f64>> {
        self.aux
            .elements
            .iter()
            .map(|el| self.apply_local(el.element, &el.cells.gather(inst.fine(), v)))
            .collect()
    }

    /// `s(pi w, pi v)`
    pub fn s_inner(&self, inst: &Instance, w: &[f64], v: &[f64]) -> f64 {
        let a = self.coeffs(inst, w);
        let b = self.coeffs(inst, v);
        a.iter().zip(&b).map(|(x, y)| x * y).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{builtin_medium, builtin_velocity, MediumField, MediumPattern, VelocityField, VelocityMode};
    use crate::grid::BoundarySpec;
    use crate::grid::{BoundaryKind, DomainSpec};
    use crate::instance::ProblemData;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize, c: usize, contrast: f64, velocity: VelocityField) -> Instance {
        let medium = builtin_medium(n, n, contrast, MediumPattern::Inclusions, 4).unwrap();
        let spec = BoundarySpec::all(&DomainSpec::unit_square(), BoundaryKind::Dirichlet);
        Instance::new(ProblemData::new(medium, velocity, spec), n, n, c, c).unwrap()
    }

    #[test]
    fn constants_in_kernel() {
        let medium = MediumField::uniform(16, 16, 1.0).unwrap();
        let v = VelocityField::new(VelocityMode::Constant([1.0, 0.0]), 0.0);
        let spec = BoundarySpec::all(&DomainSpec::unit_square(), BoundaryKind::Dirichlet);
        let inst = Instance::new(ProblemData::new(medium, v, spec), 16, 16, 4, 4).unwrap();
        let el = solve_local_spectral(&inst, 5, 3, false).unwrap();
        assert!(el.eigenvalues[0].abs() < 1e-10);
        let phi = &el.raw[0];
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        assert!(phi.iter().all(|x| (x - mean).abs() < 1e-8 * mean.abs()));
        assert!(el.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn residual_gram_and_projection() {
        let inst = instance(40, 4, 1e4, builtin_velocity("vortex", 0.0).unwrap());
        let aux = build_aux_space(&inst, 3, false).unwrap();
        let pi = PiProjector::new(&aux);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for el in &aux.elements {
            assert!(el.residual <= 1e-8, "residual {}", el.residual);
            let f = inst.element_forms(el.element).unwrap();
            for a in 0..el.l() {
                for b in 0..el.l() {
                    let g = f.s_form.bilinear(&el.basis[a], &el.basis[b]);
                    assert!((g - if a == b { 1.0 } else { 0.0 }).abs() <= 1e-10);
                }
                // reproduction
                let p = pi.apply_local(el.element, &el.basis[a]);
                let d: Vec<f64> = p.iter().zip(&el.basis[a]).map(|(x, y)| x - y).collect();
                assert!(f.s_form.quad(&d).sqrt() <= 1e-10);
            }
            for _ in 0..10 {
                let v: Vec<f64> = (0..el.cells.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let p1 = pi.apply_local(el.element, &v);
                let p2 = pi.apply_local(el.element, &p1);
                let d: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| x - y).collect();
                let scale = f.s_form.quad(&v).sqrt();
                assert!(f.s_form.quad(&d).sqrt() <= 1e-10 * scale.max(1.0));
                assert!(f.s_form.quad(&p1).sqrt() <= scale + 1e-10 * scale.max(1.0));
            }
        }
        let (lam, lam_p) = lambda_stats(&aux);
        assert!(aux.elements.iter().all(|e| lam <= e.next_eigenvalue()));
        assert!(lam > 0.0 && lam_p >= 0.0);
    }

    #[test]
    fn single_element_lambda() {
        let inst = instance(8, 1, 10.0, builtin_velocity("vortex", 0.0).unwrap());
        let aux = build_aux_space(&inst, 2, true).unwrap();
        let (lam, lam_p) = lambda_stats(&aux);
        assert_eq!(lam, aux.elements[0].eigenvalues[2]);
        assert_eq!(lam_p, aux.elements[0].eigenvalues[1]);
    }

    #[test]
    fn too_many_eigenpairs() {
        let inst = instance(4, 4, 1.0, VelocityField::zero());
        assert!(solve_local_spectral(&inst, 0, 5, false).is_err());
        let full = solve_local_spectral(&inst, 0, 4, false).unwrap();
        assert_eq!(full.next_eigenvalue(), f64::INFINITY);
        assert!(solve_local_spectral(&inst, 0, 3, false).unwrap().next_eigenvalue().is_finite());
    }
}
