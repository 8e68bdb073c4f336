//! Principal angles between a subspace and its image under the operator, and
//! the principal angle decomposition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::galerkin::GalerkinSystem;
use crate::linalg::{lstsq, orth, sorted_svd, symmetrize, PsdSpectrum, SymEig};

/// Default relative cutoff on the eigenvalues of `J_V`.
pub const DEFAULT_ANGLE_CUTOFF: f64 = 1e-10;
/// Angles closer than this to the first angle of their cluster count as equal.
pub const ANGLE_TIE_TOLERANCE: f64 = 1e-8;

/// Angles `theta_j` (ascending) and principal observables `u_j in V`,
/// `v_j in KV`, as coefficients in the concatenated family `[Psi B, K Psi B]`.
#[derive(Debug, Clone)]
pub struct PrincipalAngleResult {
    pub angles: DVector<f64>,
    pub u_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub retained: Vec<usize>,
    pub cutoff: f64,
    /// `[[G_V, A_V], [A_V^T, L_V]]`.
    pub joint_gram: DMatrix<f64>,
}

impl PrincipalAngleResult {
    pub fn count(&self) -> usize {
        self.angles.len()
    }

    fn block_dim(&self) -> usize {
        self.joint_gram.nrows() / 2
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.joint_gram * y))
    }

    /// Coefficients of the orthogonal projection onto `V` of the function with
    /// coefficients `x`.
    pub fn project_onto_v(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.block_dim();
        let gv = self.joint_gram.view((0, 0), (n, n)).into_owned();
        let rhs = (&self.joint_gram * x).rows(0, n).into_owned();
        let a = PsdSpectrum::gram(&gv).pinv() * rhs;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&a);
        out
    }

    /// Per pair: `|P v_j - cos(theta_j) u_j|` and `| |P v_j - v_j| - sin(theta_j) |`.
    pub fn projection_identity_defects(&self) -> Vec<(f64, f64)> {
        (0..self.count())
            .map(|j| {
                let u = self.u_hat.column(j).into_owned();
                let v = self.v_hat.column(j).into_owned();
                let pv = self.project_onto_v(&v);
                let (c, s) = (self.angles[j].cos(), self.angles[j].sin());
                let d1 = &pv - &u * c;
                let d2 = &pv - &v;
                let n1 = self.inner(&d1, &d1).max(0.0).sqrt();
                let n2 = self.inner(&d2, &d2).max(0.0).sqrt();
                (n1, (n2 - s).abs())
            })
            .collect()
    }
}

/// Principal angles and vector coefficients between the column spans of `f`
/// and `g`, with the sine-based refinement for angles below `pi/4`.
///
/// Returns `(angles, U, V)` with `U = orth(F) Y`, `V = orth(G) Z` unit columns
/// and `<u_j, v_j> = cos(theta_j) >= 0`.
pub fn subspace_angles(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if f.nrows() != g.nrows() {
        return Err(Error::DimensionMismatch { context: "subspace ambient dimension", expected: f.nrows(), found: g.nrows() });
    }
    let qf = orth(f);
    let qg = orth(g);
    if qf.ncols() == 0 || qg.ncols() == 0 {
        return Err(Error::ZeroSubspace);
    }
    let cross = qf.transpose() * &qg;
    let svd = sorted_svd(&cross);
    let q = svd.s.len();
    let cosines: Vec<f64> = svd.s.iter().map(|&s| s.clamp(0.0, 1.0)).collect();
    let mut angles = DVector::from_iterator(q, cosines.iter().map(|c| c.acos().max(0.0)));
    let mut u = &qf * &svd.u;
    let mut v = &qg * &svd.v;

    let small: Vec<usize> = (0..q).filter(|&j| cosines[j] > std::f64::consts::FRAC_1_SQRT_2).collect();
    if !small.is_empty() {
        let mut vs = DMatrix::zeros(v.nrows(), small.len());
        for (dst, &src) in small.iter().enumerate() {
            vs.set_column(dst, &v.column(src));
        }
        let rg = &vs - &qf * (qf.transpose() * &vs);
        let rsvd = sorted_svd(&rg);
        let k = small.len();
        let used = rsvd.s.len();
        let mut sines = vec![0.0; k];
        let mut zx = DMatrix::zeros(k, k);
        for c in 0..used {
            sines[c] = rsvd.s[c];
            zx.set_column(c, &rsvd.v.column(c));
        }
        if used < k {
            // fewer ambient dimensions than columns: complete the rotation
            let comp = complement(&rsvd.v, k);
            for c in 0..(k - used) {
                zx.set_column(used + c, &comp.column(c));
            }
        }
        // ascending angles: reverse the order
        let mut zr = DMatrix::zeros(k, k);
        for c in 0..k {
            zr.set_column(c, &zx.column(k - 1 - c));
        }
        let vs_new = &vs * &zr;
        let proj = &qf * (qf.transpose() * &vs_new);
        for (c, &dst) in small.iter().enumerate() {
            let s = sines[k - 1 - c].min(1.0);
            angles[dst] = s.asin().max(0.0);
            v.set_column(dst, &vs_new.column(c));
            let p = proj.column(c).into_owned();
            let pn = p.norm();
            if pn > 0.0 {
                u.set_column(dst, &(p / pn));
            }
        }
    }
    Ok((angles, u, v))
}

/// Orthonormal completion of the columns of `basis` in `R^k`.
fn complement(basis: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(k, k);
    if basis.ncols() > 0 {
        p -= basis * basis.transpose();
    }
    let e = SymEig::new(&symmetrize(&p));
    e.vectors.columns(0, k - basis.ncols()).into_owned()
}

/// Angles between `V = span(Psi B)` and `KV`, evaluated from the compressed
/// Galerkin matrices. `cutoff` is absolute; `None` uses `1e-10 * lambda_max(J_V)`.
pub fn principal_angles(sys: &GalerkinSystem, b: &DMatrix<f64>, cutoff: Option<f64>) -> Result<PrincipalAngleResult> {
    let n = b.ncols();
    if n == 0 || n > sys.dim() {
        return Err(Error::InvalidArgument(format!("selection must have 1..={} columns, got {n}", sys.dim())));
    }
    let (gv, av, lv) = sys.compress(b)?;
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, 0), (n, n)).copy_from(&gv);
    j.view_mut((0, n), (n, n)).copy_from(&av);
    j.view_mut((n, 0), (n, n)).copy_from(&av.transpose());
    j.view_mut((n, n), (n, n)).copy_from(&lv);
    let j = symmetrize(&j);
    let eig = SymEig::new(&j);
    let eps = cutoff.unwrap_or(DEFAULT_ANGLE_CUTOFF * eig.max_value().max(0.0));
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("angle cutoff must be nonnegative, got {eps}")));
    }
    let retained: Vec<usize> = (0..2 * n).filter(|&i| eig.values[i] > eps).collect();
    if retained.is_empty() {
        return Err(Error::EmptySubspace { cutoff: eps });
    }
    let r = retained.len();
    let mut ui = DMatrix::zeros(2 * n, r);
    let mut c = DMatrix::zeros(r, 2 * n);
    for (dst, &src) in retained.iter().enumerate() {
        ui.set_column(dst, &(eig.vectors.column(src) / eig.values[src].sqrt()));
        c.set_row(dst, &(eig.vectors.column(src).transpose() * eig.values[src].sqrt()));
    }
    let c1 = c.columns(0, n).into_owned();
    let c2 = c.columns(n, n).into_owned();
    let (angles, u1, v1) = subspace_angles(&c1, &c2)?;
    Ok(PrincipalAngleResult { angles, u_hat: &ui * u1, v_hat: &ui * v1, retained, cutoff: eps, joint_gram: j })
}

/// System reduced to the `r` smallest-angle principal observables.
#[derive(Debug, Clone)]
pub struct PadReduction {
    /// `N x r`, columns orthonormal in `G`.
    pub u: DMatrix<f64>,
    pub a_pad: DMatrix<f64>,
    pub k_pad: DMatrix<f64>,
    pub l_pad: DMatrix<f64>,
    pub r: usize,
    pub angles: DVector<f64>,
}

impl PadReduction {
    pub fn to_system(&self, parent: &GalerkinSystem) -> GalerkinSystem {
        GalerkinSystem {
            g: DMatrix::identity(self.r, self.r),
            a: self.a_pad.clone(),
            l: self.l_pad.clone(),
            k: self.k_pad.clone(),
            space: parent.space,
            descriptor: parent.descriptor.clone(),
            basis: Some(parent.basis_matrix() * &self.u),
            numerical_rank: self.r,
        }
    }
}

/// Principal observables of `V_N` mapped back to the dictionary:
/// `U_1' = U_top + K U_bottom`, one column per angle.
pub fn principal_observables(sys: &GalerkinSystem, res: &PrincipalAngleResult) -> DMatrix<f64> {
    let n = sys.dim();
    let top = res.u_hat.rows(0, n).into_owned();
    let bottom = res.u_hat.rows(n, n).into_owned();
    top + &sys.k * bottom
}

/// Within each run of equal angles the principal observables are only defined
/// up to rotation; rotate each run onto the principal axes of `G` restricted to
/// it, largest Gram energy first (the order a truncated SVD would use).
pub fn order_angle_clusters(sys: &GalerkinSystem, obs: &DMatrix<f64>, angles: &DVector<f64>) -> DMatrix<f64> {
    let mut out = obs.clone();
    let q = angles.len().min(obs.ncols());
    let mut start = 0;
    while start < q {
        let mut end = start + 1;
        while end < q && angles[end] - angles[start] <= ANGLE_TIE_TOLERANCE {
            end += 1;
        }
        let len = end - start;
        if len > 1 {
            let block = obs.columns(start, len).into_owned();
            let spec = PsdSpectrum::gram(&symmetrize(&(block.transpose() * &sys.g * &block)));
            if spec.rank() == len {
                let ortho = &block * spec.inv_sqrt();
                let eig = SymEig::new(&symmetrize(&(ortho.transpose() * &ortho)));
                let mut idx: Vec<usize> = (0..len).collect();
                idx.sort_by(|&i, &j| eig.values[i].total_cmp(&eig.values[j]));
                for (c, &i) in idx.iter().enumerate() {
                    out.set_column(start + c, &(&ortho * eig.vectors.column(i)));
                }
            }
        }
        start = end;
    }
    out
}

pub fn pad_truncate(sys: &GalerkinSystem, cutoff: Option<f64>, r: usize) -> Result<PadReduction> {
    let res = principal_angles(sys, &DMatrix::identity(sys.dim(), sys.dim()), cutoff)?;
    pad_from_angles(sys, &res, r)
}

pub fn pad_from_angles(sys: &GalerkinSystem, res: &PrincipalAngleResult, r: usize) -> Result<PadReduction> {
    let q = res.count();
    if r == 0 || r > q {
        return Err(Error::InvalidArgument(format!("PAD rank {r} must lie in 1..={q}")));
    }
    let obs = order_angle_clusters(sys, &principal_observables(sys, res), &res.angles).columns(0, r).into_owned();
    let m = symmetrize(&(obs.transpose() * &sys.g * &obs));
    let spec = PsdSpectrum::gram(&m);
    if spec.rank() < r {
        return Err(Error::DegenerateData(format!(
            "retained principal observables are linearly dependent (rank {} < {r})",
            spec.rank()
        )));
    }
    let u = obs * spec.inv_sqrt();
    let a_pad = u.transpose() * &sys.a * &u;
    let l_pad = symmetrize(&(u.transpose() * &sys.l * &u));
    Ok(PadReduction { k_pad: a_pad.clone(), a_pad, l_pad, r, u, angles: res.angles.rows(0, r).into_owned() })
}

/// Relative one-step errors `|K u - Psi K u| / |u|` of every principal observable.
pub fn principal_observable_errors(sys: &GalerkinSystem, res: &PrincipalAngleResult) -> DVector<f64> {
    let obs = principal_observables(sys, res);
    DVector::from_iterator(
        obs.ncols(),
        obs.column_iter().map(|c| {
            let c = c.into_owned();
            let den = sys.norm_sq(&c);
            if den > 0.0 {
                (sys.one_step_residual_sq(&c) / den).sqrt()
            } else {
                0.0
            }
        }),
    )
}

/// Least-squares fit of a continuous two-segment line with one breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointFit {
    pub breakpoint: f64,
    pub intercept: f64,
    pub left_slope: f64,
    pub right_slope: f64,
    pub sse: f64,
    /// A single line fits as well as any hinge; the breakpoint is then a boundary sample.
    pub degenerate: bool,
}

fn hinge_fit(x: &[f64], y: &[f64], t: f64) -> (f64, [f64; 3]) {
    let m = x.len();
    let design = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        _ => (x[i] - t).max(0.0),
    });
    let rhs = DVector::from_column_slice(y);
    let beta = lstsq(&design, &rhs, 1e-13);
    let resid = &design * &beta - &rhs;
    (resid.norm_squared(), [beta[0], beta[1], beta[2]])
}

fn line_fit(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len();
    let design = DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let rhs = DVector::from_column_slice(y);
    let beta = lstsq(&design, &rhs, 1e-13);
    (&design * beta - rhs).norm_squared()
}

/// Breakpoint by exhaustive search over the sample abscissae followed by a
/// golden-section refinement between the neighbouring samples.
pub fn breakpoint_threshold(angles: &[f64], errors: &[f64]) -> Result<BreakpointFit> {
    if angles.len() != errors.len() {
        return Err(Error::DimensionMismatch { context: "breakpoint data", expected: angles.len(), found: errors.len() });
    }
    if angles.len() < 4 {
        return Err(Error::InsufficientData(format!("breakpoint fit needs at least 4 points, got {}", angles.len())));
    }
    if angles.iter().chain(errors).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("breakpoint data".into()));
    }
    let mut pts: Vec<(f64, f64)> = angles.iter().copied().zip(errors.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let m = x.len();

    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let line = line_fit(&x, &y);
    let mut best = (f64::INFINITY, 1usize);
    for i in 1..m - 1 {
        let (sse, _) = hinge_fit(&x, &y, x[i]);
        if sse < best.0 {
            best = (sse, i);
        }
    }
    let (lo, hi) = (x[best.1 - 1], x[best.1 + 1]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = hinge_fit(&x, &y, c).0;
    let mut fd = hinge_fit(&x, &y, d).0;
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = hinge_fit(&x, &y, c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = hinge_fit(&x, &y, d).0;
        }
    }
    let mid = 0.5 * (a + b);
    let (mut t, mut sse) = (x[best.1], best.0);
    let fm = hinge_fit(&x, &y, mid).0;
    if fm < sse {
        t = mid;
        sse = fm;
    }
    let degenerate = line - sse <= 1e-12 * scale;
    if degenerate {
        t = x[0];
        sse = line;
    }
    let (_, beta) = hinge_fit(&x, &y, t);
    Ok(BreakpointFit {
        breakpoint: t,
        intercept: beta[0],
        left_slope: beta[1],
        right_slope: beta[1] + beta[2],
        sse,
        degenerate,
    })
}

/// Breakpoint of `log10(error)` against `log10(angle)`, mapped back to an angle.
/// Nonpositive entries are dropped.
pub fn breakpoint_threshold_log(angles: &[f64], errors: &[f64]) -> Result<BreakpointFit> {
    if angles.len() != errors.len() {
        return Err(Error::DimensionMismatch { context: "breakpoint data", expected: angles.len(), found: errors.len() });
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = angles
        .iter()
        .zip(errors)
        .filter(|(a, e)| **a > 0.0 && **e > 0.0)
        .map(|(a, e)| (a.log10(), e.log10()))
        .unzip();
    let mut fit = breakpoint_threshold(&lx, &ly)?;
    fit.breakpoint = 10f64.powf(fit.breakpoint);
    Ok(fit)
}
