//! Continuous algebraic Riccati equation by Newton-Kleinman iteration.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

const MAX_NEWTON_ITERATIONS: usize = 100;
/// Required relative residual of the returned solution.
pub const CARE_TOLERANCE: f64 = 1e-8;

type CMatrix = DMatrix<Complex<f64>>;

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

/// Solves `Fᵀ X + X F + S = 0` for symmetric `S` and stable `F` through the
/// complex Schur form of `F`.
pub fn solve_lyapunov(f: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let (u, t) = to_complex(f).schur().unpack();
    let rhs = u.adjoint() * to_complex(s) * &u;
    // T^H Y + Y T = -rhs, solved in increasing (i, j)
    let mut y = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut acc = -rhs[(i, j)];
            for k in 0..i {
                acc -= t[(k, i)].conj() * y[(k, j)];
            }
            for k in 0..j {
                acc -= y[(i, k)] * t[(k, j)];
            }
            let d = t[(i, i)].conj() + t[(j, j)];
            if d.norm() < 1e-300 {
                return Err(Error::Synthesis("Lyapunov operator is singular".into()));
            }
            y[(i, j)] = acc / d;
        }
    }
    let x = (&u * y * u.adjoint()).map(|c| c.re);
    Ok((&x + x.transpose()) * 0.5)
}

/// `‖AᵀP + PA − PGP + Q‖ / (2‖AᵀP‖ + ‖PGP‖ + ‖Q‖)` in the Frobenius norm,
/// with `G = B R⁻¹ Bᵀ`.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let rinv = r.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(r.nrows(), r.ncols()));
    let g = b * rinv * b.transpose();
    let atp = a.transpose() * p;
    let pgp = p * g * p;
    let res = &atp + atp.transpose() - &pgp + q;
    let scale = 2.0 * atp.norm() + pgp.norm() + q.norm();
    if scale == 0.0 {
        res.norm()
    } else {
        res.norm() / scale
    }
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvalues of `a` with nonnegative real part that fail the PBH rank test.
pub fn uncontrollable_unstable_modes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let n = a.nrows();
    let nu = b.ncols();
    let scale = a.norm() + b.norm();
    let mut bad = Vec::new();
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < -1e-9 * scale.max(1.0) {
            continue;
        }
        let mut pbh = CMatrix::zeros(n, n + nu);
        let shifted = to_complex(a) - CMatrix::identity(n, n) * *lambda;
        pbh.view_mut((0, 0), (n, n)).copy_from(&shifted);
        pbh.view_mut((0, n), (n, nu)).copy_from(&to_complex(b));
        // pad to square so all n singular values are present
        let mut sq = CMatrix::zeros(n + nu, n + nu);
        sq.view_mut((0, 0), (n, n + nu)).copy_from(&pbh);
        let sv = sq.singular_values();
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(|x, y| y.total_cmp(x));
        if sorted[n - 1] < 1e-9 * (scale + lambda.norm()).max(1.0) {
            bad.push((lambda.re, lambda.im));
        }
    }
    bad
}

/// A stabilizing gain from the shifted Lyapunov equation
/// `(A + βI) Z + Z (A + βI)ᵀ = 2 B R⁻¹ Bᵀ`, `K = R⁻¹ Bᵀ Z⁻¹`.
fn initial_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, rinv: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::identity(n, n) * beta;
    let g = b * rinv * b.transpose();
    let z = solve_lyapunov(&(-shifted.transpose()), &(g * 2.0))?;
    let z_inv = match z.clone().cholesky() {
        Some(c) => c.inverse(),
        None => {
            let reg = &z + DMatrix::identity(n, n) * (1e-12 * z.norm().max(1e-300));
            reg.try_inverse()
                .ok_or_else(|| Error::Synthesis("shifted Lyapunov solution is singular".into()))?
        }
    };
    Ok(rinv * b.transpose() * z_inv)
}

/// Approximate CARE solution from the scaled matrix sign function of the
/// Hamiltonian `[[A, −G], [−Q, −Aᵀ]]`.
fn sign_function_guess(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, rinv: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let g = b * rinv * b.transpose();
    let mut z = DMatrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&(-g));
    z.view_mut((n, 0), (n, n)).copy_from(&(-q));
    z.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    for _ in 0..100 {
        let lu = z.clone().lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        let zinv = lu.try_inverse()?;
        let c = (log_det / (2 * n) as f64).exp();
        let next = (&z / c + zinv * c) * 0.5;
        let change = (&next - &z).norm();
        z = next;
        if !z.iter().all(|x| x.is_finite()) {
            return None;
        }
        if change <= 1e-13 * z.norm() {
            break;
        }
    }
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));
    let p = lhs.svd(true, true).solve(&rhs, 1e-14).ok()?;
    Some((&p + p.transpose()) * 0.5)
}

/// Stabilizing solution of `AᵀP + PA − P B R⁻¹ Bᵀ P + Q = 0`.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "inconsistent CARE shapes: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let rinv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("input weight R is not positive definite".into()))?
        .inverse();
    let bad = uncontrollable_unstable_modes(a, b);
    if !bad.is_empty() {
        return Err(Error::Unstabilizable { eigenvalues: bad });
    }

    let stabilizes = |k: &DMatrix<f64>| spectral_abscissa(&(a - b * k)) < 0.0;
    let mut k = if spectral_abscissa(a) < 0.0 {
        DMatrix::zeros(b.ncols(), n)
    } else {
        initial_gain(a, b, &rinv)?
    };
    if !stabilizes(&k) {
        // the shifted Gramian is numerically singular for weakly controllable pairs
        k = sign_function_guess(a, b, q, &rinv)
            .map(|p0| &rinv * b.transpose() * p0)
            .filter(|k| stabilizes(k))
            .ok_or_else(|| Error::Synthesis("could not find a stabilizing initial gain".into()))?;
    }
    let mut p = DMatrix::zeros(n, n);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let closed = a - b * &k;
        let s = q + k.transpose() * r * &k;
        let p_next = solve_lyapunov(&closed, &s)?;
        let change = (&p_next - &p).norm();
        p = p_next;
        k = &rinv * b.transpose() * &p;
        if change <= 1e-14 * p.norm().max(1e-300) || care_residual(a, b, q, r, &p) < 1e-14 {
            break;
        }
    }
    let residual = care_residual(a, b, q, r, &p);
    if !(residual < CARE_TOLERANCE) {
        return Err(Error::Synthesis(format!("Riccati residual {residual:.3e} above tolerance")));
    }
    if spectral_abscissa(&(a - b * &k)) >= 0.0 {
        return Err(Error::Synthesis("Riccati solution is not stabilizing".into()));
    }
    Ok(p)
}

/// `R⁻¹ Bᵀ P`.
pub fn lqr_gain(b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("input weight R is not positive definite".into()))?;
    Ok(chol.solve(&(b.transpose() * p)))
}
