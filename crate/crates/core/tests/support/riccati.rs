//! Hamiltonian-eigenvector solution of the continuous algebraic Riccati
//! equation, used to cross-check the production solver.

use nalgebra::{Complex, DMatrix};

/// Stabilizing CARE solution from the stable invariant subspace of
/// H = [[A, -B R^-1 B^T], [-Q, -A^T]].
pub fn care_hamiltonian(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let rinv = r.clone().try_inverse().unwrap();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * &rinv * b.transpose())));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let eig = h.complex_eigenvalues();
    let stable: Vec<Complex<f64>> = eig.iter().copied().filter(|l| l.re < 0.0).collect();
    assert_eq!(stable.len(), n, "Hamiltonian must have n stable eigenvalues");
    let hc: DMatrix<Complex<f64>> = h.map(|x| Complex::new(x, 0.0));
    let mut basis = DMatrix::<Complex<f64>>::zeros(2 * n, n);
    for (k, &lambda) in stable.iter().enumerate() {
        let shifted = &hc - DMatrix::<Complex<f64>>::identity(2 * n, 2 * n) * lambda;
        let mut vec = null_vector(&shifted);
        // one step of inverse iteration sharpens the vector
        let perturbed = &hc - DMatrix::<Complex<f64>>::identity(2 * n, 2 * n) * (lambda + Complex::new(1e-10, 0.0));
        if let Some(sol) = perturbed.lu().solve(&vec) {
            let norm = sol.norm();
            if norm.is_finite() && norm > 0.0 {
                vec = sol / Complex::new(norm, 0.0);
            }
        }
        basis.set_column(k, &vec);
    }
    let u1 = basis.rows(0, n).into_owned();
    let u2 = basis.rows(n, n).into_owned();
    let u1inv = u1.try_inverse().expect("U1 invertible");
    let p = (u2 * u1inv).map(|c| c.re);
    (&p + p.transpose()) * 0.5
}

fn null_vector(m: &DMatrix<Complex<f64>>) -> nalgebra::DVector<Complex<f64>> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    vt.row(idx).adjoint()
}
