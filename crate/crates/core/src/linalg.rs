//! Cyclic Jacobi eigen-solver for symmetric 3x3 matrices.

use crate::geometry::Vec3;

/// Eigenpairs of a symmetric 3x3 matrix, sorted by ascending eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct SymEigen3 {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

/// Diagonalizes `m` (only the upper triangle is read) with Jacobi rotations.
pub fn sym_eigen3(m: [[f64; 3]; 3]) -> SymEigen3 {
    let mut a = m;
    for i in 0..3 {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            // Rotation that zeroes a[p][q] (Golub & Van Loan, sym.schur2).
            let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
            let t = if tau == 0.0 { 1.0 } else { t };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let column = |c: usize| Vec3::new(v[0][c], v[1][c], v[2][c]);
    SymEigen3 {
        values: order.map(|i| a[i][i]),
        vectors: order.map(column),
    }
}
