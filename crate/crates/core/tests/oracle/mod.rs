//! Plain `Vec`-based reference implementations, written without nalgebra so
//! they share no code path with the library.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn transpose(a: &Mat) -> Mat {
    let (n, k) = (a.len(), a[0].len());
    (0..k).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), m);
    (0..n)
        .map(|i| (0..p).map(|j| (0..m).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

pub fn matvec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-12, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Normal-equation least squares: (beta, residuals, (X'X)^-1).
pub fn ols(x: &Mat, y: &[f64]) -> (Vec<f64>, Vec<f64>, Mat) {
    let xt = transpose(x);
    let xtx_inv = inverse(&matmul(&xt, x));
    let beta = matvec(&xtx_inv, &matvec(&xt, y));
    let fitted = matvec(x, &beta);
    let resid = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    (beta, resid, xtx_inv)
}

/// Heteroskedasticity-robust covariance with the n/(n-k) factor.
pub fn hc1(x: &Mat, resid: &[f64], xtx_inv: &Mat) -> Mat {
    let (n, k) = (x.len(), x[0].len());
    let mut meat = vec![vec![0.0; k]; k];
    for i in 0..n {
        let e2 = resid[i] * resid[i];
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += x[i][a] * x[i][b] * e2;
            }
        }
    }
    let v = matmul(&matmul(xtx_inv, &meat), xtx_inv);
    let f = n as f64 / (n - k) as f64;
    v.into_iter().map(|r| r.into_iter().map(|e| e * f).collect()).collect()
}
