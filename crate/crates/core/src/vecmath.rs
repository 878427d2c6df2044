//! Tiny fixed-size vector helpers shared by the geometric kernels.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gram–Schmidt: orthonormal basis of the complement of `normals` in R^n.
///
/// The normals must be linearly independent; the returned vectors span the
/// orthogonal complement and are deterministic for fixed input.
pub fn orthonormal_complement(normals: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in normals {
        push_orthonormal(&mut basis, v.clone());
    }
    let k = basis.len();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        push_orthonormal(&mut basis, e);
    }
    basis.split_off(k)
}

fn push_orthonormal(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>) {
    // Two passes of modified Gram-Schmidt keep the result orthogonal to 1e-16.
    for _ in 0..2 {
        for b in basis.iter() {
            let c = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    }
    let nv = norm(&v);
    if nv > 1e-6 {
        basis.push(v.into_iter().map(|x| x / nv).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal_and_orthogonal_to_normals() {
        let n1 = vec![1.0, 2.0, 0.5, -1.0];
        let n2 = vec![0.0, 1.0, 1.0, 0.0];
        let b = orthonormal_complement(&[n1.clone(), n2.clone()], 4);
        assert_eq!(b.len(), 2);
        for u in &b {
            assert!((norm(u) - 1.0).abs() < 1e-14);
            assert!(dot(u, &n1).abs() < 1e-14);
            assert!(dot(u, &n2).abs() < 1e-14);
        }
        assert!(dot(&b[0], &b[1]).abs() < 1e-14);
    }

    #[test]
    fn cross_product_is_right_handed() {
        assert_eq!(cross(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
    }
}
