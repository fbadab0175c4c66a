use crate::nn::Scalar;

/// Largest number of memory examples used for the reference gradient.
pub const AGEM_REF_SIZE: usize = 256;

fn dot<F: Scalar>(a: &[F], b: &[F]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.as_f64() * y.as_f64()).sum()
}

/// Remove the component of `g` that opposes `g_ref`. Returns `g` itself when
/// the two do not conflict or `g_ref` is zero.
pub fn agem_project<F: Scalar>(g: &[F], g_ref: &[F]) -> Vec<F> {
    assert_eq!(g.len(), g_ref.len(), "gradient lengths differ");
    let gr = dot(g, g_ref);
    let rr = dot(g_ref, g_ref);
    if gr >= 0.0 || rr == 0.0 {
        return g.to_vec();
    }
    let c = gr / rr;
    g.iter()
        .zip(g_ref)
        .map(|(&a, &r)| F::lift(a.as_f64() - c * r.as_f64()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    #[test]
    fn closed_form_cases() {
        assert_eq!(agem_project(&[1.0, 0.0], &[0.0, 1.0]), vec![1.0, 0.0]);
        let p = agem_project(&[1.0, 0.0], &[-1.0, 1.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(dot(&p, &[-1.0, 1.0]), 0.0);
        assert_eq!(agem_project(&[3.0, -2.0], &[0.0, 0.0]), vec![3.0, -2.0]);
    }

    proptest! {
        #[test]
        fn projection_geometry(
            pair in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1000),
        ) {
            let g: Vec<f64> = pair.iter().map(|p| p.0).collect();
            let r: Vec<f64> = pair.iter().map(|p| p.1).collect();
            let p = agem_project(&g, &r);
            let tol = 1e-6 * norm(&p) * norm(&r);
            prop_assert!(dot(&p, &r) >= -tol);
            if dot(&g, &r) >= 0.0 {
                prop_assert_eq!(&p, &g);
            } else {
                prop_assert!(dot(&p, &r).abs() <= tol.max(1e-12));
            }
            prop_assert!(norm(&p) <= norm(&g) * (1.0 + 1e-6));
            let pp = agem_project(&p, &r);
            for (a, b) in pp.iter().zip(&p) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
