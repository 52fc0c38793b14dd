//! Benjamini–Hochberg step-up adjustment.

use crate::scalar::Scalar;

/// BH-adjusts `pvals`. Missing entries are excluded from the number of tests
/// and stay missing in the output; present entries map back to input order.
pub fn bh_adjust<T: Scalar>(pvals: &[Option<T>]) -> Vec<Option<T>> {
    let mut present: Vec<(usize, T)> = pvals
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|p| (i, p)))
        .collect();
    let m = present.len();
    let mut out = vec![None; pvals.len()];
    if m == 0 {
        return out;
    }
    present.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let m_t = T::from_usize(m).unwrap();
    let mut running = T::one();
    for (rank, &(idx, p)) in present.iter().enumerate().rev() {
        let candidate = m_t * p / T::from_usize(rank + 1).unwrap();
        running = running.min(candidate);
        // max with p only absorbs rounding in m·p/j
        out[idx] = Some(running.min(T::one()).max(p));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_example() {
        let q = bh_adjust::<f64>(&[Some(0.01), Some(0.04), Some(0.03), Some(0.002)]);
        let expected = [0.02, 0.04, 0.04, 0.008];
        for (a, b) in q.iter().zip(expected) {
            assert!((a.unwrap() - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_and_tied() {
        assert_eq!(bh_adjust(&[Some(0.3)]), vec![Some(0.3)]);
        let q = bh_adjust::<f64>(&[Some(0.2); 5]);
        assert!(q.iter().all(|x| (x.unwrap() - 0.2).abs() < 1e-15));
    }

    #[test]
    fn missing_entries_are_excluded() {
        let q = bh_adjust::<f64>(&[Some(0.01), None, Some(0.02)]);
        assert_eq!(q[1], None);
        assert!((q[0].unwrap() - 0.02).abs() < 1e-15);
        assert!((q[2].unwrap() - 0.02).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn dominates_and_preserves_order(ps in prop::collection::vec(0.0f64..=1.0, 1..60)) {
            let input: Vec<Option<f64>> = ps.iter().map(|&p| Some(p)).collect();
            let q = bh_adjust(&input);
            for (i, &p) in ps.iter().enumerate() {
                let qi = q[i].unwrap();
                prop_assert!(qi >= p && qi <= 1.0);
                for (j, &pj) in ps.iter().enumerate() {
                    if p < pj {
                        prop_assert!(qi <= q[j].unwrap());
                    }
                }
            }
        }
    }
}
