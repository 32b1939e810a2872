//! Order statistics used in aggregation.

/// Nearest-rank percentile `q` in `[0, 100]`: the smallest value such that at
/// least `q` percent of the sample is less than or equal to it.
/// Returns `None` for an empty sample.
pub fn nearest_rank(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_examples() {
        let v = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(nearest_rank(&v, 5.0), Some(15.0));
        assert_eq!(nearest_rank(&v, 30.0), Some(20.0));
        assert_eq!(nearest_rank(&v, 40.0), Some(20.0));
        assert_eq!(nearest_rank(&v, 50.0), Some(35.0));
        assert_eq!(nearest_rank(&v, 100.0), Some(50.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
        assert_eq!(mean(&[1.0, 2.0]), Some(1.5));
    }

    /// Counting definition, independent of the sort-and-index shortcut.
    fn by_counting(values: &[f64], q: f64) -> f64 {
        let n = values.len() as f64;
        let mut candidates = values.to_vec();
        candidates.sort_by(f64::total_cmp);
        *candidates
            .iter()
            .find(|&&c| values.iter().filter(|&&v| v <= c).count() as f64 >= q / 100.0 * n)
            .unwrap()
    }

    proptest! {
        #[test]
        fn matches_counting_definition(
            values in proptest::collection::vec(-1e3f64..1e3, 1..60),
            q in prop_oneof![Just(25.0), Just(75.0), 1.0f64..100.0],
        ) {
            prop_assert_eq!(nearest_rank(&values, q).unwrap(), by_counting(&values, q));
        }

        #[test]
        fn mean_lies_in_band_bounds(values in proptest::collection::vec(-1e3f64..1e3, 1..60)) {
            let lo = nearest_rank(&values, 0.0).unwrap();
            let hi = nearest_rank(&values, 100.0).unwrap();
            let m = mean(&values).unwrap();
            prop_assert!(lo - 1e-9 <= m && m <= hi + 1e-9);
        }
    }
}
