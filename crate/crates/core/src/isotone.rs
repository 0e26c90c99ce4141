//! Pool-adjacent-violators projection onto the nondecreasing cone.

/// Projects `y` onto { x : x_1 <= x_2 <= ... <= x_n } in the Euclidean
/// metric (uniform weights), in place. Standard stack-based PAV.
pub fn project_isotone(y: &mut [f64]) {
    let n = y.len();
    if n <= 1 {
        return;
    }
    // Blocks of (mean, count), merged while the means violate monotonicity.
    let mut means: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for &value in y.iter() {
        let mut mean = value;
        let mut count = 1usize;
        while let Some(&prev) = means.last() {
            if prev <= mean {
                break;
            }
            let prev_count = *counts.last().unwrap();
            mean = (prev * prev_count as f64 + mean * count as f64)
                / (prev_count + count) as f64;
            count += prev_count;
            means.pop();
            counts.pop();
        }
        means.push(mean);
        counts.push(count);
    }
    let mut idx = 0;
    for (mean, count) in means.iter().zip(counts.iter()) {
        for _ in 0..*count {
            y[idx] = *mean;
            idx += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_projection(y: &[f64]) -> Vec<f64> {
        // The projection is piecewise constant on a partition into blocks,
        // each at its data mean. Enumerate every partition of the index
        // range, keep the monotone-feasible ones, take the best objective.
        let n = y.len();
        assert!(n <= 16);
        let mut best = (f64::INFINITY, y.to_vec());
        for mask in 0..(1u32 << (n - 1)) {
            let mut x = Vec::with_capacity(n);
            let mut start = 0;
            for end in 0..n {
                let boundary = end == n - 1 || (mask >> end) & 1 == 1;
                if boundary {
                    let mean =
                        y[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
                    for _ in start..=end {
                        x.push(mean);
                    }
                    start = end + 1;
                }
            }
            if x.windows(2).all(|w| w[0] <= w[1] + 1e-12) {
                let obj: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if obj < best.0 {
                    best = (obj, x);
                }
            }
        }
        best.1
    }

    #[test]
    fn already_sorted_is_fixed_point() {
        let mut y = vec![1.0, 2.0, 3.5, 3.5, 7.0];
        let orig = y.clone();
        project_isotone(&mut y);
        assert_eq!(y, orig);
    }

    #[test]
    fn two_violators_pool_to_mean() {
        let mut y = vec![2.0, 0.0];
        project_isotone(&mut y);
        assert_eq!(y, vec![1.0, 1.0]);
    }

    #[test]
    fn projection_is_monotone_and_optimal_on_random_input() {
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..50 {
            let y: Vec<f64> = (0..20).map(|_| 10.0 * next()).collect();
            let mut x = y.clone();
            project_isotone(&mut x);
            for w in x.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
            // KKT: for every split point, the pooled prefix sums must satisfy
            // sum(x - y) over any suffix of a block >= 0 and = 0 per block.
            // Cheap sufficient check: compare objective against many isotone
            // candidates obtained by perturbing block boundaries.
            let obj = |x: &[f64]| -> f64 {
                x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum()
            };
            let base = obj(&x);
            for i in 0..x.len() {
                for delta in [-1e-3, 1e-3] {
                    let mut z = x.clone();
                    z[i] += delta;
                    let feasible = z.windows(2).all(|w| w[0] <= w[1]);
                    if feasible {
                        assert!(obj(&z) >= base - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn matches_descent_oracle_on_small_instance() {
        let y = vec![3.0, 1.0, 2.0, -1.0, 0.0];
        let mut x = y.clone();
        project_isotone(&mut x);
        let oracle = brute_force_projection(&y);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "pav {a} vs oracle {b}");
        }
    }
}
