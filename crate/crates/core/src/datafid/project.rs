//! Euclidean projections onto the coefficient constraint sets.

/// Least-squares nondecreasing fit with unit weights (pool adjacent violators).
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        let m = s / c as f64;
        out.extend(std::iter::repeat_n(m, c));
    }
    out
}

/// Projection onto `{0 <= ξ_1 <= ... <= ξ_n}`.
pub fn project_monotone_nonneg(values: &[f64]) -> Vec<f64> {
    // isotonic fit then clip: clipping an isotonic fit to a bound is the
    // bounded isotonic solution
    isotonic(values).into_iter().map(|v| v.max(0.0)).collect()
}

/// Projection onto `{ξ : 0 <= ξ_k - ξ_{k-1} <= delta}` with the anchor
/// `ξ_0 = 0` held fixed (it is not part of `values`). An infinite `delta`
/// reduces to [`project_monotone_nonneg`].
///
/// Dykstra's method alternating between the odd and the even increment
/// constraints; each of those sets splits into disjoint pairs with a closed
/// form projection. A final forward sweep removes residual infeasibility.
pub fn project_bounded_increments(values: &[f64], delta: f64) -> Vec<f64> {
    if delta == f64::INFINITY {
        return project_monotone_nonneg(values);
    }
    if is_feasible(values, delta) {
        return values.to_vec();
    }
    let n = values.len() + 1;
    let mut x: Vec<f64> = std::iter::once(0.0).chain(values.iter().copied()).collect();
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    let scale = values.iter().fold(delta, |m, v| m.max(v.abs()));
    for _ in 0..200_000 {
        let mut y: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        project_pairs(&mut y, 1, delta);
        p.iter_mut().zip(x.iter().zip(&y)).for_each(|(pi, (xi, yi))| *pi += xi - yi);
        let mut next: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        project_pairs(&mut next, 2, delta);
        q.iter_mut().zip(y.iter().zip(&next)).for_each(|(qi, (yi, ni))| *qi += yi - ni);
        let change = x.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = next;
        if change <= 1e-15 * scale {
            break;
        }
    }
    for k in 1..n {
        x[k] = x[k].clamp(x[k - 1], x[k - 1] + delta);
    }
    x.split_off(1)
}

/// Exact monotonicity; the increment bound up to the rounding left by the
/// final sweep, which keeps the projection idempotent.
fn is_feasible(values: &[f64], delta: f64) -> bool {
    let mut prev = 0.0;
    values.iter().all(|&v| {
        let d = v - prev;
        prev = v;
        d >= 0.0 && d <= delta * (1.0 + 1e-12)
    })
}

/// Projects every pair `(x_{k-1}, x_k)` with `k = first, first + 2, ...`
/// onto `0 <= x_k - x_{k-1} <= delta`; `x_0` is immovable.
fn project_pairs(x: &mut [f64], first: usize, delta: f64) {
    for k in (first..x.len()).step_by(2) {
        let d = x[k] - x[k - 1];
        let excess = if d < 0.0 { d } else if d > delta { d - delta } else { continue };
        if k == 1 {
            x[k] -= excess;
        } else {
            x[k - 1] += 0.5 * excess;
            x[k] -= 0.5 * excess;
        }
    }
}

/// Projection of one column `ξ_{-N..N, j}` onto "nondecreasing with
/// `ξ_{j,j} = 0`" and increments at most `delta`.
pub(crate) fn project_column_with_zero(col: &[f64], zero_at: usize, delta: f64) -> Vec<f64> {
    // below the anchor: u_k = -ξ_{j-k} has the same anchored increments
    let below: Vec<f64> = col[..zero_at].iter().rev().map(|v| -v).collect();
    let mut out: Vec<f64> = project_bounded_increments(&below, delta).into_iter().rev().map(|v| -v).collect();
    out.push(0.0);
    out.extend(project_bounded_increments(&col[zero_at + 1..], delta));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    /// Brute-force projection onto the monotone cone: the optimum is constant
    /// on blocks of a partition, so enumerate all compositions.
    fn brute_isotonic(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << (n - 1)) {
            let mut fit = Vec::with_capacity(n);
            let mut start = 0;
            for i in 0..n {
                let cut = i == n - 1 || mask & (1 << i) != 0;
                if cut {
                    let m = v[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                    fit.extend(std::iter::repeat_n(m, i + 1 - start));
                    start = i + 1;
                }
            }
            if fit.windows(2).any(|w| w[0] > w[1] + 1e-12) {
                continue;
            }
            let d: f64 = fit.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, fit));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn pav_example() {
        assert_eq!(isotonic(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(brute_isotonic(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn pav_matches_brute_force() {
        let mut r = rng::stream(4, "pav");
        for _ in 0..200 {
            let n = r.gen_range(1..8);
            let v: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
            let a = isotonic(&v);
            let b = brute_isotonic(&v);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bounded_projection_beats_clip_first() {
        // (1, -3): the nearest point of {0 <= a <= b} is the origin
        assert_eq!(project_monotone_nonneg(&[1.0, -3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive() {
        let mut r = rng::stream(5, "proj");
        for _ in 0..200 {
            let n = r.gen_range(1..10);
            let v: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
            let p = project_monotone_nonneg(&v);
            assert_eq!(project_monotone_nonneg(&p), p);
            // any feasible point is no farther from p than from v
            let mut f: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..2.0)).collect();
            f.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let dp: f64 = p.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum();
            let dv: f64 = v.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(dp <= dv + 1e-12);
        }
    }

    #[test]
    fn column_projection_has_zero_and_monotone() {
        let col = [0.5, -1.0, 2.0, -0.3, 0.1];
        let p = project_column_with_zero(&col, 2, f64::INFINITY);
        assert_eq!(p[2], 0.0);
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
        let b = project_column_with_zero(&col, 2, 0.25);
        assert_eq!(b[2], 0.0);
        assert!(b.windows(2).all(|w| w[0] <= w[1] && w[1] - w[0] <= 0.25 + 1e-15));
    }

    fn random_feasible(r: &mut crate::rng::Rng, n: usize, delta: f64) -> Vec<f64> {
        let mut acc = 0.0;
        (0..n)
            .map(|_| {
                acc += if r.gen_bool(0.3) { [0.0, delta][r.gen_range(0..2)] } else { r.gen_range(0.0..delta) };
                acc
            })
            .collect()
    }

    /// Variational characterization of the projection onto a convex set:
    /// `<v - P v, w - P v> <= 0` for every feasible `w`.
    #[test]
    fn bounded_increments_satisfy_the_projection_inequality() {
        let mut r = rng::stream(6, "incr");
        for _ in 0..100 {
            let n = r.gen_range(1..32);
            let delta = r.gen_range(0.05..0.5);
            let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..3.0)).collect();
            let p = project_bounded_increments(&v, delta);
            assert!(is_feasible(&p, delta * (1.0 + 1e-12)), "{p:?}");
            for _ in 0..50 {
                let w = random_feasible(&mut r, n, delta);
                let ip: f64 = v.iter().zip(&p).zip(&w).map(|((vi, pi), wi)| (vi - pi) * (wi - pi)).sum();
                assert!(ip <= 1e-9, "inner product {ip}");
            }
        }
    }

    #[test]
    fn bounded_increments_fix_feasible_points_and_match_the_unbounded_case() {
        let mut r = rng::stream(7, "incr");
        for _ in 0..50 {
            let n = r.gen_range(1..20);
            let f = random_feasible(&mut r, n, 0.2);
            assert_eq!(project_bounded_increments(&f, 0.2), f);
            let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            assert_eq!(project_bounded_increments(&v, f64::INFINITY), project_monotone_nonneg(&v));
            // a bound wider than every increment of the monotone fit is inactive
            let m = project_monotone_nonneg(&v);
            let wide = project_bounded_increments(&v, 10.0);
            assert!(m.iter().zip(&wide).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn bounded_increments_two_point_example() {
        // one coefficient: clamp onto [0, delta]
        assert_eq!(project_bounded_increments(&[0.7], 0.5), vec![0.5]);
        // (0.1, 1.1) with delta 0.5: second increment 1.0 splits evenly -> (0.35, 0.85)
        let p = project_bounded_increments(&[0.1, 1.1], 0.5);
        assert!((p[0] - 0.35).abs() < 1e-12 && (p[1] - 0.85).abs() < 1e-12, "{p:?}");
    }
}
