//! Gauss–Legendre rules, tanh-mapped rules for flat bumps, Halton points and
//! a deterministic hash used by the random presets.

use parking_lot::RwLock;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

/// Nodes and weights of the `order`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(order: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(r) = cache.read().get(&order) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(order));
    cache.write().insert(order, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            return (vec![0.0], vec![2.0]);
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss nodes mapped to `[a, b]`, appended to `out` as (node, weight).
pub fn gauss_on(a: f64, b: f64, order: usize, out: &mut Vec<(f64, f64)>) {
    let rule = gauss_legendre(order);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    for (x, w) in rule.0.iter().zip(rule.1.iter()) {
        out.push((c + r * x, r * w));
    }
}

/// Composite Gauss rule on `[a, b]` with `pieces` equal panels plus extra
/// breakpoints (which are sorted and clipped to the interval).
pub fn composite(a: f64, b: f64, pieces: usize, breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = (0..=pieces)
        .map(|i| a + (b - a) * i as f64 / pieces as f64)
        .collect();
    cuts.extend(breaks.iter().copied().filter(|v| *v > a && *v < b));
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + x.abs()));
    let mut out = Vec::with_capacity(order * cuts.len());
    for win in cuts.windows(2) {
        if win[1] > win[0] {
            gauss_on(win[0], win[1], order, &mut out);
        }
    }
    out
}

/// Half-width of the tanh-mapped window: `exp(-cosh²w)` is below 1e-16
/// beyond it, so bumps of the form `exp(-1/(1-z²))` lose nothing there.
pub const TANH_WINDOW: f64 = 2.5;

/// Rule on (-1, 1) through `z = tanh w`, `w ∈ [-W, W]`, split at the images
/// of `breaks`. Returns (z, dz weight). Flat bumps become rapidly
/// decaying analytic integrands, so Gauss converges geometrically.
pub fn tanh_rule(breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let wb: Vec<f64> = breaks
        .iter()
        .filter(|z| z.abs() < 1.0)
        .map(|z| z.atanh())
        .filter(|w| w.abs() < TANH_WINDOW)
        .collect();
    composite(-TANH_WINDOW, TANH_WINDOW, 1, &wb, order)
        .into_iter()
        .map(|(w, dw)| {
            let c = w.cosh();
            (w.tanh(), dw / (c * c))
        })
        .collect()
}

/// [`tanh_rule`] without breaks, cached per order.
pub fn tanh_rule_plain(order: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(r) = cache.read().get(&order) {
        return r.clone();
    }
    let r = Arc::new(tanh_rule(&[], order));
    cache.write().insert(order, r.clone());
    r
}

/// Radical-inverse (van der Corput) value of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Point `i` of the Halton sequence in `dim ≤ 4` dimensions (bases 2,3,5,7).
pub fn halton(i: u64, dim: usize) -> [f64; 4] {
    const BASES: [u64; 4] = [2, 3, 5, 7];
    let mut p = [0.0; 4];
    for (d, slot) in p.iter_mut().enumerate().take(dim.min(4)) {
        *slot = radical_inverse(i + 1, BASES[d]);
    }
    p
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic uniform value in [0, 1) from a tuple of integers.
pub fn hash_unit(parts: &[i64]) -> f64 {
    let mut h = 0x1234_5678_9abc_def0u64;
    for p in parts {
        h = splitmix64(h ^ (*p as u64));
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials() {
        for n in [1usize, 2, 4, 7, 16] {
            let r = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let s: f64 = r.0.iter().zip(&r.1).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn tanh_rule_is_exact_enough_for_bumps() {
        let bump = |z: f64| if z.abs() < 1.0 { (-1.0 / (1.0 - z * z)).exp() } else { 0.0 };
        let lo: f64 = tanh_rule(&[], 24).iter().map(|(z, w)| w * bump(*z)).sum();
        let hi: f64 = tanh_rule(&[0.3], 48).iter().map(|(z, w)| w * bump(*z)).sum();
        // ∫ exp(-1/(1-z²)) dz over (-1,1)
        assert!((lo - 0.443_993_816_168_079_4).abs() < 1e-10);
        assert!((hi - 0.443_993_816_168_079_4).abs() < 1e-13);
    }

    #[test]
    fn halton_in_unit_cube() {
        for i in 0..100 {
            let p = halton(i, 3);
            assert!(p[..3].iter().all(|v| (0.0..1.0).contains(v)));
        }
        assert_eq!(halton(0, 1)[0], 0.5);
    }
}
