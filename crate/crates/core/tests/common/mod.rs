//! Reference computations that share no code with the library pipeline.

#![allow(dead_code)]

use num_complex::Complex64;

use bdp_integral::modelspec::Rates;

/// Generator of a finite chain `0..=cap` with `rates`, as (sub, diag, super)
/// diagonals of `sI − Q`.
fn resolvent_bands<R: Rates>(rates: &R, cap: usize, s: Complex64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let n = cap + 1;
    let mut sub = vec![Complex64::new(0.0, 0.0); n];
    let mut diag = vec![Complex64::new(0.0, 0.0); n];
    let mut sup = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let lam = if k < cap { rates.birth(k) } else { 0.0 };
        let mu = if k > 0 { rates.death(k) } else { 0.0 };
        diag[k] = s + lam + mu;
        if k > 0 {
            sub[k] = Complex64::new(-mu, 0.0);
        }
        if k < cap {
            sup[k] = Complex64::new(-lam, 0.0);
        }
    }
    (sub, diag, sup)
}

/// Column `j` of `(sI − Q)⁻¹` for the chain truncated at `cap`, by the
/// Thomas algorithm; entry `i` is the transform of `P_ij`.
pub fn resolvent_column<R: Rates>(rates: &R, cap: usize, j: usize, s: Complex64) -> Vec<Complex64> {
    let (sub, diag, sup) = resolvent_bands(rates, cap, s);
    let n = cap + 1;
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    rhs[j] = Complex64::new(1.0, 0.0);
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for k in 1..n {
        let m = diag[k] - sub[k] * c[k - 1];
        c[k] = sup[k] / m;
        d[k] = (rhs[k] - sub[k] * d[k - 1]) / m;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    x[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    x
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Row `i` of `exp(Qt)` for the chain on `0..=cap`, by uniformization.
pub fn transient_row<R: Rates>(rates: &R, cap: usize, i: usize, t: f64) -> Vec<f64> {
    let n = cap + 1;
    let out = |k: usize| {
        let lam = if k < cap { rates.birth(k) } else { 0.0 };
        let mu = if k > 0 { rates.death(k) } else { 0.0 };
        (lam, mu)
    };
    let q = (0..n).map(|k| { let (l, m) = out(k); l + m }).fold(0.0, f64::max).max(1e-300);
    // v ← v P with P = I + Q/q, accumulated with Poisson(qt) weights
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    let mut acc = vec![0.0; n];
    let qt = q * t;
    let mut log_w = -qt;
    let mut k = 0usize;
    loop {
        let w = log_w.exp();
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += w * x;
        }
        if (k as f64) > qt && w < 1e-18 {
            break;
        }
        if k > 10_000_000 {
            panic!("uniformization did not converge");
        }
        let mut next = vec![0.0; n];
        for s in 0..n {
            if v[s] == 0.0 {
                continue;
            }
            let (l, m) = out(s);
            next[s] += v[s] * (1.0 - (l + m) / q);
            if l > 0.0 {
                next[s + 1] += v[s] * l / q;
            }
            if m > 0.0 {
                next[s - 1] += v[s] * m / q;
            }
        }
        v = next;
        k += 1;
        log_w += qt.ln() - (k as f64).ln();
    }
    acc
}

/// Complex points on a contour `Re s = σ`, spread in the imaginary part.
pub fn contour(sigma: f64, count: usize, spread: f64) -> Vec<Complex64> {
    (0..count)
        .map(|k| {
            let u = k as f64 / (count - 1).max(1) as f64 - 0.5;
            Complex64::new(sigma, spread * u.signum() * u.abs().powf(1.5) * 2.0)
        })
        .collect()
}

/// `I_n(x)` from `(1/π)∫₀^π e^{x cos θ} cos nθ dθ`, scaled by `e^{−x}`. The
/// trapezoid rule is spectrally accurate for this periodic integrand.
pub fn scaled_bessel_i(n: u32, x: f64) -> f64 {
    let m = 2000 + 4 * x.ceil() as usize;
    let h = std::f64::consts::PI / m as f64;
    let f = |th: f64| (x * (th.cos() - 1.0)).exp() * (n as f64 * th).cos();
    let inner: f64 = (1..m).map(|k| f(k as f64 * h)).sum();
    (inner + 0.5 * (f(0.0) + f(std::f64::consts::PI))) * h / std::f64::consts::PI
}

/// Density of the area under a linear birth-death path until extinction.
pub fn kendall_density(lambda: f64, mu: f64, i: u32, w: f64) -> f64 {
    let x = 2.0 * w * (lambda * mu).sqrt();
    let ln_prefactor = (i as f64 / w).ln() - (lambda + mu) * w + x + 0.5 * i as f64 * (mu / lambda).ln();
    ln_prefactor.exp() * scaled_bessel_i(i, x)
}

/// A finite chain stored as explicit rate tables on `0..=cap`.
pub struct TableChain {
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
}

impl TableChain {
    /// Rates divided by a per-state reward, with `absorbing` states given
    /// zero rates; states `0..=cap`.
    pub fn scaled(
        birth: impl Fn(usize) -> f64,
        death: impl Fn(usize) -> f64,
        reward: impl Fn(usize) -> f64,
        absorbing: &[usize],
        cap: usize,
    ) -> Self {
        let mut b = vec![0.0; cap + 1];
        let mut d = vec![0.0; cap + 1];
        for n in 0..=cap {
            if absorbing.contains(&n) {
                continue;
            }
            let g = reward(n);
            b[n] = if n < cap { birth(n) / g } else { 0.0 };
            d[n] = if n > 0 { death(n) / g } else { 0.0 };
        }
        Self { birth: b, death: d }
    }

    pub fn cap(&self) -> usize {
        self.birth.len() - 1
    }
}

impl Rates for TableChain {
    fn birth(&self, n: usize) -> f64 {
        self.birth.get(n).copied().unwrap_or(0.0)
    }

    fn death(&self, n: usize) -> f64 {
        self.death.get(n).copied().unwrap_or(0.0)
    }

    fn state_cap(&self) -> Option<usize> {
        Some(self.cap())
    }
}
