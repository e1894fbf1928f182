//! Adaptive Simpson quadrature.

const MAX_DEPTH: u32 = 48;
const SCALE_PANELS: usize = 64;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn refine<F: Fn(f64) -> f64>(f: &F, p: Panel, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (p.a + p.b);
    let (lm, rm) = (0.5 * (p.a + m), 0.5 * (m + p.b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(p.a, m, p.fa, flm, p.fm);
    let right = simpson(m, p.b, p.fm, frm, p.fb);
    let delta = left + right - p.whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    refine(f, Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left }, 0.5 * eps, depth - 1)
        + refine(f, Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right }, 0.5 * eps, depth - 1)
}

/// Integral of `f` over `[a, b]` to relative tolerance `rel_tol`, signed
/// (`b < a` gives the negated integral over `[b, a]`).
///
/// The absolute target is `rel_tol` times a coarse composite-Simpson
/// estimate of the integral of `|f|`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -adaptive_simpson(f, b, a, rel_tol);
    }
    let h = (b - a) / SCALE_PANELS as f64;
    let mut total = 0.0;
    let mut scale = 0.0;
    let mut fa = f(a);
    for k in 0..SCALE_PANELS {
        let pa = a + k as f64 * h;
        let pb = if k + 1 == SCALE_PANELS { b } else { a + (k + 1) as f64 * h };
        let fm = f(0.5 * (pa + pb));
        let fb = f(pb);
        scale += simpson(pa, pb, fa.abs(), fm.abs(), fb.abs());
        fa = fb;
    }
    let eps = (rel_tol * scale).max(f64::MIN_POSITIVE) / SCALE_PANELS as f64;
    let mut fa = f(a);
    for k in 0..SCALE_PANELS {
        let pa = a + k as f64 * h;
        let pb = if k + 1 == SCALE_PANELS { b } else { a + (k + 1) as f64 * h };
        let fm = f(0.5 * (pa + pb));
        let fb = f(pb);
        let whole = simpson(pa, pb, fa, fm, fb);
        total += refine(&f, Panel { a: pa, b: pb, fa, fm, fb, whole }, eps, MAX_DEPTH);
        fa = fb;
    }
    total
}
