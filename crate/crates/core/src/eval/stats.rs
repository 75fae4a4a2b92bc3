//! One-way ANOVA and Tukey–Kramer pairwise comparisons.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ms_within: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(invalid("need at least two groups"));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(invalid("every group needs at least two samples"));
    }
    Ok(())
}

pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova> {
    check_groups(groups)?;
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ssb: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let (dfb, dfw) = (k - 1, n - k);
    let (msb, msw) = (ssb / dfb as f64, ssw / dfw as f64);
    // Between-group spread below rounding noise counts as zero.
    let scale = groups.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let tiny = 1e-24 * scale * scale * n as f64;
    let (f, p) = if ssb <= tiny {
        (0.0, 1.0)
    } else if ssw <= tiny {
        (f64::INFINITY, 0.0)
    } else {
        let f = msb / msw;
        let dist = FisherSnedecor::new(dfb as f64, dfw as f64).map_err(|e| invalid(e.to_string()))?;
        (f, dist.sf(f))
    };
    Ok(Anova {
        f,
        p,
        df_between: dfb,
        df_within: dfw,
        ms_within: msw,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule over `[a, b]`.
struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Distribution of the range of `k` standard normals, `P(range <= w)`.
fn range_cdf(w: f64, k: usize, zq: &Quadrature) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let v = k as f64
        * zq.integrate(|z| {
            let d = norm_cdf(z) - norm_cdf(z - w);
            norm_pdf(z) * d.max(0.0).powi(k as i32 - 1)
        });
    v.clamp(0.0, 1.0)
}

/// CDF of the studentized range with `k` means and `df` error degrees of freedom.
pub fn ptukey(q: f64, k: usize, df: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let zq = Quadrature::new(-8.5, 8.5, 34, 16);
    if df > 25_000.0 {
        return range_cdf(q, k, &zq);
    }
    // Density of s = sqrt(chi2_df / df).
    let c = 0.5 * df * df.ln() - ln_gamma(0.5 * df) - (0.5 * df - 1.0) * std::f64::consts::LN_2;
    let spread = 12.0 / (2.0 * df).sqrt();
    let (lo, hi) = ((1.0 - spread).max(0.0), 1.0 + spread.max(2.0));
    let sq = Quadrature::new(lo, hi, 48, 16);
    let v = sq.integrate(|s| {
        if s <= 0.0 {
            return 0.0;
        }
        let dens = (c + (df - 1.0) * s.ln() - 0.5 * df * s * s).exp();
        dens * range_cdf(q * s, k, &zq)
    });
    v.clamp(0.0, 1.0)
}

pub fn ptukey_sf(q: f64, k: usize, df: f64) -> f64 {
    1.0 - ptukey(q, k, df)
}

/// Upper `alpha` critical value of the studentized range, by the Illinois
/// variant of regula falsi on a doubling bracket.
pub fn qtukey(alpha: f64, k: usize, df: f64) -> f64 {
    let f = |q: f64| ptukey_sf(q, k, df) - alpha;
    let (mut a, mut b) = (0.0, 1.0);
    let (mut fa, mut fb) = (1.0 - alpha, f(b));
    while fb > 0.0 {
        (a, fa) = (b, fb);
        b *= 2.0;
        fb = f(b);
    }
    let mut side = 0;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < 1e-12 * c {
            return c;
        }
        if fc > 0.0 {
            (a, fa) = (c, fc);
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            (b, fb) = (c, fc);
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if fc.abs() < 1e-13 {
            return c;
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Debug)]
pub struct Tukey {
    pub means: Vec<f64>,
    /// `p[i][j]` adjusted p-value of groups `i` and `j`.
    pub p: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
}

/// Tukey–Kramer honestly-significant-difference test.
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<Tukey> {
    let a = anova_oneway(groups)?;
    let k = groups.len();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let mut p = vec![vec![1.0; k]; k];
    let mut significant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let diff = (means[i] - means[j]).abs();
            let se = (0.5 * a.ms_within * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let pv = if diff == 0.0 {
                1.0
            } else if se == 0.0 {
                0.0
            } else {
                ptukey_sf(diff / se, k, a.df_within as f64)
            };
            p[i][j] = pv;
            p[j][i] = pv;
            significant[i][j] = pv < alpha;
            significant[j][i] = pv < alpha;
        }
    }
    Ok(Tukey { means, p, significant })
}

/// Groups in ascending mean order joined by `<` (adjacent pair differs
/// significantly), `≤` (not significant, but the two differ in which
/// groups they are significantly separated from) or `=`.
pub fn ordering(names: &[String], t: &Tukey) -> String {
    let mut idx: Vec<usize> = (0..names.len()).collect();
    idx.sort_by(|&a, &b| t.means[a].partial_cmp(&t.means[b]).expect("finite means").then(a.cmp(&b)));
    let mut out = names[idx[0]].clone();
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let sym = if t.significant[a][b] {
            "<"
        } else if t.significant[a] != t.significant[b] {
            "≤"
        } else {
            "="
        };
        out.push_str(&format!(" {} {}", sym, names[b]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let q = Quadrature::new(0.0, 2.0, 1, 8);
        assert!((q.integrate(|x| x.powi(7)) - 32.0).abs() < 1e-12);
    }

    #[test]
    fn range_of_two_normals() {
        // Range of two standard normals is |N(0, 2)|.
        let zq = Quadrature::new(-8.5, 8.5, 34, 16);
        let w = 1.3;
        let want = 2.0 * norm_cdf(w / 2f64.sqrt()) - 1.0;
        assert!((range_cdf(w, 2, &zq) - want).abs() < 1e-10);
    }

    #[test]
    fn identical_groups() {
        let g = vec![vec![1.0, 2.0, 3.0]; 3];
        let a = anova_oneway(&g).unwrap();
        assert_eq!((a.f, a.p), (0.0, 1.0));
        let t = tukey_hsd(&g, 0.05).unwrap();
        let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        assert_eq!(ordering(&names, &t), "A = B = C");
    }
}

#[cfg(test)]
mod fixtures {
    use super::*;

    #[test]
    fn studentized_range_critical_values() {
        for &(k, df, want) in &[(3, 12.0, 3.7729), (3, 10.0, 3.8768), (4, 20.0, 3.9583), (5, 30.0, 4.1021), (3, 6.0, 4.3392)] {
            let q = qtukey(0.05, k, df);
            assert!((q - want).abs() < 2e-3, "k={} df={} q={}", k, df, q);
        }
    }

    #[test]
    fn studentized_range_tail() {
        for &(q, k, df, want) in &[(3.5, 3, 12.0, 0.069995), (2.0, 4, 20.0, 0.50544), (5.0, 5, 8.0, 0.044805)] {
            let p = ptukey_sf(q, k, df);
            assert!((p - want).abs() < 1e-4, "q={} p={}", q, p);
        }
    }

    #[test]
    fn anova_fixture() {
        let a = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![10.0, 11.0, 12.0]]).unwrap();
        assert!((a.f - 73.0).abs() < 1e-9);
        assert!((a.p - 6.1507e-5).abs() < 1e-8);
    }

    #[test]
    fn ordering_with_a_clear_winner() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![10.0, 11.0, 12.0]];
        let t = tukey_hsd(&g, 0.05).unwrap();
        let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        assert_eq!(ordering(&names, &t), "A = B < C");
    }
}
