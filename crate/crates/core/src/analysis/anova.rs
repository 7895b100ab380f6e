//! One-way analysis of variance and the F-distribution tail it needs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Significance threshold used by the robustness study.
pub const STRICT_SIGNIFICANCE: f64 = 0.005;
/// Conventional significance threshold, reported alongside the strict one.
pub const CONVENTIONAL_SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub ss_between: f64,
    pub df_between: usize,
    pub ms_between: f64,
    pub ss_within: f64,
    pub df_within: usize,
    pub ms_within: f64,
    pub ss_total: f64,
    pub df_total: usize,
    pub f: f64,
    pub p: f64,
}

impl AnovaTable {
    /// Rows in the usual order (Source, SS, df, MS, F, Prob>F).
    pub fn to_text(&self, title: &str) -> String {
        let mut out = String::new();
        writeln!(out, "{title}").unwrap();
        writeln!(out, "{:<8} {:>14} {:>8} {:>14} {:>10} {:>10}", "Source", "SS", "df", "MS", "F", "Prob>F").unwrap();
        writeln!(
            out,
            "{:<8} {:>14.6e} {:>8} {:>14.6e} {:>10.4} {:>10.4}",
            "Columns", self.ss_between, self.df_between, self.ms_between, self.f, self.p
        )
        .unwrap();
        writeln!(out, "{:<8} {:>14.6e} {:>8} {:>14.6e}", "Error", self.ss_within, self.df_within, self.ms_within)
            .unwrap();
        writeln!(out, "{:<8} {:>14.6e} {:>8}", "Total", self.ss_total, self.df_total).unwrap();
        out
    }

    pub const CSV_HEADER: &'static str =
        "ss_between,df_between,ms_between,ss_within,df_within,ms_within,ss_total,df_total,f,p";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.ss_between,
            self.df_between,
            self.ms_between,
            self.ss_within,
            self.df_within,
            self.ms_within,
            self.ss_total,
            self.df_total,
            self.f,
            self.p
        )
    }
}

/// One-way ANOVA over `groups`. Needs at least two groups of at least two samples.
///
/// With no variation at all (every sample equal) F is defined as 0 and p as 1.
pub fn one_way_anova<S: AsRef<[f64]>>(groups: &[S]) -> Result<AnovaTable> {
    if groups.len() < 2 {
        return Err(Error::domain(format!("ANOVA needs at least 2 groups, got {}", groups.len())));
    }
    for (i, g) in groups.iter().enumerate() {
        let g = g.as_ref();
        if g.len() < 2 {
            return Err(Error::domain(format!("ANOVA group {} has {} samples; at least 2 required", i + 1, g.len())));
        }
        if let Some(v) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("ANOVA group {} contains non-finite sample {v}", i + 1)));
        }
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    let k = groups.len();
    let grand = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / n as f64;

    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let g = g.as_ref();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (mean - grand).powi(2);
        ss_within += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let ss_total = groups.iter().flat_map(|g| g.as_ref()).map(|v| (v - grand).powi(2)).sum::<f64>();

    let df_between = k - 1;
    let df_within = n - k;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let (f, p) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = ms_between / ms_within;
        (f, f_tail_probability(f, df_between as f64, df_within as f64)?)
    };
    Ok(AnovaTable {
        ss_between,
        df_between,
        ms_between,
        ss_within,
        df_within,
        ms_within,
        ss_total,
        df_total: n - 1,
        f,
        p,
    })
}

/// `P(F > f)` for the F distribution with `(df1, df2)` degrees of freedom.
pub fn f_tail_probability(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1.is_finite() && df2.is_finite() && df1 >= 1.0 && df2 >= 1.0) {
        return Err(Error::domain(format!("F distribution needs df ≥ 1, got ({df1}, {df2})")));
    }
    if f.is_nan() || f < 0.0 {
        return Err(Error::domain(format!("F statistic must be nonnegative, got {f}")));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let x = df2 / (df2 + df1 * f);
    Ok(regularized_incomplete_beta(0.5 * df2, 0.5 * df1, x).clamp(0.0, 1.0))
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The fraction converges fast for x below the mean; use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_fraction(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        for num in
            [m * (b - m) * x / ((a + m2 - 1.0) * (a + m2)), -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0))]
        {
            d = 1.0 + num * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + num / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Shape summary used to screen samples for rough normality before ANOVA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normality {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// Sample skewness (0 for a normal distribution).
    pub skewness: f64,
    /// Excess kurtosis (0 for a normal distribution).
    pub excess_kurtosis: f64,
}

pub fn normality(samples: &[f64]) -> Result<Normality> {
    if samples.len() < 2 {
        return Err(Error::domain("normality summary needs at least 2 samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m = |k: i32| samples.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let m2 = m(2);
    let (skewness, excess_kurtosis) = if m2 > 0.0 { (m(3) / m2.powf(1.5), m(4) / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
    Ok(Normality { n: samples.len(), mean, std_dev: (m2 * n / (n - 1.0)).sqrt(), skewness, excess_kurtosis })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_table() {
        let t = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        assert!((t.ss_between - 1.5).abs() < 1e-12);
        assert!((t.ss_within - 4.0).abs() < 1e-12);
        assert_eq!((t.df_between, t.df_within, t.df_total), (1, 4, 5));
        assert!((t.f - 1.5).abs() < 1e-12);
        assert!((t.p - 0.2877).abs() < 1e-3, "{}", t.p);
    }

    #[test]
    fn identical_groups_are_degenerate() {
        let t = one_way_anova(&[vec![2.0; 3], vec![2.0; 3], vec![2.0; 3]]).unwrap();
        assert_eq!((t.f, t.p), (0.0, 1.0));
        assert_eq!((t.ss_between, t.ss_within, t.ss_total), (0.0, 0.0, 0.0));
        // Same samples in every group: no between-group effect.
        let t = one_way_anova(&[vec![1.0, 5.0], vec![1.0, 5.0]]).unwrap();
        assert_eq!((t.f, t.p), (0.0, 1.0));
    }

    #[test]
    fn separated_groups_are_significant() {
        let t = one_way_anova(&[vec![0.0, 0.1, -0.1, 0.05], vec![100.0, 100.1, 99.9, 100.05]]).unwrap();
        assert!(t.p < 1e-6);
    }

    #[test]
    fn rejects_bad_groups() {
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, f64::NAN], vec![3.0, 4.0]]).is_err());
    }

    #[test]
    fn tail_limits() {
        assert_eq!(f_tail_probability(0.0, 3.0, 10.0).unwrap(), 1.0);
        assert!(f_tail_probability(1e12, 3.0, 10.0).unwrap() < 1e-12);
        assert_eq!(f_tail_probability(f64::INFINITY, 3.0, 10.0).unwrap(), 0.0);
        assert!(f_tail_probability(1.0, 0.5, 10.0).is_err());
        assert!(f_tail_probability(-1.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn normality_of_symmetric_sample() {
        let s: Vec<f64> = (-50..=50).map(|i| i as f64).collect();
        let n = normality(&s).unwrap();
        assert!(n.mean.abs() < 1e-12 && n.skewness.abs() < 1e-12);
        // Uniform distribution: excess kurtosis near -1.2.
        assert!((n.excess_kurtosis + 1.2).abs() < 0.01);
    }
}
