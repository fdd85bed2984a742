//! One-way ANOVA and the Tukey HSD post-hoc test.
//!
//! The F-distribution tail comes from a regularized incomplete beta
//! implemented here (Lanczos log-gamma plus the standard continued
//! fraction); the studentized-range critical value is a seeded Monte-Carlo
//! quantile, since exact tables for arbitrary degrees of freedom are
//! impractical to embed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {need} groups, got {got}")]
    NotEnoughGroups { need: usize, got: usize },
    #[error("group {group} needs at least 2 samples, got {got}")]
    NotEnoughSamples { group: usize, got: usize },
    #[error("non-finite sample in group {group}")]
    NonFinite { group: usize },
}

/// Number of Monte-Carlo draws for the studentized-range quantile.
pub const TUKEY_MC_DRAWS: usize = 1_000_000;
const TUKEY_MC_SEED: u64 = 0x7u64 << 32 | 0x5EED;

fn validate(groups: &[Vec<f64>], min_groups: usize) -> Result<(), StatsError> {
    if groups.len() < min_groups {
        return Err(StatsError::NotEnoughGroups {
            need: min_groups,
            got: groups.len(),
        });
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(StatsError::NotEnoughSamples { group: i, got: g.len() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { group: i });
        }
    }
    Ok(())
}

/// Standard between/within decomposition. Returns `(F, p)` where `p` is the
/// upper tail of the F distribution with `(k-1, N-k)` degrees of freedom.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<(f64, f64), StatsError> {
    validate(groups, 2)?;
    let k = groups.len();
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand: f64 = groups.iter().flatten().sum::<f64>() / n_total as f64;

    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let mean: f64 = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand) * (mean - grand);
        ssw += g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let dfb = (k - 1) as f64;
    let dfw = (n_total - k) as f64;

    if ssw == 0.0 {
        return Ok(if ssb == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        });
    }
    let f = (ssb / dfb) / (ssw / dfw);
    let p = f_upper_tail(f, dfb, dfw);
    Ok((f, p))
}

/// `P(F(d1, d2) > f)` through the regularized incomplete beta.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Lanczos approximation of `ln Gamma(x)` for `x > 0`.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_5e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000_000_000_190_015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Continued fraction for the incomplete beta (Lentz's method).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_IT: usize = 200;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_IT {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// Pairwise Tukey HSD table. `diffs[i][j]` is `mean_i - mean_j`.
#[derive(Clone, Debug)]
pub struct TukeyResult {
    pub means: Vec<f64>,
    pub diffs: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
    pub q_critical: f64,
    pub alpha: f64,
    pub df_within: usize,
    pub ms_within: f64,
}

/// Tukey HSD with a Monte-Carlo studentized-range critical value
/// (Tukey-Kramer standard errors for unequal group sizes).
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<TukeyResult, StatsError> {
    validate(groups, 2)?;
    let k = groups.len();
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let df = n_total - k;
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .sum();
    let msw = ssw / df as f64;

    let q_critical = studentized_range_quantile(1.0 - alpha, k, df, TUKEY_MC_DRAWS);

    let mut diffs = vec![vec![0.0; k]; k];
    let mut significant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let diff = means[i] - means[j];
            diffs[i][j] = diff;
            let se =
                (msw / 2.0 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            significant[i][j] = if se == 0.0 {
                diff != 0.0
            } else {
                (diff / se).abs() > q_critical
            };
        }
    }
    Ok(TukeyResult {
        means,
        diffs,
        significant,
        q_critical,
        alpha,
        df_within: df,
        ms_within: msw,
    })
}

/// Seeded Monte-Carlo `p`-quantile of the studentized range
/// `(max Z - min Z) / sqrt(chi2_df / df)` over `k` standard normals.
pub fn studentized_range_quantile(p: f64, k: usize, df: usize, draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(TUKEY_MC_SEED);
    let chi2 = Gamma::new(df as f64 / 2.0, 2.0).expect("df > 0");
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..k {
            let z: f64 = StandardNormal.sample(&mut rng);
            lo = lo.min(z);
            hi = hi.max(z);
        }
        let s2 = chi2.sample(&mut rng) / df as f64;
        samples.push((hi - lo) / s2.sqrt());
    }
    let idx = ((p * draws as f64) as usize).min(draws - 1);
    let (_, q, _) = samples.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap());
    *q
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    fn example_groups() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 3.0, 4.0],
            vec![3.0, 4.0, 5.0],
        ]
    }

    #[test]
    fn f_statistic_hand_computation() {
        // SSB = 3*((2-3)^2 + 0 + (4-3)^2) = 6 over df 2; SSW = 6 over df 6.
        let (f, p) = anova_oneway(&example_groups()).unwrap();
        assert!((f - 3.0).abs() < 1e-9, "F = {f}");
        // P(F(2,6) > 3) = I_{0.5}(3, 1) = 0.5^3 = 0.125
        assert!((p - 0.125).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn p_value_matches_f_cdf_oracle() {
        let oracle = |f: f64, d1: f64, d2: f64| 1.0 - FisherSnedecor::new(d1, d2).unwrap().cdf(f);
        for (f, d1, d2) in [
            (3.0, 2.0, 6.0),
            (1.0, 4.0, 40.0),
            (10.0, 1.0, 10.0),
            (0.5, 3.0, 17.0),
            (81_244.0, 5.0, 400.0),
        ] {
            let got = f_upper_tail(f, d1, d2);
            let want = oracle(f, d1, d2);
            assert!(
                (got - want).abs() < 1e-9,
                "F={f} d1={d1} d2={d2}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn identical_groups_give_f_zero_p_one() {
        let g = vec![vec![1.0, 2.0, 3.0]; 4];
        let (f, p) = anova_oneway(&g).unwrap();
        assert_eq!(f, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn f_invariant_to_shift_and_scale() {
        let base = example_groups();
        let (f0, _) = anova_oneway(&base).unwrap();
        for (shift, scale) in [(5.0, 1.0), (0.0, 7.5), (-3.25, 0.4)] {
            let moved: Vec<Vec<f64>> = base
                .iter()
                .map(|g| g.iter().map(|v| v * scale + shift).collect())
                .collect();
            let (f, _) = anova_oneway(&moved).unwrap();
            assert!((f - f0).abs() < 1e-9, "shift {shift} scale {scale}: {f}");
        }
    }

    #[test]
    fn anova_preconditions() {
        assert!(matches!(
            anova_oneway(&[vec![1.0, 2.0]]),
            Err(StatsError::NotEnoughGroups { .. })
        ));
        assert!(matches!(
            anova_oneway(&[vec![1.0, 2.0], vec![3.0]]),
            Err(StatsError::NotEnoughSamples { .. })
        ));
    }

    #[test]
    fn tukey_separated_groups_flagged() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..50).map(|_| 10.0 + rng.random_range(-2.0..2.0)).collect();
        let r = tukey_hsd(&[a, b], 0.05).unwrap();
        assert!(r.significant[0][1]);
        assert!(r.significant[1][0]);
        assert!((r.diffs[0][1] + r.diffs[1][0]).abs() < 1e-12);
    }

    #[test]
    fn tukey_identical_groups_not_significant() {
        let g = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
        let r = tukey_hsd(&g, 0.05).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r.diffs[i][j], 0.0);
                assert!(!r.significant[i][j]);
            }
        }
    }

    #[test]
    fn tukey_table_is_antisymmetric() {
        let groups = vec![
            vec![1.0, 1.5, 0.5, 1.2],
            vec![2.0, 2.5, 1.5, 2.2],
            vec![0.2, 0.4, 0.1, 0.3],
        ];
        let r = tukey_hsd(&groups, 0.05).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r.diffs[i][j], -r.diffs[j][i]);
                assert_eq!(r.significant[i][j], r.significant[j][i]);
            }
        }
    }

    #[test]
    fn studentized_range_quantile_near_reference() {
        // q(0.95, k=3, df=10) = 3.88 from standard tables.
        let q = studentized_range_quantile(0.95, 3, 10, 200_000);
        assert!((q - 3.88).abs() < 0.05, "q = {q}");
    }
}
