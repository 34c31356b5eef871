//! Separation quality metrics in the BSS-eval style.
//!
//! The decomposition projects an estimate onto the target source and
//! onto the span of all true sources (allowed distortion is a scaling,
//! no time-invariant filter), splitting it into target, interference,
//! and artifact parts that resum to the estimate.

mod kde;
mod ttest;

pub use kde::{kde, KdeCurve};
pub use ttest::{paired_ttest, student_t_cdf, TTestResult};

use crate::dsp::SignalBuffer;
use crate::error::{Error, Result};
use crate::perm::{enumerate_permutations, Permutation};

/// dB cap standing in for infinite ratios.
pub const DB_CLIP: f64 = 200.0;

/// Denominator floor below which a ratio is treated as infinite.
const POWER_FLOOR: f64 = 1e-30;

/// Per-source metrics in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceEval {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

/// Metrics for every source under the best output-to-target assignment.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Indexed by target source; entry `s` scores the estimate assigned
    /// to true source `s`.
    pub per_source: Vec<SourceEval>,
    /// Output-to-target assignment that maximized mean SDR.
    pub chosen_permutation: Permutation,
}

impl EvalReport {
    pub fn mean_sdr(&self) -> f64 {
        self.per_source.iter().map(|e| e.sdr_db).sum::<f64>() / self.per_source.len() as f64
    }

    pub fn mean_sir(&self) -> f64 {
        self.per_source.iter().map(|e| e.sir_db).sum::<f64>() / self.per_source.len() as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_alignment(estimate: &SignalBuffer, true_sources: &[SignalBuffer]) -> Result<()> {
    if true_sources.is_empty() {
        return Err(Error::InvalidArgument("need at least one true source".into()));
    }
    for s in true_sources {
        if s.len() != estimate.len() || s.sample_rate != estimate.sample_rate {
            return Err(Error::Shape(
                "estimate and true sources must share length and sample rate".into(),
            ));
        }
    }
    Ok(())
}

/// Solves the small Gram system `G a = b` by Gaussian elimination with
/// partial pivoting; a vanishing pivot means the sources are linearly
/// dependent.
fn solve_gram(mut g: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = g
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &bb| g[a][col].abs().total_cmp(&g[bb][col].abs()))
            .unwrap();
        if g[pivot_row][col].abs() < 1e-12 * scale {
            return Err(Error::Data(
                "true sources are linearly dependent; decomposition is ill-posed".into(),
            ));
        }
        g.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let f = g[row][col] / g[col][col];
            for k in col..n {
                g[row][k] -= f * g[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= g[row][k] * x[k];
        }
        x[row] = acc / g[row][row];
    }
    Ok(x)
}

/// Splits `estimate` into a target part (projection onto the true
/// target), an interference part (remainder of the projection onto the
/// full source span), and an artifact residual. The three parts sum to
/// the estimate.
pub fn bss_decompose(
    estimate: &SignalBuffer,
    true_sources: &[SignalBuffer],
    target_index: usize,
) -> Result<(SignalBuffer, SignalBuffer, SignalBuffer)> {
    check_alignment(estimate, true_sources)?;
    if target_index >= true_sources.len() {
        return Err(Error::InvalidArgument(format!(
            "target_index {target_index} out of range for {} sources",
            true_sources.len()
        )));
    }
    let s = true_sources.len();
    let gram: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..s).map(|k| dot(&true_sources[i].samples, &true_sources[k].samples)).collect())
        .collect();
    let rhs: Vec<f64> =
        (0..s).map(|i| dot(&estimate.samples, &true_sources[i].samples)).collect();
    if gram[target_index][target_index] <= 0.0 {
        return Err(Error::Data("target source has zero power".into()));
    }
    let coeffs = solve_gram(gram.clone(), rhs.clone())?;

    let n = estimate.len();
    let alpha = rhs[target_index] / gram[target_index][target_index];
    let mut s_target = vec![0.0; n];
    let mut span_proj = vec![0.0; n];
    for i in 0..s {
        let src = &true_sources[i].samples;
        for (acc, &v) in span_proj.iter_mut().zip(src) {
            *acc += coeffs[i] * v;
        }
        if i == target_index {
            for (acc, &v) in s_target.iter_mut().zip(src) {
                *acc += alpha * v;
            }
        }
    }
    let e_interf: Vec<f64> = span_proj.iter().zip(&s_target).map(|(p, t)| p - t).collect();
    let e_artif: Vec<f64> =
        estimate.samples.iter().zip(&span_proj).map(|(e, p)| e - p).collect();

    let rate = estimate.sample_rate;
    Ok((
        SignalBuffer { samples: s_target, sample_rate: rate },
        SignalBuffer { samples: e_interf, sample_rate: rate },
        SignalBuffer { samples: e_artif, sample_rate: rate },
    ))
}

fn db_ratio(num: f64, den: f64) -> f64 {
    if den < POWER_FLOOR {
        return DB_CLIP;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CLIP, DB_CLIP)
}

/// SDR / SIR / SAR of one estimate against one target source.
pub fn sdr_sir_sar(
    estimate: &SignalBuffer,
    true_sources: &[SignalBuffer],
    target_index: usize,
) -> Result<SourceEval> {
    let (s_target, e_interf, e_artif) = bss_decompose(estimate, true_sources, target_index)?;
    let p_target = s_target.power();
    let p_interf = e_interf.power();
    let p_artif = e_artif.power();
    let p_distortion: f64 = e_interf
        .samples
        .iter()
        .zip(&e_artif.samples)
        .map(|(a, b)| (a + b) * (a + b))
        .sum();
    let p_target_interf: f64 = s_target
        .samples
        .iter()
        .zip(&e_interf.samples)
        .map(|(a, b)| (a + b) * (a + b))
        .sum();
    Ok(SourceEval {
        sdr_db: db_ratio(p_target, p_distortion),
        sir_db: db_ratio(p_target, p_interf),
        sar_db: db_ratio(p_target_interf, p_artif),
    })
}

/// Scores every output-to-target assignment and reports per-source
/// metrics under the one with the highest mean SDR (ties break toward
/// the lowest enumeration index).
pub fn eval_separation(
    estimates: &[SignalBuffer],
    true_sources: &[SignalBuffer],
) -> Result<EvalReport> {
    if estimates.len() != true_sources.len() || estimates.is_empty() {
        return Err(Error::Shape(format!(
            "estimate count {} must equal source count {}",
            estimates.len(),
            true_sources.len()
        )));
    }
    let s = estimates.len();
    // metric of every (output, target) pair, computed once
    let mut pair: Vec<Vec<SourceEval>> = Vec::with_capacity(s);
    for est in estimates {
        let row: Result<Vec<SourceEval>> =
            (0..s).map(|t| sdr_sir_sar(est, true_sources, t)).collect();
        pair.push(row?);
    }

    let perms = enumerate_permutations(s)?;
    let mut best: Option<(usize, f64)> = None;
    for (k, perm) in perms.iter().enumerate() {
        let mean_sdr =
            (0..s).map(|o| pair[o][perm.target_of(o)].sdr_db).sum::<f64>() / s as f64;
        if best.map_or(true, |(_, cur)| mean_sdr > cur) {
            best = Some((k, mean_sdr));
        }
    }
    let (k, _) = best.expect("at least one permutation");
    let chosen = perms[k].clone();
    let per_source = (0..s)
        .map(|t| {
            let o = chosen.mapping().iter().position(|&tt| tt == t).expect("bijection");
            pair[o][t]
        })
        .collect();
    Ok(EvalReport { per_source, chosen_permutation: chosen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::DEFAULT_SAMPLE_RATE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn buf(samples: Vec<f64>) -> SignalBuffer {
        SignalBuffer { samples, sample_rate: DEFAULT_SAMPLE_RATE }
    }

    fn random_buf(len: usize, seed: u64) -> SignalBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        buf((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Removes from `v` its projection onto each of `basis` (assumed
    /// linearly independent), then rescales to the requested power.
    fn orthogonalize(mut v: Vec<f64>, basis: &[&SignalBuffer], power: f64) -> Vec<f64> {
        for _ in 0..2 {
            // two Gram-Schmidt sweeps for numerical cleanliness
            for b in basis {
                let c = dot(&v, &b.samples) / dot(&b.samples, &b.samples);
                for (x, y) in v.iter_mut().zip(&b.samples) {
                    *x -= c * y;
                }
            }
        }
        let p: f64 = v.iter().map(|x| x * x).sum();
        let scale = (power / p).sqrt();
        v.iter_mut().for_each(|x| *x *= scale);
        v
    }

    #[test]
    fn pure_scaling_has_no_interference_or_artifacts() {
        let t = random_buf(2000, 1);
        let i = random_buf(2000, 2);
        let est = buf(t.samples.iter().map(|s| 0.7 * s).collect());
        let (s_t, e_i, e_a) = bss_decompose(&est, &[t, i], 0).unwrap();
        let p = s_t.power();
        assert!(e_i.power() / p < 1e-18);
        assert!(e_a.power() / p < 1e-18);
    }

    #[test]
    fn orthogonal_estimate_is_pure_artifact() {
        let t = random_buf(2000, 3);
        let i = random_buf(2000, 4);
        let noise = orthogonalize(random_buf(2000, 5).samples, &[&t, &i], 1.0);
        let est = buf(noise);
        let (s_t, e_i, e_a) = bss_decompose(&est, &[t, i], 0).unwrap();
        assert!(s_t.power() < 1e-12);
        assert!(e_i.power() < 1e-12);
        assert!((e_a.power() - est.power()).abs() / est.power() < 1e-10);
    }

    #[test]
    fn interference_power_matches_construction() {
        let t = random_buf(3000, 6);
        // make the interferer orthogonal to the target so the split is analytic
        let i = buf(orthogonalize(random_buf(3000, 7).samples, &[&t], 1.0));
        let beta = 0.35;
        let est = buf(
            t.samples.iter().zip(&i.samples).map(|(a, b)| a + beta * b).collect::<Vec<_>>(),
        );
        let (_, e_i, _) = bss_decompose(&est, &[t, i.clone()], 0).unwrap();
        let expected = beta * beta * i.power();
        assert!((e_i.power() - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn decomposition_resums_to_estimate() {
        let t = random_buf(1500, 8);
        let i = random_buf(1500, 9);
        let est = random_buf(1500, 10);
        let (s_t, e_i, e_a) = bss_decompose(&est, &[t, i], 1).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for n in 0..est.len() {
            let d = s_t.samples[n] + e_i.samples[n] + e_a.samples[n] - est.samples[n];
            num += d * d;
            den += est.samples[n] * est.samples[n];
        }
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn rank_deficient_sources_rejected() {
        let t = random_buf(500, 11);
        let copy = t.clone();
        let est = random_buf(500, 12);
        assert!(matches!(bss_decompose(&est, &[t, copy], 0), Err(Error::Data(_))));
    }

    #[test]
    fn exact_estimate_clips_to_cap() {
        let t = random_buf(1000, 13);
        let i = random_buf(1000, 14);
        let e = sdr_sir_sar(&t.clone(), &[t, i], 0).unwrap();
        assert_eq!(e.sdr_db, DB_CLIP);
        assert_eq!(e.sir_db, DB_CLIP);
    }

    #[test]
    fn ten_to_one_noise_gives_ten_db() {
        let t = random_buf(4000, 15);
        let i = random_buf(4000, 16);
        let noise = orthogonalize(random_buf(4000, 17).samples, &[&t, &i], t.power() / 10.0);
        let est =
            buf(t.samples.iter().zip(&noise).map(|(a, b)| a + b).collect::<Vec<_>>());
        let e = sdr_sir_sar(&est, &[t, i], 0).unwrap();
        assert!((e.sdr_db - 10.0).abs() < 0.01, "sdr {}", e.sdr_db);
    }

    #[test]
    fn mixture_at_zero_db_sir_scores_near_zero_sir() {
        let t = random_buf(4000, 18);
        let i_raw = orthogonalize(random_buf(4000, 19).samples, &[&t], t.power());
        let i = buf(i_raw);
        let mix =
            buf(t.samples.iter().zip(&i.samples).map(|(a, b)| a + b).collect::<Vec<_>>());
        let e = sdr_sir_sar(&mix, &[t, i], 0).unwrap();
        assert!(e.sir_db.abs() < 0.1, "sir {}", e.sir_db);
    }

    #[test]
    fn scale_invariance() {
        let t = random_buf(2000, 20);
        let i = random_buf(2000, 21);
        let est = buf(
            t.samples.iter().zip(&i.samples).map(|(a, b)| a + 0.3 * b).collect::<Vec<_>>(),
        );
        let base = sdr_sir_sar(&est, &[t.clone(), i.clone()], 0).unwrap();
        for scale in [0.01, 3.0, 1e4] {
            let scaled = buf(est.samples.iter().map(|s| s * scale).collect::<Vec<_>>());
            let e = sdr_sir_sar(&scaled, &[t.clone(), i.clone()], 0).unwrap();
            assert!((e.sdr_db - base.sdr_db).abs() < 1e-9);
            assert!((e.sir_db - base.sir_db).abs() < 1e-9);
            assert!((e.sar_db - base.sar_db).abs() < 1e-9);
        }
    }

    #[test]
    fn sir_decreases_as_interference_grows() {
        let t = random_buf(2000, 22);
        let i = buf(orthogonalize(random_buf(2000, 23).samples, &[&t], t.power()));
        let mut prev = f64::INFINITY;
        for beta in [0.1, 0.2, 0.4, 0.8] {
            let est = buf(
                t.samples
                    .iter()
                    .zip(&i.samples)
                    .map(|(a, b)| a + beta * b)
                    .collect::<Vec<_>>(),
            );
            let e = sdr_sir_sar(&est, &[t.clone(), i.clone()], 0).unwrap();
            assert!(e.sir_db < prev);
            prev = e.sir_db;
        }
    }

    #[test]
    fn swapped_estimates_pick_the_swap() {
        let t = random_buf(1000, 24);
        let i = random_buf(1000, 25);
        let report = eval_separation(&[i.clone(), t.clone()], &[t, i]).unwrap();
        assert_eq!(report.chosen_permutation.mapping(), &[1, 0]);
        for e in &report.per_source {
            assert_eq!(e.sdr_db, DB_CLIP);
        }
    }

    #[test]
    fn identical_estimates_tie_break_to_identity() {
        let t = random_buf(1000, 26);
        let i = random_buf(1000, 27);
        let mix =
            buf(t.samples.iter().zip(&i.samples).map(|(a, b)| a + b).collect::<Vec<_>>());
        let report = eval_separation(&[mix.clone(), mix], &[t, i]).unwrap();
        assert_eq!(report.chosen_permutation.mapping(), &[0, 1]);
        let e = &report.per_source;
        assert!((e[0].sdr_db - e[1].sdr_db).abs() < 20.0); // both finite, same estimate
    }

    #[test]
    fn assignment_matches_exhaustive_search() {
        let t = random_buf(1200, 28);
        let i = random_buf(1200, 29);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let est0 = buf(
            t.samples
                .iter()
                .zip(&i.samples)
                .map(|(a, b)| 0.8 * a + rng.gen_range(0.0..0.3) * b)
                .collect::<Vec<_>>(),
        );
        let est1 = buf(
            t.samples
                .iter()
                .zip(&i.samples)
                .map(|(a, b)| rng.gen_range(0.0..0.3) * a + 0.9 * b)
                .collect::<Vec<_>>(),
        );
        let sources = [t, i];
        let report = eval_separation(&[est0.clone(), est1.clone()], &sources).unwrap();
        // brute force both assignments
        let id = (sdr_sir_sar(&est0, &sources, 0).unwrap().sdr_db
            + sdr_sir_sar(&est1, &sources, 1).unwrap().sdr_db)
            / 2.0;
        let sw = (sdr_sir_sar(&est0, &sources, 1).unwrap().sdr_db
            + sdr_sir_sar(&est1, &sources, 0).unwrap().sdr_db)
            / 2.0;
        let expect: &[usize] = if id >= sw { &[0, 1] } else { &[1, 0] };
        assert_eq!(report.chosen_permutation.mapping(), expect);
    }
}
