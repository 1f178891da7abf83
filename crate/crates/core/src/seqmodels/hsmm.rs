use super::gaussian::{CovarianceKind, Gaussian, SufficientStats, DEFAULT_COV_REG};
use super::hmm::{
    check_emissions, check_stochastic, emission_log_probs, init_emissions, ln, log_matrix, normalize, put_emissions,
    read_emissions, uniform, DEFAULT_STATES,
};
use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Matrix};

pub const DEFAULT_MAX_DURATION: usize = 60;

/// `P(d) ∝ λ^d e^{−λ} / d!` on `d = 1..=d_max`.
pub fn truncated_poisson_pmf(lambda: f64, d_max: usize) -> Vec<f64> {
    let logs: Vec<f64> = (1..=d_max)
        .scan(0.0, |log_fact, d| {
            *log_fact += (d as f64).ln();
            Some(d as f64 * lambda.ln() - lambda - *log_fact)
        })
        .collect();
    let z = log_sum_exp(&logs);
    logs.iter().map(|l| (l - z).exp()).collect()
}

fn truncated_poisson_mean(lambda: f64, d_max: usize) -> f64 {
    truncated_poisson_pmf(lambda, d_max)
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum()
}

/// Rate whose truncated Poisson has the given mean (the maximum-likelihood
/// rate for data with that mean duration).
pub fn truncated_poisson_rate(mean: f64, d_max: usize) -> f64 {
    if d_max == 1 {
        return 1.0;
    }
    let target = mean.clamp(1.0 + 1e-9, d_max as f64 - 1e-9);
    let (mut lo, mut hi) = (1e-9, 4.0 * d_max as f64 + 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_poisson_mean(mid, d_max) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Hidden semi-Markov model: Gaussian emissions, explicit per-state
/// durations on `1..=d_max`, and no self-transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Hsmm {
    initial: Vec<f64>,
    transitions: Matrix,
    emissions: Vec<Gaussian>,
    /// `K × d_max`; column `d − 1` holds `P(duration = d)`.
    durations: Matrix,
}

impl Hsmm {
    pub fn new(initial: Vec<f64>, transitions: Matrix, emissions: Vec<Gaussian>, durations: Matrix) -> Result<Self> {
        let k = initial.len();
        check_emissions(&emissions, k)?;
        check_stochastic(&initial, "initial distribution")?;
        if transitions.rows() != k || transitions.cols() != k {
            return Err(Error::ModelInvalid(format!("transition matrix must be {k}x{k}")));
        }
        for i in 0..k {
            if transitions.get(i, i) != 0.0 {
                return Err(Error::ModelInvalid(format!("state {i} has a self-transition")));
            }
            if k > 1 {
                check_stochastic(transitions.row(i), &format!("transition row {i}"))?;
            }
        }
        if durations.rows() != k || durations.cols() == 0 {
            return Err(Error::ModelInvalid("one duration distribution per state required".into()));
        }
        for i in 0..k {
            check_stochastic(durations.row(i), &format!("duration pmf {i}"))?;
        }
        Ok(Hsmm {
            initial,
            transitions,
            emissions,
            durations,
        })
    }

    /// Truncated-Poisson durations with the given rates.
    pub fn with_poisson(
        initial: Vec<f64>,
        transitions: Matrix,
        emissions: Vec<Gaussian>,
        rates: &[f64],
        d_max: usize,
    ) -> Result<Self> {
        if d_max == 0 {
            return Err(Error::InvalidArgument("d_max must be at least 1".into()));
        }
        let mut durations = Matrix::zeros(rates.len(), d_max);
        for (i, &r) in rates.iter().enumerate() {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("duration rate {r} must be positive")));
            }
            durations.row_mut(i).copy_from_slice(&truncated_poisson_pmf(r, d_max));
        }
        Hsmm::new(initial, transitions, emissions, durations)
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn max_duration(&self) -> usize {
        self.durations.cols()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transitions(&self) -> &Matrix {
        &self.transitions
    }

    pub fn emissions(&self) -> &[Gaussian] {
        &self.emissions
    }

    pub fn durations(&self) -> &Matrix {
        &self.durations
    }

    /// Joint log-probability of a sequence and a segmentation given as
    /// `(state, duration)` pairs covering the whole sequence.
    pub fn log_joint<R: AsRef<[f64]>>(&self, seq: &[R], segments: &[(usize, usize)]) -> Result<f64> {
        let emis = emission_log_probs(&self.emissions, seq)?;
        let total: usize = segments.iter().map(|s| s.1).sum();
        if total != seq.len() {
            return Err(Error::shape("segments do not cover the sequence"));
        }
        let mut lp = 0.0;
        let mut t = 0;
        for (n, &(j, d)) in segments.iter().enumerate() {
            if d == 0 || d > self.max_duration() {
                return Ok(f64::NEG_INFINITY);
            }
            lp += if n == 0 {
                ln(self.initial[j])
            } else {
                ln(self.transitions.get(segments[n - 1].0, j))
            };
            lp += ln(self.durations.get(j, d - 1));
            lp += (t..t + d).map(|s| emis[s][j]).sum::<f64>();
            t += d;
        }
        Ok(lp)
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("hsmm");
        a.set_meta("states", self.num_states());
        a.set_meta("dim", self.dim());
        a.set_meta("max_duration", self.max_duration());
        a.put_vec("initial", &self.initial);
        a.put("transitions", self.transitions.clone());
        a.put("durations", self.durations.clone());
        put_emissions(&mut a, &self.emissions);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind("hsmm")?;
        let k: usize = a.meta_parse("states")?;
        Hsmm::new(
            a.vector("initial")?,
            a.tensor("transitions")?.clone(),
            read_emissions(a, k)?,
            a.tensor("durations")?.clone(),
        )
    }
}

/// Prefix sums of emission log-densities: `cum[t][j] = Σ_{s<t} log b_j(x_s)`.
fn cumulative(emis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = emis[0].len();
    let mut cum = vec![vec![0.0; k]; emis.len() + 1];
    for t in 0..emis.len() {
        for j in 0..k {
            cum[t + 1][j] = cum[t][j] + emis[t][j];
        }
    }
    cum
}

/// Maximum-probability segmentation; the last segment ends exactly at the
/// final frame. Returns the per-frame state path.
pub fn hsmm_viterbi<R: AsRef<[f64]>>(hsmm: &Hsmm, seq: &[R]) -> Result<Vec<usize>> {
    Ok(expand(&hsmm_viterbi_segments(hsmm, seq)?))
}

pub(crate) fn expand(segments: &[(usize, usize)]) -> Vec<usize> {
    segments.iter().flat_map(|&(j, d)| std::iter::repeat_n(j, d)).collect()
}

/// Viterbi segmentation as `(state, duration)` pairs.
pub fn hsmm_viterbi_segments<R: AsRef<[f64]>>(hsmm: &Hsmm, seq: &[R]) -> Result<Vec<(usize, usize)>> {
    let emis = emission_log_probs(&hsmm.emissions, seq)?;
    let cum = cumulative(&emis);
    let (t_len, k, d_max) = (emis.len(), hsmm.num_states(), hsmm.max_duration());
    let log_a = log_matrix(&hsmm.transitions);
    let log_p = log_matrix(&hsmm.durations);
    let log_pi: Vec<f64> = hsmm.initial.iter().map(|&p| ln(p)).collect();
    // delta[t][j]: best score of x_{0..t} with a segment of j ending at frame t − 1
    let mut delta = vec![vec![f64::NEG_INFINITY; k]; t_len + 1];
    let mut back = vec![vec![(0usize, usize::MAX); k]; t_len + 1];
    // entry[s][j]: best score of x_{0..s} followed by a segment of j starting at s
    let mut entry = vec![vec![f64::NEG_INFINITY; k]; t_len];
    let mut entry_from = vec![vec![usize::MAX; k]; t_len];
    entry[0] = log_pi;
    for t in 1..=t_len {
        for j in 0..k {
            let mut best = (f64::NEG_INFINITY, (0, usize::MAX));
            for d in 1..=d_max.min(t) {
                let s = t - d;
                let v = entry[s][j] + log_p[j][d - 1] + cum[t][j] - cum[s][j];
                if v > best.0 {
                    best = (v, (d, entry_from[s][j]));
                }
            }
            delta[t][j] = best.0;
            back[t][j] = best.1;
        }
        if t < t_len {
            for j in 0..k {
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for i in 0..k {
                    let v = delta[t][i] + log_a[i][j];
                    if v > best.0 {
                        best = (v, i);
                    }
                }
                entry[t][j] = best.0;
                entry_from[t][j] = best.1;
            }
        }
    }
    let last = &delta[t_len];
    let mut j = (0..k).fold(0, |b, i| if last[i] > last[b] { i } else { b });
    if last[j] == f64::NEG_INFINITY {
        return Err(Error::Numeric("no segmentation has positive probability".into()));
    }
    let mut segments = Vec::new();
    let mut t = t_len;
    while t > 0 {
        let (d, prev) = back[t][j];
        segments.push((j, d));
        t -= d;
        j = prev;
    }
    segments.reverse();
    Ok(segments)
}

/// Segment-level forward-backward quantities of one sequence.
struct HsmmPass {
    log_likelihood: f64,
    /// `alpha[t][j]`: log P(x_{0..t}, a segment of j ends at frame t − 1).
    alpha: Vec<Vec<f64>>,
    /// `start[s][j]`: log P(x_{0..s}, a segment of j starts at s).
    start: Vec<Vec<f64>>,
    /// `beta[t][j]`: log P(x_{t..} | a segment of j ended at frame t − 1).
    beta: Vec<Vec<f64>>,
    /// `bstart[s][j]`: log P(x_{s..} | a segment of j starts at s).
    bstart: Vec<Vec<f64>>,
    cum: Vec<Vec<f64>>,
}

fn hsmm_pass(hsmm: &Hsmm, emis: &[Vec<f64>]) -> HsmmPass {
    let cum = cumulative(emis);
    let (t_len, k, d_max) = (emis.len(), hsmm.num_states(), hsmm.max_duration());
    let log_a = log_matrix(&hsmm.transitions);
    let log_p = log_matrix(&hsmm.durations);
    let mut alpha = vec![vec![f64::NEG_INFINITY; k]; t_len + 1];
    let mut start = vec![vec![f64::NEG_INFINITY; k]; t_len];
    start[0] = hsmm.initial.iter().map(|&p| ln(p)).collect();
    let mut buf = Vec::with_capacity(d_max.max(k));
    for t in 1..=t_len {
        for j in 0..k {
            buf.clear();
            for d in 1..=d_max.min(t) {
                let s = t - d;
                buf.push(start[s][j] + log_p[j][d - 1] + cum[t][j] - cum[s][j]);
            }
            alpha[t][j] = log_sum_exp(&buf);
        }
        if t < t_len {
            for j in 0..k {
                buf.clear();
                buf.extend((0..k).map(|i| alpha[t][i] + log_a[i][j]));
                start[t][j] = log_sum_exp(&buf);
            }
        }
    }
    let log_likelihood = log_sum_exp(&alpha[t_len]);
    let mut beta = vec![vec![f64::NEG_INFINITY; k]; t_len + 1];
    let mut bstart = vec![vec![f64::NEG_INFINITY; k]; t_len];
    beta[t_len] = vec![0.0; k];
    for s in (0..t_len).rev() {
        for j in 0..k {
            buf.clear();
            for d in 1..=d_max.min(t_len - s) {
                buf.push(log_p[j][d - 1] + cum[s + d][j] - cum[s][j] + beta[s + d][j]);
            }
            bstart[s][j] = log_sum_exp(&buf);
        }
        if s > 0 {
            for i in 0..k {
                buf.clear();
                buf.extend((0..k).map(|j| log_a[i][j] + bstart[s][j]));
                beta[s][i] = log_sum_exp(&buf);
            }
        }
    }
    HsmmPass {
        log_likelihood,
        alpha,
        start,
        beta,
        bstart,
        cum,
    }
}

/// Expected sufficient statistics of one sequence, accumulated into `acc`.
struct HsmmStats {
    init: Vec<f64>,
    trans: Vec<Vec<f64>>,
    /// Expected number of segments and summed duration per state.
    seg_count: Vec<f64>,
    seg_length: Vec<f64>,
    gamma: Vec<Vec<f64>>,
}

fn expected_stats(hsmm: &Hsmm, emis: &[Vec<f64>], pass: &HsmmPass) -> HsmmStats {
    let (t_len, k, d_max) = (emis.len(), hsmm.num_states(), hsmm.max_duration());
    let ll = pass.log_likelihood;
    let log_a = log_matrix(&hsmm.transitions);
    let log_p = log_matrix(&hsmm.durations);
    let mut diff = vec![vec![0.0; k]; t_len + 1];
    let mut seg_count = vec![0.0; k];
    let mut seg_length = vec![0.0; k];
    for s in 0..t_len {
        for j in 0..k {
            if pass.start[s][j] == f64::NEG_INFINITY {
                continue;
            }
            for d in 1..=d_max.min(t_len - s) {
                let lp = pass.start[s][j] + log_p[j][d - 1] + pass.cum[s + d][j] - pass.cum[s][j] + pass.beta[s + d][j]
                    - ll;
                let p = lp.exp();
                if p == 0.0 {
                    continue;
                }
                diff[s][j] += p;
                diff[s + d][j] -= p;
                seg_count[j] += p;
                seg_length[j] += p * d as f64;
            }
        }
    }
    let mut gamma = vec![vec![0.0; k]; t_len];
    let mut run = vec![0.0; k];
    for t in 0..t_len {
        for j in 0..k {
            run[j] += diff[t][j];
            gamma[t][j] = run[j].max(0.0);
        }
        let z: f64 = gamma[t].iter().sum();
        if z > 0.0 {
            gamma[t].iter_mut().for_each(|g| *g /= z);
        }
    }
    let init: Vec<f64> = (0..k).map(|j| (pass.start[0][j] + pass.bstart[0][j] - ll).exp()).collect();
    let mut trans = vec![vec![0.0; k]; k];
    for t in 1..t_len {
        for i in 0..k {
            if pass.alpha[t][i] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..k {
                trans[i][j] += (pass.alpha[t][i] + log_a[i][j] + pass.bstart[t][j] - ll).exp();
            }
        }
    }
    HsmmStats {
        init,
        trans,
        seg_count,
        seg_length,
        gamma,
    }
}

/// Frame posteriors (probability that frame `t` lies in a segment of each
/// state) and the sequence log-likelihood.
pub fn hsmm_forward_backward<R: AsRef<[f64]>>(hsmm: &Hsmm, seq: &[R]) -> Result<super::hmm::Posteriors> {
    let emis = emission_log_probs(&hsmm.emissions, seq)?;
    let pass = hsmm_pass(hsmm, &emis);
    if !pass.log_likelihood.is_finite() {
        return Err(Error::Numeric("sequence has zero likelihood under the model".into()));
    }
    let stats = expected_stats(hsmm, &emis, &pass);
    Ok(super::hmm::Posteriors {
        gamma: stats.gamma,
        log_likelihood: pass.log_likelihood,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsmmConfig {
    pub states: usize,
    pub iterations: usize,
    pub max_duration: usize,
    pub covariance: CovarianceKind,
    pub reg: f64,
    /// Starting duration rate of every state.
    pub initial_rate: f64,
}

impl Default for HsmmConfig {
    fn default() -> Self {
        HsmmConfig {
            states: DEFAULT_STATES,
            iterations: 20,
            max_duration: DEFAULT_MAX_DURATION,
            covariance: CovarianceKind::Full,
            reg: DEFAULT_COV_REG,
            initial_rate: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HsmmFit {
    pub model: Hsmm,
    pub log_likelihoods: Vec<f64>,
}

/// One EM iteration. Returns the updated model and the log-likelihood of `hsmm`.
pub fn hsmm_em_step<R: AsRef<[f64]>>(
    hsmm: &Hsmm,
    seqs: &[Vec<R>],
    kind: CovarianceKind,
    reg: f64,
) -> Result<(Hsmm, f64)> {
    let (k, d) = (hsmm.num_states(), hsmm.dim());
    let mut ll = 0.0;
    let mut init = vec![0.0; k];
    let mut trans = vec![vec![0.0; k]; k];
    let mut seg_count = vec![0.0; k];
    let mut seg_length = vec![0.0; k];
    let mut stats: Vec<SufficientStats> = (0..k).map(|_| SufficientStats::new(d)).collect();
    for seq in seqs.iter().filter(|s| !s.is_empty()) {
        let emis = emission_log_probs(&hsmm.emissions, seq)?;
        let pass = hsmm_pass(hsmm, &emis);
        ll += pass.log_likelihood;
        let s = expected_stats(hsmm, &emis, &pass);
        for j in 0..k {
            init[j] += s.init[j];
            seg_count[j] += s.seg_count[j];
            seg_length[j] += s.seg_length[j];
            for i in 0..k {
                trans[j][i] += s.trans[j][i];
            }
        }
        for (x, g) in seq.iter().zip(&s.gamma) {
            for j in 0..k {
                stats[j].add(x.as_ref(), g[j]);
            }
        }
    }
    if !ll.is_finite() {
        return Err(Error::Numeric("training data has zero likelihood".into()));
    }
    let initial = normalize(init);
    let mut transitions = hsmm.transitions.clone();
    for i in 0..k {
        let s: f64 = trans[i].iter().sum();
        if s > 1e-300 && k > 1 {
            for j in 0..k {
                transitions.set(i, j, if i == j { 0.0 } else { trans[i][j] / s });
            }
        }
    }
    let mut durations = hsmm.durations.clone();
    for j in 0..k {
        if seg_count[j] > 1e-8 {
            let rate = truncated_poisson_rate(seg_length[j] / seg_count[j], hsmm.max_duration());
            durations.row_mut(j).copy_from_slice(&truncated_poisson_pmf(rate, hsmm.max_duration()));
        }
    }
    let emissions = stats
        .iter()
        .zip(&hsmm.emissions)
        .map(|(s, old)| s.to_gaussian(kind, reg).unwrap_or_else(|| Ok(old.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok((Hsmm::new(initial, transitions, emissions, durations)?, ll))
}

pub fn hsmm_total_log_likelihood<R: AsRef<[f64]>>(hsmm: &Hsmm, seqs: &[Vec<R>]) -> Result<f64> {
    seqs.iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            let emis = emission_log_probs(&hsmm.emissions, s)?;
            Ok(hsmm_pass(hsmm, &emis).log_likelihood)
        })
        .sum()
}

/// EM with explicit-duration statistics, from the same k-means++ start as
/// the HMM and uniform off-diagonal transitions.
pub fn hsmm_em_fit<R: AsRef<[f64]>>(seqs: &[Vec<R>], config: &HsmmConfig, seed: u64) -> Result<HsmmFit> {
    let k = config.states;
    if k < 2 {
        return Err(Error::InvalidArgument("an HSMM without self-transitions needs two states".into()));
    }
    let emissions = init_emissions(seqs, k, config.covariance, config.reg, seed)?;
    let mut model = Hsmm::with_poisson(
        vec![1.0 / k as f64; k],
        uniform(k, true),
        emissions,
        &vec![config.initial_rate; k],
        config.max_duration,
    )?;
    let mut trace = Vec::with_capacity(config.iterations + 1);
    for _ in 0..config.iterations {
        let (next, ll) = hsmm_em_step(&model, seqs, config.covariance, config.reg)?;
        trace.push(ll);
        model = next;
    }
    trace.push(hsmm_total_log_likelihood(&model, seqs)?);
    Ok(HsmmFit {
        model,
        log_likelihoods: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{seeded_rng, SeededRng};
    use crate::seqmodels::hmm::{hmm_viterbi, GaussianHmm};
    use rand::Rng;

    fn random_hsmm(k: usize, d: usize, d_max: usize, rng: &mut SeededRng) -> Hsmm {
        let base = crate::seqmodels::hmm::tests::random_model(k, d, rng);
        let mut a = base.transitions().clone();
        for i in 0..k {
            a.set(i, i, 0.0);
        }
        crate::seqmodels::hmm::renormalize_rows(&mut a);
        let rates: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..3.0)).collect();
        Hsmm::with_poisson(base.initial().to_vec(), a, base.emissions().to_vec(), &rates, d_max).unwrap()
    }

    /// Every segmentation of `t` frames into parts of length ≤ `d_max`, each
    /// part labeled with one of `k` states.
    fn all_segmentations(t: usize, k: usize, d_max: usize) -> Vec<Vec<(usize, usize)>> {
        if t == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for d in 1..=d_max.min(t) {
            for j in 0..k {
                for mut rest in all_segmentations(t - d, k, d_max) {
                    rest.insert(0, (j, d));
                    out.push(rest);
                }
            }
        }
        out
    }

    #[test]
    fn pmf_sums_to_one_and_rate_inverts_mean() {
        let p = truncated_poisson_pmf(7.5, 60);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let r = truncated_poisson_rate(12.0, 60);
        assert!((truncated_poisson_mean(r, 60) - 12.0).abs() < 1e-9);
        assert_eq!(truncated_poisson_pmf(3.0, 1), vec![1.0]);
    }

    #[test]
    fn likelihood_and_viterbi_match_enumeration() {
        for seed in 0..20 {
            let mut rng = seeded_rng(200 + seed);
            let k = 2 + (seed as usize % 2);
            let d_max = 1 + (seed as usize % 3);
            let t = 4 + (seed as usize % 3);
            let m = random_hsmm(k, 2, d_max, &mut rng);
            let seq = crate::seqmodels::hmm::tests::random_seq(t, 2, &mut rng);
            let joint: Vec<f64> = all_segmentations(t, k, d_max)
                .iter()
                .map(|s| m.log_joint(&seq, s).unwrap())
                .collect();
            let p = hsmm_forward_backward(&m, &seq).unwrap();
            assert!((p.log_likelihood - log_sum_exp(&joint)).abs() < 1e-9, "seed {seed}");
            let best = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let segs = hsmm_viterbi_segments(&m, &seq).unwrap();
            assert!((m.log_joint(&seq, &segs).unwrap() - best).abs() < 1e-9, "seed {seed}");
            for row in &p.gamma {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn frame_posteriors_match_enumeration() {
        let mut rng = seeded_rng(7);
        let m = random_hsmm(2, 1, 3, &mut rng);
        let seq = crate::seqmodels::hmm::tests::random_seq(6, 1, &mut rng);
        let segs = all_segmentations(6, 2, 3);
        let joint: Vec<f64> = segs.iter().map(|s| m.log_joint(&seq, s).unwrap()).collect();
        let z = log_sum_exp(&joint);
        let mut want = vec![vec![0.0; 2]; 6];
        for (s, lp) in segs.iter().zip(&joint) {
            for (t, j) in expand(s).into_iter().enumerate() {
                want[t][j] += (lp - z).exp();
            }
        }
        let p = hsmm_forward_backward(&m, &seq).unwrap();
        for t in 0..6 {
            for j in 0..2 {
                assert!((p.gamma[t][j] - want[t][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forced_duration_three() {
        let e = |m: f64| Gaussian::new(vec![m], Matrix::identity(1)).unwrap();
        let mut dur = Matrix::zeros(2, 4);
        dur.set(0, 2, 1.0);
        dur.set(1, 2, 1.0);
        let a = uniform(2, true);
        let m = Hsmm::new(vec![0.5, 0.5], a, vec![e(-5.0), e(5.0)], dur).unwrap();
        let seq: Vec<Vec<f64>> = [-5.0, -5.0, -5.0, 5.0, 5.0, 5.0, -5.0, -5.0, -5.0].iter().map(|&v| vec![v]).collect();
        let segs = hsmm_viterbi_segments(&m, &seq).unwrap();
        assert_eq!(segs, vec![(0, 3), (1, 3), (0, 3)]);
    }

    #[test]
    fn unit_durations_reduce_to_hmm_viterbi() {
        for seed in 0..10 {
            let mut rng = seeded_rng(300 + seed);
            let m = random_hsmm(3, 2, 1, &mut rng);
            let hmm = GaussianHmm::new(m.initial().to_vec(), m.transitions().clone(), m.emissions().to_vec()).unwrap();
            let seq = crate::seqmodels::hmm::tests::random_seq(12, 2, &mut rng);
            assert_eq!(hsmm_viterbi(&m, &seq).unwrap(), hmm_viterbi(&hmm, &seq).unwrap());
        }
    }

    #[test]
    fn em_is_monotone_and_archive_round_trips() {
        let mut rng = seeded_rng(11);
        let truth = random_hsmm(3, 2, 8, &mut rng);
        let mut seqs = Vec::new();
        for _ in 0..4 {
            let mut seq = Vec::new();
            let mut j = rng.random_range(0..3);
            while seq.len() < 80 {
                let d = 1 + rng.random_range(0..6);
                for _ in 0..d {
                    let x: Vec<f64> = truth.emissions()[j].mean().iter().map(|m| m + rng.random_range(-0.3..0.3)).collect();
                    seq.push(x);
                }
                j = (j + 1 + rng.random_range(0..2)) % 3;
            }
            seqs.push(seq);
        }
        let cfg = HsmmConfig {
            states: 3,
            iterations: 10,
            max_duration: 8,
            initial_rate: 3.0,
            ..HsmmConfig::default()
        };
        let fit = hsmm_em_fit(&seqs, &cfg, 4).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{} -> {}", w[0], w[1]);
        }
        for i in 0..3 {
            assert_eq!(fit.model.transitions().get(i, i), 0.0);
            assert!((fit.model.durations().row(i).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let text = fit.model.to_archive().to_text();
        let back = Hsmm::from_archive(&Archive::from_text(&text, std::path::Path::new("m")).unwrap()).unwrap();
        assert_eq!(back, fit.model);
    }

    #[test]
    fn self_transition_is_rejected() {
        let e = Gaussian::new(vec![0.0], Matrix::identity(1)).unwrap();
        let m = Hsmm::with_poisson(vec![0.5, 0.5], uniform(2, false), vec![e.clone(), e], &[1.0, 1.0], 3);
        assert!(matches!(m, Err(Error::ModelInvalid(_))));
    }
}
