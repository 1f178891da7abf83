use rand::Rng;

use super::gaussian::{CovarianceKind, Gaussian, SufficientStats, DEFAULT_COV_REG};
use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::numerics::{argmax, log_sum_exp, seeded_rng, squared_distance, Matrix, SeededRng};

pub const DEFAULT_STATES: usize = 30;

/// Hidden Markov model with multivariate Gaussian emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm {
    initial: Vec<f64>,
    transitions: Matrix,
    emissions: Vec<Gaussian>,
}

pub(crate) fn check_stochastic(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::ModelInvalid(format!("{what} has a negative entry")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::ModelInvalid(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

pub(crate) fn check_emissions(emissions: &[Gaussian], k: usize) -> Result<usize> {
    if emissions.len() != k || k == 0 {
        return Err(Error::ModelInvalid(format!("{k} states but {} emission densities", emissions.len())));
    }
    let d = emissions[0].dim();
    if emissions.iter().any(|g| g.dim() != d) {
        return Err(Error::ModelInvalid("emission densities differ in dimension".into()));
    }
    Ok(d)
}

pub(crate) fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl GaussianHmm {
    pub fn new(initial: Vec<f64>, transitions: Matrix, emissions: Vec<Gaussian>) -> Result<Self> {
        let k = initial.len();
        check_emissions(&emissions, k)?;
        check_stochastic(&initial, "initial distribution")?;
        if transitions.rows() != k || transitions.cols() != k {
            return Err(Error::ModelInvalid(format!("transition matrix must be {k}x{k}")));
        }
        for i in 0..k {
            check_stochastic(transitions.row(i), &format!("transition row {i}"))?;
        }
        Ok(GaussianHmm {
            initial,
            transitions,
            emissions,
        })
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
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

    pub(crate) fn log_transitions(&self) -> Vec<Vec<f64>> {
        log_matrix(&self.transitions)
    }

    /// Joint log-probability of a sequence and a state path.
    pub fn log_joint<R: AsRef<[f64]>>(&self, seq: &[R], path: &[usize]) -> Result<f64> {
        let emis = emission_log_probs(&self.emissions, seq)?;
        if path.len() != seq.len() {
            return Err(Error::shape("path length differs from sequence length"));
        }
        let mut lp = ln(self.initial[path[0]]) + emis[0][path[0]];
        for t in 1..path.len() {
            lp += ln(self.transitions.get(path[t - 1], path[t])) + emis[t][path[t]];
        }
        Ok(lp)
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("hmm");
        a.set_meta("states", self.num_states());
        a.set_meta("dim", self.dim());
        a.put_vec("initial", &self.initial);
        a.put("transitions", self.transitions.clone());
        put_emissions(&mut a, &self.emissions);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind("hmm")?;
        let k: usize = a.meta_parse("states")?;
        GaussianHmm::new(a.vector("initial")?, a.tensor("transitions")?.clone(), read_emissions(a, k)?)
    }
}

pub(crate) fn put_emissions(a: &mut Archive, emissions: &[Gaussian]) {
    for (k, g) in emissions.iter().enumerate() {
        a.put_vec(&format!("mean.{k}"), g.mean());
        a.put(&format!("cov.{k}"), g.cov().clone());
    }
}

pub(crate) fn read_emissions(a: &Archive, k: usize) -> Result<Vec<Gaussian>> {
    (0..k)
        .map(|i| Gaussian::new(a.vector(&format!("mean.{i}"))?, a.tensor(&format!("cov.{i}"))?.clone()))
        .collect()
}

pub(crate) fn log_matrix(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).iter().map(|&p| ln(p)).collect()).collect()
}

/// `T × K` emission log-densities.
pub(crate) fn emission_log_probs<R: AsRef<[f64]>>(emissions: &[Gaussian], seq: &[R]) -> Result<Vec<Vec<f64>>> {
    if seq.is_empty() {
        return Err(Error::Empty("observation sequence"));
    }
    let d = emissions[0].dim();
    seq.iter()
        .map(|x| {
            let x = x.as_ref();
            if x.len() != d {
                return Err(Error::shape(format!("observation width {} differs from model dimension {d}", x.len())));
            }
            Ok(emissions.iter().map(|g| g.log_pdf(x)).collect())
        })
        .collect()
}

/// Per-frame state posteriors and the sequence log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    pub gamma: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

struct EStep {
    gamma: Vec<Vec<f64>>,
    /// Expected transition counts.
    xi: Vec<Vec<f64>>,
    log_likelihood: f64,
}

fn e_step(hmm: &GaussianHmm, emis: &[Vec<f64>], with_xi: bool) -> EStep {
    let k = hmm.num_states();
    let t_len = emis.len();
    let log_a = hmm.log_transitions();
    let mut alpha = vec![vec![0.0; k]; t_len];
    let mut buf = vec![0.0; k];
    for j in 0..k {
        alpha[0][j] = ln(hmm.initial[j]) + emis[0][j];
    }
    for t in 1..t_len {
        for j in 0..k {
            for i in 0..k {
                buf[i] = alpha[t - 1][i] + log_a[i][j];
            }
            alpha[t][j] = log_sum_exp(&buf) + emis[t][j];
        }
    }
    let ll = log_sum_exp(&alpha[t_len - 1]);
    let mut beta = vec![vec![0.0; k]; t_len];
    for t in (0..t_len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = log_a[i][j] + emis[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    let gamma: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            let row: Vec<f64> = (0..k).map(|j| alpha[t][j] + beta[t][j]).collect();
            let z = log_sum_exp(&row);
            row.iter().map(|v| (v - z).exp()).collect()
        })
        .collect();
    let mut xi = vec![vec![0.0; k]; k];
    if with_xi {
        for t in 0..t_len - 1 {
            for i in 0..k {
                if alpha[t][i] == f64::NEG_INFINITY {
                    continue;
                }
                for j in 0..k {
                    let v = alpha[t][i] + log_a[i][j] + emis[t + 1][j] + beta[t + 1][j] - ll;
                    xi[i][j] += v.exp();
                }
            }
        }
    }
    EStep {
        gamma,
        xi,
        log_likelihood: ll,
    }
}

/// Forward-backward in log space.
pub fn hmm_forward_backward<R: AsRef<[f64]>>(hmm: &GaussianHmm, seq: &[R]) -> Result<Posteriors> {
    let emis = emission_log_probs(&hmm.emissions, seq)?;
    let e = e_step(hmm, &emis, false);
    if !e.log_likelihood.is_finite() {
        return Err(Error::Numeric("sequence has zero likelihood under the model".into()));
    }
    Ok(Posteriors {
        gamma: e.gamma,
        log_likelihood: e.log_likelihood,
    })
}

/// Most probable state path; ties resolve to the lowest state index.
pub fn hmm_viterbi<R: AsRef<[f64]>>(hmm: &GaussianHmm, seq: &[R]) -> Result<Vec<usize>> {
    let emis = emission_log_probs(&hmm.emissions, seq)?;
    let k = hmm.num_states();
    let log_a = hmm.log_transitions();
    let t_len = emis.len();
    let mut delta: Vec<f64> = (0..k).map(|j| ln(hmm.initial[j]) + emis[0][j]).collect();
    let mut back = vec![vec![0usize; k]; t_len];
    let mut cand = vec![0.0; k];
    for t in 1..t_len {
        let mut next = vec![0.0; k];
        for j in 0..k {
            for i in 0..k {
                cand[i] = delta[i] + log_a[i][j];
            }
            let best = argmax(&cand);
            back[t][j] = best;
            next[j] = cand[best] + emis[t][j];
        }
        delta = next;
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = argmax(&delta);
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmConfig {
    pub states: usize,
    pub iterations: usize,
    pub covariance: CovarianceKind,
    pub reg: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            states: DEFAULT_STATES,
            iterations: 20,
            covariance: CovarianceKind::Full,
            reg: DEFAULT_COV_REG,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HmmFit {
    pub model: GaussianHmm,
    /// Total training log-likelihood of the initial model and after every iteration.
    pub log_likelihoods: Vec<f64>,
}

/// k-means++ seeding followed by a few Lloyd iterations.
pub(crate) fn kmeans_pp(data: &[&[f64]], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = vec![data[rng.random_range(0..data.len())].to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| squared_distance(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            rng.random_range(0..data.len())
        };
        let c = data[idx].to_vec();
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(x, &c));
        }
        centers.push(c);
    }
    let dim = data[0].len();
    for _ in 0..10 {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for x in data {
            let j = nearest(&centers, x);
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(*x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    centers
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let d: Vec<f64> = centers.iter().map(|c| -squared_distance(x, c)).collect();
    argmax(&d)
}

/// Initial emissions: k-means++ means sharing the pooled covariance.
pub(crate) fn init_emissions<R: AsRef<[f64]>>(
    seqs: &[Vec<R>],
    k: usize,
    kind: CovarianceKind,
    reg: f64,
    seed: u64,
) -> Result<Vec<Gaussian>> {
    let data: Vec<&[f64]> = seqs.iter().flat_map(|s| s.iter().map(|x| x.as_ref())).collect();
    if data.is_empty() {
        return Err(Error::Empty("training sequences"));
    }
    if data.len() < k {
        return Err(Error::InvalidArgument(format!("{} frames cannot seed {k} states", data.len())));
    }
    let d = data[0].len();
    if data.iter().any(|x| x.len() != d) {
        return Err(Error::shape("training frames differ in width"));
    }
    let pooled = SufficientStats::accumulate(&data, &vec![1.0; data.len()])
        .to_gaussian(kind, reg)
        .expect("non-empty data")?;
    let centers = kmeans_pp(&data, k, &mut seeded_rng(seed));
    centers
        .into_iter()
        .map(|c| Gaussian::new(c, pooled.cov().clone()))
        .collect()
}

/// One EM iteration. Returns the updated model and the log-likelihood of `hmm`.
pub fn hmm_em_step<R: AsRef<[f64]>>(
    hmm: &GaussianHmm,
    seqs: &[Vec<R>],
    kind: CovarianceKind,
    reg: f64,
) -> Result<(GaussianHmm, f64)> {
    let k = hmm.num_states();
    let d = hmm.dim();
    let mut ll = 0.0;
    let mut init = vec![0.0; k];
    let mut trans = vec![vec![0.0; k]; k];
    let mut stats: Vec<SufficientStats> = (0..k).map(|_| SufficientStats::new(d)).collect();
    for seq in seqs {
        let emis = emission_log_probs(&hmm.emissions, seq)?;
        let e = e_step(hmm, &emis, true);
        ll += e.log_likelihood;
        for j in 0..k {
            init[j] += e.gamma[0][j];
        }
        for (row, acc) in e.xi.iter().zip(trans.iter_mut()) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for (x, g) in seq.iter().zip(&e.gamma) {
            for j in 0..k {
                stats[j].add(x.as_ref(), g[j]);
            }
        }
    }
    if !ll.is_finite() {
        return Err(Error::Numeric("training data has zero likelihood".into()));
    }
    let total: f64 = init.iter().sum();
    let initial: Vec<f64> = init.iter().map(|v| v / total).collect();
    let mut transitions = Matrix::zeros(k, k);
    for i in 0..k {
        let s: f64 = trans[i].iter().sum();
        for j in 0..k {
            let p = if s > 1e-300 { trans[i][j] / s } else { hmm.transitions.get(i, j) };
            transitions.set(i, j, p);
        }
    }
    let emissions = stats
        .iter()
        .zip(&hmm.emissions)
        .map(|(s, old)| s.to_gaussian(kind, reg).unwrap_or_else(|| Ok(old.clone())))
        .collect::<Result<Vec<_>>>()?;
    renormalize_rows(&mut transitions);
    Ok((
        GaussianHmm {
            initial: normalize(initial),
            transitions,
            emissions,
        },
        ll,
    ))
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub(crate) fn renormalize_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        let s: f64 = m.row(i).iter().sum();
        m.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
}

/// Baum-Welch from a k-means++ initialization with uniform transitions.
pub fn hmm_em_fit<R: AsRef<[f64]>>(seqs: &[Vec<R>], config: &HmmConfig, seed: u64) -> Result<HmmFit> {
    let k = config.states;
    if k == 0 {
        return Err(Error::InvalidArgument("an HMM needs at least one state".into()));
    }
    let emissions = init_emissions(seqs, k, config.covariance, config.reg, seed)?;
    let mut model = GaussianHmm::new(vec![1.0 / k as f64; k], uniform(k, false), emissions)?;
    let mut trace = Vec::with_capacity(config.iterations + 1);
    for _ in 0..config.iterations {
        let (next, ll) = hmm_em_step(&model, seqs, config.covariance, config.reg)?;
        trace.push(ll);
        model = next;
    }
    trace.push(total_log_likelihood(&model, seqs)?);
    Ok(HmmFit {
        model,
        log_likelihoods: trace,
    })
}

pub fn total_log_likelihood<R: AsRef<[f64]>>(hmm: &GaussianHmm, seqs: &[Vec<R>]) -> Result<f64> {
    seqs.iter()
        .filter(|s| !s.is_empty())
        .map(|s| hmm_forward_backward(hmm, s).map(|p| p.log_likelihood))
        .sum()
}

/// Uniform `k × k` transitions; with `zero_diagonal` the mass spreads over the
/// other states only.
pub(crate) fn uniform(k: usize, zero_diagonal: bool) -> Matrix {
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let p = if zero_diagonal {
                if i == j || k == 1 {
                    0.0
                } else {
                    1.0 / (k - 1) as f64
                }
            } else {
                1.0 / k as f64
            };
            m.set(i, j, p);
        }
    }
    m
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn random_model(k: usize, d: usize, rng: &mut SeededRng) -> GaussianHmm {
        let rand_dist = |rng: &mut SeededRng, n: usize| normalize((0..n).map(|_| rng.random_range(0.1..1.0)).collect());
        let initial = rand_dist(rng, k);
        let mut a = Matrix::zeros(k, k);
        for i in 0..k {
            a.row_mut(i).copy_from_slice(&rand_dist(rng, k));
        }
        let emissions = (0..k)
            .map(|_| {
                let mean = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut cov = Matrix::identity(d);
                for i in 0..d {
                    cov.set(i, i, rng.random_range(0.3..1.5));
                }
                Gaussian::new(mean, cov).unwrap()
            })
            .collect();
        GaussianHmm::new(initial, a, emissions).unwrap()
    }

    pub(crate) fn random_seq(t: usize, d: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
        (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
    }

    fn all_paths(t: usize, k: usize) -> Vec<Vec<usize>> {
        (0..k.pow(t as u32))
            .map(|mut n| {
                (0..t)
                    .map(|_| {
                        let s = n % k;
                        n /= k;
                        s
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_state_posteriors_and_likelihood() {
        let mut rng = seeded_rng(0);
        let m = random_model(1, 2, &mut rng);
        let seq = random_seq(5, 2, &mut rng);
        let p = hmm_forward_backward(&m, &seq).unwrap();
        assert!(p.gamma.iter().all(|g| (g[0] - 1.0).abs() < 1e-12));
        let want: f64 = seq.iter().map(|x| m.emissions()[0].log_pdf(x)).sum();
        assert!((p.log_likelihood - want).abs() < 1e-9);
        assert_eq!(hmm_viterbi(&m, &seq).unwrap(), vec![0; 5]);
    }

    #[test]
    fn one_frame_posterior_is_prior_times_emission() {
        let mut rng = seeded_rng(1);
        let m = random_model(3, 2, &mut rng);
        let x = vec![0.3, -0.2];
        let p = hmm_forward_backward(&m, &[x.clone()]).unwrap();
        let w: Vec<f64> = (0..3).map(|j| m.initial()[j] * m.emissions()[j].log_pdf(&x).exp()).collect();
        let z: f64 = w.iter().sum();
        for j in 0..3 {
            assert!((p.gamma[0][j] - w[j] / z).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_and_viterbi_match_enumeration() {
        for seed in 0..20 {
            let mut rng = seeded_rng(100 + seed);
            let (t, k) = if seed % 2 == 0 { (4, 2) } else { (6, 3) };
            let m = random_model(k, 2, &mut rng);
            let seq = random_seq(t, 2, &mut rng);
            let joint: Vec<f64> = all_paths(t, k).iter().map(|p| m.log_joint(&seq, p).unwrap()).collect();
            let p = hmm_forward_backward(&m, &seq).unwrap();
            assert!((p.log_likelihood - log_sum_exp(&joint)).abs() < 1e-9);
            let best = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let vit = hmm_viterbi(&m, &seq).unwrap();
            assert!((m.log_joint(&seq, &vit).unwrap() - best).abs() < 1e-9);
            for row in &p.gamma {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sticky_chain_follows_emission_argmax() {
        let e = |m: f64| Gaussian::new(vec![m], Matrix::identity(1)).unwrap();
        let mut a = Matrix::identity(2);
        a.set(0, 0, 0.99);
        a.set(0, 1, 0.01);
        a.set(1, 1, 0.99);
        a.set(1, 0, 0.01);
        let m = GaussianHmm::new(vec![0.5, 0.5], a, vec![e(-10.0), e(10.0)]).unwrap();
        let seq = vec![vec![-10.0], vec![-9.0], vec![9.5], vec![10.0]];
        assert_eq!(hmm_viterbi(&m, &seq).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn viterbi_beats_random_paths() {
        let mut rng = seeded_rng(3);
        let m = random_model(4, 3, &mut rng);
        let seq = random_seq(30, 3, &mut rng);
        let best = m.log_joint(&seq, &hmm_viterbi(&m, &seq).unwrap()).unwrap();
        for _ in 0..1000 {
            let p: Vec<usize> = (0..30).map(|_| rng.random_range(0..4)).collect();
            assert!(m.log_joint(&seq, &p).unwrap() <= best);
        }
    }

    fn sample_two_state(n: usize, seed: u64) -> (Vec<Vec<Vec<f64>>>, [Vec<f64>; 2]) {
        let means = [vec![-1.0, 0.5], vec![1.0, -0.5]];
        let mut rng = seeded_rng(seed);
        let mut seqs = Vec::new();
        for _ in 0..n / 250 {
            let mut s = rng.random_range(0..2);
            let mut seq = Vec::new();
            for _ in 0..250 {
                if rng.random_range(0.0..1.0) < 0.1 {
                    s = 1 - s;
                }
                let x: Vec<f64> = means[s]
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + 0.4 * z
                    })
                    .collect();
                seq.push(x);
            }
            seqs.push(seq);
        }
        (seqs, means)
    }

    #[test]
    fn em_recovers_two_state_means() {
        let (seqs, means) = sample_two_state(5000, 4);
        let cfg = HmmConfig {
            states: 2,
            iterations: 30,
            ..HmmConfig::default()
        };
        let fit = hmm_em_fit(&seqs, &cfg, 1).unwrap();
        let got: Vec<&[f64]> = fit.model.emissions().iter().map(|g| g.mean()).collect();
        let err = |perm: [usize; 2]| -> f64 {
            (0..2)
                .flat_map(|s| got[perm[s]].iter().zip(&means[s]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max)
        };
        assert!(err([0, 1]).min(err([1, 0])) < 0.1);
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn em_step_from_truth_does_not_decrease_likelihood() {
        let (seqs, means) = sample_two_state(2000, 5);
        let cov = {
            let mut c = Matrix::identity(2);
            c.set(0, 0, 0.16);
            c.set(1, 1, 0.16);
            c
        };
        let mut a = Matrix::zeros(2, 2);
        a.row_mut(0).copy_from_slice(&[0.9, 0.1]);
        a.row_mut(1).copy_from_slice(&[0.1, 0.9]);
        let truth = GaussianHmm::new(
            vec![0.5, 0.5],
            a,
            means.iter().map(|m| Gaussian::new(m.clone(), cov.clone()).unwrap()).collect(),
        )
        .unwrap();
        let (next, before) = hmm_em_step(&truth, &seqs, CovarianceKind::Full, 1e-4).unwrap();
        assert!(total_log_likelihood(&next, &seqs).unwrap() >= before - 1e-6);
    }

    #[test]
    fn single_state_fit_is_pooled_statistics() {
        let mut rng = seeded_rng(8);
        let seqs = vec![random_seq(40, 2, &mut rng), random_seq(25, 2, &mut rng)];
        let fit = hmm_em_fit(&seqs, &HmmConfig { states: 1, iterations: 2, ..HmmConfig::default() }, 0).unwrap();
        let all: Vec<&Vec<f64>> = seqs.iter().flatten().collect();
        let n = all.len() as f64;
        let mean: Vec<f64> = (0..2).map(|j| all.iter().map(|x| x[j]).sum::<f64>() / n).collect();
        let g = &fit.model.emissions()[0];
        for j in 0..2 {
            assert!((g.mean()[j] - mean[j]).abs() < 1e-12);
            let var = all.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            assert!((g.cov().get(j, j) - var - 1e-4).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_stay_stochastic_and_archive_round_trips() {
        let (seqs, _) = sample_two_state(1000, 9);
        let fit = hmm_em_fit(&seqs, &HmmConfig { states: 3, iterations: 5, ..HmmConfig::default() }, 2).unwrap();
        for i in 0..3 {
            assert!((fit.model.transitions().row(i).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let text = fit.model.to_archive().to_text();
        let back = GaussianHmm::from_archive(&Archive::from_text(&text, std::path::Path::new("m")).unwrap()).unwrap();
        assert_eq!(back, fit.model);
    }

    #[test]
    fn errors() {
        let mut rng = seeded_rng(0);
        let m = random_model(2, 2, &mut rng);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(hmm_forward_backward(&m, &empty), Err(Error::Empty(_))));
        assert!(hmm_em_fit(&[random_seq(3, 2, &mut rng)], &HmmConfig { states: 4, ..HmmConfig::default() }, 0).is_err());
        let seqs: Vec<Vec<Vec<f64>>> = vec![];
        assert!(hmm_em_fit(&seqs, &HmmConfig::default(), 0).is_err());
    }
}
