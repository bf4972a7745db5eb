//! Online MAP changepoint detection over the policy set.
//!
//! Segment lengths follow a truncated Gaussian prior. Each candidate "last
//! changepoint" `j` carries a running fit of every policy to the samples
//! `[j, t)`; the recursion keeps, for every time `t`, the best segmentation of
//! the first `t` samples that ends with a changepoint there. All scores are in
//! log space.
//!
//! Indexing: after `t` samples, candidate `j` describes a current segment
//! covering samples `j..t`. A reported changepoint `tau` is the index of the
//! last sample of a segment, so the next one starts at `tau + 1`.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::policy::fit::{self, Normal, Params};
use crate::policy::{classify_segment, cold_fit_lane_keep, cold_fit_merge, LikelihoodSpec, PolicyFit, PolicyKind};
use crate::trajectory::{Measurement3, Trajectory};

/// Truncated Gaussian over segment lengths, in samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLengthPrior {
    pub mu_len: f64,
    pub sigma_len: f64,
    /// Truncation point: no segment is shorter than this.
    pub min_len: usize,
}

impl Default for SegmentLengthPrior {
    fn default() -> Self {
        Self {
            mu_len: 50.0,
            sigma_len: 17.5,
            min_len: 25,
        }
    }
}

/// `ln(1 - Phi(z))`, accurate far into the upper tail.
fn ln_upper_tail(z: f64) -> f64 {
    if z < 25.0 {
        (0.5 * erfc(z / SQRT_2)).ln()
    } else {
        // Asymptotic Mills ratio; the truncation error is below 1e-9 here.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - (z * (2.0 * PI).sqrt()).ln() + series.ln()
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

impl SegmentLengthPrior {
    pub fn new(mu_len: f64, sigma_len: f64, min_len: usize) -> Result<Self> {
        let p = Self {
            mu_len,
            sigma_len,
            min_len,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_len < 1 || !(self.sigma_len > 0.0) || !self.sigma_len.is_finite() || !self.mu_len.is_finite() {
            return Err(Error::Config(format!(
                "segment prior needs min_len >= 1 and sigma_len > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    fn z(&self, t: f64) -> f64 {
        (t - self.mu_len) / self.sigma_len
    }

    fn ln_mass(&self) -> f64 {
        ln_upper_tail(self.z(self.min_len as f64))
    }

    /// `ln g(t)`; `-inf` below the truncation point.
    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t < self.min_len as f64 {
            return f64::NEG_INFINITY;
        }
        let z = self.z(t);
        -self.sigma_len.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z - self.ln_mass()
    }

    /// `ln(1 - G(t))`.
    pub fn ln_survival(&self, t: f64) -> f64 {
        if t <= self.min_len as f64 {
            return 0.0;
        }
        (ln_upper_tail(self.z(t)) - self.ln_mass()).min(0.0)
    }
}

/// Truncated-Gaussian segment-length density.
pub fn seg_len_pdf(t: f64, prior: &SegmentLengthPrior) -> f64 {
    prior.ln_pdf(t).exp()
}

/// Cumulative distribution of [`seg_len_pdf`], normalised by the mass above
/// the truncation point.
pub fn seg_len_cdf(t: f64, prior: &SegmentLengthPrior) -> f64 {
    if t <= prior.min_len as f64 {
        return 0.0;
    }
    let lo = std_normal_cdf(prior.z(prior.min_len as f64));
    let g = (std_normal_cdf(prior.z(t)) - lo) / (1.0 - lo);
    g.clamp(0.0, 1.0 - f64::EPSILON)
}

/// BIC evidence of `policy` on a segment at least `prior.min_len` long.
pub fn policy_evidence(
    segment: &Trajectory<Measurement3>,
    policy: PolicyKind,
    lik: &LikelihoodSpec,
    prior: &SegmentLengthPrior,
) -> Result<PolicyFit> {
    if segment.len() < prior.min_len {
        return Err(Error::Evidence {
            len: segment.len(),
            min: prior.min_len,
        });
    }
    Ok(*classify_segment(segment, lik)?.fit(policy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChampConfig {
    pub prior: SegmentLengthPrior,
    pub likelihood: LikelihoodSpec,
    /// Policy set, scored in this order; ties keep the earlier entry.
    pub policies: Vec<PolicyKind>,
    /// Hypotheses this many nats below the best are dropped.
    pub prune_margin: f64,
    pub max_candidates: usize,
    /// Pruning only starts once this many samples have been consumed.
    pub prune_after: usize,
}

impl Default for ChampConfig {
    fn default() -> Self {
        Self {
            prior: SegmentLengthPrior::default(),
            likelihood: LikelihoodSpec::default(),
            policies: PolicyKind::ALL.to_vec(),
            prune_margin: 40.0,
            max_candidates: 512,
            prune_after: 1000,
        }
    }
}

impl ChampConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.likelihood.validate()?;
        if self.policies.is_empty() {
            return Err(Error::Config("policy set is empty".into()));
        }
        if !(self.prune_margin > 0.0) || self.max_candidates == 0 {
            return Err(Error::Config(
                "pruning margin and candidate cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One scored "last changepoint at `j` under `policy`" hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangepointHypothesis {
    pub j: usize,
    pub policy: PolicyKind,
    pub log_p: f64,
}

#[derive(Debug, Clone, Copy)]
struct RunningFit {
    params: Params,
    sse: f64,
}

#[derive(Debug, Clone)]
struct Candidate {
    j: usize,
    /// One per configured policy, same order.
    fits: Vec<RunningFit>,
}

/// The segmentation recovered by backtracking.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub changepoints: Vec<usize>,
    pub segment_policies: Vec<PolicyKind>,
    pub segment_fits: Vec<PolicyFit>,
    /// Log score of the whole segmentation.
    pub log_score: f64,
}

impl ViterbiPath {
    /// `[start, end)` sample range of every segment.
    pub fn segments(&self, len: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.changepoints.len() + 1);
        let mut start = 0;
        for &tau in &self.changepoints {
            out.push((start, tau + 1));
            start = tau + 1;
        }
        out.push((start, len));
        out
    }

    /// Policy of every sample.
    pub fn labels(&self, len: usize) -> Vec<PolicyKind> {
        let mut out = Vec::with_capacity(len);
        for ((a, b), p) in self.segments(len).into_iter().zip(&self.segment_policies) {
            out.extend(std::iter::repeat_n(*p, b - a));
        }
        out
    }

    /// Changepoints separating two segments with the same policy.
    pub fn repeated_policy_boundaries(&self) -> Vec<usize> {
        self.changepoints
            .iter()
            .zip(self.segment_policies.windows(2))
            .filter(|(_, w)| w[0] == w[1])
            .map(|(&tau, _)| tau)
            .collect()
    }
}

/// Streaming detector; feed observations in time order with [`step`](Self::step).
#[derive(Debug, Clone)]
pub struct ChampDetector {
    cfg: ChampConfig,
    dt: f64,
    ln_policy_prior: f64,
    obs: Vec<Measurement3>,
    /// `map[t]`: best log score of the first `t` samples ending in a changepoint.
    map: Vec<f64>,
    back: Vec<Option<(usize, PolicyKind)>>,
    candidates: Vec<Candidate>,
    hypotheses: Vec<ChangepointHypothesis>,
}

impl ChampDetector {
    pub fn new(cfg: ChampConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let ln_policy_prior = -(cfg.policies.len() as f64).ln();
        Ok(Self {
            cfg,
            dt,
            ln_policy_prior,
            obs: Vec::new(),
            map: vec![0.0],
            back: vec![None],
            candidates: Vec::new(),
            hypotheses: Vec::new(),
        })
    }

    /// Runs the detector over a whole series.
    pub fn run(cfg: ChampConfig, z: &Trajectory<Measurement3>) -> Result<Self> {
        let mut det = Self::new(cfg, z.dt)?;
        for o in z.iter() {
            det.step(*o)?;
        }
        Ok(det)
    }

    pub fn config(&self) -> &ChampConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// `ln P^MAP` for every prefix length `0..=t`.
    pub fn map_values(&self) -> &[f64] {
        &self.map
    }

    /// Back-pointer `(j, policy)` of every prefix length.
    pub fn back_pointers(&self) -> &[Option<(usize, PolicyKind)>] {
        &self.back
    }

    /// Scored hypotheses at the current time.
    pub fn hypotheses(&self) -> &[ChangepointHypothesis] {
        &self.hypotheses
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    fn segment_score(&self, policy: PolicyKind, sse: f64, n: usize) -> f64 {
        let ll = self.cfg.likelihood.log_likelihood(sse, n);
        crate::policy::bic(ll, policy, n)
    }

    fn cold_fits(&self, seg: &[Measurement3]) -> Vec<RunningFit> {
        let lk = cold_fit_lane_keep(seg, self.dt);
        let mut merge = None;
        self.cfg
            .policies
            .iter()
            .map(|p| {
                let (params, normal) = match p {
                    PolicyKind::LaneKeep => lk,
                    PolicyKind::Merge => *merge.get_or_insert_with(|| cold_fit_merge(seg, self.dt, &lk.0)),
                };
                RunningFit {
                    params,
                    sse: normal.sse,
                }
            })
            .collect()
    }

    fn warm_fits(&self, seg: &[Measurement3], prev: &[RunningFit]) -> Vec<RunningFit> {
        let refine = |p: &Params, merge: bool| -> (Params, Normal) { fit::refine(seg, self.dt, *p, merge) };
        let mut lk: Option<(Params, Normal)> = None;
        let mut out = Vec::with_capacity(prev.len());
        for (policy, rf) in self.cfg.policies.iter().zip(prev) {
            let (params, normal) = match policy {
                PolicyKind::LaneKeep => *lk.get_or_insert_with(|| refine(&rf.params, false)),
                PolicyKind::Merge => {
                    let mut best = refine(&rf.params, true);
                    // Keep the nested model at least as good as lane keep.
                    let base = match self.cfg.policies.iter().position(|p| *p == PolicyKind::LaneKeep) {
                        Some(i) => *lk.get_or_insert_with(|| refine(&prev[i].params, false)),
                        None => refine(&rf.params, false),
                    };
                    if best.1.sse > base.1.sse {
                        let alt = refine(&base.0, true);
                        if alt.1.sse < best.1.sse {
                            best = alt;
                        }
                    }
                    best
                }
            };
            out.push(RunningFit {
                params,
                sse: normal.sse,
            });
        }
        out
    }

    /// Consumes the next observation.
    pub fn step(&mut self, o: Measurement3) -> Result<()> {
        if !(o.x.is_finite() && o.y.is_finite() && o.theta.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite observation at sample {}",
                self.obs.len()
            )));
        }
        self.obs.push(o);
        let t = self.obs.len();
        let min_len = self.cfg.prior.min_len;

        // Extend the running fits of existing candidates.
        let mut candidates = std::mem::take(&mut self.candidates);
        for cand in &mut candidates {
            cand.fits = self.warm_fits(&self.obs[cand.j..t], &cand.fits);
        }
        // A new candidate becomes scoreable once its segment reaches min_len.
        if t >= min_len {
            let j = t - min_len;
            if self.map[j].is_finite() {
                let fits = self.cold_fits(&self.obs[j..t]);
                candidates.push(Candidate { j, fits });
            }
        }

        let mut best_map = f64::NEG_INFINITY;
        let mut best_back = None;
        let mut hyps = Vec::with_capacity(candidates.len() * self.cfg.policies.len());
        for cand in &candidates {
            let n = t - cand.j;
            let ln_g = self.cfg.prior.ln_pdf(n as f64);
            let ln_surv = self.cfg.prior.ln_survival((n - 1) as f64);
            for (policy, rf) in self.cfg.policies.iter().zip(&cand.fits) {
                let base = self.segment_score(*policy, rf.sse, n) + self.ln_policy_prior + self.map[cand.j];
                let ended = ln_g + base;
                if ended > best_map {
                    best_map = ended;
                    best_back = Some((cand.j, *policy));
                }
                hyps.push(ChangepointHypothesis {
                    j: cand.j,
                    policy: *policy,
                    log_p: ln_surv + base,
                });
            }
        }
        if hyps.iter().any(|h| h.log_p.is_nan()) || best_map.is_nan() {
            return Err(Error::numerical(
                format!("NaN in changepoint lattice at sample {t}"),
                None,
            ));
        }
        self.map.push(best_map);
        self.back.push(best_back);

        if t >= self.cfg.prune_after && !hyps.is_empty() {
            self.prune(&mut candidates, &mut hyps);
        }
        self.candidates = candidates;
        self.hypotheses = hyps;
        Ok(())
    }

    fn prune(&self, candidates: &mut Vec<Candidate>, hyps: &mut Vec<ChangepointHypothesis>) {
        let top = hyps.iter().map(|h| h.log_p).fold(f64::NEG_INFINITY, f64::max);
        let floor = top - self.cfg.prune_margin;
        let best_of = |j: usize| {
            hyps.iter()
                .filter(|h| h.j == j)
                .map(|h| h.log_p)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let mut scored: Vec<(f64, Candidate)> = candidates
            .drain(..)
            .map(|c| (best_of(c.j), c))
            .filter(|(s, _)| *s >= floor)
            .collect();
        if scored.len() > self.cfg.max_candidates {
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.j.cmp(&b.1.j)));
            scored.truncate(self.cfg.max_candidates);
            scored.sort_by_key(|(_, c)| c.j);
        }
        candidates.extend(scored.into_iter().map(|(_, c)| c));
        hyps.retain(|h| candidates.iter().any(|c| c.j == h.j));
    }

    /// Best current hypothesis: the final segment's start and policy.
    pub fn best_hypothesis(&self) -> Option<ChangepointHypothesis> {
        let mut best: Option<ChangepointHypothesis> = None;
        for h in &self.hypotheses {
            if best.is_none_or(|b| h.log_p > b.log_p) {
                best = Some(*h);
            }
        }
        best
    }

    /// Follows the back-pointers from the best current hypothesis to the
    /// first sample and refits every segment under its chosen policy.
    pub fn viterbi_backtrack(&self) -> Result<ViterbiPath> {
        let t = self.obs.len();
        let best = self.best_hypothesis().ok_or(Error::Evidence {
            len: t,
            min: self.cfg.prior.min_len,
        })?;
        let mut segments = vec![(best.j, t, best.policy)];
        let mut cur = best.j;
        while cur > 0 {
            let (j, policy) =
                self.back[cur].ok_or_else(|| Error::Pipeline(format!("broken back-pointer chain at sample {cur}")))?;
            segments.push((j, cur, policy));
            cur = j;
        }
        segments.reverse();

        let series = Trajectory::new(0.0, self.dt, self.obs.clone());
        let mut segment_fits = Vec::with_capacity(segments.len());
        for &(a, b, policy) in &segments {
            segment_fits.push(*classify_segment(&series.slice(a, b), &self.cfg.likelihood)?.fit(policy));
        }
        Ok(ViterbiPath {
            changepoints: segments[1..].iter().map(|s| s.0 - 1).collect(),
            segment_policies: segments.iter().map(|s| s.2).collect(),
            segment_fits,
            log_score: best.log_p,
        })
    }
}

/// Runs the detector over `z` and backtracks.
pub fn segment_series(z: &Trajectory<Measurement3>, cfg: &ChampConfig) -> Result<ViterbiPath> {
    ChampDetector::run(cfg.clone(), z)?.viterbi_backtrack()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_model::State5;
    use crate::policy::{forward_simulate, PolicyParams};
    use crate::scenario::{build_route_path, RoundaboutGeometry, Route};

    /// Phi by composite Simpson quadrature of the standard normal density.
    fn phi_quadrature(z: f64) -> f64 {
        let lo = -12.0;
        let n = 20_000;
        let h = (z - lo) / n as f64;
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let mut s = f(lo) + f(z);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn prior_values() {
        let p = SegmentLengthPrior::new(50.0, 12.5, 25).unwrap();
        assert_eq!(seg_len_pdf(24.0, &p), 0.0);
        let mass = 1.0 - phi_quadrature(-2.0);
        let expected = (1.0 / 12.5) / (2.0 * PI).sqrt() / mass;
        assert!((seg_len_pdf(50.0, &p) - expected).abs() < 1e-9);
        assert!((seg_len_pdf(50.0, &p) - 0.032657).abs() < 5e-6);

        assert_eq!(seg_len_cdf(25.0, &p), 0.0);
        assert!((seg_len_cdf(50.0 + 6.0 * 12.5, &p) - 1.0).abs() < 1e-6);
        let g_mu = (0.5 - phi_quadrature(-2.0)) / mass;
        assert!((seg_len_cdf(50.0, &p) - g_mu).abs() < 1e-9);
        assert!((seg_len_cdf(50.0, &p) - 0.48838).abs() < 1e-4);
    }

    #[test]
    fn prior_integrates_to_one() {
        let p = SegmentLengthPrior::new(50.0, 12.5, 25).unwrap();
        let (lo, hi, n) = (25.0, 200.0, 20_000);
        let h = (hi - lo) / n as f64;
        let mut s = seg_len_pdf(lo, &p) + seg_len_pdf(hi, &p);
        for i in 1..n {
            s += seg_len_pdf(lo + i as f64 * h, &p) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-3);
        let discrete: f64 = (25..400).map(|t| seg_len_pdf(t as f64, &p)).sum();
        assert!((discrete - 1.0).abs() < 0.02);
    }

    #[test]
    fn survival_is_monotone_and_finite_in_the_tail() {
        let p = SegmentLengthPrior::default();
        let mut prev = 0.0;
        for t in 25..20_000 {
            let s = p.ln_survival(t as f64);
            assert!(s.is_finite() && s <= prev + 1e-12, "t = {t}");
            prev = s;
        }
        // Both branches of the tail evaluation agree at the switch.
        let a = ln_upper_tail(25.0 - 1e-9);
        let b = ln_upper_tail(25.0);
        assert!((a - b).abs() < 1e-6);
    }

    fn straight_series(n: usize) -> Trajectory<Measurement3> {
        let start = State5::new(0.0, 0.0, 0.4, 8.0, 0.0);
        let params = PolicyParams::LaneKeep { v: 8.0, w: 0.0 };
        let mut samples = vec![Measurement3::from_state(&start)];
        samples.extend(
            forward_simulate(&params, &start, n - 1, 0.1)
                .unwrap()
                .iter()
                .map(Measurement3::from_state),
        );
        Trajectory::new(0.0, 0.1, samples)
    }

    #[test]
    fn constant_policy_has_no_changepoints() {
        let path = segment_series(&straight_series(100), &ChampConfig::default()).unwrap();
        assert!(path.changepoints.is_empty());
        assert_eq!(path.segment_policies, [PolicyKind::LaneKeep]);
    }

    #[test]
    fn evidence_penalty_scales_with_length() {
        let lik = LikelihoodSpec::default();
        let prior = SegmentLengthPrior::default();
        let z = straight_series(80);
        let a = policy_evidence(&z.slice(0, 40), PolicyKind::Merge, &lik, &prior).unwrap();
        let b = policy_evidence(&z, PolicyKind::Merge, &lik, &prior).unwrap();
        let pen = |f: &PolicyFit| f.log_likelihood - f.bic_evidence;
        assert!((pen(&b) - pen(&a) - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!(matches!(
            policy_evidence(&z.slice(0, 10), PolicyKind::Merge, &lik, &prior),
            Err(Error::Evidence { len: 10, min: 25 })
        ));
    }

    #[test]
    fn five_segment_route_is_recovered() {
        let t = build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 2)).unwrap();
        let cfg = ChampConfig {
            likelihood: LikelihoodSpec::new(0.05).unwrap(),
            ..Default::default()
        };
        let path = segment_series(&t.poses(), &cfg).unwrap();
        assert_eq!(
            path.changepoints.len(),
            4,
            "{:?} vs {:?} {:?}",
            path.changepoints,
            t.changepoints,
            path.segment_policies
        );
        for (got, want) in path.changepoints.iter().zip(&t.changepoints) {
            assert!(
                got.abs_diff(*want) <= 10,
                "{:?} vs {:?}",
                path.changepoints,
                t.changepoints
            );
        }
        use PolicyKind::{LaneKeep, Merge};
        assert_eq!(path.segment_policies, [LaneKeep, Merge, LaneKeep, Merge, LaneKeep]);
        assert_eq!(path.segment_fits.len(), 5);
    }

    #[test]
    fn prefix_reprocessing_is_consistent() {
        let t = build_route_path(&RoundaboutGeometry::default(), &Route::new(0, 1)).unwrap();
        let z = t.poses();
        let full = ChampDetector::run(ChampConfig::default(), &z.slice(0, 90)).unwrap();
        let prefix = ChampDetector::run(ChampConfig::default(), &z.slice(0, 60)).unwrap();
        assert_eq!(&full.map_values()[..=60], prefix.map_values());
        assert_eq!(&full.back_pointers()[..=60], prefix.back_pointers());
    }

    #[test]
    fn rejects_bad_input() {
        let mut det = ChampDetector::new(ChampConfig::default(), 0.1).unwrap();
        assert!(det.step(Measurement3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(matches!(det.viterbi_backtrack(), Err(Error::Evidence { .. })));
        let cfg = ChampConfig {
            policies: vec![],
            ..Default::default()
        };
        assert!(ChampDetector::new(cfg, 0.1).is_err());
    }
}
