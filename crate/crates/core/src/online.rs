//! Exponential-weights aggregation of expert probability forecasts.
//!
//! Weights are always recomputed from cumulative losses,
//! `w_i ∝ exp(−η · L_i)`, which is the same as multiplying by
//! `exp(−η · ℓ_i)` each round.

use serde::{Deserialize, Serialize};

use crate::trading::ReferenceSeries;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OnlineError {
    #[error("need at least one expert")]
    NoExperts,
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("loss {0} is not finite")]
    NonFiniteLoss(f64),
    #[error("prediction {0} outside [0, 1]")]
    Prediction(f64),
    #[error("panel dates must be strictly increasing")]
    Unordered,
    #[error("panel has {panel} rounds but {losses} loss rows")]
    Length { panel: usize, losses: usize },
    #[error("reference has no price on days {0:?}")]
    MissingDates(Vec<i64>),
    #[error("no complete rounds: a panel needs a next-day price or an outcome")]
    NoRounds,
}

/// Expert predictions aligned on common dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPanel {
    pub names: Vec<String>,
    pub dates: Vec<i64>,
    /// One row per date, one column per expert.
    pub predictions: Vec<Vec<f64>>,
}

impl ExpertPanel {
    pub fn new(names: Vec<String>, dates: Vec<i64>, predictions: Vec<Vec<f64>>) -> Result<Self, OnlineError> {
        if names.is_empty() {
            return Err(OnlineError::NoExperts);
        }
        if dates.len() != predictions.len() {
            return Err(OnlineError::Length {
                panel: dates.len(),
                losses: predictions.len(),
            });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OnlineError::Unordered);
        }
        for row in &predictions {
            if row.len() != names.len() {
                return Err(OnlineError::Dimension {
                    expected: names.len(),
                    got: row.len(),
                });
            }
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(OnlineError::Prediction(*p));
            }
        }
        Ok(ExpertPanel {
            names,
            dates,
            predictions,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// The first `n` dates.
    pub fn head(&self, n: usize) -> ExpertPanel {
        ExpertPanel {
            names: self.names.clone(),
            dates: self.dates[..n].to_vec(),
            predictions: self.predictions[..n].to_vec(),
        }
    }

    /// One expert's predictions as `(day, p)` pairs.
    pub fn expert_series(&self, i: usize) -> Vec<(i64, f64)> {
        self.dates
            .iter()
            .zip(&self.predictions)
            .map(|(d, row)| (*d, row[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub weights: Vec<f64>,
    pub cumulative_losses: Vec<f64>,
    pub eta: f64,
    pub round: usize,
}

/// `η = √(8 ln N / T)`, the rate that gives regret at most `√(T/2 · ln N)`
/// for losses in `[0, 1]`.
pub fn learning_rate(n_experts: usize, horizon: usize) -> f64 {
    (8.0 * (n_experts as f64).ln() / horizon as f64).sqrt()
}

/// `√(T/2 · ln N)`.
pub fn regret_bound(n_experts: usize, horizon: usize) -> f64 {
    (horizon as f64 / 2.0 * (n_experts as f64).ln()).sqrt()
}

impl LearnerState {
    pub fn init(n_experts: usize, horizon: usize) -> Result<Self, OnlineError> {
        if n_experts == 0 {
            return Err(OnlineError::NoExperts);
        }
        if horizon == 0 {
            return Err(OnlineError::Horizon);
        }
        Ok(LearnerState::with_eta(n_experts, learning_rate(n_experts, horizon)))
    }

    pub fn with_eta(n_experts: usize, eta: f64) -> Self {
        LearnerState {
            weights: vec![1.0 / n_experts as f64; n_experts],
            cumulative_losses: vec![0.0; n_experts],
            eta,
            round: 0,
        }
    }

    /// Weighted average of the experts' predictions.
    pub fn predict(&self, expert_predictions: &[f64]) -> Result<f64, OnlineError> {
        self.check_len(expert_predictions.len())?;
        let total: f64 = self.weights.iter().sum();
        let y = self
            .weights
            .iter()
            .zip(expert_predictions)
            .map(|(w, y)| w * y)
            .sum::<f64>()
            / total;
        // keep inside the experts' hull despite rounding
        let lo = expert_predictions.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = expert_predictions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(y.clamp(lo, hi))
    }

    /// Weight-averaged loss of the experts this round.
    pub fn mixture_loss(&self, losses: &[f64]) -> Result<f64, OnlineError> {
        self.check_len(losses.len())?;
        Ok(self.weights.iter().zip(losses).map(|(w, l)| w * l).sum())
    }

    pub fn update(&mut self, per_round_losses: &[f64]) -> Result<(), OnlineError> {
        self.check_len(per_round_losses.len())?;
        if let Some(l) = per_round_losses.iter().find(|l| !l.is_finite()) {
            return Err(OnlineError::NonFiniteLoss(*l));
        }
        for (c, l) in self.cumulative_losses.iter_mut().zip(per_round_losses) {
            *c += l;
        }
        self.weights = exp_weights(&self.cumulative_losses, self.eta);
        self.round += 1;
        Ok(())
    }

    fn check_len(&self, got: usize) -> Result<(), OnlineError> {
        if got != self.weights.len() {
            return Err(OnlineError::Dimension {
                expected: self.weights.len(),
                got,
            });
        }
        Ok(())
    }
}

/// Normalized `exp(−η L_i)`, shifted by `min L` so the best expert never
/// underflows.
pub fn exp_weights(cumulative_losses: &[f64], eta: f64) -> Vec<f64> {
    let best = cumulative_losses.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = cumulative_losses
        .iter()
        .map(|l| (-eta * (l - best)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    /// `(day, ŷ)`, each emitted before that round's losses were seen.
    pub aggregate: Vec<(i64, f64)>,
    /// Weights used for each round's prediction.
    pub weight_history: Vec<Vec<f64>>,
    pub state: LearnerState,
    /// Sum over rounds of the weight-averaged expert loss.
    pub learner_loss: f64,
    pub regret: f64,
    pub bound: f64,
}

/// Plays the panel round by round. The learner's loss each round is the
/// weight-averaged expert loss, which upper-bounds the loss of `ŷ` for any
/// convex loss and equals it for losses linear in the prediction.
pub fn run(panel: &ExpertPanel, losses: &[Vec<f64>], horizon: usize) -> Result<RunOutput, OnlineError> {
    if panel.len() != losses.len() {
        return Err(OnlineError::Length {
            panel: panel.len(),
            losses: losses.len(),
        });
    }
    let mut state = LearnerState::init(panel.n_experts(), horizon)?;
    let mut aggregate = Vec::with_capacity(panel.len());
    let mut weight_history = Vec::with_capacity(panel.len());
    let mut learner_loss = 0.0;
    for ((date, preds), round_losses) in panel.dates.iter().zip(&panel.predictions).zip(losses) {
        aggregate.push((*date, state.predict(preds)?));
        weight_history.push(state.weights.clone());
        learner_loss += state.mixture_loss(round_losses)?;
        state.update(round_losses)?;
    }
    let best = state
        .cumulative_losses
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(RunOutput {
        aggregate,
        weight_history,
        regret: learner_loss - best,
        bound: regret_bound(panel.n_experts(), horizon),
        state,
        learner_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// `(y − s_next)²`.
    Quadratic,
    /// Negative one-day trading P&L mapped affinely into `[0, 1]`.
    Trading,
}

/// The target each round is compared against: the next date's reference
/// price, and for the final date the outcome when one is known. Returns
/// one loss row per complete round; rounds cover a prefix of the panel.
pub fn build_losses(
    panel: &ExpertPanel,
    reference: &ReferenceSeries,
    outcome: Option<bool>,
    mode: LossMode,
) -> Result<Vec<Vec<f64>>, OnlineError> {
    let missing: Vec<i64> = panel
        .dates
        .iter()
        .copied()
        .filter(|d| reference.price_at(*d).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(OnlineError::MissingDates(missing));
    }
    let prices: Vec<f64> = panel
        .dates
        .iter()
        .map(|d| reference.price_at(*d).expect("checked"))
        .collect();
    let mut targets: Vec<f64> = prices.iter().skip(1).copied().collect();
    if let Some(w) = outcome {
        targets.push(if w { 1.0 } else { 0.0 });
    }
    if targets.is_empty() {
        return Err(OnlineError::NoRounds);
    }
    Ok(targets
        .iter()
        .enumerate()
        .map(|(k, target)| {
            panel.predictions[k]
                .iter()
                .map(|y| match mode {
                    LossMode::Quadratic => (y - target) * (y - target),
                    LossMode::Trading => trading_loss(*y, prices[k], *target),
                })
                .collect()
        })
        .collect())
}

/// `(1 − pnl) / 2` with `pnl = (y − s)(s_next − s) ∈ [−1, 1]`.
pub fn trading_loss(prediction: f64, price: f64, next_price: f64) -> f64 {
    let pnl = (prediction - price) * (next_price - price);
    (1.0 - pnl) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_examples() {
        let s = LearnerState::init(4, 10).unwrap();
        assert_eq!(s.weights, vec![0.25; 4]);
        assert_eq!(s.round, 0);
        let two = LearnerState::init(2, 8).unwrap();
        assert!((two.eta - 2f64.ln().sqrt()).abs() < 1e-12);
        assert!((two.eta - 0.83255).abs() < 1e-5);
        let one = LearnerState::init(1, 5).unwrap();
        assert_eq!(one.eta, 0.0);
        assert_eq!(one.weights, vec![1.0]);
        assert_eq!(LearnerState::init(0, 5), Err(OnlineError::NoExperts));
        assert_eq!(LearnerState::init(3, 0), Err(OnlineError::Horizon));
    }

    #[test]
    fn predict_examples() {
        let one = LearnerState::init(1, 1).unwrap();
        assert_eq!(one.predict(&[0.37]).unwrap(), 0.37);
        let two = LearnerState::init(2, 1).unwrap();
        assert!((two.predict(&[0.2, 0.8]).unwrap() - 0.5).abs() < 1e-15);
        let skew = LearnerState {
            weights: vec![0.9, 0.1],
            ..LearnerState::init(2, 1).unwrap()
        };
        assert!((skew.predict(&[1.0, 0.0]).unwrap() - 0.9).abs() < 1e-15);
        assert!(matches!(two.predict(&[0.1]), Err(OnlineError::Dimension { .. })));
    }

    #[test]
    fn update_examples() {
        let mut s = LearnerState::with_eta(3, 0.7);
        s.update(&[0.4, 0.4, 0.4]).unwrap();
        for w in &s.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }

        let mut s = LearnerState::with_eta(2, 1.0);
        s.update(&[0.0, 1.0]).unwrap();
        let e = (-1.0f64).exp();
        assert!((s.weights[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s.weights[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((s.weights[0] - 0.7311).abs() < 1e-4);
        assert_eq!(s.round, 1);

        let mut s = LearnerState::with_eta(2, 1.0);
        s.update(&[0.0, 1e4]).unwrap();
        assert_eq!(s.weights[1], 0.0);
        assert!(matches!(s.update(&[f64::NEG_INFINITY, 0.0]), Err(OnlineError::NonFiniteLoss(_))));
    }

    fn panel(rows: Vec<Vec<f64>>) -> ExpertPanel {
        let n = rows[0].len();
        ExpertPanel::new(
            (0..n).map(|i| format!("e{i}")).collect(),
            (0..rows.len() as i64).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn identical_experts_have_zero_regret() {
        let p = panel(vec![vec![0.3, 0.3, 0.3], vec![0.6, 0.6, 0.6]]);
        let out = run(&p, &[vec![0.2; 3], vec![0.5; 3]], 2).unwrap();
        assert_eq!(out.aggregate, vec![(0, 0.3), (1, 0.6)]);
        assert!(out.regret.abs() < 1e-15);
    }

    #[test]
    fn constant_losses_give_geometric_weights() {
        let t = 40;
        let p = panel(vec![vec![0.9, 0.1]; t]);
        let losses = vec![vec![0.1, 0.9]; t];
        let out = run(&p, &losses, t).unwrap();
        let eta = learning_rate(2, t);
        let ratio = out.state.weights[1] / out.state.weights[0];
        let expected = (-eta * t as f64 * 0.8).exp();
        assert!((ratio - expected).abs() < 1e-12 * expected.max(1e-300) + 1e-15);
        // aggregate approaches expert 0
        let last = out.aggregate.last().unwrap().1;
        assert!((last - 0.9).abs() < 1e-3);
        assert!(out.regret <= out.bound);
    }

    #[test]
    fn run_length_mismatch() {
        let p = panel(vec![vec![0.5, 0.5]; 3]);
        assert!(matches!(run(&p, &[vec![0.1, 0.2]], 3), Err(OnlineError::Length { .. })));
    }

    #[test]
    fn panel_validation() {
        assert!(ExpertPanel::new(vec![], vec![0], vec![vec![]]).is_err());
        assert!(ExpertPanel::new(vec!["a".into()], vec![0], vec![vec![1.5]]).is_err());
        assert!(ExpertPanel::new(vec!["a".into()], vec![1, 0], vec![vec![0.5], vec![0.5]]).is_err());
        assert!(ExpertPanel::new(vec!["a".into(), "b".into()], vec![0], vec![vec![0.5]]).is_err());
    }

    #[test]
    fn loss_construction() {
        let p = panel(vec![vec![0.6, 0.2], vec![0.7, 0.3], vec![0.8, 0.4]]);
        let r = ReferenceSeries::market(vec![(0, 0.5), (1, 0.6), (2, 0.4)]).unwrap();
        let q = build_losses(&p, &r, None, LossMode::Quadratic).unwrap();
        assert_eq!(q.len(), 2);
        assert!((q[0][0] - 0.0).abs() < 1e-15);
        assert!((q[1][1] - 0.01).abs() < 1e-15);
        let with_outcome = build_losses(&p, &r, Some(true), LossMode::Quadratic).unwrap();
        assert_eq!(with_outcome.len(), 3);
        assert!((with_outcome[2][0] - 0.04).abs() < 1e-15);

        let t = build_losses(&p, &r, None, LossMode::Trading).unwrap();
        // expert 0 day 0: long 0.1 at 0.5, price rises to 0.6 → pnl 0.01
        assert!((t[0][0] - (1.0 - 0.01) / 2.0).abs() < 1e-15);
        assert!(t.iter().flatten().all(|l| (0.0..=1.0).contains(l)));

        let short = ReferenceSeries::market(vec![(0, 0.5), (2, 0.4)]).unwrap();
        assert_eq!(
            build_losses(&p, &short, None, LossMode::Quadratic),
            Err(OnlineError::MissingDates(vec![1]))
        );
        let single = panel(vec![vec![0.5, 0.5]]);
        assert_eq!(build_losses(&single, &r, None, LossMode::Trading), Err(OnlineError::NoRounds));
        assert_eq!(build_losses(&single, &r, Some(false), LossMode::Trading).unwrap().len(), 1);
    }

    fn rounds(n: usize, t: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (
            proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, n), t),
            proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, n), t),
        )
    }

    proptest! {
        #[test]
        fn weights_stay_a_distribution((preds, losses) in rounds(4, 25)) {
            let out = run(&panel(preds), &losses, 25).unwrap();
            let total: f64 = out.state.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(out.state.weights.iter().all(|w| *w >= 0.0));
            let recomputed = exp_weights(&out.state.cumulative_losses, out.state.eta);
            for (a, b) in recomputed.iter().zip(&out.state.weights) {
                prop_assert_eq!(a, b);
            }
            prop_assert!(out.regret <= out.bound + 1e-12);
        }

        #[test]
        fn permuting_experts_permutes_weights((preds, losses) in rounds(3, 10)) {
            let perm = [2usize, 0, 1];
            let permute = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                rows.iter().map(|r| perm.iter().map(|&i| r[i]).collect()).collect()
            };
            let a = run(&panel(preds.clone()), &losses, 10).unwrap();
            let b = run(&panel(permute(&preds)), &permute(&losses), 10).unwrap();
            for (x, y) in a.aggregate.iter().zip(&b.aggregate) {
                prop_assert!((x.1 - y.1).abs() < 1e-12);
            }
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((b.state.weights[k] - a.state.weights[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn zero_eta_is_plain_mean((preds, losses) in rounds(3, 8)) {
            let mut s = LearnerState::with_eta(3, 0.0);
            for (p, l) in preds.iter().zip(&losses) {
                let mean = p.iter().sum::<f64>() / 3.0;
                prop_assert!((s.predict(p).unwrap() - mean).abs() < 1e-12);
                s.update(l).unwrap();
            }
        }
    }
}
