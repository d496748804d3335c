use serde::{Deserialize, Serialize};

use super::{IntentionError, ObservationVector};

/// Diagonal weight of the goal transition matrix.
pub const DEFAULT_ALPHA: f64 = 0.823;

/// How the trellis is turned into a belief vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Max-product scores per state, normalized.
    #[default]
    Viterbi,
    /// Forward-algorithm filtering posterior.
    Forward,
}

/// Goal belief over auxiliary goals followed by the terminal goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalHmm {
    alpha: f64,
    transition: Vec<Vec<f64>>,
    belief: Vec<f64>,
    history: Vec<ObservationVector>,
    mode: DecodeMode,
    emission_floor: f64,
}

impl GoalHmm {
    pub fn new(states: usize, alpha: f64, mode: DecodeMode) -> Result<Self, IntentionError> {
        if states < 2 {
            return Err(IntentionError::BadGoalSet);
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(IntentionError::Config("alpha must lie in [0, 1]"));
        }
        let off = (1.0 - alpha) / (states - 1) as f64;
        let transition = (0..states)
            .map(|i| (0..states).map(|j| if i == j { alpha } else { off }).collect())
            .collect();
        Ok(Self {
            alpha,
            transition,
            belief: vec![1.0 / states as f64; states],
            history: Vec::new(),
            mode,
            emission_floor: 1e-3,
        })
    }

    pub fn with_emission_floor(mut self, floor: f64) -> Self {
        self.emission_floor = floor;
        self
    }

    pub fn states(&self) -> usize {
        self.belief.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    pub fn history(&self) -> &[ObservationVector] {
        &self.history
    }

    pub fn mode(&self) -> DecodeMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: DecodeMode) {
        self.mode = mode;
    }

    pub fn reset(&mut self) {
        let n = self.states();
        self.belief = vec![1.0 / n as f64; n];
        self.history.clear();
    }

    fn emissions(&self, o: &ObservationVector) -> Vec<f64> {
        let raw: Vec<f64> = o.values.iter().map(|v| v + self.emission_floor).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|e| e / sum).collect()
    }

    fn step(&self, prev: &[f64], o: &ObservationVector) -> Vec<f64> {
        let e = self.emissions(o);
        let n = self.states();
        let mut next = vec![0.0; n];
        for (j, slot) in next.iter_mut().enumerate() {
            let carried = match self.mode {
                DecodeMode::Viterbi => (0..n)
                    .map(|i| prev[i] * self.transition[i][j])
                    .fold(0.0, f64::max),
                // Self term first, then the others in index order, so equal
                // inputs give bit-equal sums in every column.
                DecodeMode::Forward => {
                    prev[j] * self.transition[j][j]
                        + (0..n)
                            .filter(|&i| i != j)
                            .map(|i| prev[i] * self.transition[i][j])
                            .sum::<f64>()
                }
            };
            *slot = carried * e[j];
        }
        normalize(next)
    }

    /// Folds one observation into the trellis and refreshes the belief.
    pub fn update(&mut self, o: ObservationVector) -> Result<&[f64], IntentionError> {
        if o.len() != self.states() {
            return Err(IntentionError::DimensionMismatch { expected: self.states(), got: o.len() });
        }
        self.belief = self.step(&self.belief, &o);
        self.history.push(o);
        Ok(&self.belief)
    }

    /// Recomputes the belief from the uniform prior over the whole history.
    pub fn recompute(&self) -> Vec<f64> {
        let n = self.states();
        let mut b = vec![1.0 / n as f64; n];
        for o in &self.history {
            b = self.step(&b, o);
        }
        b
    }

    pub fn argmax(&self) -> usize {
        self.belief
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// Scales by the maximum first so equal entries normalize to exactly 1/n.
fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let max = v.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        let n = v.len() as f64;
        return vec![1.0 / n; v.len()];
    }
    v.iter_mut().for_each(|x| *x /= max);
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(values: &[f64]) -> ObservationVector {
        ObservationVector { values: values.to_vec(), clamped: 0 }
    }

    #[test]
    fn transition_entries() {
        let h = GoalHmm::new(5, DEFAULT_ALPHA, DecodeMode::Viterbi).unwrap();
        for row in h.transition() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(h.transition()[0][0], 0.823);
        assert!((h.transition()[0][1] - 0.04425).abs() < 1e-15);
        assert_eq!(h.belief(), &[0.2; 5]);
    }

    #[test]
    fn uniform_observations_keep_uniform_belief() {
        for mode in [DecodeMode::Viterbi, DecodeMode::Forward] {
            let mut h = GoalHmm::new(5, DEFAULT_ALPHA, mode).unwrap();
            for _ in 0..50 {
                h.update(obs(&[1.0; 5])).unwrap();
                assert_eq!(h.belief(), &[0.2; 5]);
            }
        }
    }

    #[test]
    fn dimension_checked() {
        let mut h = GoalHmm::new(3, DEFAULT_ALPHA, DecodeMode::Viterbi).unwrap();
        assert_eq!(
            h.update(obs(&[1.0, 0.0])).unwrap_err(),
            IntentionError::DimensionMismatch { expected: 3, got: 2 }
        );
        assert!(GoalHmm::new(1, 0.8, DecodeMode::Viterbi).is_err());
    }

    #[test]
    fn evidence_accumulates_and_recompute_matches() {
        let mut h = GoalHmm::new(3, DEFAULT_ALPHA, DecodeMode::Viterbi).unwrap();
        for _ in 0..5 {
            h.update(obs(&[1.0, 0.2, 0.0])).unwrap();
        }
        assert_eq!(h.argmax(), 0);
        let again = h.recompute();
        for (a, b) in again.iter().zip(h.belief()) {
            assert!((a - b).abs() < 1e-15);
        }
        // The floor keeps every goal reachable: the belief can swing back.
        for _ in 0..10 {
            h.update(obs(&[0.0, 0.0, 1.0])).unwrap();
        }
        assert_eq!(h.argmax(), 2);
    }
}
