use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ErrorMode {
    Exact,
    Constant {
        s: Vec<f64>,
    },
    /// Every landmark redrawn each step.
    PerStepAll {
        seed: u64,
    },
    /// `count` landmarks picked and redrawn each step, the rest exact.
    PerStepSubset {
        count: usize,
        seed: u64,
    },
}

/// Scale realizations, indexed by global landmark id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModel {
    #[serde(flatten)]
    pub mode: ErrorMode,
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
}

impl ErrorModel {
    pub fn new(mode: ErrorMode, num_landmarks: usize, s_min: f64, s_max: f64) -> Self {
        Self {
            mode,
            s_min: vec![s_min; num_landmarks],
            s_max: vec![s_max; num_landmarks],
        }
    }

    pub fn exact(num_landmarks: usize) -> Self {
        Self::new(ErrorMode::Exact, num_landmarks, 1.0, 1.0)
    }

    pub fn validate(&self, num_landmarks: usize) -> Result<(), String> {
        if self.s_min.len() != num_landmarks || self.s_max.len() != num_landmarks {
            return Err(format!("error bounds must have {num_landmarks} entries"));
        }
        for (j, (lo, hi)) in self.s_min.iter().zip(&self.s_max).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo <= hi) {
                return Err(format!("landmark {j}: need 0 < s_min <= s_max, got [{lo}, {hi}]"));
            }
        }
        match &self.mode {
            ErrorMode::Constant { s } => {
                if s.len() != num_landmarks {
                    return Err(format!(
                        "constant scale has {} entries, expected {num_landmarks}",
                        s.len()
                    ));
                }
                for (j, v) in s.iter().enumerate() {
                    if !(self.s_min[j] <= *v && *v <= self.s_max[j]) {
                        return Err(format!("constant scale {v} of landmark {j} is outside its bounds"));
                    }
                }
            }
            ErrorMode::PerStepSubset { count, .. } if *count > num_landmarks => {
                return Err(format!("subset size {count} exceeds {num_landmarks} landmarks"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn sampler(&self) -> ScaleSampler {
        let seed = match self.mode {
            ErrorMode::PerStepAll { seed } | ErrorMode::PerStepSubset { seed, .. } => seed,
            _ => 0,
        };
        ScaleSampler {
            model: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Deterministic stream of scale vectors for one run.
#[derive(Debug, Clone)]
pub struct ScaleSampler {
    model: ErrorModel,
    rng: ChaCha8Rng,
}

impl ScaleSampler {
    pub fn draw(&mut self) -> Vec<f64> {
        let n = self.model.s_min.len();
        let (lo, hi) = (&self.model.s_min, &self.model.s_max);
        match &self.model.mode {
            ErrorMode::Exact => vec![1.0; n],
            ErrorMode::Constant { s } => s.clone(),
            ErrorMode::PerStepAll { .. } => (0..n).map(|j| self.rng.random_range(lo[j]..=hi[j])).collect(),
            ErrorMode::PerStepSubset { count, .. } => {
                let mut s = vec![1.0; n];
                let mut picked = sample(&mut self.rng, n, *count).into_vec();
                picked.sort_unstable();
                for j in picked {
                    s[j] = self.rng.random_range(lo[j]..=hi[j]);
                }
                s
            }
        }
    }
}
