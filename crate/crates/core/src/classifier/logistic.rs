use crate::alphabet::{MaskedSequence, Token, OMEGA};
use crate::classifier::{bce_loss, clamp_prediction, trained_step, Denoiser, DenoiserOutput, Learner, TrainExample};
use crate::error::{GgmError, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// Per-token logistic regression over one-hot `(position, token)` context
/// features and a one-hot time bucket of width `L`.
///
/// Parameters are laid out as `[w_0 | w_1 | … | w_{V−1} | b]`, each `w_a` of
/// length [`LogisticModel::feature_dim`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    vocab: usize,
    len: usize,
    horizon: usize,
    learning_rate: f64,
    params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn new(vocab: usize, len: usize, horizon: usize) -> Result<Self> {
        if vocab == 0 || len == 0 {
            return Err(GgmError::InvalidInput("logistic model needs V ≥ 1 and L ≥ 1".into()));
        }
        let mut model = Self { vocab, len, horizon, learning_rate: DEFAULT_LEARNING_RATE, params: Vec::new() };
        model.params = vec![0.0; model.param_count()];
        Ok(model)
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn time_buckets(&self) -> usize {
        self.horizon.div_ceil(self.len).max(1)
    }

    pub fn feature_dim(&self) -> usize {
        self.len * self.vocab + self.time_buckets()
    }

    pub fn param_count(&self) -> usize {
        (self.feature_dim() + 1) * self.vocab
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn from_params(vocab: usize, len: usize, horizon: usize, learning_rate: f64, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::new(vocab, len, horizon)?.with_learning_rate(learning_rate);
        if params.len() != model.param_count() {
            return Err(GgmError::ShapeMismatch(format!(
                "expected {} logistic parameters, got {}",
                model.param_count(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    /// Active feature indices for a masked query at step `t`.
    fn features(&self, masked: &MaskedSequence, t: usize) -> Vec<usize> {
        let mut active: Vec<usize> = masked
            .entries()
            .iter()
            .enumerate()
            .filter(|&(_, &tok)| tok != OMEGA)
            .map(|(j, &tok)| j * self.vocab + tok as usize)
            .collect();
        let bucket = (trained_step(t, self.horizon, self.len) / self.len).min(self.time_buckets() - 1);
        active.push(self.len * self.vocab + bucket);
        active
    }

    fn bias_index(&self, token: usize) -> usize {
        self.vocab * self.feature_dim() + token
    }

    fn logit(&self, features: &[usize], token: usize) -> f64 {
        let row = token * self.feature_dim();
        self.params[self.bias_index(token)] + features.iter().map(|&f| self.params[row + f]).sum::<f64>()
    }

    /// Loss on the revealed token.
    pub fn example_loss(&self, example: &TrainExample) -> f64 {
        let features = self.features(&example.masked, example.t);
        let y = sigmoid(self.logit(&features, example.revealed as usize));
        bce_loss(clamp_prediction(y), example.label).expect("clamped")
    }

    /// Loss and its sparse gradient `(parameter index, ∂loss/∂θ)`.
    pub fn loss_gradient(&self, example: &TrainExample) -> (f64, Vec<(usize, f64)>) {
        let a = example.revealed as usize;
        let features = self.features(&example.masked, example.t);
        let y = sigmoid(self.logit(&features, a));
        let loss = bce_loss(clamp_prediction(y), example.label).expect("clamped");
        let dlogit = y - if example.label { 1.0 } else { 0.0 };
        let row = a * self.feature_dim();
        let mut grad: Vec<(usize, f64)> = features.iter().map(|&f| (row + f, dlogit)).collect();
        grad.push((self.bias_index(a), dlogit));
        (loss, grad)
    }
}

impl Denoiser for LogisticModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn predict(&self, masked: &MaskedSequence, t: usize) -> Result<DenoiserOutput> {
        if masked.len() != self.len {
            return Err(GgmError::ShapeMismatch(format!("expected length {}, got {}", self.len, masked.len())));
        }
        let features = self.features(masked, t);
        DenoiserOutput::new((0..self.vocab).map(|a| sigmoid(self.logit(&features, a))).collect())
    }
}

impl Learner for LogisticModel {
    fn update(&mut self, example: &TrainExample) -> f64 {
        let (loss, grad) = self.loss_gradient(example);
        for (i, g) in grad {
            self.params[i] -= self.learning_rate * g;
        }
        loss
    }
}

impl LogisticModel {
    /// Token id convenience for tests and diagnostics.
    pub fn predict_token(&self, masked: &MaskedSequence, t: usize, token: Token) -> Result<f64> {
        Ok(self.predict(masked, t)?.get(token))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{TokenAlphabet, TokenSequence};

    #[test]
    fn fresh_model_is_neutral() {
        let model = LogisticModel::new(3, 2, 6).unwrap();
        let x = TokenSequence::new(vec![2, 1], TokenAlphabet::new(3).unwrap()).unwrap();
        assert_eq!(model.predict(&x.mask(1), 4).unwrap().y_hat(), &[0.5, 0.5, 0.5]);
        assert_eq!(model.param_count(), (2 * 3 + 3 + 1) * 3);
    }

    #[test]
    fn sgd_moves_toward_label() {
        let mut model = LogisticModel::new(2, 2, 4).unwrap();
        let x = TokenSequence::new(vec![1, 0], TokenAlphabet::new(2).unwrap()).unwrap();
        let ex = TrainExample { masked: x.mask(0), revealed: 1, label: true, t: 0 };
        let before = model.predict_token(&ex.masked, 0, 1).unwrap();
        for _ in 0..20 {
            model.update(&ex);
        }
        assert!(model.predict_token(&ex.masked, 0, 1).unwrap() > before);
        // the other token's row is untouched
        assert_eq!(model.predict_token(&ex.masked, 0, 0).unwrap(), 0.5);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
