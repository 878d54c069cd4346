//! The latent codec: a per-residue variational encoder from (coords, local
//! geometry, label) to d_z Gaussian channels, and a decoder back to the
//! geometry code and label logits. A hand-wired linear instance gives an
//! exact round trip and doubles as the canonical code the toy datasets are
//! generated with.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::flow::{BinderState, CodecDecoder, CodecEncoder, LabelDecoder};
use crate::rngkit::RngKey;

use super::nn::Mlp;

pub const N_LABELS: usize = 4;
pub const AUX_DIM: usize = 2;
/// Logit scale of the hand-wired decoder; large enough that moderate latent
/// noise cannot flip the argmax.
const IDENTITY_LOGIT_GAIN: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCodec {
    pub d_z: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub enc_params: Vec<f64>,
    pub dec_params: Vec<f64>,
}

fn onehot(label: u8) -> [f64; N_LABELS] {
    let mut v = [0.0; N_LABELS];
    v[label as usize] = 1.0;
    v
}

impl ToyCodec {
    fn enc_mlp(&self) -> Mlp {
        Mlp::new(3 + AUX_DIM + N_LABELS, self.enc_hidden.clone(), 2 * self.d_z, 0)
    }

    fn dec_mlp(&self) -> Mlp {
        Mlp::new(3 + self.d_z, self.dec_hidden.clone(), AUX_DIM + N_LABELS, 0)
    }

    pub fn init(d_z: usize, enc_hidden: Vec<usize>, dec_hidden: Vec<usize>, key: RngKey) -> Self {
        let mut codec = ToyCodec {
            d_z,
            enc_hidden,
            dec_hidden,
            enc_params: Vec::new(),
            dec_params: Vec::new(),
        };
        codec.enc_params = codec.enc_mlp().init_params(key.child("enc"));
        codec.dec_params = codec.dec_mlp().init_params(key.child("dec"));
        codec
    }

    /// Linear codec that copies the geometry code into z[0..2] and the label
    /// one-hot into z[2..6], with posterior log-std fixed at ln(code_noise).
    /// Encoding at the mean and decoding reproduces inputs exactly; this is
    /// also the generative code behind the toy datasets.
    pub fn identity(d_z: usize, code_noise: f64) -> Result<Self> {
        if d_z < AUX_DIM + N_LABELS {
            return Err(CoreError::InvalidArgument(format!(
                "identity codec needs d_z >= {}, got {}",
                AUX_DIM + N_LABELS,
                d_z
            )));
        }
        if !(code_noise > 0.0 && code_noise.is_finite()) {
            return Err(CoreError::InvalidArgument(format!(
                "code noise {} must be positive",
                code_noise
            )));
        }
        let mut codec = ToyCodec {
            d_z,
            enc_hidden: vec![],
            dec_hidden: vec![],
            enc_params: Vec::new(),
            dec_params: Vec::new(),
        };
        let enc = codec.enc_mlp();
        let in_e = 3 + AUX_DIM + N_LABELS;
        let out_e = 2 * d_z;
        let mut ep = vec![0.0; enc.n_params()];
        // Weight block is out_e x in_e row-major, then out_e biases.
        for k in 0..AUX_DIM {
            ep[k * in_e + 3 + k] = 1.0;
        }
        for c in 0..N_LABELS {
            ep[(AUX_DIM + c) * in_e + 3 + AUX_DIM + c] = 1.0;
        }
        for j in d_z..out_e {
            ep[out_e * in_e + j] = code_noise.ln(); // log-std biases
        }
        codec.enc_params = ep;

        let dec = codec.dec_mlp();
        let in_d = 3 + d_z;
        let out_d = AUX_DIM + N_LABELS;
        let mut dp = vec![0.0; dec.n_params()];
        for k in 0..AUX_DIM {
            dp[k * in_d + 3 + k] = 1.0;
        }
        for c in 0..N_LABELS {
            dp[(AUX_DIM + c) * in_d + 3 + AUX_DIM + c] = IDENTITY_LOGIT_GAIN;
        }
        let _ = out_d;
        codec.dec_params = dp;
        Ok(codec)
    }

    fn enc_input(coords: &[f64; 3], aux: &[f64; AUX_DIM], label: u8) -> Vec<f64> {
        let mut f = Vec::with_capacity(3 + AUX_DIM + N_LABELS);
        f.extend_from_slice(coords);
        f.extend_from_slice(aux);
        f.extend_from_slice(&onehot(label));
        f
    }

    /// Posterior means only, flattened N x d_z: the deterministic encoding
    /// used as the latent regression target during field training.
    pub fn encode_mean(&self, coords: &[[f64; 3]], aux: &[[f64; AUX_DIM]], labels: &[u8]) -> Result<Vec<f64>> {
        let (mu, _) = self.encode_stats(coords, aux, labels)?;
        Ok(mu)
    }

    /// Full decode of latents: geometry code means and argmax labels.
    pub fn decode(&self, coords: &[[f64; 3]], z: &[f64]) -> Result<(Vec<[f64; AUX_DIM]>, Vec<u8>)> {
        let (ghat, logits) = self.decode_stats(coords, z)?;
        let labels = (0..coords.len())
            .map(|i| {
                let row = &logits[i * N_LABELS..(i + 1) * N_LABELS];
                let mut best = 0usize;
                for a in 1..N_LABELS {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best as u8
            })
            .collect();
        Ok((ghat, labels))
    }

    fn check_labels(labels: &[u8]) -> Result<()> {
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= N_LABELS) {
            return Err(CoreError::InvalidArgument(format!(
                "label {} out of range for {} classes",
                bad, N_LABELS
            )));
        }
        Ok(())
    }
}

impl CodecEncoder for ToyCodec {
    fn d_z(&self) -> usize {
        self.d_z
    }

    fn encode_stats(
        &self,
        coords: &[[f64; 3]],
        aux: &[[f64; AUX_DIM]],
        labels: &[u8],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if coords.len() != aux.len() || coords.len() != labels.len() {
            return Err(CoreError::Shape("encoder inputs disagree in length".into()));
        }
        ToyCodec::check_labels(labels)?;
        let mlp = self.enc_mlp();
        let mut mu = Vec::with_capacity(coords.len() * self.d_z);
        let mut ls = Vec::with_capacity(coords.len() * self.d_z);
        for i in 0..coords.len() {
            let out = mlp.forward(&self.enc_params, &Self::enc_input(&coords[i], &aux[i], labels[i]), &[]);
            mu.extend_from_slice(&out[..self.d_z]);
            ls.extend_from_slice(&out[self.d_z..]);
        }
        Ok((mu, ls))
    }
}

impl CodecDecoder for ToyCodec {
    fn d_z(&self) -> usize {
        self.d_z
    }

    fn n_labels(&self) -> usize {
        N_LABELS
    }

    fn decode_stats(&self, coords: &[[f64; 3]], z: &[f64]) -> Result<(Vec<[f64; AUX_DIM]>, Vec<f64>)> {
        if z.len() != coords.len() * self.d_z {
            return Err(CoreError::Shape(format!(
                "latent length {} != {} residues x d_z {}",
                z.len(),
                coords.len(),
                self.d_z
            )));
        }
        let mlp = self.dec_mlp();
        let mut ghat = Vec::with_capacity(coords.len());
        let mut logits = Vec::with_capacity(coords.len() * N_LABELS);
        for i in 0..coords.len() {
            let mut input = Vec::with_capacity(3 + self.d_z);
            input.extend_from_slice(&coords[i]);
            input.extend_from_slice(&z[i * self.d_z..(i + 1) * self.d_z]);
            let out = mlp.forward(&self.dec_params, &input, &[]);
            ghat.push([out[0], out[1]]);
            logits.extend_from_slice(&out[AUX_DIM..]);
        }
        Ok((ghat, logits))
    }
}

impl LabelDecoder for ToyCodec {
    fn decode_labels(&self, state: &BinderState) -> Result<Vec<u8>> {
        if state.d_z != self.d_z {
            return Err(CoreError::Shape(format!(
                "state d_z {} != codec d_z {}",
                state.d_z, self.d_z
            )));
        }
        let (_, labels) = self.decode(&state.coords, &state.latents)?;
        Ok(labels)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CodecTrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub beta: f64,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        CodecTrainConfig { lr: 0.05, steps: 500, batch: 16, beta: 0.1 }
    }
}

/// Value and parameter gradients of the negated single-sample beta-ELBO for
/// one batch (lower is better here). The reparametrization draws consume
/// `rng` in the same order as [`crate::flow::elbo_loss`], so freezing the
/// stream makes the two paths evaluate the identical objective.
pub fn elbo_grads(
    codec: &ToyCodec,
    batch: &[crate::flow::CodecBatchItem],
    beta: f64,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(CoreError::InvalidArgument("empty codec batch".into()));
    }
    let enc = codec.enc_mlp();
    let dec = codec.dec_mlp();
    let d_z = codec.d_z;
    let normal = StandardNormal;
    let mut enc_grad = vec![0.0; enc.n_params()];
    let mut dec_grad = vec![0.0; dec.n_params()];
    let scale = 1.0 / batch.len() as f64;
    let ln_norm = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for item in batch {
        let n = item.coords.len();
        if item.aux.len() != n || item.labels.len() != n {
            return Err(CoreError::Shape("codec item field lengths disagree".into()));
        }
        ToyCodec::check_labels(&item.labels)?;
        for i in 0..n {
            let e_in = ToyCodec::enc_input(&item.coords[i], &item.aux[i], item.labels[i]);
            let (e_out, e_cache) = enc.forward_cached(&codec.enc_params, &e_in, &[]);
            let (mu, ls) = e_out.split_at(d_z);
            let sigma: Vec<f64> = ls.iter().map(|&l| l.exp()).collect();
            let eps: Vec<f64> = (0..d_z).map(|_| normal.sample(rng)).collect();
            let z: Vec<f64> = (0..d_z).map(|j| mu[j] + sigma[j] * eps[j]).collect();

            let mut d_in = Vec::with_capacity(3 + d_z);
            d_in.extend_from_slice(&item.coords[i]);
            d_in.extend_from_slice(&z);
            let (d_out_fwd, d_cache) = dec.forward_cached(&codec.dec_params, &d_in, &[]);
            let (ghat, logits) = d_out_fwd.split_at(AUX_DIM);

            // Negated ELBO pieces for this residue.
            let mut nll = 0.0;
            let mut d_dec_out = vec![0.0; AUX_DIM + N_LABELS];
            for k in 0..AUX_DIM {
                let diff = ghat[k] - item.aux[i][k];
                nll += 0.5 * diff * diff + ln_norm;
                d_dec_out[k] = diff * scale;
            }
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
            let label = item.labels[i] as usize;
            nll += lse - logits[label];
            for a in 0..N_LABELS {
                let p = (logits[a] - lse).exp();
                d_dec_out[AUX_DIM + a] = (p - if a == label { 1.0 } else { 0.0 }) * scale;
            }

            let mut d_dec_in = vec![0.0; 3 + d_z];
            dec.backward(&codec.dec_params, &d_cache, &d_dec_out, &mut dec_grad, Some(&mut d_dec_in));
            let d_z_grad = &d_dec_in[3..];

            let mut kl = 0.0;
            let mut d_enc_out = vec![0.0; 2 * d_z];
            for j in 0..d_z {
                let s2 = sigma[j] * sigma[j];
                kl += 0.5 * (mu[j] * mu[j] + s2 - 1.0 - 2.0 * ls[j]);
                d_enc_out[j] = d_z_grad[j] + beta * mu[j] * scale;
                d_enc_out[d_z + j] = d_z_grad[j] * sigma[j] * eps[j] + beta * (s2 - 1.0) * scale;
            }
            enc.backward(&codec.enc_params, &e_cache, &d_enc_out, &mut enc_grad, None);
            total += (nll + beta * kl) * scale;
        }
    }
    if !total.is_finite() {
        return Err(CoreError::Numeric("non-finite codec objective".into()));
    }
    Ok((total, enc_grad, dec_grad))
}

/// Plain SGD on the negated beta-ELBO. Returns the per-step objective trace.
pub fn train_codec(
    codec: &mut ToyCodec,
    items: &[crate::flow::CodecBatchItem],
    cfg: &CodecTrainConfig,
    key: RngKey,
) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(CoreError::InvalidArgument("codec training needs data".into()));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) || cfg.steps == 0 || cfg.batch == 0 {
        return Err(CoreError::Config("codec training config must have positive lr, steps, batch".into()));
    }
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let step_key = key.child("codec-step").child_idx(step as u64);
        let mut pick = step_key.child("pick").rng();
        let batch: Vec<crate::flow::CodecBatchItem> = (0..cfg.batch)
            .map(|_| items[rand::Rng::random_range(&mut pick, 0..items.len())].clone())
            .collect();
        let mut noise = step_key.child("noise").rng();
        let (loss, eg, dg) = elbo_grads(codec, &batch, cfg.beta, &mut noise)?;
        if !loss.is_finite() || loss.abs() > 1e6 {
            return Err(CoreError::TrainingDiverged { step, loss });
        }
        for (p, g) in codec.enc_params.iter_mut().zip(&eg) {
            *p -= cfg.lr * g;
        }
        for (p, g) in codec.dec_params.iter_mut().zip(&dg) {
            *p -= cfg.lr * g;
        }
        trace.push(loss);
    }
    Ok(trace)
}
