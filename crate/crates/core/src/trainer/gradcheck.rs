//! Finite-difference check of the joint SLAPS objective on a small
//! random instance.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{build_model, Dataset, ExperimentConfig, FeatureKind};
use crate::error::Result;
use crate::generators::{generate, GeneratorKind};
use crate::models::{
    sample_noise_binary, sample_noise_continuous, ContinuousNoise, PassInputs, ReconstructionLoss,
};
use crate::numerics::rng::{stream_rng, Stream};
use crate::numerics::{finite_diff_check, Coordinates, GradCheckReport, Matrix};

/// Step used for the central differences.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Gradient check of `L_C + λ·L_DAE` with respect to the generator, the
/// classifier and the denoiser simultaneously. Dropout is off and the kNN
/// support is frozen after the first pass.
pub fn gradcheck_slaps(
    seed: u64,
    kind: GeneratorKind,
    nodes: usize,
    feature_kind: FeatureKind,
) -> Result<GradCheckReport> {
    let mut rng = stream_rng(seed, Stream::Analysis);
    let (f, classes) = (6, 3);
    let x = Matrix::from_fn(nodes, f, |_, _| match feature_kind {
        FeatureKind::Continuous => rng.random_range(0.1..1.0),
        FeatureKind::Binary => (rng.random::<f64>() < 0.5) as u8 as f64,
    });
    let y: Vec<usize> = (0..nodes).map(|i| i % classes).collect();
    let dataset = Dataset {
        name: "gradcheck".into(),
        x: x.clone(),
        y: y.clone(),
        num_classes: classes,
        train: (0..nodes / 2).collect(),
        val: vec![nodes - 1],
        test: vec![nodes - 2],
        graph: None,
        feature_kind,
    };
    let cfg = ExperimentConfig {
        generator: kind,
        k: 3,
        hidden_c: 8,
        hidden_dae: Some(8),
        seed,
        ..ExperimentConfig::default()
    };
    let mut model = build_model(&dataset, &cfg)?;
    for p in model.generator.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    generate(model.generator.as_mut(), &x)?;
    model.generator.freeze_mask(true);

    let (noise, reconstruction) = match feature_kind {
        FeatureKind::Continuous => (
            sample_noise_continuous(&x, 30.0, ContinuousNoise::Zero, &mut rng)?,
            ReconstructionLoss::Mse,
        ),
        FeatureKind::Binary => (
            sample_noise_binary(&x, 30.0, 1.0, &mut rng)?,
            ReconstructionLoss::Bce,
        ),
    };
    let targets = dataset.targets(&dataset.train);
    let params: Vec<Matrix> = model.all_params().into_iter().cloned().collect();
    let eval = |ps: &[Matrix]| -> Result<(f64, Vec<Matrix>)> {
        for (dst, src) in model.all_params_mut().into_iter().zip(ps) {
            dst.clone_from(src);
        }
        let inputs = PassInputs {
            targets: &targets,
            classify: true,
            noise: Some(&noise),
            reconstruction,
            lambda: 0.7,
            eval_logits: false,
        };
        let mut pass = model.forward::<ChaCha8Rng>(&x, &inputs, None)?;
        pass.backward()?;
        let total = pass.value(pass.total)?.unwrap_or(0.0);
        let mut vars = pass.generator_vars.clone();
        vars.extend([pass.classifier_vars.w1, pass.classifier_vars.w2]);
        vars.extend([pass.dae_vars.w1, pass.dae_vars.w2]);
        Ok((total, pass.grads(&vars)?))
    };
    finite_diff_check(eval, &params, GRADCHECK_STEP, Coordinates::All, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_gradients_match_differences() {
        for kind in [GeneratorKind::Fp, GeneratorKind::Mlp, GeneratorKind::MlpDiag] {
            let r = gradcheck_slaps(0, kind, 12, FeatureKind::Continuous).unwrap();
            assert!(r.max_rel_error < 1e-5, "{kind}: {r:?}");
        }
    }
}
