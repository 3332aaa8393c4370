//! JSON model files. Every file carries a format tag and version so a wrong
//! or future file is rejected before any field is trusted. Floats are written
//! with round-trip precision, so a reloaded model scores bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{AeDetector, PcaBaseline};
use crate::multimodal::MaeModel;
use crate::{Error, Result};

pub const FORMAT: &str = "anomalens-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Autoencoder(AeDetector),
    Multimodal(MaeModel),
    Pca(PcaBaseline),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Autoencoder(_) => "autoencoder",
            Model::Multimodal(_) => "multimodal",
            Model::Pca(_) => "pca",
        }
    }

    /// Cross-field checks serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        match self {
            Model::Autoencoder(d) => {
                if !d.net.is_autoencoder() {
                    return bad("network output size differs from its input size".into());
                }
                if d.normalizer.dim() != d.net.input_dim() {
                    return bad(format!(
                        "normalizer has {} dims, network expects {}",
                        d.normalizer.dim(),
                        d.net.input_dim()
                    ));
                }
                if !d.feature_names.is_empty() && d.feature_names.len() != d.net.input_dim() {
                    return bad("feature name count differs from input size".into());
                }
            }
            Model::Multimodal(m) => {
                let k = m.net.n_types();
                if m.normalizers.len() != k || m.nu.len() != k || m.weights.len() != k {
                    return bad(format!("expected {k} normalizers, learnability means and weights"));
                }
                for (n, d) in m.normalizers.iter().zip(m.net.input_dims()) {
                    if n.dim() != d {
                        return bad(format!("normalizer has {} dims, branch expects {d}", n.dim()));
                    }
                }
                let sum: f64 = m.weights.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("type weights sum to {sum}"));
                }
            }
            Model::Pca(p) => {
                let dims = p.normalizer.dim();
                if p.mean.len() != dims || p.components.ncols() != dims || p.explained_variance.len() != p.components.nrows() {
                    return bad("PCA component shapes are inconsistent".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a Model,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct Envelope {
    model: Model,
}

pub fn to_json(model: &Model) -> Result<String> {
    let env = EnvelopeRef {
        format: FORMAT,
        version: VERSION,
        model,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn from_json(text: &str) -> Result<Model> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Format(format!("not a model file: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::Format(format!("unknown format '{}'", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::Format(format!(
            "model file version {} is not supported (expected {VERSION})",
            header.version
        )));
    }
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    env.model.validate()?;
    Ok(env.model)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, to_json(model)? + "\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    from_json(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{train_detector, AeArchitecture};
    use crate::neuralnet::{Activation, TrainConfig};
    use ndarray::Array2;

    fn detector() -> AeDetector {
        let data = Array2::from_shape_fn((40, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 3.0 + j as f64);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 0.1,
            weight_decay: 1e-6,
            seed: 4,
        };
        train_detector(data.view(), &AeArchitecture::shallow(2, Activation::Sigmoid, Activation::Identity), &cfg)
            .unwrap()
            .0
    }

    #[test]
    fn round_trip_is_exact() {
        let m = Model::Autoencoder(detector());
        let back = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        let m = Model::Autoencoder(detector());
        let text = to_json(&m).unwrap();
        let future = text.replacen("\"version\":1", "\"version\":99", 1);
        assert!(matches!(from_json(&future), Err(Error::Format(m)) if m.contains("99")));
        let foreign = text.replacen(FORMAT, "other", 1);
        assert!(matches!(from_json(&foreign), Err(Error::Format(_))));
        assert!(matches!(from_json("{\"a\":1}"), Err(Error::Format(_))));
        assert_eq!(from_json("[]").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let mut d = detector();
        d.feature_names = vec!["only_one".into()];
        let text = to_json(&Model::Autoencoder(d)).unwrap();
        assert!(matches!(from_json(&text), Err(Error::Format(_))));
    }
}
