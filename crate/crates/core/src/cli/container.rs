//! Versioned JSON container for fitted models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::BinaryClassifier;
use crate::error::{Error, Result};
use crate::evaluation::{FittedModel, Method};

pub const FORMAT: &str = "ssqda-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format: String,
    pub version: u32,
    /// Feature dimension.
    pub p: usize,
    pub method: Method,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub model: FittedModel,
}

impl ModelContainer {
    pub fn new(model: FittedModel, lambda1: Option<f64>, lambda2: Option<f64>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            p: model.dim(),
            method: model.method(),
            lambda1,
            lambda2,
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Format(format!("unknown model format '{}'", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Format(format!("unsupported model version {}", self.version)));
        }
        if self.method != self.model.method() {
            return Err(Error::Format("method field disagrees with the stored model".into()));
        }
        if self.model.dim() != self.p {
            return Err(Error::Format(format!(
                "declared dimension {} but the model has {}",
                self.p,
                self.model.dim()
            )));
        }
        if let FittedModel::Ssqda(m) | FittedModel::Sdar(m) = &self.model {
            m.validate().map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::LinearRule;
    use nalgebra::DVector;

    fn linear() -> ModelContainer {
        let rule = LinearRule {
            beta: DVector::from_vec(vec![0.5, 0.0]),
            center1: DVector::zeros(2),
            center2: DVector::from_vec(vec![1.0, 1.0]),
            prior_logratio: 0.0,
        };
        ModelContainer::new(FittedModel::Slda(rule), None, Some(0.1))
    }

    #[test]
    fn json_round_trip() {
        let c = linear();
        let back = ModelContainer::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(c.to_json().unwrap().contains("\"kind\": \"slda\""));
    }

    #[test]
    fn rejects_inconsistent_containers() {
        let mut c = linear();
        c.p = 3;
        assert!(ModelContainer::from_json(&c.to_json().unwrap()).is_err());
        let mut c = linear();
        c.version = 9;
        assert!(ModelContainer::from_json(&c.to_json().unwrap()).is_err());
        let mut c = linear();
        c.method = Method::RidgeQda;
        assert!(ModelContainer::from_json(&c.to_json().unwrap()).is_err());
        assert!(ModelContainer::from_json("{}").is_err());
    }
}
