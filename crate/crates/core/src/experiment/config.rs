//! Experiment configuration, read from and echoed as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::corpus::default_phonemes;
use crate::frame_select::{FcmParams, MethodKind, SelectionMethod};
use crate::frontend::FrontendConfig;
use crate::kernels::{KernelKind, KernelSpec};
use crate::svm::{CachePolicy, SvmParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads for grid cells and pair training; 0 = all processors.
    pub workers: usize,
    pub corpus: PathBuf,
    /// Sample rate for headerless PCM16 audio; unset means RIFF/SPHERE.
    pub raw_sample_rate: Option<u32>,
    pub phonemes: Vec<String>,
    /// Reuse extracted features across cells sharing a feature setting.
    pub feature_cache: bool,
    pub frontend: FrontendConfig,
    pub svm: SvmSection,
    pub fcm: FcmSection,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 0,
            corpus: PathBuf::new(),
            raw_sample_rate: None,
            phonemes: default_phonemes(),
            feature_cache: true,
            frontend: FrontendConfig::default(),
            svm: SvmSection::default(),
            fcm: FcmSection::default(),
            grid: GridSpec::default(),
        }
    }
}

/// Solver settings shared by every cell; C and σ come from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub kkt_tol: f64,
    pub alpha_eps: f64,
    pub max_passes: usize,
    pub max_iter: Option<usize>,
    pub cache: CachePolicy,
    pub poly_degree: u32,
    pub poly_r: f64,
    pub sigmoid_r: f64,
}

impl Default for SvmSection {
    fn default() -> Self {
        let base = SvmParams::default();
        SvmSection {
            kkt_tol: base.kkt_tol,
            alpha_eps: base.alpha_eps,
            max_passes: base.max_passes,
            max_iter: base.max_iter,
            cache: base.cache,
            poly_degree: 3,
            poly_r: 0.0,
            sigmoid_r: 0.0,
        }
    }
}

impl SvmSection {
    pub fn kernel(&self, kind: KernelKind, sigma: f64) -> KernelSpec {
        let r = match kind {
            KernelKind::Sigmoid => self.sigmoid_r,
            _ => self.poly_r,
        };
        KernelSpec::new(kind, sigma, r, self.poly_degree)
    }

    pub fn params(&self, c: f64, kernel: KernelSpec) -> SvmParams {
        SvmParams {
            c,
            kernel,
            kkt_tol: self.kkt_tol,
            alpha_eps: self.alpha_eps,
            max_passes: self.max_passes,
            max_iter: self.max_iter,
            cache: self.cache,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcmSection {
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmSection {
    fn default() -> Self {
        let p = FcmParams::default();
        FcmSection {
            m: p.m,
            tol: p.tol,
            max_iter: p.max_iter,
        }
    }
}

impl FcmSection {
    pub fn params(&self, seed: u64) -> FcmParams {
        FcmParams {
            m: self.m,
            tol: self.tol,
            max_iter: self.max_iter,
            seed,
        }
    }
}

/// Axes of the parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub features: Vec<String>,
    pub methods: Vec<MethodKind>,
    pub k: Vec<usize>,
    pub kernels: Vec<KernelKind>,
    pub c: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            features: vec!["mfcc36".into(), "plp36".into()],
            methods: vec![MethodKind::Middle],
            k: vec![3],
            kernels: vec![KernelKind::Polynomial, KernelKind::Rbf, KernelKind::Sigmoid],
            c: vec![10.0, 100.0, 1000.0, 10000.0],
            sigma: vec![0.027, 2.0],
        }
    }
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.features.len()
            * self.methods.len()
            * self.k.len()
            * self.kernels.len()
            * self.c.len()
            * self.sigma.len()
    }
}

/// Coordinates of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub feature: String,
    pub method: MethodKind,
    pub k: usize,
    pub kernel: KernelKind,
    pub c: f64,
    pub sigma: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::format(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `corpus` is resolved against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        if cfg.corpus.is_relative() && !cfg.corpus.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                cfg.corpus = dir.join(&cfg.corpus);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn fcm_params(&self) -> FcmParams {
        self.fcm.params(self.seed)
    }

    pub fn frontend_for(&self, feature: &str) -> Result<FrontendConfig> {
        self.frontend.with_feature_name(feature)
    }

    pub fn selection(&self, method: MethodKind, k: usize) -> SelectionMethod {
        SelectionMethod::new(method, k, self.fcm_params())
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let empty = [
            ("features", g.features.is_empty()),
            ("methods", g.methods.is_empty()),
            ("k", g.k.is_empty()),
            ("kernels", g.kernels.is_empty()),
            ("c", g.c.is_empty()),
            ("sigma", g.sigma.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::invalid(format!("grid.{name} is empty")));
        }
        if self.phonemes.len() < 2 {
            return Err(Error::invalid("need at least two phonemes"));
        }
        self.frontend.validate()?;
        for f in &g.features {
            self.frontend_for(f)?.validate()?;
        }
        for &m in &g.methods {
            for &k in &g.k {
                self.selection(m, k).validate()?;
            }
        }
        for &kind in &g.kernels {
            for &c in &g.c {
                for &s in &g.sigma {
                    self.svm.params(c, self.svm.kernel(kind, s)).validate()?;
                }
            }
        }
        Ok(())
    }

    /// Cartesian product in grid order: feature, method, K, kernel, C, σ.
    pub fn cells(&self) -> Vec<CellSpec> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.cell_count());
        for feature in &g.features {
            for &method in &g.methods {
                for &k in &g.k {
                    for &kernel in &g.kernels {
                        for &c in &g.c {
                            for &sigma in &g.sigma {
                                out.push(CellSpec {
                                    feature: feature.clone(),
                                    method,
                                    k,
                                    kernel,
                                    c,
                                    sigma,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
