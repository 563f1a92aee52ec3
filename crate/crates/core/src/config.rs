//! Pipeline configuration.
//!
//! A UTF-8 text file of `section.key = value` lines. `#` starts a comment,
//! blank lines are ignored, lists are comma separated and unknown keys are
//! rejected. Relative paths are resolved against the file's directory.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ivm::IvmParams;
use crate::lbp::LbpConfig;
use crate::model::ClassSet;
use crate::synth::{PolygonParams, Scenario};
use crate::texture::GlcmConfig;
use crate::transitions::BASE_GAP_DAYS;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub height: usize,
    pub width: usize,
    pub patches: usize,
    pub dates: Vec<NaiveDate>,
    /// `None` turns speckle off.
    pub looks: Option<f64>,
    pub burn_start: Option<NaiveDate>,
    pub polygons: PolygonParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvmConfig {
    /// Kernel widths as multiples of the median pairwise distance.
    pub sigma_scales: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub max_import: usize,
    pub tol: f64,
    pub params: IvmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSource {
    /// Potts for the spatial matrix, the study matrix for the forward one.
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfConfig {
    pub delta: MatrixSource,
    pub forward: MatrixSource,
    pub beta_sp: f64,
    pub beta_temp: f64,
    pub base_gap: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub classes: ClassSet,
    pub scenario: ScenarioConfig,
    pub glcm: GlcmConfig,
    pub ivm: IvmConfig,
    pub mrf: MrfConfig,
    pub lbp: LbpConfig,
    /// Ground area of one pixel in hectares.
    pub pixel_area_ha: f64,
    pub runs: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sc = Scenario::study(0);
        Self {
            classes: ClassSet::study(),
            scenario: ScenarioConfig {
                height: sc.h,
                width: sc.w,
                patches: sc.patches,
                dates: sc.dates,
                looks: sc.looks,
                burn_start: sc.burn_start,
                polygons: sc.polygons,
            },
            glcm: GlcmConfig::default(),
            ivm: IvmConfig {
                sigma_scales: vec![0.5, 1.0, 2.0],
                c_grid: vec![1.0, 10.0, 100.0],
                folds: 3,
                max_import: 25,
                tol: 1e-3,
                params: IvmParams {
                    candidates: Some(64),
                    shortlist: 2,
                    newton_iters: 10,
                    seed: 0,
                },
            },
            mrf: MrfConfig {
                delta: MatrixSource::Builtin,
                forward: MatrixSource::Builtin,
                beta_sp: 1.0,
                beta_temp: 1.0,
                base_gap: BASE_GAP_DAYS,
            },
            lbp: LbpConfig::default(),
            // 5 m pixels
            pixel_area_ha: 0.0025,
            runs: 10,
            seed: 42,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Config(format!("{key}: cannot parse '{v}': {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    items.into_iter().map(|s| parse_num(key, s)).collect()
}

fn parse_date(key: &str, v: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|e| Error::Config(format!("{key}: bad date '{v}': {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_source(v: &str, base: &Path, builtin: &str) -> MatrixSource {
    if v == builtin {
        MatrixSource::Builtin
    } else {
        MatrixSource::File(base.join(v))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", n + 1)))?;
            c.set(key, value, base).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        let sc = &mut self.scenario;
        match key {
            "classes.names" => {
                let names: Vec<&str> = v.split(',').map(str::trim).collect();
                self.classes = ClassSet::new(names).map_err(|e| Error::Config(e.to_string()))?;
            }
            "scenario.height" => sc.height = parse_num(key, v)?,
            "scenario.width" => sc.width = parse_num(key, v)?,
            "scenario.patches" => sc.patches = parse_num(key, v)?,
            "scenario.dates" => {
                sc.dates = v.split(',').map(|d| parse_date(key, d.trim())).collect::<Result<_>>()?;
            }
            "scenario.looks" => sc.looks = if v == "off" { None } else { Some(parse_num(key, v)?) },
            "scenario.burn_start" => sc.burn_start = if v == "none" { None } else { Some(parse_date(key, v)?) },
            "scenario.polygons" => sc.polygons.count = parse_num(key, v)?,
            "scenario.polygon_min_side" => sc.polygons.min_side = parse_num(key, v)?,
            "scenario.polygon_max_side" => sc.polygons.max_side = parse_num(key, v)?,
            "scenario.samples_per_polygon" => sc.polygons.per_poly = parse_num(key, v)?,
            "scenario.min_sample_distance" => sc.polygons.min_dist = parse_num(key, v)?,
            "glcm.window" => self.glcm.window = parse_num(key, v)?,
            "glcm.levels" => self.glcm.levels = parse_num(key, v)?,
            "glcm.offset" => self.glcm.offset = parse_num(key, v)?,
            "ivm.sigma_scales" => self.ivm.sigma_scales = parse_list(key, v)?,
            "ivm.c_grid" => self.ivm.c_grid = parse_list(key, v)?,
            "ivm.folds" => self.ivm.folds = parse_num(key, v)?,
            "ivm.max_import" => self.ivm.max_import = parse_num(key, v)?,
            "ivm.tol" => self.ivm.tol = parse_num(key, v)?,
            "ivm.candidates" => {
                self.ivm.params.candidates = if v == "all" { None } else { Some(parse_num(key, v)?) }
            }
            "ivm.shortlist" => self.ivm.params.shortlist = parse_num(key, v)?,
            "ivm.newton_iters" => self.ivm.params.newton_iters = parse_num(key, v)?,
            "mrf.delta" => self.mrf.delta = parse_source(v, base, "potts"),
            "mrf.forward" => self.mrf.forward = parse_source(v, base, "default"),
            "mrf.beta_sp" => self.mrf.beta_sp = parse_num(key, v)?,
            "mrf.beta_temp" => self.mrf.beta_temp = parse_num(key, v)?,
            "mrf.base_gap" => self.mrf.base_gap = parse_num(key, v)?,
            "lbp.max_iters" => self.lbp.max_iters = parse_num(key, v)?,
            "lbp.min_iters" => self.lbp.min_iters = parse_num(key, v)?,
            "lbp.stable_sweeps" => self.lbp.stable_sweeps = parse_num(key, v)?,
            "lbp.damping" => self.lbp.damping = parse_num(key, v)?,
            "lbp.convergence_eps" => self.lbp.convergence_eps = parse_num(key, v)?,
            "lbp.window" => self.lbp.window = parse_num(key, v)?,
            "lbp.normalize" => self.lbp.normalize = parse_bool(key, v)?,
            "assess.pixel_area_ha" => self.pixel_area_ha = parse_num(key, v)?,
            "pipeline.runs" => self.runs = parse_num(key, v)?,
            "pipeline.seed" => self.seed = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.classes.len() != crate::model::STUDY_CLASSES.len() {
            return cfg(format!(
                "the synthetic scenario has {} classes, classes.names lists {}",
                crate::model::STUDY_CLASSES.len(),
                self.classes.len()
            ));
        }
        if !(self.mrf.beta_sp >= 0.0 && self.mrf.beta_sp.is_finite())
            || !(self.mrf.beta_temp >= 0.0 && self.mrf.beta_temp.is_finite())
        {
            return cfg("mrf.beta_sp and mrf.beta_temp must be finite and >= 0".into());
        }
        if self.mrf.base_gap == 0 {
            return cfg("mrf.base_gap must be >= 1".into());
        }
        if self.runs == 0 {
            return cfg("pipeline.runs must be >= 1".into());
        }
        if self.ivm.folds < 2 {
            return cfg("ivm.folds must be >= 2".into());
        }
        if self.ivm.max_import == 0 || !(self.ivm.tol > 0.0) {
            return cfg("ivm.max_import must be >= 1 and ivm.tol > 0".into());
        }
        if self.ivm.params.shortlist == 0 || self.ivm.params.newton_iters == 0 {
            return cfg("ivm.shortlist and ivm.newton_iters must be >= 1".into());
        }
        if self.ivm.sigma_scales.iter().chain(&self.ivm.c_grid).any(|v| !(*v > 0.0 && v.is_finite())) {
            return cfg("ivm grids must hold positive values".into());
        }
        if !(self.pixel_area_ha > 0.0) {
            return cfg("assess.pixel_area_ha must be positive".into());
        }
        self.glcm.validate()?;
        self.lbp.validate()?;
        for src in [&self.mrf.delta, &self.mrf.forward] {
            if let MatrixSource::File(p) = src {
                if !p.is_file() {
                    return cfg(format!("matrix file {} does not exist", p.display()));
                }
            }
        }
        self.scenario(self.seed).validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// The synthetic scenario described by this config.
    pub fn scenario(&self, seed: u64) -> Scenario {
        let s = &self.scenario;
        Scenario {
            h: s.height,
            w: s.width,
            patches: s.patches,
            dates: s.dates.clone(),
            looks: s.looks,
            burn_start: s.burn_start,
            polygons: PolygonParams {
                min_train_per_class: self.ivm.folds,
                ..s.polygons.clone()
            },
            ..Scenario::study(seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let text = "# comment\nmrf.beta_sp = 2.5\n\nivm.c_grid = 1, 4 ,16  # trailing\nscenario.looks = off\nlbp.normalize = false\nivm.candidates = all\n";
        let c = PipelineConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(c.mrf.beta_sp, 2.5);
        assert_eq!(c.ivm.c_grid, vec![1.0, 4.0, 16.0]);
        assert_eq!(c.scenario.looks, None);
        assert!(!c.lbp.normalize);
        assert_eq!(c.ivm.params.candidates, None);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let e = PipelineConfig::parse("mrf.beta_spp = 1", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("beta_spp"));
        assert_eq!(e.exit_code(), 2);
        assert!(PipelineConfig::parse("mrf.beta_temp = -1", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("pipeline.runs = 0", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("no equals sign", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("mrf.forward = missing.csv", Path::new("/nonexistent")).is_err());
    }

    #[test]
    fn default_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }
}
