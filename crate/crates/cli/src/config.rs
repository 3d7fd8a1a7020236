//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use crossed_fields_core::semiclassics::KernelKind;
use crossed_fields_core::{Bump, Grid2D, OperatorParams, PotentialSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Inclusive arithmetic range `start, start + step, ..., stop`.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn values(&self, name: &str) -> Result<Vec<f64>, CliError> {
        finite(name, &[self.start, self.stop, self.step])?;
        if self.step <= 0.0 || self.stop < self.start {
            return Err(CliError::Config(format!("{name}: need step > 0 and stop >= start")));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.start + k as f64 * self.step).collect())
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Zero,
    GaussianBump,
    CompactPolynomialBump,
    SumOfBumps,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BumpBlock {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    pub kind: PotentialKind,
    pub amplitude: Option<f64>,
    pub width: Option<f64>,
    #[serde(default)]
    pub center: [f64; 2],
    /// Truncation radius for Gaussian profiles; the radius itself for the polynomial bump.
    pub support_radius: Option<f64>,
    #[serde(default)]
    pub bumps: Vec<BumpBlock>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "one_list")]
    pub h: OneOrMany,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub l: OneOrMany,
    pub spacing: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QueryBlock {
    pub lambda: Option<Range>,
    #[serde(default = "half")]
    pub sigma: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Scan window.
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    /// `[lambda1, lambda2]` for the Weyl increment.
    #[serde(default = "default_weyl_window")]
    pub weyl_window: [f64; 2],
    pub c0_lambda: Option<Range>,
    pub tau: Option<Range>,
    #[serde(default = "half")]
    pub kernel_c0: f64,
    #[serde(default = "default_kernel_kind")]
    pub kernel_kind: KernelKind,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: Option<PotentialBlock>,
    pub operator: Option<OperatorBlock>,
    pub grid: Option<GridBlock>,
    pub query: Option<QueryBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn one() -> f64 {
    1.0
}
fn one_list() -> OneOrMany {
    OneOrMany::One(1.0)
}
fn half() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    0.05
}
fn default_window() -> [f64; 2] {
    [-3.0, 3.0]
}
fn default_weyl_window() -> [f64; 2] {
    [-6.0, 0.0]
}
fn default_kernel_kind() -> KernelKind {
    KernelKind::Autocorrelation
}

fn finite(name: &str, values: &[f64]) -> Result<(), CliError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name}: all values must be finite")))
    }
}

fn missing(block: &str) -> CliError {
    CliError::Config(format!("missing [{block}] block"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn potential(&self) -> Result<PotentialSpec, CliError> {
        let p = self.potential.as_ref().ok_or_else(|| missing("potential"))?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("[potential] {name} is required for this kind")))
        };
        let spec = match p.kind {
            PotentialKind::Zero => PotentialSpec::zero(),
            PotentialKind::GaussianBump => {
                let s = PotentialSpec::gaussian(need(p.amplitude, "amplitude")?, need(p.width, "width")?);
                let s = s.centered_at(p.center[0], p.center[1]);
                match p.support_radius {
                    Some(r) => s.truncated(r),
                    None => s,
                }
            }
            PotentialKind::CompactPolynomialBump => PotentialSpec::compact_polynomial(
                need(p.amplitude, "amplitude")?,
                need(p.support_radius, "support_radius")?,
            )
            .centered_at(p.center[0], p.center[1]),
            PotentialKind::SumOfBumps => {
                if p.bumps.is_empty() {
                    return Err(CliError::Config("[potential] bumps must be nonempty".into()));
                }
                let bumps =
                    p.bumps.iter().map(|b| Bump::new(b.amplitude, b.width, (b.center[0], b.center[1]))).collect();
                let s = PotentialSpec::sum_of_bumps(bumps);
                match p.support_radius {
                    Some(r) => s.truncated(r),
                    None => s,
                }
            }
        };
        spec.validate().map_err(|e| CliError::Config(format!("[potential] {e}")))?;
        Ok(spec)
    }

    fn operator_block(&self) -> Result<&OperatorBlock, CliError> {
        self.operator.as_ref().ok_or_else(|| missing("operator"))
    }

    pub fn h_list(&self) -> Result<Vec<f64>, CliError> {
        let hs = self.operator_block()?.h.to_vec();
        if hs.is_empty() {
            return Err(CliError::Config("[operator] h must be nonempty".into()));
        }
        finite("[operator] h", &hs)?;
        Ok(hs)
    }

    /// Parameters at the first listed `h`.
    pub fn params(&self) -> Result<OperatorParams, CliError> {
        self.params_at(self.h_list()?[0])
    }

    pub fn params_at(&self, h: f64) -> Result<OperatorParams, CliError> {
        let op = self.operator_block()?;
        finite("[operator]", &[op.b, op.eps])?;
        OperatorParams::new(op.b, op.eps, h).map_err(|e| CliError::Config(format!("[operator] {e}")))
    }

    pub fn grids(&self) -> Result<Vec<Grid2D>, CliError> {
        let g = self.grid.as_ref().ok_or_else(|| missing("grid"))?;
        let ls = g.l.to_vec();
        if ls.is_empty() {
            return Err(CliError::Config("[grid] l must be nonempty".into()));
        }
        finite("[grid] l", &ls)?;
        ls.iter()
            .map(|&l| {
                let grid = match (g.spacing, g.nx) {
                    (Some(s), None) => {
                        finite("[grid] spacing", &[s])?;
                        Grid2D::square_with_spacing(l, s)
                    }
                    (None, Some(nx)) => Grid2D::new(l, l, nx, g.ny.unwrap_or(nx)),
                    _ => return Err(CliError::Config("[grid] give exactly one of spacing or nx".into())),
                };
                grid.map_err(|e| CliError::Config(format!("[grid] {e}")))
            })
            .collect()
    }

    pub fn query(&self) -> Result<&QueryBlock, CliError> {
        let q = self.query.as_ref().ok_or_else(|| missing("query"))?;
        finite("[query]", &[q.sigma, q.tolerance, q.kernel_c0])?;
        finite("[query] window", &q.window)?;
        finite("[query] weyl_window", &q.weyl_window)?;
        if q.sigma <= 0.0 {
            return Err(CliError::Config("[query] sigma must be positive".into()));
        }
        Ok(q)
    }

    pub fn lambdas(&self) -> Result<Vec<f64>, CliError> {
        self.query()?
            .lambda
            .ok_or_else(|| CliError::Config("[query] lambda range is required".into()))?
            .values("[query] lambda")
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf).or_else(|| self.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
        [potential]
        kind = "gaussian-bump"
        amplitude = 0.5
        width = 1.0
        support_radius = 6.0

        [operator]
        b = 1.0
        eps = 1.0
        h = [1.0, 0.7]

        [grid]
        l = [8.0, 12.0]
        spacing = 0.25

        [query]
        lambda = { start = -2.0, stop = 2.0, step = 0.25 }
    "#;

    #[test]
    fn parses_the_full_form() {
        let c = ExperimentConfig::parse(FULL).unwrap();
        assert_eq!(c.potential().unwrap(), PotentialSpec::default_bump());
        assert_eq!(c.h_list().unwrap(), vec![1.0, 0.7]);
        let grids = c.grids().unwrap();
        assert_eq!((grids[0].nx, grids[1].nx), (63, 95));
        let l = c.lambdas().unwrap();
        assert_eq!(l.len(), 17);
        assert_eq!(l[16], 2.0);
        assert_eq!(c.query().unwrap().window, [-3.0, 3.0]);
    }

    #[test]
    fn scalar_or_list() {
        let text = FULL.replace("h = [1.0, 0.7]", "h = 0.5").replace("l = [8.0, 12.0]", "l = 8");
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c.h_list().unwrap(), vec![0.5]);
        assert_eq!(c.grids().unwrap().len(), 1);
    }

    #[test]
    fn missing_block_is_named() {
        let text = FULL.replace("[grid]", "[ignored]");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        let text = FULL.split("[grid]").next().unwrap().to_string() + "[query]\nsigma = 0.5\n";
        let c = ExperimentConfig::parse(&text).unwrap();
        match c.grids() {
            Err(CliError::Config(m)) => assert!(m.contains("[grid]"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_nonfinite_and_ambiguous_grids() {
        let c = ExperimentConfig::parse(&FULL.replace("spacing = 0.25", "spacing = nan")).unwrap();
        assert!(c.grids().is_err());
        let c = ExperimentConfig::parse(&FULL.replace("spacing = 0.25", "spacing = 0.25\nnx = 9")).unwrap();
        assert!(c.grids().is_err());
        let c = ExperimentConfig::parse(&FULL.replace("h = [1.0, 0.7]", "h = []")).unwrap();
        assert!(c.h_list().is_err());
    }

    #[test]
    fn shipped_default_config_parses() {
        let c = ExperimentConfig::parse(include_str!("../configs/default.toml")).unwrap();
        assert_eq!(c.potential().unwrap(), PotentialSpec::default_bump());
        let dims: Vec<usize> = c.grids().unwrap().iter().map(|g| g.nx).collect();
        assert_eq!(dims, vec![63, 95, 127]);
        assert_eq!(c.h_list().unwrap(), vec![1.0, 0.7, 0.5]);
    }

    #[test]
    fn range_endpoints_survive_rounding() {
        let r = Range { start: 0.0, stop: 1.0, step: 0.1 };
        let v = r.values("r").unwrap();
        assert_eq!(v.len(), 11);
        assert!((v[10] - 1.0).abs() < 1e-15);
        assert!(Range { start: 1.0, stop: 0.0, step: 0.1 }.values("r").is_err());
    }
}
