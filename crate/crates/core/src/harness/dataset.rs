use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{
    gen_gauss_domain, gen_moons_pair, load_idx, preprocess_pair, DataError, DomainPair, DomainTag,
    PreprocessOptions, Standardization,
};

const MOONS_NOISE: f64 = 0.1;
const MOONS_N_SOURCE: usize = 2000;
const MOONS_N_TARGET: usize = 4000;
const GAUSS_DIM: usize = 2;
const GAUSS_CLASSES: usize = 3;
const GAUSS_N: usize = 3000;

/// A source/target pair the harness can materialize for any seed.
///
/// Text form: `moons:rot=45`, `gauss:shift=2.0`, or
/// `idx:<src images>,<src labels>,<tgt images>,<tgt labels>`. Synthetic
/// specs accept extra `key=value` options after the first, comma separated.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Moons {
        rotation_deg: f64,
        noise: f64,
        n_source: usize,
        n_target: usize,
    },
    Gauss {
        shift: f64,
        dim: usize,
        classes: usize,
        n: usize,
        scale: f64,
        standardization: Standardization,
    },
    Idx {
        source_images: PathBuf,
        source_labels: PathBuf,
        target_images: PathBuf,
        target_labels: PathBuf,
    },
}

impl DatasetSpec {
    pub fn moons(rotation_deg: f64) -> Self {
        DatasetSpec::Moons {
            rotation_deg,
            noise: MOONS_NOISE,
            n_source: MOONS_N_SOURCE,
            n_target: MOONS_N_TARGET,
        }
    }

    /// Target means moved by `shift` along the first axis. Inputs are left
    /// unstandardized so the shift survives preprocessing.
    pub fn gauss(shift: f64) -> Self {
        DatasetSpec::Gauss {
            shift,
            dim: GAUSS_DIM,
            classes: GAUSS_CLASSES,
            n: GAUSS_N,
            scale: 1.0,
            standardization: Standardization::None,
        }
    }

    /// Builds the pair. Synthetic data is drawn from `seed`; every spec uses
    /// `seed` for the target split.
    pub fn load(&self, seed: u64) -> Result<DomainPair, DataError> {
        match self {
            DatasetSpec::Moons {
                rotation_deg,
                noise,
                n_source,
                n_target,
            } => gen_moons_pair(*n_source, *n_target, *noise, *rotation_deg, seed),
            DatasetSpec::Gauss {
                shift,
                dim,
                classes,
                n,
                scale,
                standardization,
            } => {
                let mut offset = vec![0.0; *dim];
                offset[0] = *shift;
                let source =
                    gen_gauss_domain(*n, *classes, &vec![0.0; *dim], 1.0, seed, DomainTag::Source)?;
                let target = gen_gauss_domain(
                    *n,
                    *classes,
                    &offset,
                    *scale,
                    seed.wrapping_add(0x9E37_79B9),
                    DomainTag::Target,
                )?;
                preprocess_pair(
                    source,
                    target,
                    &PreprocessOptions {
                        standardization: *standardization,
                        seed,
                        ..PreprocessOptions::default()
                    },
                )
            }
            DatasetSpec::Idx {
                source_images,
                source_labels,
                target_images,
                target_labels,
            } => {
                let source = load_idx(source_images, source_labels, true)?;
                let target = load_idx(target_images, target_labels, true)?;
                preprocess_pair(
                    source,
                    target,
                    &PreprocessOptions {
                        seed,
                        ..PreprocessOptions::default()
                    },
                )
            }
        }
    }

    /// Identifier safe to use in file names.
    pub fn file_stem(&self) -> String {
        super::file_safe(&self.to_string())
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Moons {
                rotation_deg,
                noise,
                n_source,
                n_target,
            } => {
                write!(f, "moons:rot={rotation_deg}")?;
                if *noise != MOONS_NOISE {
                    write!(f, ",noise={noise}")?;
                }
                if *n_source != MOONS_N_SOURCE {
                    write!(f, ",n_source={n_source}")?;
                }
                if *n_target != MOONS_N_TARGET {
                    write!(f, ",n_target={n_target}")?;
                }
                Ok(())
            }
            DatasetSpec::Gauss {
                shift,
                dim,
                classes,
                n,
                scale,
                standardization,
            } => {
                write!(f, "gauss:shift={shift}")?;
                if *dim != GAUSS_DIM {
                    write!(f, ",dim={dim}")?;
                }
                if *classes != GAUSS_CLASSES {
                    write!(f, ",classes={classes}")?;
                }
                if *n != GAUSS_N {
                    write!(f, ",n={n}")?;
                }
                if *scale != 1.0 {
                    write!(f, ",scale={scale}")?;
                }
                if *standardization == Standardization::PerDomain {
                    write!(f, ",standardize=domain")?;
                }
                Ok(())
            }
            DatasetSpec::Idx {
                source_images,
                source_labels,
                target_images,
                target_labels,
            } => write!(
                f,
                "idx:{},{},{},{}",
                source_images.display(),
                source_labels.display(),
                target_images.display(),
                target_labels.display()
            ),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("bad value `{value}` for `{key}`"))
}

impl FromStr for DatasetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| format!("dataset `{s}` lacks a `kind:` prefix"))?;
        match kind {
            "idx" => {
                let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                if parts.len() != 4 || parts.iter().any(|p| p.is_empty()) {
                    return Err(format!(
                        "idx needs four comma-separated paths, got {}",
                        parts.len()
                    ));
                }
                Ok(DatasetSpec::Idx {
                    source_images: parts[0].into(),
                    source_labels: parts[1].into(),
                    target_images: parts[2].into(),
                    target_labels: parts[3].into(),
                })
            }
            "moons" | "gauss" => {
                let mut spec = if kind == "moons" {
                    DatasetSpec::moons(f64::NAN)
                } else {
                    DatasetSpec::gauss(f64::NAN)
                };
                for item in rest.split(',').map(str::trim).filter(|i| !i.is_empty()) {
                    let (key, value) = item
                        .split_once('=')
                        .ok_or_else(|| format!("expected key=value, got `{item}`"))?;
                    match (&mut spec, key) {
                        (DatasetSpec::Moons { rotation_deg, .. }, "rot") => {
                            *rotation_deg = parse_num(key, value)?
                        }
                        (DatasetSpec::Moons { noise, .. }, "noise") => *noise = parse_num(key, value)?,
                        (DatasetSpec::Moons { n_source, .. }, "n_source") => {
                            *n_source = parse_num(key, value)?
                        }
                        (DatasetSpec::Moons { n_target, .. }, "n_target") => {
                            *n_target = parse_num(key, value)?
                        }
                        (DatasetSpec::Gauss { shift, .. }, "shift") => *shift = parse_num(key, value)?,
                        (DatasetSpec::Gauss { dim, .. }, "dim") => *dim = parse_num(key, value)?,
                        (DatasetSpec::Gauss { classes, .. }, "classes") => {
                            *classes = parse_num(key, value)?
                        }
                        (DatasetSpec::Gauss { n, .. }, "n") => *n = parse_num(key, value)?,
                        (DatasetSpec::Gauss { scale, .. }, "scale") => *scale = parse_num(key, value)?,
                        (DatasetSpec::Gauss { standardization, .. }, "standardize") => {
                            *standardization = match value {
                                "domain" => Standardization::PerDomain,
                                "none" => Standardization::None,
                                _ => return Err(format!("standardize must be domain|none, got `{value}`")),
                            }
                        }
                        _ => return Err(format!("unknown {kind} option `{key}`")),
                    }
                }
                match &spec {
                    DatasetSpec::Moons { rotation_deg, .. } if rotation_deg.is_nan() => {
                        Err("moons needs rot=<degrees>".into())
                    }
                    DatasetSpec::Gauss { shift, dim, .. } if shift.is_nan() || *dim == 0 => {
                        Err("gauss needs shift=<value> and dim >= 1".into())
                    }
                    _ => Ok(spec),
                }
            }
            _ => Err(format!("unknown dataset kind `{kind}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_display_round_trip() {
        for text in [
            "moons:rot=45",
            "moons:rot=30,noise=0.2,n_target=800",
            "gauss:shift=2",
            "gauss:shift=0,dim=4,classes=5,standardize=domain",
            "idx:a.idx,b.idx,c.idx,d.idx",
        ] {
            let spec: DatasetSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert_eq!(
            "moons:rot=45".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::moons(45.0)
        );
        assert_eq!("moons:rot=45".parse::<DatasetSpec>().unwrap().file_stem(), "moons_rot_45");
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in ["moons", "moons:noise=0.1", "gauss:dim=2", "idx:a,b,c", "cifar:x=1", "moons:rot=x", "gauss:shift=1,dim=0"] {
            assert!(bad.parse::<DatasetSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn synthetic_specs_load_deterministically() {
        let spec = DatasetSpec::Moons {
            rotation_deg: 45.0,
            noise: 0.1,
            n_source: 200,
            n_target: 400,
        };
        let a = spec.load(3).unwrap();
        let b = spec.load(3).unwrap();
        assert_eq!(a.target_test.features(), b.target_test.features());
        assert_eq!(a.target_test.len(), 100);

        let g = DatasetSpec::gauss(2.0).load(1).unwrap();
        assert_eq!(g.input_dim(), 2);
        assert_eq!(g.num_classes(), 3);
        let mean_x = |t: &crate::numeric::Tensor| (0..t.rows()).map(|r| t.get(r, 0)).sum::<f64>() / t.rows() as f64;
        let gap = mean_x(g.target_test.features()) - mean_x(g.source.features());
        assert!((gap - 2.0).abs() < 0.3, "{gap}");
    }
}
