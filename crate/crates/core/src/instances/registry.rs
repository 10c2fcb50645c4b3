//! Name-based instance construction: the `family{key=value,...}` mini
//! grammar used by the CLI and sweep configs.
//!
//! Values are plain decimal numbers (no expressions). Parameters that the
//! constructions derive from the run setup (`alpha = C/(ηT)`,
//! `lambda = 1/(ηT)`, dataset-sized `n`) default from a [`BuildContext`]
//! when not given explicitly.

use std::collections::BTreeMap;

use super::{
    CoordinateHiding, CoupledRealizable, CurvatureLaw, InstanceError, LossInstance,
    MultiCopyRealizable, NoiselessRegression, NonRealizableScalar, ScalarRealizable,
    TwoDimQuadratic,
};
use crate::Real;

/// A parsed `family{key=value,...}` string; values stay raw until build.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceSpec {
    pub family: String,
    pub params: BTreeMap<String, String>,
}

/// Run-level quantities the derived parameter defaults come from.
#[derive(Clone, Copy, Debug)]
pub struct BuildContext {
    /// Step size η of the run the instance is built for.
    pub eta: Real,
    /// Iteration count T of the run.
    pub t_iters: usize,
    /// Dataset size n.
    pub n: usize,
}

impl BuildContext {
    pub fn new(eta: Real, t_iters: usize, n: usize) -> Self {
        Self { eta, t_iters, n }
    }
}

impl Default for BuildContext {
    fn default() -> Self {
        Self { eta: 1.0, t_iters: 16, n: 16 }
    }
}

/// One row of the family catalog, for `list-instances` and `--help`.
#[derive(Clone, Copy, Debug)]
pub struct FamilyInfo {
    pub family: &'static str,
    pub parameters: &'static str,
    pub summary: &'static str,
}

/// Catalog of constructible families, alphabetical by name.
pub fn families() -> Vec<FamilyInfo> {
    vec![
        FamilyInfo {
            family: "coupled",
            parameters: "n (default: dataset size), C in (0,1] (default 1), alpha in (0,1] (default C/(eta*T))",
            summary: "shared coordinate x feeds n weak coordinates; conditioned GD overfits \
                      like eta*T/n^2 on mid-range horizons and recovers like 1/(eta*T) on long ones",
        },
        FamilyInfo {
            family: "hiding",
            parameters: "n (default: dataset size); dimension is 2n",
            summary: "2n coordinates but only n samples, so unobserved coordinates keep their \
                      initial mass and excess risk stays above order 1/n",
        },
        FamilyInfo {
            family: "multicopy",
            parameters: "n, C, alpha as for coupled; m (default: ceil(e^n/sqrt(n)), budget-capped)",
            summary: "m independent copies of the coupled problem; amplifies the all-indices-once \
                      sampling event from probability n!/n^n to a constant",
        },
        FamilyInfo {
            family: "nonrealizable",
            parameters: "eta_T > 0 (default eta*T)",
            summary: "1-D quadratic with +/-1 linear kicks and no shared minimizer; under a \
                      conditioned sample-sum event the averaged iterate drifts like eta*T/n",
        },
        FamilyInfo {
            family: "regression",
            parameters: "d (default 20), seed (default 0)",
            summary: "noiseless least squares on 4d fixed unit-norm feature atoms; interpolation \
                      regime where long training does not overfit",
        },
        FamilyInfo {
            family: "scalar",
            parameters: "a in [0,1] or levels >= 1 (default a=1), wstar (default 0)",
            summary: "1-D realizable quadratics with curvature at most 1; every step contracts \
                      the distance to w*, so risk is horizon-independent",
        },
        FamilyInfo {
            family: "twodim",
            parameters: "lambda > 0 (default 1/(eta*T))",
            summary: "deterministic quadratic with one slow coordinate; the averaged iterate \
                      pays an optimization floor of order 1/(eta*T)",
        },
    ]
}

fn family_names() -> String {
    families().iter().map(|f| f.family).collect::<Vec<_>>().join(", ")
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_decimal(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E'))
        && s.parse::<f64>().is_ok()
}

/// Parses `family` or `family{key=value,...}`; keys must be identifiers and
/// values decimal numbers. Duplicate keys are rejected.
pub fn parse_instance(s: &str) -> Result<InstanceSpec, InstanceError> {
    let s = s.trim();
    let (family, body) = match s.find('{') {
        None => (s, None),
        Some(i) => {
            if !s.ends_with('}') {
                return Err(InstanceError::InvalidParameter(format!(
                    "instance spec `{s}` is missing the closing `}}`"
                )));
            }
            (&s[..i], Some(&s[i + 1..s.len() - 1]))
        }
    };
    if !is_ident(family) {
        return Err(InstanceError::InvalidParameter(format!(
            "`{family}` is not a valid family name; known families: {}",
            family_names()
        )));
    }
    let mut params = BTreeMap::new();
    if let Some(body) = body {
        for pair in body.split(',') {
            let pair = pair.trim();
            if pair.is_empty() {
                return Err(InstanceError::InvalidParameter(format!(
                    "empty parameter in instance spec `{s}`"
                )));
            }
            let Some((k, v)) = pair.split_once('=') else {
                return Err(InstanceError::InvalidParameter(format!(
                    "parameter `{pair}` is not of the form key=value"
                )));
            };
            let (k, v) = (k.trim(), v.trim());
            if !is_ident(k) {
                return Err(InstanceError::InvalidParameter(format!(
                    "`{k}` is not a valid parameter name"
                )));
            }
            if !is_decimal(v) {
                return Err(InstanceError::InvalidParameter(format!(
                    "parameter `{k}` has non-numeric value `{v}` (decimal numbers only)"
                )));
            }
            if params.insert(k.to_string(), v.to_string()).is_some() {
                return Err(InstanceError::InvalidParameter(format!(
                    "parameter `{k}` given twice"
                )));
            }
        }
    }
    Ok(InstanceSpec { family: family.to_string(), params })
}

/// Typed view over the raw parameter map that tracks which keys were used,
/// so leftovers can be reported as typos.
struct Params<'a> {
    family: &'a str,
    map: &'a BTreeMap<String, String>,
    used: Vec<&'a str>,
}

impl<'a> Params<'a> {
    fn new(spec: &'a InstanceSpec) -> Self {
        Self { family: &spec.family, map: &spec.params, used: Vec::new() }
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a str> {
        self.used.push(key);
        self.map.get(key).map(|s| s.as_str())
    }

    fn real(&mut self, key: &'a str) -> Result<Option<Real>, InstanceError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<Real>().map(Some).map_err(|_| {
                InstanceError::InvalidParameter(format!(
                    "{}: parameter `{key}`: `{v}` is not a number",
                    self.family
                ))
            }),
        }
    }

    fn count(&mut self, key: &'a str) -> Result<Option<usize>, InstanceError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<usize>().map(Some).map_err(|_| {
                InstanceError::InvalidParameter(format!(
                    "{}: parameter `{key}`: `{v}` is not a non-negative integer",
                    self.family
                ))
            }),
        }
    }

    fn seed(&mut self, key: &'a str) -> Result<Option<u64>, InstanceError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<u64>().map(Some).map_err(|_| {
                InstanceError::InvalidParameter(format!(
                    "{}: parameter `{key}`: `{v}` is not a non-negative integer",
                    self.family
                ))
            }),
        }
    }

    fn finish(self) -> Result<(), InstanceError> {
        for key in self.map.keys() {
            if !self.used.contains(&key.as_str()) {
                return Err(InstanceError::InvalidParameter(format!(
                    "{}: unknown parameter `{key}` (accepted: {})",
                    self.family,
                    self.used.join(", ")
                )));
            }
        }
        Ok(())
    }
}

fn coupled_base(p: &mut Params<'_>, ctx: &BuildContext) -> Result<CoupledRealizable<Real>, InstanceError> {
    let n = p.count("n")?.unwrap_or(ctx.n);
    let c = p.real("C")?.unwrap_or(1.0);
    match p.real("alpha")? {
        Some(alpha) => CoupledRealizable::new(n, alpha, c),
        None => CoupledRealizable::with_horizon(n, c, ctx.eta, ctx.t_iters),
    }
}

/// Builds an instance from a parsed spec, defaulting derived parameters
/// from the run context.
pub fn build_instance(
    spec: &InstanceSpec,
    ctx: &BuildContext,
) -> Result<Box<dyn LossInstance<Real>>, InstanceError> {
    let mut p = Params::new(spec);
    let built: Box<dyn LossInstance<Real>> = match spec.family.as_str() {
        "nonrealizable" => {
            let eta_t = p.real("eta_T")?.unwrap_or(ctx.eta * ctx.t_iters as Real);
            Box::new(NonRealizableScalar::new(eta_t)?)
        }
        "coupled" => Box::new(coupled_base(&mut p, ctx)?),
        "multicopy" => {
            let base = coupled_base(&mut p, ctx)?;
            match p.count("m")? {
                Some(m) => Box::new(MultiCopyRealizable::new(base, m)?),
                None => Box::new(MultiCopyRealizable::with_default_copies(base)?),
            }
        }
        "hiding" => Box::new(CoordinateHiding::new(p.count("n")?.unwrap_or(ctx.n))?),
        "twodim" => match p.real("lambda")? {
            Some(l) => Box::new(TwoDimQuadratic::new(l)?),
            None => Box::new(TwoDimQuadratic::with_horizon(ctx.eta, ctx.t_iters)?),
        },
        "scalar" => {
            let a = p.real("a")?;
            let levels = p.count("levels")?;
            let w_star = p.real("wstar")?.unwrap_or(0.0);
            let law = match (a, levels) {
                (Some(_), Some(_)) => {
                    return Err(InstanceError::InvalidParameter(
                        "scalar: give either `a` or `levels`, not both".to_string(),
                    ))
                }
                (Some(a), None) => CurvatureLaw::Constant(a),
                (None, Some(k)) => CurvatureLaw::Levels(k),
                (None, None) => CurvatureLaw::Constant(1.0),
            };
            Box::new(ScalarRealizable::new(law, w_star)?)
        }
        "regression" => {
            let d = p.count("d")?.unwrap_or(20);
            let seed = p.seed("seed")?.unwrap_or(0);
            Box::new(NoiselessRegression::new(d, seed)?)
        }
        other => {
            return Err(InstanceError::InvalidParameter(format!(
                "unknown instance family `{other}`; known families: {}",
                family_names()
            )))
        }
    };
    p.finish()?;
    Ok(built)
}

/// Convenience: parse and build in one call.
pub fn instance_from_str(
    s: &str,
    ctx: &BuildContext,
) -> Result<Box<dyn LossInstance<Real>>, InstanceError> {
    build_instance(&parse_instance(s)?, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> BuildContext {
        BuildContext::new(1.0, 4, 2)
    }

    #[test]
    fn parses_bare_and_parameterized_specs() {
        let s = parse_instance("coupled").unwrap();
        assert_eq!(s.family, "coupled");
        assert!(s.params.is_empty());

        let s = parse_instance("coupled{n=256, C=1.0}").unwrap();
        assert_eq!(s.params.get("n").unwrap(), "256");
        assert_eq!(s.params.get("C").unwrap(), "1.0");
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in [
            "coupled{n=2",
            "coupled{n}",
            "coupled{=2}",
            "coupled{n=2,,C=1}",
            "coupled{n=2,n=3}",
            "coupled{n=two}",
            "coupled{n=1+1}",
            "{n=2}",
            "",
        ] {
            assert!(parse_instance(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn builds_every_family_with_context_defaults() {
        for (spec, name) in [
            ("nonrealizable", "nonrealizable{eta_T=4}"),
            ("coupled", "coupled{C=1,alpha=0.25,n=2}"),
            ("multicopy{n=2,m=3}", "multicopy{C=1,alpha=0.25,m=3,n=2}"),
            ("hiding", "hiding{n=2}"),
            ("twodim", "twodim{lambda=0.25}"),
            ("scalar", "scalar{a=1,wstar=0}"),
            ("scalar{levels=4}", "scalar{levels=4,wstar=0}"),
            ("regression{d=3}", "regression{d=3,seed=0}"),
        ] {
            let inst = instance_from_str(spec, &ctx()).unwrap();
            assert_eq!(inst.name(), name, "spec {spec}");
        }
    }

    #[test]
    fn canonical_names_round_trip() {
        for spec in ["coupled{alpha=0.5}", "twodim{lambda=0.125}", "scalar{levels=3}"] {
            let inst = instance_from_str(spec, &ctx()).unwrap();
            let again = instance_from_str(&inst.name(), &ctx()).unwrap();
            assert_eq!(inst.name(), again.name());
        }
    }

    #[test]
    fn default_multicopy_count_is_budgeted() {
        // n=3 -> m = ceil(e^3/sqrt(3)) = 12.
        let inst = instance_from_str("multicopy{n=3}", &ctx()).unwrap();
        assert_eq!(inst.name(), "multicopy{C=1,alpha=0.25,m=12,n=3}");
        // n=64 would need ~e^64 copies; the budget refuses.
        assert!(matches!(
            instance_from_str("multicopy{n=64}", &ctx()),
            Err(InstanceError::MemoryBudget { .. })
        ));
    }

    #[test]
    fn reports_unknown_families_and_parameters() {
        let err = instance_from_str("mystery", &ctx()).err().expect("unknown family").to_string();
        assert!(err.contains("known families"), "{err}");
        assert!(err.contains("coupled"), "{err}");

        let err =
            instance_from_str("twodim{lam=0.5}", &ctx()).err().expect("unknown key").to_string();
        assert!(err.contains("unknown parameter `lam`"), "{err}");

        assert!(instance_from_str("scalar{a=0.5,levels=2}", &ctx()).is_err());
    }

    #[test]
    fn catalog_is_alphabetical_and_complete() {
        let fams = families();
        let names: Vec<_> = fams.iter().map(|f| f.family).collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
        for f in names {
            assert!(instance_from_str(f, &ctx()).is_ok(), "{f}");
        }
    }
}
