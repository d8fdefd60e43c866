//! Metric record files.
//!
//! A plain-text header of `key=value` lines, terminated by a line `data`,
//! followed by little-endian `f64` arrays in this order: anchor (`dim`),
//! support coefficients (`support`), support directions (`support × dim`),
//! raw tangents (`raw_tangents × dim`), tangent basis (`basis × dim`).
//! Header reals use the shortest round-trip representation, so a
//! save/load cycle reproduces every bit.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureVector, LocalMetric, MetricProvenance, Slack, SupportPair, TangentSet};
use crate::solver::SolverConfig;

pub const METRIC_FORMAT_VERSION: u32 = 1;
const MAGIC_LINE: &str = "locmahal-metric";

fn bad(msg: impl Into<String>) -> Error {
    Error::MetricFormat(msg.into())
}

pub fn encode_metric(m: &LocalMetric) -> Vec<u8> {
    let d = m.dim();
    let (raw, basis) = match m.tangents() {
        Some(t) => (t.raw(), t.basis()),
        None => (&[][..], &[][..]),
    };
    let prov = m.provenance();
    let cfg = &prov.solver;
    let mut header = String::new();
    let mut line = |k: &str, v: String| {
        header.push_str(k);
        header.push('=');
        header.push_str(&v);
        header.push('\n');
    };
    line(MAGIC_LINE, METRIC_FORMAT_VERSION.to_string());
    line("dim", d.to_string());
    line("support", m.support().len().to_string());
    line("invariant", m.tangents().is_some().to_string());
    line("raw_tangents", raw.len().to_string());
    line("basis", basis.len().to_string());
    line("margin", format!("{:?}", prov.margin));
    line("slack", prov.slack.to_string());
    line("tolerance", format!("{:?}", cfg.tolerance));
    line(
        "max_iterations",
        cfg.max_iterations
            .map(|v| v.to_string())
            .unwrap_or_else(|| "auto".into()),
    );
    line("kernel_cache_limit", cfg.kernel_cache_limit.to_string());
    line("shuffle_seed", cfg.shuffle_seed.to_string());
    line("support_threshold", format!("{:?}", cfg.support_threshold));
    header.push_str("data\n");

    let floats = d * (1 + m.support().len() + raw.len() + basis.len()) + m.support().len();
    let mut out = header.into_bytes();
    out.reserve(8 * floats);
    let mut put = |xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    put(m.anchor());
    let alphas: Vec<f64> = m.support().iter().map(|s| s.alpha).collect();
    put(&alphas);
    for s in m.support() {
        put(&s.direction);
    }
    for v in raw.iter().chain(basis) {
        put(v);
    }
    out
}

pub fn decode_metric(bytes: &[u8]) -> Result<LocalMetric> {
    let mut fields = BTreeMap::new();
    let mut pos = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("header is not terminated by a 'data' line"))?;
        let line =
            std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not UTF-8"))?;
        pos += end + 1;
        if line == "data" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("header line '{line}' is not key=value")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing header field '{k}'")))
    };
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| bad(format!("header field '{k}' has bad value '{v}'")))
    }
    let version: u32 = num(MAGIC_LINE, get(MAGIC_LINE)?)?;
    if version != METRIC_FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let d: usize = num("dim", get("dim")?)?;
    let s: usize = num("support", get("support")?)?;
    let invariant: bool = num("invariant", get("invariant")?)?;
    let r: usize = num("raw_tangents", get("raw_tangents")?)?;
    let b: usize = num("basis", get("basis")?)?;
    let slack = match get("slack")? {
        "hard" => Slack::Hard,
        c => Slack::Soft(num("slack", c)?),
    };
    let solver = SolverConfig {
        tolerance: num("tolerance", get("tolerance")?)?,
        max_iterations: match get("max_iterations")? {
            "auto" => None,
            v => Some(num("max_iterations", v)?),
        },
        kernel_cache_limit: num("kernel_cache_limit", get("kernel_cache_limit")?)?,
        shuffle_seed: num("shuffle_seed", get("shuffle_seed")?)?,
        support_threshold: num("support_threshold", get("support_threshold")?)?,
    };
    let provenance = MetricProvenance {
        margin: num("margin", get("margin")?)?,
        slack,
        solver,
    };

    let expected = 8 * (d * (1 + s + r + b) + s);
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(Error::TruncatedFile(format!(
            "metric body has {} bytes, header requires {expected}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(bad(format!(
            "{} bytes beyond the declared body",
            body.len() - expected
        )));
    }
    let mut floats = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |len: usize| -> Vec<f64> { floats.by_ref().take(len).collect() };
    let anchor = FeatureVector::new(take(d))?;
    let alphas = take(s);
    let support = alphas
        .into_iter()
        .map(|alpha| {
            Ok(SupportPair {
                alpha,
                direction: FeatureVector::new(take(d))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = (0..r)
        .map(|_| FeatureVector::new(take(d)))
        .collect::<Result<Vec<_>>>()?;
    let basis = (0..b)
        .map(|_| FeatureVector::new(take(d)))
        .collect::<Result<Vec<_>>>()?;
    let tangents = if invariant {
        Some(TangentSet::from_parts(raw, basis)?)
    } else {
        if r + b > 0 {
            return Err(bad("tangent data present in a non-invariant metric"));
        }
        None
    };
    LocalMetric::new(anchor, support, tangents, provenance)
}

pub fn save_metric(path: impl AsRef<Path>, m: &LocalMetric) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_metric(m))
}

pub fn load_metric(path: impl AsRef<Path>) -> Result<LocalMetric> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_metric(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariance::{build_invariant_metric, build_tangent_set};
    use crate::metric::build_local_metric;
    use crate::model::ExemplarProblem;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn problem() -> ExemplarProblem {
        ExemplarProblem::new(
            fv(&[0.1, -0.3, 0.7]),
            vec![
                fv(&[1.0, 0.2, 0.3]),
                fv(&[-0.4, 0.9, 0.1]),
                fv(&[0.3, 0.3, -1.1]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_plain_metric() {
        let cfg = SolverConfig {
            max_iterations: Some(77),
            shuffle_seed: 9,
            ..SolverConfig::default()
        };
        let m = build_local_metric(&problem().with_slack(Slack::Soft(0.3)).unwrap(), &cfg).unwrap();
        let bytes = encode_metric(&m);
        let back = decode_metric(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_metric(&back), bytes);
    }

    #[test]
    fn round_trip_invariant_metric_through_file() {
        let p = problem();
        let t =
            build_tangent_set(p.query(), &[fv(&[0.2, -0.3, 0.9]), fv(&[0.1, 0.0, 0.7])]).unwrap();
        let m = build_invariant_metric(&p, &t, &SolverConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.metric");
        save_metric(&path, &m).unwrap();
        let back = load_metric(&path).unwrap();
        assert_eq!(back, m);
        let bits = |m: &LocalMetric| -> Vec<u64> {
            m.support()
                .iter()
                .flat_map(|s| std::iter::once(s.alpha).chain(s.direction.iter().copied()))
                .map(f64::to_bits)
                .collect()
        };
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn truncated_and_padded_bodies_are_rejected() {
        let m = build_local_metric(&problem(), &SolverConfig::default()).unwrap();
        let bytes = encode_metric(&m);
        assert!(matches!(
            decode_metric(&bytes[..bytes.len() - 3]),
            Err(Error::TruncatedFile(_))
        ));
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(decode_metric(&padded).is_err());
        assert!(decode_metric(b"locmahal-metric=2\ndata\n").is_err());
        assert!(decode_metric(b"garbage").is_err());
    }
}
