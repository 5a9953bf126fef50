//! Transform spec strings: `rot:<deg>`, `scale:<sx>[,<sy>]`, `shear:<k>`,
//! `reflect:<axis-deg>`, `mat:a,b,c,d` and `conj:<B-spec>:<inner-spec>`
//! (which denotes `B·T·B⁻¹`).

use super::LinearMap2;
use crate::error::{Error, Result};

pub fn parse_transform(spec: &str) -> Result<LinearMap2> {
    let (map, rest) = parse_prefix(spec.trim())?;
    if !rest.is_empty() {
        return Err(Error::Parse(format!("trailing input `{rest}` in `{spec}`")));
    }
    Ok(map)
}

fn numbers(args: &str, kind: &str) -> Result<Vec<f64>> {
    args.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("bad number `{s}` in {kind}")))
        })
        .collect()
}

/// Parses one spec from the front of `s`, returning the unconsumed tail.
fn parse_prefix(s: &str) -> Result<(LinearMap2, &str)> {
    let (kind, args) = s
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("missing `:` in transform `{s}`")))?;
    if kind == "conj" {
        let (b, rest) = parse_prefix(args)?;
        let rest = rest
            .strip_prefix(':')
            .ok_or_else(|| Error::Parse(format!("conj needs `<B>:<inner>`, got `{s}`")))?;
        let (inner, rest) = parse_prefix(rest)?;
        return Ok((inner.conjugate_by(&b)?, rest));
    }
    let (args, rest) = match args.find(':') {
        Some(i) => (&args[..i], &args[i..]),
        None => (args, ""),
    };
    let v = numbers(args, kind)?;
    let map = match (kind, v.as_slice()) {
        ("rot", [deg]) => LinearMap2::rotation_degrees(*deg),
        ("scale", [s]) => LinearMap2::scale(*s),
        ("scale", [sx, sy]) => LinearMap2::diag(*sx, *sy),
        ("shear", [k]) => LinearMap2::shear(*k),
        ("reflect", [deg]) => LinearMap2::reflection_degrees(*deg),
        ("mat", [a, b, c, d]) => LinearMap2::new(*a, *b, *c, *d),
        ("rot" | "scale" | "shear" | "reflect" | "mat", _) => {
            return Err(Error::Parse(format!(
                "wrong number of arguments for `{kind}`: `{args}`"
            )))
        }
        _ => return Err(Error::Parse(format!("unknown transform kind `{kind}`"))),
    };
    Ok((map, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_kind() {
        assert_eq!(parse_transform("rot:90").unwrap(), LinearMap2::rotation_degrees(90.0));
        assert_eq!(parse_transform("scale:2").unwrap(), LinearMap2::scale(2.0));
        assert_eq!(parse_transform("scale:2,0.5").unwrap(), LinearMap2::diag(2.0, 0.5));
        assert_eq!(parse_transform("shear:1").unwrap(), LinearMap2::shear(1.0));
        assert_eq!(
            parse_transform("reflect:0").unwrap(),
            LinearMap2::diag(1.0, -1.0)
        );
        assert_eq!(
            parse_transform("mat:1,2,3,4").unwrap(),
            LinearMap2::new(1.0, 2.0, 3.0, 4.0)
        );
    }

    #[test]
    fn conj_nests() {
        let t = parse_transform("conj:scale:1,2:rot:37").unwrap();
        let b = LinearMap2::diag(1.0, 2.0);
        let want = LinearMap2::rotation_degrees(37.0).conjugate_by(&b).unwrap();
        assert!(t.distance(&want) < 1e-15);
        let nested = parse_transform("conj:conj:shear:1:rot:90:rot:30").unwrap();
        assert!((nested.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "rot", "rot:", "rot:abc", "rot:1,2", "spin:3", "mat:1,2,3", "scale:2:", "conj:rot:1", "rot:inf"] {
            assert!(parse_transform(bad).is_err(), "{bad} should fail");
        }
        assert!(parse_transform("conj:scale:0:rot:3").is_err());
    }
}
