//! Complex numbers on the command line: `a+bi` with optional parts.

use expdyn::Complex64;

pub const GRAMMAR: &str =
    "accepted forms: a, bi, a+bi, a-bi with decimal or scientific notation \
     (examples: 1, -2.5, i, -i, 3+4i, 1.2e-3-0.5i)";

/// Parse `a+bi` syntax. Whitespace is not allowed inside the number.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err(format!("empty complex literal; {GRAMMAR}"));
    }
    let err = |_| format!("could not parse {s:?} as a complex number; {GRAMMAR}");

    if let Some(body) = s.strip_suffix(['i', 'I']) {
        // find the sign that splits real and imaginary parts: a '+'/'-' that
        // is not leading and not part of an exponent
        let bytes = body.as_bytes();
        let mut split = None;
        for idx in (1..bytes.len()).rev() {
            let b = bytes[idx];
            if (b == b'+' || b == b'-') && !matches!(bytes[idx - 1], b'e' | b'E') {
                split = Some(idx);
                break;
            }
        }
        let (re_str, im_str) = match split {
            Some(idx) => (&body[..idx], &body[idx..]),
            None => ("", body),
        };
        let re = if re_str.is_empty() {
            0.0
        } else {
            re_str.parse::<f64>().map_err(err)?
        };
        let im = match im_str {
            "" | "+" => 1.0,
            "-" => -1.0,
            other => other.parse::<f64>().map_err(err)?,
        };
        finite(Complex64::new(re, im), s)
    } else {
        let re = s.parse::<f64>().map_err(err)?;
        finite(Complex64::new(re, 0.0), s)
    }
}

fn finite(z: Complex64, s: &str) -> Result<Complex64, String> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(format!("non-finite complex literal {s:?}; {GRAMMAR}"))
    }
}
