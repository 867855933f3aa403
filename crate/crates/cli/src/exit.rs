use std::fmt;

use distsum_core::TrainError;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;

/// Bad flags or flag combinations.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Non-finite values or other numerical breakdowns.
#[derive(Debug)]
pub struct Numeric(pub String);

impl fmt::Display for Numeric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numeric {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if cause.is::<Numeric>() || matches!(cause.downcast_ref::<TrainError>(), Some(TrainError::NonFinite { .. })) {
            return NUMERIC;
        }
    }
    DATA
}

pub fn one_line(err: &anyhow::Error) -> String {
    let parts: Vec<String> = err.chain().map(|c| c.to_string()).collect();
    let mut out = String::new();
    for p in parts {
        // wrapped errors often repeat their source's message
        if !out.contains(&p) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&p);
        }
    }
    out.replace('\n', " ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes_follow_the_innermost_marker() {
        let e = Err::<(), _>(usage("bad --k")).context("evaluate").unwrap_err();
        assert_eq!(classify(&e), USAGE);
        let e: anyhow::Error = TrainError::NonFinite { what: "loss", epoch: 1, step: 3 }.into();
        assert_eq!(classify(&e), NUMERIC);
        assert_eq!(classify(&anyhow::anyhow!("missing file")), DATA);
    }

    #[test]
    fn one_line_joins_and_flattens() {
        let e = Err::<(), _>(anyhow::anyhow!("line 3:\nbad")).context("reading x").unwrap_err();
        assert_eq!(one_line(&e), "reading x: line 3: bad");
    }
}
