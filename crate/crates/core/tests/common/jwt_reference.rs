//! Independent JWT encoder used as an oracle for the library encoder.

use ledger_oauth::keys::Address;
use ledger_oauth::registry::TokenId;
use ledger_oauth::token_format::{ClaimSet, Confirmation};

const ALPHABET: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

/// Unpadded base64url, written out bit by bit.
pub fn b64url(input: &[u8]) -> String {
    let mut out = String::new();
    let mut acc: u32 = 0;
    let mut bits = 0;
    for &byte in input {
        acc = (acc << 8) | byte as u32;
        bits += 8;
        while bits >= 6 {
            bits -= 6;
            out.push(ALPHABET[((acc >> bits) & 63) as usize] as char);
        }
    }
    if bits > 0 {
        out.push(ALPHABET[((acc << (6 - bits)) & 63) as usize] as char);
    }
    out
}

fn json_str(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Builds the compact form from claims by string concatenation.
pub fn reference_encode(c: &ClaimSet) -> String {
    let mut payload = format!(
        "{{\"iss\":{},\"sub\":{},\"aud\":{},\"jti\":{},\"exp\":{}",
        json_str(&c.iss.to_string()),
        json_str(&c.sub),
        json_str(&c.aud),
        json_str(&c.jti.to_string()),
        c.exp
    );
    if let Some(cnf) = &c.cnf {
        payload.push_str(&format!(",\"cnf\":{{\"kid\":{}}}", json_str(&cnf.kid)));
    }
    payload.push('}');
    format!(
        "{}.{}.",
        b64url(br#"{"alg":"none","typ":"JWT"}"#),
        b64url(payload.as_bytes())
    )
}

pub fn golden_claims() -> ClaimSet {
    ClaimSet {
        iss: format!("0x{}", "11".repeat(20)).parse::<Address>().unwrap(),
        sub: format!("0x{}", "22".repeat(20)),
        aud: "https://gw.example/things/lamp".into(),
        jti: TokenId::from_bytes([0x33; 32]),
        exp: 1_700_003_600,
        cnf: None,
    }
}

pub fn golden_delegated_claims() -> ClaimSet {
    ClaimSet {
        cnf: Some(Confirmation {
            kid: format!("0x{}", "44".repeat(20)),
        }),
        ..golden_claims()
    }
}

/// Pinned output for `golden_claims`, produced by an unrelated base64
/// implementation.
pub const GOLDEN_JWT: &str = "eyJhbGciOiJub25lIiwidHlwIjoiSldUIn0.eyJpc3MiOiIweDExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTEiLCJzdWIiOiIweDIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIiLCJhdWQiOiJodHRwczovL2d3LmV4YW1wbGUvdGhpbmdzL2xhbXAiLCJqdGkiOiIweDMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMiLCJleHAiOjE3MDAwMDM2MDB9.";

pub const GOLDEN_DELEGATED_JWT: &str = "eyJhbGciOiJub25lIiwidHlwIjoiSldUIn0.eyJpc3MiOiIweDExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTExMTEiLCJzdWIiOiIweDIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIyMjIiLCJhdWQiOiJodHRwczovL2d3LmV4YW1wbGUvdGhpbmdzL2xhbXAiLCJqdGkiOiIweDMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMzMiLCJleHAiOjE3MDAwMDM2MDAsImNuZiI6eyJraWQiOiIweDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQ0NDQifX0.";
