//! ARPA text serialization of backoff n-gram models.
//!
//! Layout: a `\data\` header declaring the line count of every order, one
//! `\N-grams:` section per order with tab-separated fields
//! `log10prob<TAB>token [token ...]<TAB>log10backoff` (the backoff field is
//! present only when the entry also serves as a longer-order context), and a
//! closing `\end\`. Values are printed shortest-exact, so a written model
//! reads back with bit-identical probabilities. Internal natural-log values
//! are converted to and from log10 only at this boundary.
//!
//! The conventional `-99` stands in for entries that exist only as contexts
//! (the start marker) and carry no probability of their own.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{LanguageModel, Smoothing, TokenId, Vocabulary, EOS};

const LN_10: f64 = std::f64::consts::LN_10;
const NO_PROB: f64 = -99.0;

pub fn write_arpa(lm: &LanguageModel, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_arpa_to(lm, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_arpa(path: &Path) -> Result<LanguageModel> {
    let file = File::open(path)?;
    read_arpa_from(BufReader::new(file))
}

fn fmt_log10(ln_value: f64) -> String {
    let v = ln_value / LN_10;
    if v == 0.0 {
        "0".to_string() // avoid "-0"
    } else {
        format!("{v}")
    }
}

pub fn write_arpa_to(lm: &LanguageModel, out: &mut impl Write) -> Result<()> {
    // One line per entry: counted n-grams plus context-only entries.
    let mut sections: Vec<Vec<(Vec<&str>, Option<f64>, Option<f64>)>> = Vec::new();
    for n in 1..=lm.order {
        let mut lines: Vec<(Vec<&str>, Option<f64>, Option<f64>)> = Vec::new();
        let bow_of = |gram: &[TokenId]| -> Option<f64> {
            if n < lm.order {
                lm.backoffs[n - 1].get(gram).copied()
            } else {
                None
            }
        };
        let mut seen: Vec<Vec<TokenId>> = Vec::new();
        for (ctx, followers) in &lm.probs[n - 1] {
            for (&tok, &lnp) in followers {
                if !lnp.is_finite() {
                    return Err(Error::invalid(
                        "model contains non-finite probabilities and cannot be written to ARPA",
                    ));
                }
                let mut gram: Vec<TokenId> = ctx.to_vec();
                gram.push(tok);
                let bow = bow_of(&gram);
                if let Some(b) = bow {
                    if !b.is_finite() {
                        return Err(Error::invalid(
                            "model contains non-finite backoff weights and cannot be written to ARPA",
                        ));
                    }
                }
                let words = gram.iter().map(|&id| lm.vocab.token(id)).collect();
                lines.push((words, Some(lnp), bow));
                seen.push(gram);
            }
        }
        // Context-only entries (in practice the start marker).
        if n < lm.order {
            for (ctx, &bow) in &lm.backoffs[n - 1] {
                if ctx.len() == n && !seen.iter().any(|g| g.as_slice() == &ctx[..]) {
                    if !bow.is_finite() {
                        return Err(Error::invalid(
                            "model contains non-finite backoff weights and cannot be written to ARPA",
                        ));
                    }
                    let words = ctx.iter().map(|&id| lm.vocab.token(id)).collect();
                    lines.push((words, None, Some(bow)));
                }
            }
        }
        lines.sort_by(|a, b| a.0.cmp(&b.0));
        sections.push(lines);
    }

    writeln!(out, "\\data\\")?;
    for (i, lines) in sections.iter().enumerate() {
        writeln!(out, "ngram {}={}", i + 1, lines.len())?;
    }
    for (i, lines) in sections.iter().enumerate() {
        writeln!(out)?;
        writeln!(out, "\\{}-grams:", i + 1)?;
        for (words, lnp, bow) in lines {
            let prob = match lnp {
                Some(p) => fmt_log10(*p),
                None => "-99".to_string(),
            };
            write!(out, "{}\t{}", prob, words.join(" "))?;
            if let Some(b) = bow {
                write!(out, "\t{}", fmt_log10(*b))?;
            }
            writeln!(out)?;
        }
    }
    writeln!(out)?;
    writeln!(out, "\\end\\")?;
    Ok(())
}

pub fn read_arpa_from(reader: impl BufRead) -> Result<LanguageModel> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        lines.push((i + 1, line?));
    }
    let mut it = lines.iter().map(|(n, l)| (*n, l.trim_end())).peekable();

    // Header.
    let mut found_data = false;
    for (_, text) in it.by_ref() {
        if text.trim().is_empty() {
            continue;
        }
        if text.trim() == "\\data\\" {
            found_data = true;
            break;
        }
        return Err(Error::parse(
            lines.first().map(|(n, _)| *n).unwrap_or(1),
            "expected \\data\\ header",
        ));
    }
    if !found_data {
        return Err(Error::parse(1, "expected \\data\\ header"));
    }

    let mut declared: Vec<usize> = Vec::new();
    loop {
        let Some(&(lineno, text)) = it.peek() else {
            return Err(Error::parse(lines.len(), "unexpected end of file in \\data\\ section"));
        };
        let t = text.trim();
        if t.is_empty() {
            it.next();
            continue;
        }
        if let Some(rest) = t.strip_prefix("ngram ") {
            let (ord, count) = rest
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "malformed ngram count line"))?;
            let ord: usize = ord
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, "malformed ngram order"))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, "malformed ngram count"))?;
            if ord != declared.len() + 1 {
                return Err(Error::parse(lineno, "ngram orders must be declared in sequence"));
            }
            declared.push(count);
            it.next();
        } else {
            break;
        }
    }
    if declared.is_empty() {
        return Err(Error::parse(1, "\\data\\ section declares no ngram orders"));
    }
    let order = declared.len();

    let mut vocab = Vocabulary::new();
    let mut probs: Vec<HashMap<Box<[TokenId]>, HashMap<TokenId, f64>>> =
        vec![HashMap::new(); order];
    let mut backoffs: Vec<HashMap<Box<[TokenId]>, f64>> =
        vec![HashMap::new(); order.saturating_sub(1)];

    let mut saw_end = false;
    let mut last_line = 1;
    for n in 1..=order {
        // Section header.
        let header = format!("\\{n}-grams:");
        loop {
            let Some((lineno, text)) = it.next() else {
                return Err(Error::parse(last_line, format!("missing {header} section")));
            };
            last_line = lineno;
            let t = text.trim();
            if t.is_empty() {
                continue;
            }
            if t == header {
                break;
            }
            return Err(Error::parse(lineno, format!("expected {header}, found {t:?}")));
        }
        // Entries.
        let mut read = 0usize;
        while read < declared[n - 1] {
            let Some((lineno, text)) = it.next() else {
                return Err(Error::parse(
                    last_line,
                    format!("section {header} ends early: expected {} entries, found {read}", declared[n - 1]),
                ));
            };
            last_line = lineno;
            let t = text.trim();
            if t.is_empty() {
                return Err(Error::parse(
                    lineno,
                    format!("section {header} ends early: expected {} entries, found {read}", declared[n - 1]),
                ));
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            if fields.len() != n + 1 && fields.len() != n + 2 {
                return Err(Error::parse(lineno, format!("expected {} or {} fields", n + 1, n + 2)));
            }
            let p10: f64 = fields[0]
                .parse()
                .map_err(|_| Error::parse(lineno, "malformed probability"))?;
            let ids: Vec<TokenId> = fields[1..=n].iter().map(|w| vocab.intern(w)).collect();
            if p10 != NO_PROB {
                probs[n - 1]
                    .entry(Box::from(&ids[..n - 1]))
                    .or_default()
                    .insert(ids[n - 1], p10 * LN_10);
            }
            if fields.len() == n + 2 {
                if n >= order {
                    return Err(Error::parse(lineno, "highest order cannot carry backoff weights"));
                }
                let b10: f64 = fields[n + 1]
                    .parse()
                    .map_err(|_| Error::parse(lineno, "malformed backoff weight"))?;
                backoffs[n - 1].insert(Box::from(&ids[..]), b10 * LN_10);
            }
            read += 1;
        }
    }
    for (lineno, text) in it {
        let t = text.trim();
        if t.is_empty() {
            continue;
        }
        if t == "\\end\\" {
            saw_end = true;
            break;
        }
        return Err(Error::parse(lineno, format!("unexpected content after sections: {t:?}")));
    }
    if !saw_end {
        return Err(Error::parse(lines.len().max(1), "missing \\end\\ marker"));
    }

    let boundaries = probs[0].get(&[][..]).map(|m| m.contains_key(&EOS)).unwrap_or(false);
    Ok(LanguageModel {
        order,
        vocab,
        smoothing: Smoothing::WittenBell,
        boundaries,
        probs,
        backoffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::train_lm;
    use approx::assert_abs_diff_eq;
    use std::io::Cursor;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn round_trip(lm: &LanguageModel) -> LanguageModel {
        let mut buf = Vec::new();
        write_arpa_to(lm, &mut buf).unwrap();
        read_arpa_from(Cursor::new(buf)).unwrap()
    }

    #[test]
    fn unigram_round_trip_is_exact() {
        let utts = vec![toks(&["a", "a", "b"])];
        let refs: Vec<&[String]> = utts.iter().map(|u| u.as_slice()).collect();
        let lm = train_lm(&refs, 1, Smoothing::WittenBell, false).unwrap();
        let back = round_trip(&lm);
        for sent in [toks(&["a"]), toks(&["b"]), toks(&["never-seen"])] {
            assert_abs_diff_eq!(
                back.score(&sent, false),
                lm.score(&sent, false),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn trigram_round_trip_drift_below_tolerance() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let words = ["u", "v", "w", "x", "y"];
        let utts: Vec<Vec<String>> = (0..40)
            .map(|_| {
                (0..rng.gen_range(1..=7))
                    .map(|_| words[rng.gen_range(0..words.len())].to_string())
                    .collect()
            })
            .collect();
        let refs: Vec<&[String]> = utts.iter().map(|u| u.as_slice()).collect();
        let lm = train_lm(&refs, 3, Smoothing::WittenBell, true).unwrap();
        let back = round_trip(&lm);
        for _ in 0..50 {
            let sent: Vec<String> = (0..rng.gen_range(1..=10))
                .map(|_| words[rng.gen_range(0..words.len())].to_string())
                .collect();
            let tol = 1e-6 * sent.len() as f64;
            assert!((back.score(&sent, true) - lm.score(&sent, true)).abs() <= tol);
        }
    }

    #[test]
    fn write_is_deterministic() {
        let utts = vec![toks(&["c", "b", "a"]), toks(&["b", "a", "c"])];
        let refs: Vec<&[String]> = utts.iter().map(|u| u.as_slice()).collect();
        let lm = train_lm(&refs, 2, Smoothing::WittenBell, true).unwrap();
        let mut one = Vec::new();
        let mut two = Vec::new();
        write_arpa_to(&lm, &mut one).unwrap();
        write_arpa_to(&lm, &mut two).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn hand_written_unigram_converts_log10_to_ln() {
        let text = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3010299956639812\ta\n\n\\end\\\n";
        let lm = read_arpa_from(Cursor::new(text)).unwrap();
        assert_abs_diff_eq!(lm.score(&toks(&["a"]), false), 0.5f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn missing_end_marker_is_an_error() {
        let text = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\ta\n";
        let err = read_arpa_from(Cursor::new(text)).unwrap_err();
        assert!(err.to_string().contains("\\end\\"), "{err}");
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let text = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.5\ta\n\n\\end\\\n";
        let err = read_arpa_from(Cursor::new(text)).unwrap_err();
        assert!(err.to_string().contains("ends early"), "{err}");
    }

    #[test]
    fn mle_models_are_rejected() {
        let utts = vec![toks(&["a", "b"])];
        let refs: Vec<&[String]> = utts.iter().map(|u| u.as_slice()).collect();
        let lm = train_lm(&refs, 2, Smoothing::Mle, false).unwrap();
        let mut buf = Vec::new();
        assert!(write_arpa_to(&lm, &mut buf).is_err());
    }
}
