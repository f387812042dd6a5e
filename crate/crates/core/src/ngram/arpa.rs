use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::counts::{SymbolTable, MAX_ORDER};
use super::model::{Entry, NGramModel, NGramTable};
use crate::error::{Error, Result};

const SIGNIFICANT_DIGITS: usize = 7;

/// Formats like C's `%.7g`.
pub fn format_arpa_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the model in ARPA format. Entries of each order are sorted by their
/// token strings so the output is reproducible.
pub fn write_arpa<W: Write>(model: &NGramModel, mut sink: W) -> Result<()> {
    writeln!(sink, "\\data\\")?;
    for n in 1..=model.order() {
        writeln!(sink, "ngram {n}={}", model.ngram_count(n))?;
    }
    let symbols = model.symbols();
    for n in 1..=model.order() {
        writeln!(sink)?;
        writeln!(sink, "\\{n}-grams:")?;
        let mut rows: Vec<(Vec<&str>, &Entry)> = model
            .entries(n)
            .map(|(gram, e)| (gram.iter().map(|&id| symbols.symbol(id)).collect(), e))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (words, entry) in rows {
            write!(
                sink,
                "{}\t{}",
                format_arpa_float(entry.log10_prob),
                words.join(" ")
            )?;
            if let Some(bo) = entry.log10_backoff {
                write!(sink, "\t{}", format_arpa_float(bo))?;
            }
            writeln!(sink)?;
        }
    }
    writeln!(sink)?;
    writeln!(sink, "\\end\\")?;
    Ok(())
}

enum Section {
    Start,
    Header,
    Grams(usize),
    End,
}

fn parse_float(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {what} {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("invalid {what} {field:?}")));
    }
    Ok(v)
}

/// Parses an ARPA file. Every error carries the 1-based line number.
pub fn read_arpa<R: BufRead>(source: R) -> Result<NGramModel> {
    let mut declared: Vec<usize> = Vec::new();
    let mut section = Section::Start;
    let mut symbols: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut tables: Vec<NGramTable> = Vec::new();
    // line of each stored n-gram, for error reporting after the parse
    let mut origin: HashMap<Box<[u32]>, usize> = HashMap::new();
    let mut last_line = 0;

    let close_section = |n: usize, tables: &[NGramTable], declared: &[usize], line: usize| {
        let found = tables[n - 1].len();
        if found != declared[n - 1] {
            Err(Error::parse(
                line,
                format!(
                    "section \\{n}-grams: declares {} entries but lists {found}",
                    declared[n - 1]
                ),
            ))
        } else {
            Ok(())
        }
    };

    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let text = line.trim();
        match section {
            Section::Start => {
                if text.is_empty() {
                    continue;
                }
                if text != "\\data\\" {
                    return Err(Error::parse(lineno, "expected \\data\\ header"));
                }
                section = Section::Header;
            }
            Section::Header => {
                if text.is_empty() {
                    continue;
                }
                if let Some(rest) = text.strip_prefix("ngram ") {
                    let (n, count) = rest
                        .split_once('=')
                        .ok_or_else(|| Error::parse(lineno, "malformed ngram count line"))?;
                    let n: usize = n
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("non-numeric order {n:?}")))?;
                    let count: usize = count.trim().parse().map_err(|_| {
                        Error::parse(lineno, format!("non-numeric count {count:?}"))
                    })?;
                    if n != declared.len() + 1 {
                        return Err(Error::parse(
                            lineno,
                            format!("expected order {} but found {n}", declared.len() + 1),
                        ));
                    }
                    if n > MAX_ORDER {
                        return Err(Error::parse(lineno, format!("order {n} exceeds {MAX_ORDER}")));
                    }
                    declared.push(count);
                } else if text == "\\1-grams:" {
                    if declared.is_empty() {
                        return Err(Error::parse(lineno, "no ngram counts in \\data\\ section"));
                    }
                    tables.push(NGramTable::new());
                    section = Section::Grams(1);
                } else {
                    return Err(Error::parse(lineno, format!("unexpected line {text:?} in header")));
                }
            }
            Section::Grams(n) => {
                if text.is_empty() {
                    continue;
                }
                if text.starts_with('\\') {
                    close_section(n, &tables, &declared, lineno)?;
                    if text == "\\end\\" {
                        if n != declared.len() {
                            return Err(Error::parse(
                                lineno,
                                format!("missing section \\{}-grams:", n + 1),
                            ));
                        }
                        section = Section::End;
                    } else if text == format!("\\{}-grams:", n + 1) && n < declared.len() {
                        tables.push(NGramTable::new());
                        section = Section::Grams(n + 1);
                    } else {
                        return Err(Error::parse(
                            lineno,
                            format!("unexpected section marker {text:?}"),
                        ));
                    }
                    continue;
                }
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != n + 1 && fields.len() != n + 2 {
                    return Err(Error::parse(
                        lineno,
                        format!("expected {n} tokens in \\{n}-grams: entry, got {} fields", fields.len()),
                    ));
                }
                let log10_prob = parse_float(fields[0], lineno, "probability")?;
                if log10_prob > 0.0 {
                    return Err(Error::parse(lineno, "log10 probability above 0"));
                }
                let log10_backoff = if fields.len() == n + 2 {
                    if n == declared.len() {
                        return Err(Error::parse(lineno, "backoff weight on highest-order n-gram"));
                    }
                    Some(parse_float(fields[n + 1], lineno, "backoff")?)
                } else {
                    None
                };
                let mut gram = Vec::with_capacity(n);
                for &word in &fields[1..=n] {
                    let id = if n == 1 {
                        if index.contains_key(word) {
                            return Err(Error::parse(lineno, format!("duplicate unigram {word:?}")));
                        }
                        let id = symbols.len() as u32;
                        symbols.push(word.to_string());
                        index.insert(word.to_string(), id);
                        id
                    } else {
                        *index.get(word).ok_or_else(|| {
                            Error::parse(lineno, format!("token {word:?} is not a unigram"))
                        })?
                    };
                    gram.push(id);
                }
                let gram: Box<[u32]> = gram.into();
                if tables[n - 1].contains_key(&gram) {
                    return Err(Error::parse(lineno, format!("duplicate {n}-gram {:?}", &fields[1..=n])));
                }
                origin.insert(gram.clone(), lineno);
                tables[n - 1].insert(
                    gram,
                    Entry {
                        log10_prob,
                        log10_backoff,
                    },
                );
            }
            Section::End => {
                if !text.is_empty() {
                    return Err(Error::parse(lineno, "content after \\end\\"));
                }
            }
        }
    }
    if !matches!(section, Section::End) {
        return Err(Error::parse(last_line + 1, "unexpected end of file, missing \\end\\"));
    }

    let symbols = SymbolTable::from_symbols(symbols).map_err(|e| Error::parse(1, e.to_string()))?;
    for n in 2..=declared.len() {
        for gram in tables[n - 1].keys() {
            if !tables[n - 2].contains_key(&gram[..n - 1]) {
                return Err(Error::parse(
                    origin[gram],
                    "n-gram prefix is not listed at the lower order",
                ));
            }
        }
    }
    NGramModel::from_tables(declared.len(), symbols, tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printf_g_formatting() {
        let cases = [
            (-0.60206, "-0.60206"),
            (-99.0, "-99"),
            (0.0, "0"),
            (-1.0, "-1"),
            (-1.234_567_89, "-1.234568"),
            (-0.000_012_345_678, "-1.234568e-05"),
            (-12_345_678.0, "-1.234568e+07"),
            (-9.999_999_9, "-10"),
            (-0.1, "-0.1"),
            (-0.000_1, "-0.0001"),
        ];
        for (x, want) in cases {
            assert_eq!(format_arpa_float(x), want, "{x}");
        }
    }

    #[test]
    fn reads_hand_written_probability() {
        let arpa = "\\data\\\nngram 1=5\nngram 2=1\n\n\\1-grams:\n-99\t<s>\n-1\t</s>\n-1\t<unk>\n-1\ta\t-0.5\n-1\tb\n\n\\2-grams:\n-0.60206\ta b\n\n\\end\\\n";
        let m = read_arpa(arpa.as_bytes()).unwrap();
        let e = m.entry_words(&["a", "b"]).unwrap();
        assert!((10f64.powf(e.log10_prob) - 0.25).abs() < 1e-6);
        assert_eq!(m.entry_words(&["a"]).unwrap().log10_backoff, Some(-0.5));
    }

    #[test]
    fn count_mismatch_names_section() {
        let arpa = "\\data\\\nngram 1=3\nngram 2=5\n\n\\1-grams:\n-1\t<s>\n-1\t</s>\n-1\t<unk>\n\n\\2-grams:\n-1\t<s> </s>\n-1\t<s> <unk>\n-1\t<unk> </s>\n-1\t<unk> <unk>\n\n\\end\\\n";
        match read_arpa(arpa.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 16);
                assert!(message.contains("\\2-grams:"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }
}
