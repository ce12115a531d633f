//! Minimal RFC-4180 field quoting for the report writers.

/// Append `field` to `out`, quoting when it contains a delimiter, quote, or
/// line break.
pub fn write_csv_field(out: &mut String, field: &str) {
    if field.contains(['"', ',', '\n', '\r']) {
        out.push('"');
        for c in field.chars() {
            if c == '"' {
                out.push('"');
            }
            out.push(c);
        }
        out.push('"');
    } else {
        out.push_str(field);
    }
}

/// Join cells into one CSV line (no trailing newline).
pub fn csv_line<S: AsRef<str>>(cells: &[S]) -> String {
    let mut line = String::new();
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        write_csv_field(&mut line, cell.as_ref());
    }
    line
}

/// Shortest-roundtrip decimal form; `Display` for f64 is deterministic.
pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{:.1}", v)
    } else {
        format!("{}", v)
    }
}
