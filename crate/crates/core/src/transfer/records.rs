use super::{RecordStatus, TransferPath, TransferRecord};
use crate::error::{Error, Result};

pub const SWEEP_HEADER: &str =
    "path;degree;target;mape_base;mape_transferred;delta_m_relative;delta_m_raw;rmse_transferred;status";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn render_record(r: &TransferRecord) -> String {
    format!(
        "{};{};{};{};{};{};{};{};{}",
        r.path,
        r.degree(),
        r.target(),
        opt(r.mape_base),
        opt(r.mape_transferred),
        opt(r.delta_m),
        opt(r.delta_m_raw),
        opt(r.rmse_transferred),
        r.status
    )
}

/// Header plus one line per record, in the given order.
pub fn render_records(records: &[TransferRecord]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&render_record(r));
        s.push('\n');
    }
    s
}

/// Inverse of [`render_records`]. A truncated final line (from an
/// interrupted write) is ignored when `allow_partial` is set.
pub fn parse_records(text: &str, allow_partial: bool) -> Result<Vec<TransferRecord>> {
    let mut lines = text.split('\n').enumerate().peekable();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == SWEEP_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing sweep header".into(),
            })
        }
    }
    let mut out = Vec::new();
    while let Some((i, line)) = lines.next() {
        let is_last = lines.peek().is_none();
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        match parse_line(line, i + 1) {
            Ok(r) => out.push(r),
            // Without a trailing newline the last line may be cut short.
            Err(_) if allow_partial && is_last => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn parse_line(line: &str, lineno: usize) -> Result<TransferRecord> {
    let perr = |message: String| Error::Parse { line: lineno, message };
    let f: Vec<&str> = line.split(';').collect();
    if f.len() != 9 {
        return Err(perr(format!("expected 9 fields, found {}", f.len())));
    }
    let path: TransferPath = f[0].parse().map_err(|e: Error| perr(e.to_string()))?;
    let degree: usize = f[1].parse().map_err(|_| perr(format!("bad degree {:?}", f[1])))?;
    if degree != path.degree() || f[2] != path.target() {
        return Err(perr("degree/target disagree with path".into()));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|_| perr(format!("bad number {s:?}")))
        }
    };
    let status = match f[8] {
        "ok" => RecordStatus::Ok,
        s => match s.strip_prefix("failed: ") {
            Some(r) => RecordStatus::Failed(r.to_string()),
            None => return Err(perr(format!("bad status {s:?}"))),
        },
    };
    Ok(TransferRecord {
        path,
        mape_base: num(f[3])?,
        mape_transferred: num(f[4])?,
        delta_m: num(f[5])?,
        delta_m_raw: num(f[6])?,
        rmse_transferred: num(f[7])?,
        status,
    })
}
