//! Minimal standalone SVG line charts.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lft::CurveRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Column-major numeric table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

fn parse_cell(s: &str) -> f64 {
    match s.trim() {
        "inf" | "+inf" | "Infinity" => f64::INFINITY,
        "-inf" | "-Infinity" => f64::NEG_INFINITY,
        t => t.parse().unwrap_or(f64::NAN),
    }
}

fn json_number(v: &serde_json::Value) -> f64 {
    match v {
        serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
        serde_json::Value::String(s) => parse_cell(s),
        serde_json::Value::Bool(b) => f64::from(u8::from(*b)),
        _ => f64::NAN,
    }
}

impl Table {
    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| {
                Error::Argument(format!(
                    "no column `{name}` (have {})",
                    self.columns.join(", ")
                ))
            })
    }

    pub fn from_rows(rows: &[CurveRow]) -> Self {
        Self {
            columns: vec!["u".into(), "s".into(), "s_hull".into()],
            data: vec![
                rows.iter().map(|r| r.u).collect(),
                rows.iter().map(|r| r.s).collect(),
                rows.iter().map(|r| r.s_hull).collect(),
            ],
        }
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut data = vec![Vec::new(); columns.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (col, cell) in data.iter_mut().zip(rec.iter()) {
                col.push(match cell {
                    "true" => 1.0,
                    "false" => 0.0,
                    c => parse_cell(c),
                });
            }
        }
        Ok(Self { columns, data })
    }

    /// Accepts `{"rows": [{..}, ..]}` (curves) or parallel arrays such as
    /// `{"beta": [..], "phi": [..]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Argument("expected a JSON object".into()))?;
        if let Some(rows) = obj
            .get("rows")
            .or_else(|| obj.get("records"))
            .and_then(|r| r.as_array())
        {
            let mut columns: Vec<String> = Vec::new();
            if let Some(first) = rows.first().and_then(|r| r.as_object()) {
                columns = first
                    .iter()
                    .filter(|(_, v)| v.is_number() || v.is_string() || v.is_boolean())
                    .map(|(k, _)| k.clone())
                    .collect();
            }
            let data = columns
                .iter()
                .map(|c| {
                    rows.iter()
                        .map(|r| r.get(c).map_or(f64::NAN, json_number))
                        .collect()
                })
                .collect();
            return Ok(Self { columns, data });
        }
        let mut columns = Vec::new();
        let mut data = Vec::new();
        for (k, v) in obj {
            if let Some(arr) = v.as_array() {
                if arr.iter().all(|x| x.is_number() || x.is_string()) && !arr.is_empty() {
                    columns.push(k.clone());
                    data.push(arr.iter().map(json_number).collect());
                }
            }
        }
        if columns.is_empty() {
            return Err(Error::Argument("no numeric series found in JSON".into()));
        }
        Ok(Self { columns, data })
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 5);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return None;
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        Some((lo - pad, hi + pad))
    } else {
        let pad = 0.04 * (hi - lo);
        Some((lo - pad, hi + pad))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Draws up to four `y` series against `x`. Non-finite points break the line.
pub fn render(table: &Table, x: &str, ys: &[&str], title: &str) -> Result<String> {
    if ys.is_empty() {
        return Err(Error::Argument("nothing to plot".into()));
    }
    if ys.len() > COLORS.len() {
        return Err(Error::Argument(format!(
            "at most {} series per plot",
            COLORS.len()
        )));
    }
    let xs = table.column(x)?;
    let series: Vec<&[f64]> = ys.iter().map(|y| table.column(y)).collect::<Result<_>>()?;
    let finite_x = |i: usize| xs[i].is_finite();
    let (x0, x1) = bounds(xs.iter().copied())
        .ok_or_else(|| Error::Argument(format!("column `{x}` has no finite values")))?;
    let (y0, y1) = bounds(series.iter().flat_map(|s| {
        s.iter()
            .enumerate()
            .filter(|(i, _)| finite_x(*i))
            .map(|(_, v)| *v)
    }))
    .ok_or_else(|| Error::Argument("no finite values to plot".into()))?;

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x0, x1) {
        let px = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#888"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            format_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let py = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#888"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            format_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x)
    );

    for (k, (name, s)) in ys.iter().zip(&series).enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for (i, (&xv, &yv)) in xs.iter().zip(s.iter()).enumerate() {
            if !(xv.is_finite() && yv.is_finite()) {
                pen_down = false;
                continue;
            }
            let cmd = if pen_down { 'L' } else { 'M' };
            let _ = write!(
                d,
                "{}{cmd}{:.2},{:.2}",
                if i == 0 { "" } else { " " },
                sx(xv),
                sy(yv)
            );
            pen_down = true;
        }
        let dash = if k == 0 {
            ""
        } else {
            r#" stroke-dasharray="6 3""#
        };
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
            d.trim(),
            COLORS[k]
        );
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let lx = LEFT + pw - 110.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="1.5"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            COLORS[k],
            lx + 30.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_non_finite_points() {
        let table = Table::from_csv("u,s\n0,-inf\n0.5,-1\n1,-0.5\n").unwrap();
        let svg = render(&table, "u", &["s"], "t").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<path d=\"M"));
        assert_eq!(svg.matches('M').count(), 1);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn json_shapes() {
        let t = Table::from_json(r#"{"beta":[0,1,2],"phi":[0,"-inf",1]}"#).unwrap();
        assert_eq!(t.column("phi").unwrap()[1], f64::NEG_INFINITY);
        let t = Table::from_json(r#"{"rows":[{"u":0,"s":1},{"u":1,"s":"nan"}]}"#).unwrap();
        assert!(t.column("s").unwrap()[1].is_nan());
        assert!(t.column("x").is_err());
    }

    #[test]
    fn tick_spacing() {
        assert_eq!(
            ticks(0.0, 1.0),
            vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]
        );
        assert_eq!(format_tick(0.6000000000000001), "0.6");
    }
}
