//! `toolflow plot`: static SVG of an executor timeline.

use std::fmt::Write as _;
use std::path::Path;

use toolflow::executor::{TimelineSample, TIMELINE_HEADER};

use crate::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Parses a timeline CSV and checks it row by row. Errors name the 1-based
/// line of the file.
pub fn read_timeline(text: &str) -> Result<Vec<TimelineSample>, CliError> {
    let malformed = |line: usize, m: String| CliError::MalformedCsv { line, message: m };
    let header = text.lines().next().unwrap_or_default().trim_end();
    if header != TIMELINE_HEADER {
        return Err(malformed(1, format!("expected header {TIMELINE_HEADER:?}")));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows: Vec<TimelineSample> = Vec::new();
    for (i, record) in reader.deserialize::<TimelineSample>().enumerate() {
        let line = i + 2;
        let row = record.map_err(|e| malformed(line, e.to_string()))?;
        if !(row.t_ms >= 0.0 && row.t_ms.is_finite()) {
            return Err(malformed(line, "time must be a nonnegative number".into()));
        }
        if row.workers_busy != row.running {
            return Err(malformed(line, "workers_busy differs from running".into()));
        }
        if row.workers_busy > row.workers_total {
            return Err(malformed(line, "more busy workers than workers".into()));
        }
        if let Some(prev) = rows.last() {
            if row.t_ms < prev.t_ms {
                return Err(malformed(line, "time goes backwards".into()));
            }
            if row.completed < prev.completed {
                return Err(malformed(line, "completed count decreases".into()));
            }
            let total = |s: &TimelineSample| s.pending + s.running + s.completed;
            if total(&row) < total(prev) {
                return Err(malformed(
                    line,
                    "pending + running + completed decreases".into(),
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Step-function SVG of running and pending tasks over time. Identical
/// input gives byte-identical output.
pub fn render_svg(rows: &[TimelineSample]) -> String {
    let t_max = rows.iter().map(|r| r.t_ms).fold(0.0, f64::max);
    let t_span = if t_max > 0.0 { t_max } else { 1.0 };
    let max_running = rows.iter().map(|r| r.running).max().unwrap_or(0);
    let max_pending = rows.iter().map(|r| r.pending).max().unwrap_or(0);
    let y_max = max_running.max(max_pending).max(1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: f64| LEFT + t / t_span * plot_w;
    let y = |v: usize| TOP + plot_h - v as f64 / y_max * plot_h;

    let series = |value: fn(&TimelineSample) -> usize| -> String {
        let mut pts = Vec::new();
        if rows.is_empty() {
            pts.push((x(0.0), y(0)));
            pts.push((x(t_span), y(0)));
        }
        for (i, r) in rows.iter().enumerate() {
            if i > 0 {
                pts.push((x(r.t_ms), y(value(&rows[i - 1]))));
            }
            pts.push((x(r.t_ms), y(value(r))));
        }
        pts.iter()
            .map(|(a, b)| format!("{a:.2},{b:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-max-running="{max_running}" data-max-pending="{max_pending}" data-samples="{}">"#,
        rows.len()
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let py = TOP + plot_h - plot_h * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v:.1}</text>"#,
            LEFT - 6.0,
            py + 4.0
        );
        let t = t_span * k as f64 / 4.0 / 1000.0;
        let px = LEFT + plot_w * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="middle">{t:.1}</text>"#,
            y0 + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">time (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r##"<polyline id="running" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        series(|r| r.running)
    );
    let _ = writeln!(
        svg,
        r##"<polyline id="pending" points="{}" fill="none" stroke="#ff7f0e" stroke-width="2" stroke-dasharray="6 3"/>"##,
        series(|r| r.pending)
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="20" font-size="12" fill="#1f77b4">running workers</text>"##,
        LEFT + 10.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="20" font-size="12" fill="#ff7f0e">pending tasks</text>"##,
        LEFT + 160.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn plot_file(csv_path: &Path, svg_path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(csv_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    let rows = read_timeline(&text)?;
    std::fs::write(svg_path, render_svg(&rows))
        .map_err(|e| CliError::Io(format!("{}: {e}", svg_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(rows: &[&str]) -> String {
        let mut s = format!("{TIMELINE_HEADER}\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn empty_run_is_flat() {
        let rows = read_timeline(&csv(&[])).unwrap();
        let svg = render_svg(&rows);
        assert!(svg.contains(r#"data-max-running="0""#));
        assert!(svg.contains(r#"id="running" points="60.00,350.00 780.00,350.00""#));
    }

    #[test]
    fn broken_rows_name_their_line() {
        let text = csv(&["0,0,0,0,0,4", "10,8,0,0,0,4", "20,4,3,0,4,4"]);
        match read_timeline(&text) {
            Err(CliError::MalformedCsv { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let text = csv(&["0,8,0,0,0,4", "10,1,4,0,4,4"]);
        match read_timeline(&text) {
            Err(CliError::MalformedCsv { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("decreases"));
            }
            other => panic!("{other:?}"),
        }
        assert!(read_timeline("a,b\n").is_err());
        assert!(read_timeline(&csv(&["0,x,0,0,0,4"])).is_err());
        assert!(read_timeline(&csv(&["5,0,0,0,0,4", "4,0,0,0,0,4"])).is_err());
        assert!(read_timeline(&csv(&["0,0,5,0,5,4"])).is_err());
    }

    #[test]
    fn deterministic_and_peaks() {
        let text = csv(&[
            "0,8,0,0,0,4",
            "1,4,4,0,4,4",
            "201,0,4,4,4,4",
            "401,0,0,8,0,4",
        ]);
        let rows = read_timeline(&text).unwrap();
        let a = render_svg(&rows);
        assert_eq!(a, render_svg(&rows));
        assert!(a.contains(r#"data-max-running="4""#));
        assert!(a.contains(r#"data-max-pending="8""#));
    }
}
