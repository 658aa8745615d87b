//! Deterministic SVG plots rendered from the exported CSV metrics. No
//! plotting dependency: the files are small hand-built line charts whose
//! bytes depend only on the CSV contents.

use crate::error::{AmaError, Result};
use std::fs;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn io_err(path: &Path, source: std::io::Error) -> AmaError {
    AmaError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One named series of (x, y) points; gaps are separate polylines.
struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

fn render_lines(title: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
    }
    let (mut x0, mut x1) = bounds(&xs);
    let (mut y0, mut y1) = bounds(&ys);
    // A single point or a flat series still needs a nonzero span to map.
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        WIDTH / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    for (label, x, y, anchor) in [
        (format!("{x0:.3}"), MARGIN, HEIGHT - MARGIN + 16.0, "middle"),
        (format!("{x1:.3}"), WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, "middle"),
        (format!("{y0:.3}"), MARGIN - 4.0, HEIGHT - MARGIN, "end"),
        (format!("{y1:.3}"), MARGIN - 4.0, MARGIN + 4.0, "end"),
    ] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"10\">{label}</text>\n",
            fmt(x),
            fmt(y)
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() == 1 {
            let (x, y) = s.points[0];
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                fmt(px(x)),
                fmt(py(y))
            ));
        } else if !s.points.is_empty() {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y))))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            fmt(WIDTH - MARGIN + 4.0),
            fmt(MARGIN + 14.0 * i as f64),
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| AmaError::InvalidInput(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| {
        AmaError::InvalidInput(format!("non-numeric value '{s}' in {}", path.display()))
    })
}

/// Renders `weights.svg`, `excess.svg`, and `counts.svg` from the CSV
/// files already present in `out_dir`.
pub fn emit_plots(out_dir: &Path) -> Result<()> {
    for name in ["weights.csv", "excess.csv", "counts.csv"] {
        if !out_dir.join(name).exists() {
            return Err(AmaError::InvalidInput(format!(
                "missing {}",
                out_dir.join(name).display()
            )));
        }
    }
    let weights = out_dir.join("weights.csv");
    {
        let (header, rows) = read_csv(&weights)?;
        let k = header.len() - 1;
        let mut series: Vec<Series> = (0..k)
            .map(|i| Series {
                name: header[i + 1].clone(),
                points: Vec::new(),
            })
            .collect();
        for row in &rows {
            let step = parse_f64(&row[0], &weights)?;
            for i in 0..k {
                series[i].points.push((step, parse_f64(&row[i + 1], &weights)?));
            }
        }
        let svg = render_lines("Task sampling weights", &series);
        let path = out_dir.join("weights.svg");
        fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
    }

    let excess = out_dir.join("excess.csv");
    {
        let (_, rows) = read_csv(&excess)?;
        let mut series: Vec<Series> = Vec::new();
        for row in &rows {
            // Unsampled tasks leave the value fields empty: a gap, not a 0.
            if row[3].is_empty() {
                continue;
            }
            let step = parse_f64(&row[0], &excess)?;
            let task: usize = row[1]
                .parse()
                .map_err(|_| AmaError::InvalidInput(format!("bad task id '{}'", row[1])))?;
            while series.len() <= task {
                series.push(Series {
                    name: format!("task {}", series.len()),
                    points: Vec::new(),
                });
            }
            series[task].points.push((step, parse_f64(&row[3], &excess)?));
        }
        let svg = render_lines("Mean clipped excess loss", &series);
        let path = out_dir.join("excess.svg");
        fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
    }

    let counts = out_dir.join("counts.csv");
    {
        let (_, rows) = read_csv(&counts)?;
        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">Per-task sample counts</text>\n",
            WIDTH / 2.0
        ));
        let values: Vec<f64> = rows
            .iter()
            .map(|r| parse_f64(&r[1], &counts))
            .collect::<Result<_>>()?;
        let max = values.iter().cloned().fold(1.0f64, f64::max);
        let k = values.len().max(1);
        let band = (WIDTH - 2.0 * MARGIN) / k as f64;
        for (i, &v) in values.iter().enumerate() {
            let h = v / max * (HEIGHT - 2.0 * MARGIN);
            let x = MARGIN + band * i as f64 + band * 0.1;
            let y = HEIGHT - MARGIN - h;
            let color = PALETTE[i % PALETTE.len()];
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>\n",
                fmt(x),
                fmt(y),
                fmt(band * 0.8),
                fmt(h)
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                fmt(x + band * 0.4),
                fmt(HEIGHT - MARGIN + 14.0),
                rows[i][0]
            ));
        }
        svg.push_str("</svg>\n");
        let path = out_dir.join("counts.svg");
        fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn plots_from_csvs_are_deterministic() {
        let dir = tempdir().unwrap();
        fs::write(
            dir.path().join("weights.csv"),
            "step,w0,w1\n1,0.5,0.5\n2,0.6,0.4\n3,0.7,0.3\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("excess.csv"),
            "step,task,raw_excess,clipped_excess,batch_count\n1,0,0.5,0.5,3\n1,1,,,0\n2,0,0.2,0.2,4\n2,1,-0.1,0.0,2\n",
        )
        .unwrap();
        fs::write(dir.path().join("counts.csv"), "task,samples\n0,7\n1,2\n").unwrap();
        emit_plots(dir.path()).unwrap();
        let first = fs::read(dir.path().join("weights.svg")).unwrap();
        emit_plots(dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join("weights.svg")).unwrap(), first);
        assert!(dir.path().join("excess.svg").exists());
        assert!(dir.path().join("counts.svg").exists());
    }

    #[test]
    fn single_point_series_renders() {
        let dir = tempdir().unwrap();
        fs::write(dir.path().join("weights.csv"), "step,w0\n1,1.0\n").unwrap();
        fs::write(
            dir.path().join("excess.csv"),
            "step,task,raw_excess,clipped_excess,batch_count\n1,0,0.5,0.5,1\n",
        )
        .unwrap();
        fs::write(dir.path().join("counts.csv"), "task,samples\n0,1\n").unwrap();
        emit_plots(dir.path()).unwrap();
        let svg = fs::read_to_string(dir.path().join("weights.svg")).unwrap();
        assert!(svg.contains("<circle"));
    }

    #[test]
    fn missing_csv_errors_with_file_name() {
        let dir = tempdir().unwrap();
        let err = emit_plots(dir.path()).unwrap_err();
        assert!(err.to_string().contains("weights.csv"));
    }
}
