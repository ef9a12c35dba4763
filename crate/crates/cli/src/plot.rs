//! Static SVG 1.1 line charts: one series per model, mean line through the
//! per-cell repeat means, individual repeats as hollow circles.

use std::collections::BTreeSet;

use crate::csvio::ResultRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;

/// Which column of the results table runs along the x axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Difficulty,
    DataSize,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::Difficulty => "difficulty D",
            Axis::DataSize => "n_train",
        }
    }

    fn value(self, row: &ResultRow) -> f64 {
        match self {
            Axis::Difficulty => row.difficulty,
            Axis::DataSize => row.n_train as f64,
        }
    }

    /// Data-size sweeps span decades, difficulty sweeps do not.
    fn log_x(self) -> bool {
        matches!(self, Axis::DataSize)
    }
}

/// Picks the axis that actually varies in the table.
pub fn infer_axis(rows: &[ResultRow]) -> Axis {
    let distinct_d: BTreeSet<u64> = rows.iter().map(|r| r.difficulty.to_bits()).collect();
    if distinct_d.len() > 1 {
        Axis::Difficulty
    } else {
        Axis::DataSize
    }
}

fn series_color(model: &str) -> &'static str {
    match model {
        "db" => "#c0392b",
        "fm" => "#2471a3",
        _ => "#5d6d7e",
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.0e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Evenly spaced ticks over [lo, hi] in plot space.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Renders one metric against the sweep axis.  `metric` selects the column;
/// rows are grouped by model, cells by axis value, repeats averaged.
pub fn render_chart(
    rows: &[ResultRow],
    axis: Axis,
    metric: &str,
    pick: impl Fn(&ResultRow) -> f64,
) -> String {
    let tx = |v: f64| if axis.log_x() { v.ln() } else { v };

    let mut models: Vec<String> = Vec::new();
    for r in rows {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    models.sort();

    let xs_raw: BTreeSet<u64> = rows.iter().map(|r| axis.value(r).to_bits()).collect();
    let xs: Vec<f64> = xs_raw.into_iter().map(f64::from_bits).collect();
    let (x_lo, x_hi) = (tx(xs[0]), tx(xs[xs.len() - 1]));
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };

    let mut y_hi = f64::MIN;
    for r in rows {
        y_hi = y_hi.max(pick(r));
    }
    let y_lo = 0.0;
    let y_hi = if y_hi > 0.0 { y_hi * 1.08 } else { 1.0 };

    let px = |v: f64| MARGIN_L + (tx(v) - x_lo) / x_span * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |v: f64| HEIGHT - MARGIN_B - (v - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" \
         text-anchor=\"middle\">{metric} vs {}</text>\n",
        WIDTH / 2.0,
        axis.label()
    ));

    // Axes.
    let (x0p, y0p) = (MARGIN_L, HEIGHT - MARGIN_B);
    svg.push_str(&format!(
        "<line x1=\"{x0p}\" y1=\"{y0p}\" x2=\"{}\" y2=\"{y0p}\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_R
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0p}\" y1=\"{y0p}\" x2=\"{x0p}\" y2=\"{MARGIN_T}\" stroke=\"black\"/>\n"
    ));

    // X ticks at the actual cell positions, y ticks evenly spaced.
    for &x in &xs {
        let p = px(x);
        svg.push_str(&format!(
            "<line x1=\"{p}\" y1=\"{y0p}\" x2=\"{p}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0p + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{p}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            y0p + 20.0,
            fmt_tick(x)
        ));
    }
    for y in ticks(y_lo, y_hi, 6) {
        let p = py(y);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{p}\" x2=\"{x0p}\" y2=\"{p}\" stroke=\"black\"/>\n",
            x0p - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{}</text>\n",
            x0p - 9.0,
            p + 4.0,
            fmt_tick(y)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        axis.label()
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{metric}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    ));

    // Series: repeats as hollow circles, means joined by a polyline.
    for model in &models {
        let color = series_color(model);
        let mut mean_pts = Vec::new();
        for &x in &xs {
            let cell: Vec<f64> = rows
                .iter()
                .filter(|r| r.model == *model && axis.value(r) == x)
                .map(&pick)
                .collect();
            if cell.is_empty() {
                continue;
            }
            for &v in &cell {
                svg.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"none\" stroke=\"{color}\"/>\n",
                    px(x),
                    py(v)
                ));
            }
            let mean = cell.iter().sum::<f64>() / cell.len() as f64;
            mean_pts.push(format!("{},{}", px(x), py(mean)));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            mean_pts.join(" ")
        ));
    }

    // Legend in the top-right corner.
    for (i, model) in models.iter().enumerate() {
        let y = MARGIN_T + 14.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN_R - 96.0;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            x + 26.0,
            series_color(model)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">{model}</text>\n",
            x + 32.0,
            y + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
