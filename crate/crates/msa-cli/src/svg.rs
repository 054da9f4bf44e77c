//! Deterministic SVG heatmaps. Cells carry their numeric value in a
//! `data-value` attribute so tests and downstream tools can assert on the
//! data rather than on pixels. The color scale is symmetric around zero
//! with extremes at ±max|value| (white → red for positive, white → blue
//! for negative).

use std::fmt::Write;

const CELL: usize = 26;
const LABEL_SPACE: usize = 90;
const FONT: &str = "font-family=\"monospace\" font-size=\"11\"";

pub struct Heatmap<'a> {
    pub title: &'a str,
    pub row_labels: &'a [String],
    pub col_labels: &'a [String],
    /// Row-major values, rows × cols.
    pub values: &'a [f64],
}

fn heat_color(value: f64, max_abs: f64) -> String {
    if max_abs == 0.0 {
        return "#ffffff".to_string();
    }
    let t = (value / max_abs).clamp(-1.0, 1.0);
    let fade = (255.0 - t.abs() * 255.0).round() as u8;
    if t >= 0.0 {
        format!("#ff{fade:02x}{fade:02x}")
    } else {
        format!("#{fade:02x}{fade:02x}ff")
    }
}

pub fn render(map: &Heatmap<'_>) -> String {
    let rows = map.row_labels.len();
    let cols = map.col_labels.len();
    assert_eq!(map.values.len(), rows * cols, "values must fill the grid");
    let max_abs = map.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    let width = LABEL_SPACE + cols * CELL + 10;
    let height = LABEL_SPACE + rows * CELL + 10;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(svg, "  <title>{}</title>", escape(map.title));
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>"
    );
    for (j, label) in map.col_labels.iter().enumerate() {
        let x = LABEL_SPACE + j * CELL + CELL / 2;
        let y = LABEL_SPACE - 6;
        let _ = writeln!(
            svg,
            "  <text x=\"{x}\" y=\"{y}\" {FONT} text-anchor=\"end\" \
             transform=\"rotate(-60 {x} {y})\">{}</text>",
            escape(label)
        );
    }
    for (i, label) in map.row_labels.iter().enumerate() {
        let x = LABEL_SPACE - 6;
        let y = LABEL_SPACE + i * CELL + CELL / 2 + 4;
        let _ = writeln!(
            svg,
            "  <text x=\"{x}\" y=\"{y}\" {FONT} text-anchor=\"end\">{}</text>",
            escape(label)
        );
    }
    for i in 0..rows {
        for j in 0..cols {
            let value = map.values[i * cols + j];
            let x = LABEL_SPACE + j * CELL;
            let y = LABEL_SPACE + i * CELL;
            let _ = writeln!(
                svg,
                "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{}\" stroke=\"#dddddd\" data-row=\"{i}\" data-col=\"{j}\" \
                 data-value=\"{value}\"/>",
                heat_color(value, max_abs)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_map_to_pure_red_and_blue() {
        assert_eq!(heat_color(1.0, 1.0), "#ff0000");
        assert_eq!(heat_color(-1.0, 1.0), "#0000ff");
        assert_eq!(heat_color(0.0, 1.0), "#ffffff");
        assert_eq!(heat_color(0.0, 0.0), "#ffffff");
    }

    #[test]
    fn render_embeds_values_and_is_deterministic() {
        let rows = vec!["a".to_string(), "b".to_string()];
        let cols = vec!["x".to_string(), "y".to_string()];
        let values = vec![1.0, -1.0, 0.0, 0.0];
        let map = Heatmap { title: "t", row_labels: &rows, col_labels: &cols, values: &values };
        let first = render(&map);
        assert!(first.contains("data-value=\"1\""));
        assert!(first.contains("data-value=\"-1\""));
        assert!(first.contains("fill=\"#ff0000\""));
        assert!(first.contains("fill=\"#0000ff\""));
        assert_eq!(first, render(&map));
    }
}
