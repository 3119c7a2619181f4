//! Minimal SVG heatmaps for parameter-by-parameter matrices.
//!
//! Colors interpolate linearly through five stops:
//! `#440154` (0), `#3b528b` (0.25), `#21918c` (0.5), `#5ec962` (0.75), `#fde725` (1).

const STOPS: [[u8; 3]; 5] = [[0x44, 0x01, 0x54], [0x3b, 0x52, 0x8b], [0x21, 0x91, 0x8c], [0x5e, 0xc9, 0x62], [0xfd, 0xe7, 0x25]];

const CELL: usize = 22;
const MARGIN_LEFT: usize = 60;
const MARGIN_TOP: usize = 60;
const BAR_WIDTH: usize = 16;

/// Hex color for `v` in [0, 1]; values outside are clamped.
pub fn ramp(v: f64) -> String {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let x = v * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] as f64 + f * (STOPS[i + 1][k] as f64 - STOPS[i][k] as f64)).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap with white separator lines after the first `split` rows and columns.
pub fn heatmap(title: &str, names: &[String], m: &[Vec<f64>], split: usize, vmax: f64, note: &str) -> String {
    let n = names.len();
    let side = n * CELL;
    let width = MARGIN_LEFT + side + 3 * BAR_WIDTH + 40;
    let height = MARGIN_TOP + side + 30;
    let scale = if vmax > 0.0 { vmax } else { 1.0 };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"9\">\n"
    );
    s.push_str(&format!("<!-- {} -->\n", escape(note)));
    s.push_str(&format!(
        "<text x=\"{MARGIN_LEFT}\" y=\"16\" font-size=\"12\">{}</text>\n",
        escape(title)
    ));
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            s.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"><title>{} / {}: {v:.4}</title></rect>\n",
                MARGIN_LEFT + j * CELL,
                MARGIN_TOP + i * CELL,
                ramp(v / scale),
                escape(&names[i]),
                escape(&names[j])
            ));
        }
    }
    for (k, name) in names.iter().enumerate() {
        let c = k * CELL + CELL / 2;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            MARGIN_LEFT - 4,
            MARGIN_TOP + c,
            escape(name)
        ));
        s.push_str(&format!(
            "<text transform=\"translate({},{}) rotate(-60)\">{}</text>\n",
            MARGIN_LEFT + c,
            MARGIN_TOP - 4,
            escape(name)
        ));
    }
    if split > 0 && split < n {
        let p = split * CELL;
        s.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{MARGIN_TOP}\" x2=\"{x}\" y2=\"{}\" stroke=\"white\" stroke-width=\"2\"/>\n",
            MARGIN_TOP + side,
            x = MARGIN_LEFT + p
        ));
        s.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"white\" stroke-width=\"2\"/>\n",
            MARGIN_LEFT + side,
            y = MARGIN_TOP + p
        ));
    }
    let bx = MARGIN_LEFT + side + BAR_WIDTH;
    let steps = 20;
    for k in 0..steps {
        let h = side as f64 / steps as f64;
        let v = 1.0 - (k as f64 + 0.5) / steps as f64;
        s.push_str(&format!(
            "<rect x=\"{bx}\" y=\"{:.2}\" width=\"{BAR_WIDTH}\" height=\"{:.2}\" fill=\"{}\"/>\n",
            MARGIN_TOP as f64 + k as f64 * h,
            h + 0.5,
            ramp(v)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\">{scale:.3}</text>\n<text x=\"{}\" y=\"{}\">0</text>\n",
        bx + BAR_WIDTH + 3,
        MARGIN_TOP + 8,
        bx + BAR_WIDTH + 3,
        MARGIN_TOP + side
    ));
    s.push_str("</svg>\n");
    s
}
