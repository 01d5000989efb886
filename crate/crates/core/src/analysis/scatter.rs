use crate::tensor::Tensor;

const PALETTE: [[f64; 3]; 10] = [
    [0.12, 0.47, 0.71],
    [1.00, 0.50, 0.05],
    [0.17, 0.63, 0.17],
    [0.84, 0.15, 0.16],
    [0.58, 0.40, 0.74],
    [0.55, 0.34, 0.29],
    [0.89, 0.47, 0.76],
    [0.50, 0.50, 0.50],
    [0.74, 0.74, 0.13],
    [0.09, 0.75, 0.81],
];

/// Rasterize 2-D points on a white `size x size` canvas. `group[i]` picks
/// the color; `filled[i]` draws a solid square, otherwise a cross.
pub fn scatter_rgb(points: &[[f64; 2]], group: &[usize], filled: &[bool], size: usize) -> Tensor {
    let plane = size * size;
    let mut data = vec![1.0; 3 * plane];
    if points.is_empty() || size < 8 {
        return Tensor::new(vec![3, size, size], data).expect("canvas");
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let margin = 4.0;
    let span = (size as f64) - 2.0 * margin - 1.0;
    let to_px = |v: f64, a: usize| {
        let w = hi[a] - lo[a];
        let t = if w > 0.0 { (v - lo[a]) / w } else { 0.5 };
        (margin + t * span).round() as i64
    };
    for (i, p) in points.iter().enumerate() {
        let x = to_px(p[0], 0);
        let y = size as i64 - 1 - to_px(p[1], 1);
        let color = PALETTE[group[i] % PALETTE.len()];
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let on = if filled[i] { dx.abs() <= 1 && dy.abs() <= 1 } else { dx == dy || dx == -dy };
                let (px, py) = (x + dx, y + dy);
                if on && px >= 0 && py >= 0 && (px as usize) < size && (py as usize) < size {
                    let idx = py as usize * size + px as usize;
                    for c in 0..3 {
                        data[c * plane + idx] = color[c];
                    }
                }
            }
        }
    }
    Tensor::new(vec![3, size, size], data).expect("canvas")
}
