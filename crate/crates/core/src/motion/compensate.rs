use crate::error::{invalid_input, Result};

use super::{estimate_flow, FlowConfig, FlowField, Frame2D};

/// Forward-warps `source` by `scale · flow`.
///
/// Each source pixel is pushed to `p + scale·flow(p)` and splatted onto its
/// four neighbours with separable linear weights (along the row, then along
/// the column). Colliding contributions are summed; destinations that receive
/// nothing stay 0. The result is clamped to `[min(0, min src), max(1, max src)]`
/// so in-range frames stay in `[0, 1]`.
pub fn compensate(source: &Frame2D, flow: &FlowField, scale: f64) -> Result<Frame2D> {
    let (h, w) = (source.height(), source.width());
    if flow.height != h || flow.width != w {
        return Err(invalid_input(format!(
            "flow is {}x{}, frame is {h}x{w}",
            flow.height, flow.width
        )));
    }
    if !scale.is_finite() || !flow.is_finite() {
        return Err(invalid_input("flow and scale must be finite"));
    }

    let mut out = vec![0.0; h * w];
    let mut splat = |r: isize, c: isize, value: f64| {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            out[r as usize * w + c as usize] += value;
        }
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let value = source.data()[i];
            if value == 0.0 {
                continue;
            }
            let x = c as f64 + scale * flow.vx[i];
            let y = r as f64 + scale * flow.vy[i];
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (xc, yr) = (x0 as isize, y0 as isize);
            // row interpolation
            let left = value * (1.0 - fx);
            let right = value * fx;
            // column interpolation
            splat(yr, xc, left * (1.0 - fy));
            if fx > 0.0 {
                splat(yr, xc + 1, right * (1.0 - fy));
            }
            if fy > 0.0 {
                splat(yr + 1, xc, left * fy);
                if fx > 0.0 {
                    splat(yr + 1, xc + 1, right * fy);
                }
            }
        }
    }

    let lo = source.data().iter().copied().fold(0.0, f64::min);
    let hi = source.data().iter().copied().fold(1.0, f64::max);
    out.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    Frame2D::from_raw(h, w, out)
}

/// Motion-compensated foreground priors from the three latest recovered
/// foregrounds `x_{t-1}, x_{t-2}, x_{t-3}`.
///
/// Returns `(x'_{t-1}, x'_{t-2}, x'_{t-3})` where `x'_{t-1} = x_{t-1}`,
/// `x'_{t-2}` is `x_{t-1}` pushed one step along the motion observed between
/// `x_{t-2}` and `x_{t-1}`, and `x'_{t-3}` is `x_{t-1}` pushed by half of the
/// motion observed between `x_{t-3}` and `x_{t-1}`.
///
/// The flow estimated from `x_{t-1}` to an older frame points backwards in
/// time, so it is negated to obtain the forward motion on the `x_{t-1}` grid.
pub fn generate_priors(
    prev1: &[f64],
    prev2: &[f64],
    prev3: &[f64],
    height: usize,
    width: usize,
    cfg: &FlowConfig,
) -> Result<[Vec<f64>; 3]> {
    let f1 = Frame2D::from_raw(height, width, prev1.to_vec())?;
    let f2 = Frame2D::from_raw(height, width, prev2.to_vec())?;
    let f3 = Frame2D::from_raw(height, width, prev3.to_vec())?;

    let forward1 = estimate_flow(&f1, &f2, cfg)?.scaled(-1.0);
    let forward2 = estimate_flow(&f1, &f3, cfg)?.scaled(-1.0);

    let p2 = compensate(&f1, &forward1, 1.0)?;
    let p3 = compensate(&f1, &forward2, 0.5)?;
    Ok([prev1.to_vec(), p2.into_vec(), p3.into_vec()])
}
