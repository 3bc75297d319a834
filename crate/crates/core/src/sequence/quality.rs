use crate::error::{Error, Result};
use crate::fusion::{argmax, EmissionMatrix};

pub const DEFAULT_S_MIN: usize = 5;
pub const DEFAULT_S_MAX: usize = 20;
pub const DEFAULT_Q_T: f64 = 0.1;
pub const DEFAULT_QUALITY_WINDOW: usize = 10;

/// Ratio of the best log-emission to the best one more than `w` templates
/// away from it. Both are negative, so the ratio is positive and smaller
/// means more distinctive.
pub fn column_quality(column: &[f64], w: usize) -> Result<f64> {
    check_window(column.len(), w)?;
    let best = argmax(column);
    Ok(column[best] / max_outside(column, best, w))
}

/// Mean over the sequence of the path value divided by the best value
/// outside a `w`-wide band around the path, per column.
pub fn path_quality(e: &EmissionMatrix, path: &[usize], w: usize) -> Result<f64> {
    check_window(e.templates(), w)?;
    if path.len() != e.len() || path.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: e.len(),
            actual: path.len(),
        });
    }
    let total: f64 = path
        .iter()
        .enumerate()
        .map(|(t, &k)| {
            let col = e.column(t);
            col[k] / max_outside(col, k, w)
        })
        .sum();
    Ok(total / path.len() as f64)
}

fn check_window(n: usize, w: usize) -> Result<()> {
    if n <= 2 * w + 1 {
        return Err(Error::WindowTooWide {
            templates: n,
            half_width: w,
        });
    }
    Ok(())
}

fn max_outside(column: &[f64], centre: usize, w: usize) -> f64 {
    column
        .iter()
        .enumerate()
        .filter(|(k, _)| k.abs_diff(centre) > w)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Where the decoding window should begin within a quality history.
///
/// `history` holds per-frame quality scores, oldest first. Returns a 1-based
/// index `k` into it (the sequence then runs from `k` to the newest frame), or
/// 0 to use the whole history. A start is only chosen once the history spans
/// `s_max` frames, at the steepest drop `Q_k - Q_{k-1}` among starts that
/// leave between `s_min` and `s_max` frames, and only when that drop is at
/// least `q_t`.
pub fn dynamic_sequence_start(history: &[f64], s_min: usize, s_max: usize, q_t: f64) -> usize {
    let len = history.len();
    if len < s_max || len < 2 {
        return 0;
    }
    let first = (len + 1).saturating_sub(s_max).max(2);
    let last = (len + 1).saturating_sub(s_min.max(1));
    let mut best: Option<(usize, f64)> = None;
    for k in first..=last {
        let delta = history[k - 1] - history[k - 2];
        if best.is_none_or(|(_, d)| delta < d) {
            best = Some((k, delta));
        }
    }
    match best {
        Some((k, roc)) if roc <= -q_t => k,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinctive_and_aliased_columns() {
        let mut col = vec![0.5f64.ln(); 30];
        col[3] = 0.999f64.ln();
        let q = column_quality(&col, 10).unwrap();
        assert!((q - 0.999f64.ln() / 0.5f64.ln()).abs() < 1e-15);
        assert!((q - 0.001_443_4).abs() < 1e-6, "{q}");

        let mut col = vec![0.99f64.ln(); 30];
        col[20] = 0.999f64.ln();
        let q = column_quality(&col, 10).unwrap();
        assert!((q - 0.099_55).abs() < 1e-4, "{q}");
    }

    #[test]
    fn flat_column_scores_one() {
        assert_eq!(column_quality(&[-2.0; 25], 10).unwrap(), 1.0);
    }

    #[test]
    fn window_must_leave_templates_outside() {
        assert!(matches!(column_quality(&[-1.0; 21], 10), Err(Error::WindowTooWide { .. })));
        assert!(column_quality(&[-1.0; 22], 10).is_ok());
    }

    #[test]
    fn next_best_is_taken_outside_the_window_only() {
        let mut col = vec![-5.0; 30];
        col[10] = -0.1;
        col[15] = -0.2; // inside the window, ignored
        col[25] = -1.0;
        assert!((column_quality(&col, 10).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn drop_after_thirteen_frames() {
        let mut q = vec![0.5; 13];
        q.extend([0.1; 7]);
        assert_eq!(dynamic_sequence_start(&q, 5, 20, 0.2), 14);
        // Sequence from 14 through 20 inclusive.
        assert_eq!(q.len() + 1 - 14, 7);
    }

    #[test]
    fn flat_history_uses_full_window() {
        assert_eq!(dynamic_sequence_start(&[0.3; 20], 5, 20, 0.1), 0);
    }

    #[test]
    fn small_drop_below_threshold() {
        let mut q = vec![0.5; 10];
        q.extend([0.4; 10]);
        assert_eq!(dynamic_sequence_start(&q, 5, 20, 0.2), 0);
        assert_eq!(dynamic_sequence_start(&q, 5, 20, 0.05), 11);
    }

    #[test]
    fn short_history_never_cuts() {
        let mut q = vec![0.9; 10];
        q.extend([0.01; 5]);
        assert_eq!(dynamic_sequence_start(&q, 5, 20, 0.1), 0);
    }

    #[test]
    fn drop_too_recent_is_ignored_until_s_min_frames_follow() {
        let mut q = vec![0.9; 17];
        q.extend([0.01; 3]);
        assert_eq!(dynamic_sequence_start(&q, 5, 20, 0.1), 0);
        q.remove(0);
        q.push(0.01);
        q.remove(0);
        q.push(0.01);
        assert_eq!(dynamic_sequence_start(&q, 5, 20, 0.1), 16);
    }
}
