//! Full-reference image comparison: timestamp matching, mean absolute
//! photometric error and windowed SSIM, plus a report aggregating both over a
//! matched sequence.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::event::Frame;
use crate::filter::Session;
use crate::{from_log, Error, Result};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_DYNAMIC_RANGE: f64 = 255.0;

/// Pair every ground-truth time with the reconstruction time of minimum
/// absolute distance; ties break toward the earlier reconstruction time.
/// Returns `(gt_index, recon_index)` pairs.
pub fn match_timestamps(gt: &[f64], recon: &[f64]) -> Result<Vec<(usize, usize)>> {
    if gt.is_empty() {
        return Err(Error::Dataset("empty ground-truth timestamp list".into()));
    }
    if recon.is_empty() {
        return Err(Error::Dataset(
            "empty reconstruction timestamp list".into(),
        ));
    }
    debug_assert!(gt.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(recon.windows(2).all(|w| w[0] <= w[1]));
    let pairs = gt
        .iter()
        .enumerate()
        .map(|(gi, &t)| {
            let i = recon.partition_point(|&r| r < t);
            let best = if i == 0 {
                0
            } else if i == recon.len() {
                recon.len() - 1
            } else if (t - recon[i - 1]) <= (recon[i] - t) {
                i - 1
            } else {
                i
            };
            (gi, best)
        })
        .collect();
    Ok(pairs)
}

fn check_dims(a: &Frame, b: &Frame) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            expected_width: a.width,
            expected_height: a.height,
            width: b.width,
            height: b.height,
        });
    }
    Ok(())
}

/// Mean absolute pixel difference as a percentage of the 8-bit range.
pub fn photometric_error(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims(a, b)?;
    let sum: u64 = a
        .pixels
        .iter()
        .zip(b.pixels.iter())
        .map(|(&pa, &pb)| (pa as i32 - pb as i32).unsigned_abs() as u64)
        .sum();
    Ok(sum as f64 * 100.0 / (255.0 * a.pixels.len() as f64))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, slot) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *slot = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *slot;
    }
    for slot in &mut k {
        *slot /= sum;
    }
    k
}

// Separable valid-mode Gaussian blur. The horizontal pass shrinks the width,
// the vertical pass the height.
fn blur_rows(src: &[f64], w: usize, h: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let mut out = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out_row = &mut out[y * ow..(y + 1) * ow];
        for (xo, slot) in out_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * row[xo + i];
            }
            *slot = acc;
        }
    }
    out
}

fn blur_cols_into_row(
    src: &[f64],
    w: usize,
    yo: usize,
    kernel: &[f64; SSIM_WINDOW],
    out_row: &mut [f64],
) {
    for (xo, slot) in out_row.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &k) in kernel.iter().enumerate() {
            acc += k * src[(yo + i) * w + xo];
        }
        *slot = acc;
    }
}

struct SsimPlanes {
    a: Vec<f64>,
    b: Vec<f64>,
    aa: Vec<f64>,
    bb: Vec<f64>,
    ab: Vec<f64>,
}

fn ssim_planes(a: &Frame, b: &Frame) -> SsimPlanes {
    let n = a.pixels.len();
    let mut planes = SsimPlanes {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        aa: Vec::with_capacity(n),
        bb: Vec::with_capacity(n),
        ab: Vec::with_capacity(n),
    };
    for (&pa, &pb) in a.pixels.iter().zip(b.pixels.iter()) {
        let (va, vb) = (pa as f64, pb as f64);
        planes.a.push(va);
        planes.b.push(vb);
        planes.aa.push(va * va);
        planes.bb.push(vb * vb);
        planes.ab.push(va * vb);
    }
    planes
}

// Weighted local statistics for one output row combined into the SSIM map
// sum for that row. `row_width` is the width of the horizontally blurred
// planes; the vertical pass only shrinks the height.
fn ssim_row_sum(
    planes: &(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>),
    row_width: usize,
    yo: usize,
    kernel: &[f64; SSIM_WINDOW],
) -> f64 {
    let c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) * (SSIM_K1 * SSIM_DYNAMIC_RANGE);
    let c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) * (SSIM_K2 * SSIM_DYNAMIC_RANGE);
    let mut mu_a = vec![0.0; row_width];
    let mut mu_b = vec![0.0; row_width];
    let mut m_aa = vec![0.0; row_width];
    let mut m_bb = vec![0.0; row_width];
    let mut m_ab = vec![0.0; row_width];
    blur_cols_into_row(&planes.0, row_width, yo, kernel, &mut mu_a);
    blur_cols_into_row(&planes.1, row_width, yo, kernel, &mut mu_b);
    blur_cols_into_row(&planes.2, row_width, yo, kernel, &mut m_aa);
    blur_cols_into_row(&planes.3, row_width, yo, kernel, &mut m_bb);
    blur_cols_into_row(&planes.4, row_width, yo, kernel, &mut m_ab);
    let mut sum = 0.0;
    for x in 0..row_width {
        let (ma, mb) = (mu_a[x], mu_b[x]);
        let var_a = m_aa[x] - ma * ma;
        let var_b = m_bb[x] - mb * mb;
        let cov = m_ab[x] - ma * mb;
        let luminance = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let structure = (2.0 * cov + c2) / (var_a + var_b + c2);
        sum += luminance * structure;
    }
    sum
}

fn ssim_impl(a: &Frame, b: &Frame, parallel: bool) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Image(format!(
            "image {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let kernel = gaussian_kernel();
    let planes = ssim_planes(a, b);
    // Horizontal pass once per plane; the vertical pass runs per output row.
    let blurred = (
        blur_rows(&planes.a, w, h, &kernel),
        blur_rows(&planes.b, w, h, &kernel),
        blur_rows(&planes.aa, w, h, &kernel),
        blur_rows(&planes.bb, w, h, &kernel),
        blur_rows(&planes.ab, w, h, &kernel),
    );
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let row_sums: Vec<f64> = if parallel {
        #[cfg(feature = "parallel")]
        {
            (0..oh)
                .into_par_iter()
                .map(|yo| ssim_row_sum(&blurred, ow, yo, &kernel))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..oh).map(|yo| ssim_row_sum(&blurred, ow, yo, &kernel)).collect()
        }
    } else {
        (0..oh).map(|yo| ssim_row_sum(&blurred, ow, yo, &kernel)).collect()
    };
    Ok(row_sums.iter().sum::<f64>() / (ow * oh) as f64)
}

/// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, 8-bit dynamic range.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    ssim_impl(a, b, cfg!(feature = "parallel"))
}

/// Single-threaded variant of [`ssim`].
pub fn ssim_seq(a: &Frame, b: &Frame) -> Result<f64> {
    ssim_impl(a, b, false)
}

/// Metrics for one matched ground-truth/reconstruction pair.
#[derive(Clone, Copy, Debug)]
pub struct PairMetrics {
    /// Ground-truth timestamp of the pair.
    pub t: f64,
    pub photometric_error: f64,
    pub ssim: f64,
}

/// Per-pair metrics plus their means and population standard deviations.
#[derive(Clone, Debug)]
pub struct EvaluationReport {
    pub pairs: Vec<PairMetrics>,
    pub photometric_mean: f64,
    pub photometric_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

impl EvaluationReport {
    fn from_pairs(pairs: Vec<PairMetrics>) -> EvaluationReport {
        let n = pairs.len() as f64;
        let pe_mean = pairs.iter().map(|p| p.photometric_error).sum::<f64>() / n;
        let ssim_mean = pairs.iter().map(|p| p.ssim).sum::<f64>() / n;
        let pe_var = pairs
            .iter()
            .map(|p| (p.photometric_error - pe_mean).powi(2))
            .sum::<f64>()
            / n;
        let ssim_var = pairs.iter().map(|p| (p.ssim - ssim_mean).powi(2)).sum::<f64>() / n;
        EvaluationReport {
            pairs,
            photometric_mean: pe_mean,
            photometric_std: pe_var.sqrt(),
            ssim_mean,
            ssim_std: ssim_var.sqrt(),
        }
    }

    /// CSV rows `t,photometric,ssim` plus a `#`-prefixed summary footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,photometric,ssim\n");
        for p in &self.pairs {
            out.push_str(&format!("{},{:.6},{:.6}\n", p.t, p.photometric_error, p.ssim));
        }
        out.push_str(&format!(
            "# photometric mean,{:.6},std,{:.6}\n",
            self.photometric_mean, self.photometric_std
        ));
        out.push_str(&format!(
            "# ssim mean,{:.6},std,{:.6}\n",
            self.ssim_mean, self.ssim_std
        ));
        out
    }
}

/// Compare a reconstructed frame sequence against ground truth, pairing by
/// closest timestamps.
pub fn evaluate(gt: &[Frame], recon: &[Frame]) -> Result<EvaluationReport> {
    let gt_times: Vec<f64> = gt.iter().map(|f| f.t).collect();
    let recon_times: Vec<f64> = recon.iter().map(|f| f.t).collect();
    let matched = match_timestamps(&gt_times, &recon_times)?;
    let compute = |&(gi, ri): &(usize, usize)| -> Result<PairMetrics> {
        Ok(PairMetrics {
            t: gt[gi].t,
            photometric_error: photometric_error(&gt[gi], &recon[ri])?,
            ssim: ssim(&gt[gi], &recon[ri])?,
        })
    };
    #[cfg(feature = "parallel")]
    let pairs: Vec<PairMetrics> = matched.par_iter().map(compute).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<PairMetrics> = matched.iter().map(compute).collect::<Result<_>>()?;
    Ok(EvaluationReport::from_pairs(pairs))
}

/// Drive a reconstruction session at `query_times`, export each state to
/// 8-bit, and evaluate against the ground-truth frames.
pub fn evaluate_session(
    gt: &[Frame],
    session: &mut Session,
    query_times: &[f64],
) -> Result<EvaluationReport> {
    let offset = session.log_offset();
    let recon: Vec<Frame> = query_times
        .iter()
        .map(|&t| from_log(&session.query(t)?, offset))
        .collect::<Result<_>>()?;
    evaluate(gt, &recon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_from(values: Vec<u8>, w: u32, h: u32, t: f64) -> Frame {
        Frame::new(t, w, h, values).unwrap()
    }

    fn noise_frame(w: u32, h: u32, seed: u64, t: f64) -> Frame {
        let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
        let pixels = (0..(w * h) as usize)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 56) as u8
            })
            .collect();
        frame_from(pixels, w, h, t)
    }

    #[test]
    fn match_picks_closest_and_breaks_ties_early() {
        let pairs = match_timestamps(&[1.0], &[0.9, 1.02]).unwrap();
        assert_eq!(pairs, vec![(0, 1)]);
        let pairs = match_timestamps(&[1.0], &[0.95, 1.05]).unwrap();
        assert_eq!(pairs, vec![(0, 0)]);
        let times = [0.1, 0.5, 0.9];
        let pairs = match_timestamps(&times, &times).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert!(match_timestamps(&[], &[1.0]).is_err());
        assert!(match_timestamps(&[1.0], &[]).is_err());
    }

    #[test]
    fn photometric_error_basics() {
        let a = frame_from(vec![0; 16], 4, 4, 0.0);
        let b = frame_from(vec![255; 16], 4, 4, 0.0);
        assert_eq!(photometric_error(&a, &a).unwrap(), 0.0);
        assert_eq!(photometric_error(&a, &b).unwrap(), 100.0);

        // Half the pixels differ by 51: mean |diff| = 25.5 -> 10%.
        let mut c = vec![100u8; 16];
        for slot in c.iter_mut().take(8) {
            *slot += 51;
        }
        let c = frame_from(c, 4, 4, 0.0);
        let d = frame_from(vec![100; 16], 4, 4, 0.0);
        assert_eq!(photometric_error(&c, &d).unwrap(), 10.0);

        let e = frame_from(vec![0; 8], 4, 2, 0.0);
        assert!(matches!(
            photometric_error(&a, &e),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let x = noise_frame(24, 18, 7, 0.0);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        // Constant 100 vs constant 150: variance terms vanish and every
        // window reduces to the luminance term
        //   (2*100*150 + C1) / (100^2 + 150^2 + C1) = 0.923092310530793.
        let a = frame_from(vec![100; 15 * 15], 15, 15, 0.0);
        let b = frame_from(vec![150; 15 * 15], 15, 15, 0.0);
        let s = ssim(&a, &b).unwrap();
        assert!((s - 0.923092310530793).abs() < 1e-9, "ssim = {s}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = noise_frame(10, 12, 1, 0.0);
        let b = noise_frame(10, 12, 2, 0.0);
        assert!(matches!(ssim(&a, &b), Err(Error::Image(_))));
    }

    // Straightforward direct-convolution SSIM, independent of the separable
    // implementation above; kept deliberately naive.
    fn ssim_reference(a: &Frame, b: &Frame) -> f64 {
        let (w, h) = (a.width as usize, a.height as usize);
        let mut kernel = [[0.0f64; SSIM_WINDOW]; SSIM_WINDOW];
        let mut total = 0.0;
        for (r, row) in kernel.iter_mut().enumerate() {
            for (c, slot) in row.iter_mut().enumerate() {
                let dy = r as f64 - 5.0;
                let dx = c as f64 - 5.0;
                *slot = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
                total += *slot;
            }
        }
        for row in kernel.iter_mut() {
            for slot in row.iter_mut() {
                *slot /= total;
            }
        }
        let c1 = (0.01f64 * 255.0).powi(2);
        let c2 = (0.03f64 * 255.0).powi(2);
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=(h - SSIM_WINDOW) {
            for x0 in 0..=(w - SSIM_WINDOW) {
                let (mut ma, mut mb) = (0.0, 0.0);
                let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let k = kernel[dy][dx];
                        let va = a.pixels[(y0 + dy) * w + x0 + dx] as f64;
                        let vb = b.pixels[(y0 + dy) * w + x0 + dx] as f64;
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        sum / count as f64
    }

    #[test]
    fn ssim_matches_direct_reference() {
        for seed in 0..8u64 {
            let a = noise_frame(16, 16, seed * 2 + 1, 0.0);
            let b = noise_frame(16, 16, seed * 2 + 2, 0.0);
            let fast = ssim(&a, &b).unwrap();
            let slow = ssim_reference(&a, &b);
            assert!(
                (fast - slow).abs() < 1e-6,
                "seed {seed}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn ssim_seq_matches_parallel() {
        let a = noise_frame(40, 32, 11, 0.0);
        let b = noise_frame(40, 32, 12, 0.0);
        assert_eq!(ssim(&a, &b).unwrap(), ssim_seq(&a, &b).unwrap());
    }

    #[test]
    fn evaluate_identical_sequences() {
        let frames: Vec<Frame> = (0..4)
            .map(|i| noise_frame(16, 16, i, i as f64 * 0.1))
            .collect();
        let report = evaluate(&frames, &frames).unwrap();
        assert_eq!(report.photometric_mean, 0.0);
        assert_eq!(report.photometric_std, 0.0);
        assert_eq!(report.ssim_mean, 1.0);
        assert_eq!(report.ssim_std, 0.0);
        assert_eq!(report.pairs.len(), 4);
    }

    #[test]
    fn evaluate_constant_offset() {
        let gt = vec![frame_from(vec![128; 16 * 16], 16, 16, 0.0)];
        let recon = vec![frame_from(vec![0; 16 * 16], 16, 16, 0.0)];
        let report = evaluate(&gt, &recon).unwrap();
        assert!((report.photometric_mean - 50.19607843137255).abs() < 1e-9);
    }

    #[test]
    fn csv_has_rows_and_footer() {
        let frames: Vec<Frame> = (0..2)
            .map(|i| noise_frame(16, 16, i, i as f64 * 0.5))
            .collect();
        let report = evaluate(&frames, &frames).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,photometric,ssim");
        assert_eq!(lines.len(), 1 + 2 + 2);
        assert!(lines[3].starts_with("# photometric mean,"));
        assert!(lines[4].starts_with("# ssim mean,"));
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric(sa in any::<u64>(), sb in any::<u64>()) {
            let a = noise_frame(16, 14, sa, 0.0);
            let b = noise_frame(16, 14, sb, 0.0);
            prop_assert_eq!(
                photometric_error(&a, &b).unwrap(),
                photometric_error(&b, &a).unwrap()
            );
            prop_assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        }

        #[test]
        fn photometric_error_invariant_under_joint_permutation(
            seed in any::<u64>(),
            swap in proptest::collection::vec((0usize..64, 0usize..64), 1..20),
        ) {
            let a = noise_frame(8, 8, seed, 0.0);
            let b = noise_frame(8, 8, seed.wrapping_add(1), 0.0);
            let base = photometric_error(&a, &b).unwrap();
            let mut pa = a.pixels.clone();
            let mut pb = b.pixels.clone();
            for &(i, j) in &swap {
                pa.swap(i, j);
                pb.swap(i, j);
            }
            let a2 = Frame::new(0.0, 8, 8, pa).unwrap();
            let b2 = Frame::new(0.0, 8, 8, pb).unwrap();
            prop_assert_eq!(photometric_error(&a2, &b2).unwrap(), base);
        }
    }
}
