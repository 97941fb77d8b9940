//! Boundary evaluation: NMS thinning, tolerance matching, threshold sweep,
//! ODS / OIS / AP and PR-curve CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{load_gt, read_manifest};
use crate::error::{Error, Result};
use crate::inference::{import_probmap, ProbMap};

/// Support is a subset of the input's; surviving values are unchanged.
pub type ThinnedMap = ProbMap;

pub const DEFAULT_TOLERANCE_FRAC: f64 = 0.0075;
pub const DEFAULT_THRESHOLDS: usize = 99;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    /// Match radius as a fraction of the image diagonal.
    pub tolerance_frac: f64,
    /// Number of thresholds `i / (n + 1)`, `i = 1..=n`.
    pub thresholds: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            tolerance_frac: DEFAULT_TOLERANCE_FRAC,
            thresholds: DEFAULT_THRESHOLDS,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance_frac > 0.0) || self.thresholds == 0 {
            return Err(Error::Config(format!(
                "tolerance_frac must be positive and thresholds at least 1 (got {}, {})",
                self.tolerance_frac, self.thresholds
            )));
        }
        Ok(())
    }

    pub fn threshold_values(&self) -> Vec<f64> {
        let n = self.thresholds;
        (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
    }

    pub fn tolerance(&self, h: usize, w: usize) -> f64 {
        self.tolerance_frac * ((h * h + w * w) as f64).sqrt()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with edge replication.
fn smooth(data: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * data[y * w + clampi(x as isize + j as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp[clampi(y as isize + j as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn bilinear_at(m: &ProbMap, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (m.height - 1) as f64);
    let x = x.clamp(0.0, (m.width - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(m.height - 1), (x0 + 1).min(m.width - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = m.at(y0, x0) + (m.at(y0, x1) - m.at(y0, x0)) * fx;
    let bot = m.at(y1, x0) + (m.at(y1, x1) - m.at(y1, x0)) * fx;
    top + (bot - top) * fy
}

/// Non-maximum suppression along the gradient of the σ = 1 smoothed map.
///
/// A pixel survives iff its value is at least both bilinear neighbors one
/// pixel away along the gradient direction; a zero gradient keeps it.
pub fn nms_thin(map: &ProbMap) -> ThinnedMap {
    let (h, w) = (map.height, map.width);
    let s = smooth(&map.data, h, w, 1.0);
    let at = |y: usize, x: usize| s[y * w + x];
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let v = map.at(y, x);
            if v <= 0.0 {
                continue;
            }
            let gx = (at(y, (x + 1).min(w - 1)) - at(y, x.saturating_sub(1))) / 2.0;
            let gy = (at((y + 1).min(h - 1), x) - at(y.saturating_sub(1), x)) / 2.0;
            let mag = gx.hypot(gy);
            let keep = if mag == 0.0 {
                true
            } else {
                let (ux, uy) = (gx / mag, gy / mag);
                let (fy, fx) = (y as f64, x as f64);
                v >= bilinear_at(map, fy + uy, fx + ux) && v >= bilinear_at(map, fy - uy, fx - ux)
            };
            if keep {
                out[y * w + x] = v;
            }
        }
    }
    ProbMap {
        height: h,
        width: w,
        data: out,
        tag: format!("nms({})", map.tag),
    }
}

/// Greedy one-to-one matching. `order` lists predicted pixel indices in
/// visiting order; each takes the nearest unmatched ground-truth pixel within
/// `tolerance` (ties by row-major order). Returns `(matched_pred, matched_gt)`
/// flags.
fn greedy_match(order: &[usize], gt: &[bool], h: usize, w: usize, tolerance: f64) -> (Vec<bool>, Vec<bool>) {
    let mut pred_hit = vec![false; h * w];
    let mut gt_used = vec![false; h * w];
    let r = tolerance.floor() as isize;
    let tol2 = tolerance * tolerance;
    for &i in order {
        let (py, px) = ((i / w) as isize, (i % w) as isize);
        let mut best: Option<(f64, usize)> = None;
        for dy in -r..=r {
            let y = py + dy;
            if y < 0 || y >= h as isize {
                continue;
            }
            for dx in -r..=r {
                let x = px + dx;
                if x < 0 || x >= w as isize {
                    continue;
                }
                let d2 = (dy * dy + dx * dx) as f64;
                let j = y as usize * w + x as usize;
                if d2 > tol2 || !gt[j] || gt_used[j] {
                    continue;
                }
                if best.is_none_or(|(bd, bj)| d2 < bd || (d2 == bd && j < bj)) {
                    best = Some((d2, j));
                }
            }
        }
        if let Some((_, j)) = best {
            gt_used[j] = true;
            pred_hit[i] = true;
        }
    }
    (pred_hit, gt_used)
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid("match_boundaries", format!("maps have {a} and {b} pixels")));
    }
    Ok(())
}

/// Greedy matching of two binary maps, predictions visited in row-major
/// order. Returns `(matched_pred, matched_gt)` counts.
pub fn match_boundaries(pred: &[bool], gt: &[bool], h: usize, w: usize, tolerance: f64) -> Result<(usize, usize)> {
    check_dims(pred.len(), h * w)?;
    check_dims(gt.len(), h * w)?;
    let order: Vec<usize> = (0..h * w).filter(|&i| pred[i]).collect();
    let (p, g) = greedy_match(&order, gt, h, w, tolerance);
    Ok((p.iter().filter(|&&b| b).count(), g.iter().filter(|&&b| b).count()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub matched_pred: u64,
    pub total_pred: u64,
    pub matched_gt: u64,
    pub total_gt: u64,
}

impl Counts {
    pub fn add(self, o: Counts) -> Counts {
        Counts {
            matched_pred: self.matched_pred + o.matched_pred,
            total_pred: self.total_pred + o.total_pred,
            matched_gt: self.matched_gt + o.matched_gt,
            total_gt: self.total_gt + o.total_gt,
        }
    }

    /// 1 when nothing is predicted.
    pub fn precision(&self) -> f64 {
        if self.total_pred == 0 {
            1.0
        } else {
            self.matched_pred as f64 / self.total_pred as f64
        }
    }

    /// 0 when there is no ground truth.
    pub fn recall(&self) -> f64 {
        if self.total_gt == 0 {
            0.0
        } else {
            self.matched_gt as f64 / self.total_gt as f64
        }
    }

    pub fn fmeasure(&self) -> f64 {
        f_measure(self.precision(), self.recall())
    }
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub thresholds: Vec<f64>,
    /// One entry per threshold.
    pub counts: Vec<Counts>,
}

/// Sweeps thresholds over one thinned map against one or more annotations.
///
/// Each annotation is matched separately. A prediction counts as matched when
/// any annotation claims it; ground-truth counts sum over annotations.
/// Predictions are visited in descending value, then row-major order.
pub fn evaluate_image(id: &str, thinned: &ThinnedMap, gts: &[Vec<bool>], cfg: &MatchConfig) -> Result<EvalRecord> {
    cfg.validate()?;
    let (h, w) = (thinned.height, thinned.width);
    if gts.is_empty() {
        return Err(Error::invalid("evaluate_image", format!("`{id}` has no ground truth")));
    }
    for g in gts {
        check_dims(g.len(), h * w)?;
    }
    let tol = cfg.tolerance(h, w);
    let mut by_strength: Vec<usize> = (0..h * w).filter(|&i| thinned.data[i] > 0.0).collect();
    by_strength.sort_by(|&a, &b| thinned.data[b].total_cmp(&thinned.data[a]).then(a.cmp(&b)));
    let total_gt: u64 = gts.iter().map(|g| g.iter().filter(|&&b| b).count() as u64).sum();
    let thresholds = cfg.threshold_values();
    let mut counts = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let order: Vec<usize> = by_strength.iter().copied().filter(|&i| thinned.data[i] >= t).collect();
        let mut hit = vec![false; h * w];
        let mut matched_gt = 0u64;
        for g in gts {
            let (p, gu) = greedy_match(&order, g, h, w, tol);
            for (a, b) in hit.iter_mut().zip(p) {
                *a |= b;
            }
            matched_gt += gu.iter().filter(|&&b| b).count() as u64;
        }
        counts.push(Counts {
            matched_pred: hit.iter().filter(|&&b| b).count() as u64,
            total_pred: order.len() as u64,
            matched_gt,
            total_gt,
        });
    }
    Ok(EvalRecord {
        id: id.to_string(),
        thresholds,
        counts,
    })
}

pub fn pr_sweep(thinned: &[ThinnedMap], gts: &[Vec<Vec<bool>>], ids: &[String], cfg: &MatchConfig) -> Result<Vec<EvalRecord>> {
    if thinned.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if thinned.len() != gts.len() || thinned.len() != ids.len() {
        return Err(Error::invalid("pr_sweep", "prediction, ground-truth and id lists differ in length"));
    }
    thinned
        .iter()
        .zip(gts)
        .zip(ids)
        .map(|((t, g), id)| evaluate_image(id, t, g, cfg))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub curve: Vec<CurvePoint>,
    pub ods: f64,
    pub ods_threshold: f64,
    pub ois: f64,
    pub ap: f64,
}

fn check_records(records: &[EvalRecord]) -> Result<&[f64]> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    if records.iter().any(|r| r.thresholds != first.thresholds || r.counts.len() != first.thresholds.len()) {
        return Err(Error::invalid("ods_ois_ap", "records use different thresholds"));
    }
    Ok(&first.thresholds)
}

/// Dataset-wide counts per threshold.
pub fn aggregate(records: &[EvalRecord]) -> Result<Vec<Counts>> {
    let n = check_records(records)?.len();
    Ok((0..n)
        .map(|k| records.iter().fold(Counts::default(), |acc, r| acc.add(r.counts[k])))
        .collect())
}

/// Index of the first maximum (lowest threshold wins ties).
fn argmax(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// F-measure of counts pooled with each image at its own threshold index.
pub fn f_at_choices(records: &[EvalRecord], choice: &[usize]) -> f64 {
    records
        .iter()
        .zip(choice)
        .fold(Counts::default(), |acc, (r, &k)| acc.add(r.counts[k]))
        .fmeasure()
}

/// Each image's best-F threshold index.
pub fn per_image_best(records: &[EvalRecord]) -> Vec<usize> {
    records
        .iter()
        .map(|r| argmax(r.counts.iter().map(Counts::fmeasure)))
        .collect()
}

/// Area under the interpolated PR curve.
///
/// Precision is replaced by its running maximum from high recall to low; the
/// curve is anchored at recall 0 with the highest interpolated precision and
/// integrated with the trapezoid rule over recall.
pub fn average_precision(points: &[(f64, f64)]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut run = 0.0f64;
    for p in pts.iter_mut() {
        run = run.max(p.1);
        p.1 = run;
    }
    pts.push((0.0, run));
    pts.reverse();
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

pub fn ods_ois_ap(records: &[EvalRecord]) -> Result<Summary> {
    let thresholds = check_records(records)?.to_vec();
    let agg = aggregate(records)?;
    let curve: Vec<CurvePoint> = thresholds
        .iter()
        .zip(&agg)
        .map(|(&t, c)| CurvePoint {
            threshold: t,
            precision: c.precision(),
            recall: c.recall(),
            fmeasure: c.fmeasure(),
        })
        .collect();
    let best = argmax(curve.iter().map(|p| p.fmeasure));
    let ois = f_at_choices(records, &per_image_best(records));
    let ap = average_precision(&curve.iter().map(|p| (p.recall, p.precision)).collect::<Vec<_>>());
    Ok(Summary {
        ods: curve[best].fmeasure,
        ods_threshold: curve[best].threshold,
        ois,
        ap,
        curve,
    })
}

pub const CSV_HEADER: &str = "threshold,precision,recall,fmeasure";
pub const CSV_FOOTER: &str = "ODS,OIS,AP";

pub fn format_pr_csv(s: &Summary) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &s.curve {
        let _ = writeln!(out, "{:?},{:?},{:?},{:?}", p.threshold, p.precision, p.recall, p.fmeasure);
    }
    let _ = writeln!(out, "{CSV_FOOTER}");
    let _ = writeln!(out, "{:?},{:?},{:?}", s.ods, s.ois, s.ap);
    out
}

pub fn emit_pr_csv(s: &Summary, path: &Path) -> Result<()> {
    fs::write(path, format_pr_csv(s)).map_err(|e| Error::io(path, e))
}

/// Parsed PR file: curve rows and the `(ODS, OIS, AP)` footer.
pub fn parse_pr_csv(text: &str, path: &Path) -> Result<(Vec<CurvePoint>, (f64, f64, f64))> {
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let nums = |line: &str, n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("bad row `{line}`")))?;
        if v.len() != n {
            return Err(bad(format!("expected {n} fields in `{line}`")));
        }
        Ok(v)
    };
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad("missing header".into()));
    }
    let mut curve = Vec::new();
    loop {
        match lines.next() {
            Some(CSV_FOOTER) => break,
            Some(line) => {
                let v = nums(line, 4)?;
                curve.push(CurvePoint {
                    threshold: v[0],
                    precision: v[1],
                    recall: v[2],
                    fmeasure: v[3],
                });
            }
            None => return Err(bad("missing summary footer".into())),
        }
    }
    let v = nums(lines.next().ok_or_else(|| bad("missing summary values".into()))?, 3)?;
    Ok((curve, (v[0], v[1], v[2])))
}

pub fn read_pr_csv(path: &Path) -> Result<(Vec<CurvePoint>, (f64, f64, f64))> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pr_csv(&text, path)
}

fn binary(t: &crate::tensor::Tensor<f32>) -> Vec<bool> {
    t.data().iter().map(|&v| v > 0.5).collect()
}

/// Evaluates `<pred_dir>/<id>.pgm` against the manifest's annotations.
pub fn evaluate_dir(pred_dir: &Path, manifest: &Path, cfg: &MatchConfig, thin: bool) -> Result<(Vec<EvalRecord>, Summary)> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut records = Vec::with_capacity(entries.len());
    for e in &entries {
        let map = import_probmap(&pred_dir.join(format!("{}.pgm", e.id)))?;
        let gts = e
            .gts
            .iter()
            .map(|p| load_gt(p).map(|t| binary(&t)))
            .collect::<Result<Vec<_>>>()?;
        let thinned = if thin { nms_thin(&map) } else { map };
        records.push(evaluate_image(&e.id, &thinned, &gts, cfg)?);
    }
    let summary = ods_ois_ap(&records)?;
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pm(h: usize, w: usize, data: Vec<f64>) -> ProbMap {
        ProbMap::new(h, w, data).unwrap()
    }

    #[test]
    fn isolated_peak_and_plateau_survive() {
        let mut d = vec![0.0; 81];
        d[40] = 0.7;
        let t = nms_thin(&pm(9, 9, d.clone()));
        assert_eq!(t.data, d);
        let c = pm(6, 5, vec![0.4; 30]);
        assert_eq!(nms_thin(&c).data, c.data);
    }

    #[test]
    fn vertical_ridge_thins_to_one_pixel() {
        let (h, w) = (20, 21);
        let mut d = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - 10.0;
                d[y * w + x] = (-dx * dx / 2.0).exp() * if dx.abs() <= 1.0 { 1.0 } else { 0.0 };
            }
        }
        let t = nms_thin(&pm(h, w, d.clone()));
        for y in 0..h {
            let row = &t.data[y * w..(y + 1) * w];
            assert_eq!(row.iter().filter(|&&v| v > 0.0).count(), 1, "row {y}");
            assert_eq!(row[10], d[y * w + 10]);
        }
    }

    #[test]
    fn thinned_support_is_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d: Vec<f64> = (0..256).map(|_| if rng.random::<f64>() < 0.3 { rng.random() } else { 0.0 }).collect();
        let m = pm(16, 16, d);
        let t = nms_thin(&m);
        for (a, b) in m.data.iter().zip(&t.data) {
            assert!(*b == 0.0 || b == a);
        }
    }

    #[test]
    fn matching_basics() {
        let a = vec![true, false, true, false, true, false, false, false, true];
        assert_eq!(match_boundaries(&a, &a, 3, 3, 1.0).unwrap(), (4, 4));
        let p = vec![true, false, false, false, false, false, false, false, false];
        let g = vec![false, false, false, false, false, false, false, false, true];
        assert_eq!(match_boundaries(&p, &g, 3, 3, 2.0).unwrap(), (0, 0));
        // three predictions around two gt pixels
        let p = vec![true, true, true, false];
        let g = vec![false, true, false, true];
        let (mp, mg) = match_boundaries(&p, &g, 2, 2, 1.5).unwrap();
        assert!(mp <= 2 && mp == mg);
        assert!(match_boundaries(&p, &g[..3], 2, 2, 1.0).is_err());
    }

    #[test]
    fn zero_tolerance_is_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<bool> = (0..100).map(|_| rng.random()).collect();
        let g: Vec<bool> = (0..100).map(|_| rng.random()).collect();
        let inter = p.iter().zip(&g).filter(|(a, b)| **a && **b).count();
        assert_eq!(match_boundaries(&p, &g, 10, 10, 1e-9).unwrap(), (inter, inter));
    }

    #[test]
    fn empty_prediction_convention_and_f() {
        let c = Counts {
            matched_pred: 0,
            total_pred: 0,
            matched_gt: 0,
            total_gt: 5,
        };
        assert_eq!((c.precision(), c.recall()), (1.0, 0.0));
        assert_eq!(f_measure(0.5, 0.5), 0.5);
        assert_eq!(Counts::default().fmeasure(), 0.0);
    }

    fn random_records(seed: u64, n: usize) -> Vec<EvalRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = MatchConfig::default();
        (0..n)
            .map(|i| {
                let d: Vec<f64> = (0..144).map(|_| if rng.random::<f64>() < 0.4 { rng.random() } else { 0.0 }).collect();
                let g: Vec<bool> = (0..144).map(|_| rng.random::<f64>() < 0.2).collect();
                evaluate_image(&format!("{i}"), &pm(12, 12, d), &[g], &cfg).unwrap()
            })
            .collect()
    }

    #[test]
    fn recall_monotone_and_counts_bounded() {
        for r in random_records(1, 4) {
            for w in r.counts.windows(2) {
                assert!(w[0].recall() >= w[1].recall());
            }
            for c in &r.counts {
                assert!(c.matched_pred <= c.total_pred && c.matched_gt <= c.total_gt);
            }
        }
    }

    #[test]
    fn single_image_ois_equals_ods() {
        let s = ods_ois_ap(&random_records(2, 1)).unwrap();
        assert_eq!(s.ods, s.ois);
    }

    #[test]
    fn forcing_ods_threshold_reproduces_ods() {
        let recs = random_records(3, 5);
        let s = ods_ois_ap(&recs).unwrap();
        let k = s.curve.iter().position(|p| p.threshold == s.ods_threshold).unwrap();
        assert_eq!(f_at_choices(&recs, &vec![k; recs.len()]), s.ods);
        assert!(s.ois >= s.ods - 1e-12 || s.ois <= 1.0);
    }

    #[test]
    fn ap_bounds() {
        let recs = random_records(4, 3);
        let s = ods_ois_ap(&recs).unwrap();
        assert!(s.ap <= 1.0 && s.ap >= 0.0);
        let lower = s.curve.iter().map(|p| p.precision * p.recall).fold(0.0, f64::max);
        assert!(s.ap >= lower - 1e-12);
        assert!((average_precision(&[(1.0, 1.0)]) - 1.0).abs() < 1e-15);
        assert!((average_precision(&[(0.5, 0.5), (1.0, 0.25)]) - (0.25 + 0.1875)).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let s = ods_ois_ap(&random_records(5, 2)).unwrap();
        let text = format_pr_csv(&s);
        let (curve, (ods, ois, ap)) = parse_pr_csv(&text, Path::new("x.csv")).unwrap();
        assert_eq!(curve, s.curve);
        assert_eq!((ods, ois, ap), (s.ods, s.ois, s.ap));
        assert!(text.lines().nth_back(1).unwrap() == CSV_FOOTER);
    }

    #[test]
    fn perfect_single_threshold_row() {
        let gt = vec![true, false, false, true];
        let r = evaluate_image(
            "p",
            &pm(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            &[gt],
            &MatchConfig {
                thresholds: 1,
                ..MatchConfig::default()
            },
        )
        .unwrap();
        let s = ods_ois_ap(&[r]).unwrap();
        assert_eq!(format_pr_csv(&s).lines().nth(1).unwrap(), "0.5,1.0,1.0,1.0");
    }
}
