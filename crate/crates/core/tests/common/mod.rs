//! Independent oracles shared by the property suites and the acceptance
//! harness. Each check returns whether it held and a one-line summary.

#![allow(dead_code)]

use ctxspot_core::config::{MetricConfig, SlicingParams};
use ctxspot_core::domain::{Action, Spot};
use ctxspot_core::eval::{average_map, average_precision, EvalVideo};
use ctxspot_core::config::ApInterpolation;
use ctxspot_core::model::gradcheck::{check_model_gradients, check_point_gradients};
use ctxspot_core::seg_loss::{loss_point, loss_point_clamped, Margins};
use ctxspot_core::spot_loss::{iterative_match, spotting_loss, ActionMatrix, PredictionMatrix};
use ctxspot_core::tse::tse_frame;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Outcome { passed, detail }
    }
}

pub const GOAL: SlicingParams = SlicingParams { k1: -40, k2: -20, k3: 120, k4: 180 };

// -ln(1/2), -ln(3/4), -ln(1/2) + ln(9/10), evaluated at 30 digits.
#[allow(clippy::approx_constant)]
pub const LN2: f64 = 0.693_147_180_559_945_309_417_232_121_458;
pub const NEG_LN_3_4: f64 = 0.287_682_072_451_780_927_439_219_005_994;
pub const LN2_PLUS_LN_0_9: f64 = 0.587_786_664_902_119_008_189_731_140_619;

pub fn closed_form_loss_values() -> Outcome {
    let m = Margins::new(0.9, 0.1);
    let cases: [(&str, f64, f64); 8] = [
        ("p=0.37,s=-10", loss_point(0.37, -10, &GOAL).unwrap(), 0.0),
        ("p=1,s=0", loss_point(1.0, 0, &GOAL).unwrap(), 0.0),
        ("p=0.5,s=-50", loss_point(0.5, -50, &GOAL).unwrap(), LN2),
        ("p=0.5,s=-30", loss_point(0.5, -30, &GOAL).unwrap(), NEG_LN_3_4),
        ("p=0.5,s=60", loss_point(0.5, 60, &GOAL).unwrap(), NEG_LN_3_4),
        ("clamped p=0.9,s=0", loss_point_clamped(0.9, 0, &GOAL, m).unwrap(), 0.0),
        ("clamped p=0.05,s=-40", loss_point_clamped(0.05, -40, &GOAL, m).unwrap(), 0.0),
        ("clamped p=0.5,s=-40", loss_point_clamped(0.5, -40, &GOAL, m).unwrap(), LN2_PLUS_LN_0_9),
    ];
    let (worst, at) = cases
        .iter()
        .map(|&(name, got, want)| ((got - want).abs(), name))
        .fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
    Outcome::new(worst <= 1e-12, format!("8 cases, max abs err {worst:.1e} ({at}), tol 1e-12"))
}

/// The six pieces as closed forms in a real shift, independent of the library.
pub fn piece_formulas(p: f64, s: f64, k: &SlicingParams) -> [f64; 6] {
    let (k1, k2, k3, k4) = (k.k1 as f64, k.k2 as f64, k.k3 as f64, k.k4 as f64);
    [
        -(1.0 - p).ln(),
        -(1.0 - (k2 - s) / (k2 - k1) * p).ln(),
        0.0,
        -(s / k3 + (k3 - s) / k3 * p).ln(),
        -(1.0 - (s - k3) / (k4 - k3) * p).ln(),
        -(1.0 - p).ln(),
    ]
}

pub fn random_slicing<R: Rng>(rng: &mut R) -> SlicingParams {
    let k1 = rng.gen_range(-120..=-2);
    let k2 = rng.gen_range(k1 + 1..=-1);
    let k3 = rng.gen_range(1..=150);
    let k4 = rng.gen_range(k3 + 1..=200);
    SlicingParams { k1, k2, k3, k4 }
}

/// At each of K1..K4 the library value and both adjacent closed-form pieces agree.
pub fn piece_boundary_continuity(tuples: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..=20).map(|i| 0.01 + 0.049 * i as f64).collect();
    let mut worst = 0.0f64;
    let mut checks = 0;
    for _ in 0..tuples {
        let k = random_slicing(&mut rng);
        for &p in &grid {
            // (boundary, piece on the left, piece on the right)
            for (s, left, right) in [(k.k1, 0, 1), (k.k2, 1, 2), (k.k3, 3, 4), (k.k4, 4, 5)] {
                let f = piece_formulas(p, s as f64, &k);
                let lib = loss_point(p, s, &k).unwrap();
                worst = worst.max((f[left] - f[right]).abs()).max((lib - f[left]).abs());
                checks += 1;
            }
        }
    }
    Outcome::new(worst <= 1e-12, format!("{checks} boundary checks, max gap {worst:.1e}, tol 1e-12"))
}

pub fn gradient_suites() -> Outcome {
    let point = check_point_gradients(10_000, 42).unwrap();
    let model = check_model_gradients(&[2, 3, 4, 5]).unwrap();
    Outcome::new(
        point.passed && model.passed,
        format!(
            "grad_point worst {:.1e} over {} (tol 1e-6); model worst {:.1e} over {} params (tol 1e-3)",
            point.worst_rel_err, point.checked, model.worst_rel_err, model.checked
        ),
    )
}

fn random_predictions<R: Rng>(rng: &mut R, n: usize, c: usize) -> PredictionMatrix {
    let mut rows = Array2::zeros((n, 2 + c));
    for mut row in rows.outer_iter_mut() {
        row[0] = rng.gen_range(0.0..=1.0);
        row[1] = rng.gen_range(0.0..=1.0);
        let w: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        for j in 0..c {
            row[2 + j] = w[j] / total;
        }
    }
    PredictionMatrix::new(rows).unwrap()
}

fn random_truth<R: Rng>(rng: &mut R, n: usize, c: usize) -> ActionMatrix {
    let mut locs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    locs.sort_by(f64::total_cmp);
    let mut rows = Array2::zeros((n, 2 + c));
    for (i, mut row) in rows.outer_iter_mut().enumerate() {
        row[0] = 1.0;
        row[1] = locs[i];
        row[2 + rng.gen_range(0..c)] = 1.0;
    }
    ActionMatrix { rows }
}

/// Indices of mutually nearest (gt, pred) pairs, with lower-index tie breaks.
pub fn mutual_nearest(gt: &[f64], pred: &[f64]) -> Vec<(usize, usize)> {
    let argmin = |x: f64, ys: &[f64]| {
        let mut best = 0;
        for (i, &y) in ys.iter().enumerate() {
            if (x - y).abs() < (x - ys[best]).abs() {
                best = i;
            }
        }
        best
    };
    (0..gt.len())
        .filter_map(|g| {
            let p = argmin(gt[g], pred);
            (argmin(pred[p], gt) == g).then_some((g, p))
        })
        .collect()
}

pub fn matching_properties(instances: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut max_iter_ratio = 0.0f64;
    let mut worst_perm = 0.0f64;
    let alpha = [1.0, 5.0, 1.0, 1.0, 1.0];
    for i in 0..instances {
        let c = 3;
        let n_pred = rng.gen_range(1..=8);
        let n_gt = rng.gen_range(0..=n_pred);
        let y = random_truth(&mut rng, n_gt, c);
        let yhat = random_predictions(&mut rng, n_pred, c);
        let (gl, pl) = (y.locations(), yhat.locations());
        let m = iterative_match(&gl, &pl).unwrap();
        if n_gt > 0 {
            max_iter_ratio = max_iter_ratio.max(m.iterations as f64 / n_gt as f64);
        }
        if m.iterations > n_gt {
            failures.push(format!("#{i}: {} iterations for {n_gt} ground truths", m.iterations));
        }
        let mut used: Vec<usize> = m.pairs.iter().map(|&(_, p)| p).collect();
        let gts: Vec<usize> = m.pairs.iter().map(|&(g, _)| g).collect();
        used.extend(&m.unmatched_pred_rows);
        used.sort_unstable();
        if gts != (0..n_gt).collect::<Vec<_>>() || used != (0..n_pred).collect::<Vec<_>>() {
            failures.push(format!("#{i}: not a bijection onto the ground truth"));
        }
        for pair in mutual_nearest(&gl, &pl) {
            if !m.pairs.contains(&pair) {
                failures.push(format!("#{i}: first-round pair {pair:?} lost"));
            }
        }
        let base = spotting_loss(&y, &yhat, &m, &alpha, 0.5).unwrap();
        let mut perm: Vec<usize> = (0..n_pred).collect();
        perm.shuffle(&mut rng);
        let mut rows = yhat.rows.clone();
        for (dst, &src) in perm.iter().enumerate() {
            rows.row_mut(dst).assign(&yhat.rows.row(src));
        }
        let permuted = PredictionMatrix::new(rows).unwrap();
        let pm = iterative_match(&gl, &permuted.locations()).unwrap();
        let other = spotting_loss(&y, &permuted, &pm, &alpha, 0.5).unwrap();
        let gap = (base - other).abs() / base.abs().max(1.0);
        worst_perm = worst_perm.max(gap);
        if gap > 1e-12 {
            failures.push(format!("#{i}: permuted loss {other} vs {base}"));
        }
    }
    let detail = format!(
        "{instances} instances, max iterations/N_GT {max_iter_ratio:.2}, max permutation gap {worst_perm:.1e}, {} violations{}",
        failures.len(),
        failures.first().map_or(String::new(), |f| format!(" (first: {f})"))
    );
    Outcome::new(failures.is_empty(), detail)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact non-negative fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Ratio { num: num / g, den: den / g }
    }

    fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    fn mul(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.num, self.den * o.den)
    }

    fn sub(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den - o.num * self.den, self.den * o.den)
    }

    fn gt(self, o: Ratio) -> bool {
        self.num * o.den > o.num * self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Area under the interpolated precision-recall curve built point by point:
/// the sum over recall increments of the best precision at that recall or
/// beyond.
pub fn brute_force_ap(labels: &[bool], n_gt: usize) -> Ratio {
    if n_gt == 0 {
        return Ratio::new(0, 1);
    }
    let mut points = Vec::new();
    let mut tp = 0u128;
    for (k, &hit) in labels.iter().enumerate() {
        tp += hit as u128;
        points.push((Ratio::new(tp, (k + 1) as u128), Ratio::new(tp, n_gt as u128)));
    }
    let mut area = Ratio::new(0, 1);
    let mut prev_recall = Ratio::new(0, 1);
    for j in 0..points.len() {
        let recall = points[j].1;
        if !recall.gt(prev_recall) {
            continue;
        }
        let best = points[j..]
            .iter()
            .map(|p| p.0)
            .fold(Ratio::new(0, 1), |a, b| if b.gt(a) { b } else { a });
        area = area.add(recall.sub(prev_recall).mul(best));
        prev_recall = recall;
    }
    area
}

/// Greedy tolerance assignment written independently of the library.
pub fn oracle_labels(spots: &[Spot], gts: &[Action], half_width_frames: f64) -> Vec<(usize, f64, bool)> {
    let mut order: Vec<usize> = (0..spots.len()).collect();
    order.sort_by(|&a, &b| spots[b].confidence.total_cmp(&spots[a].confidence));
    let mut claimed = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let s = &spots[i];
            let mut best: Option<(usize, f64)> = None;
            for (g, a) in gts.iter().enumerate() {
                let d = (a.frame as f64 - s.frame as f64).abs();
                if claimed[g] || a.class != s.class || d > half_width_frames {
                    continue;
                }
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((g, d));
                }
            }
            if let Some((g, _)) = best {
                claimed[g] = true;
            }
            (s.class, s.confidence, best.is_some())
        })
        .collect()
}

/// Average-mAP from the oracles: exact per-class AP, mean over defined
/// classes, mean over tolerances.
pub fn oracle_average_map(videos: &[EvalVideo], num_classes: usize, fps: f64, cfg: &MetricConfig) -> (f64, Vec<Vec<Option<f64>>>) {
    let mut per_delta = Vec::new();
    for &delta in &cfg.tolerances {
        let half = cfg.window.half_width(delta) * fps;
        let mut pooled: Vec<Vec<(f64, bool)>> = vec![Vec::new(); num_classes];
        let mut n_gt = vec![0usize; num_classes];
        for v in videos {
            for (c, conf, hit) in oracle_labels(&v.spots, &v.actions, half) {
                pooled[c].push((conf, hit));
            }
            for a in &v.actions {
                n_gt[a.class] += 1;
            }
        }
        let aps: Vec<Option<f64>> = (0..num_classes)
            .map(|c| {
                let mut ranked = pooled[c].clone();
                ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
                let labels: Vec<bool> = ranked.iter().map(|r| r.1).collect();
                if n_gt[c] == 0 && labels.is_empty() {
                    None
                } else {
                    Some(brute_force_ap(&labels, n_gt[c]).to_f64())
                }
            })
            .collect();
        per_delta.push(aps);
    }
    let maps: Vec<f64> = per_delta
        .iter()
        .map(|aps| {
            let defined: Vec<f64> = aps.iter().flatten().copied().collect();
            if defined.is_empty() {
                0.0
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            }
        })
        .collect();
    (maps.iter().sum::<f64>() / maps.len() as f64, per_delta)
}

/// Up to `max_gt` actions on distinct frames and `max_pred` spots with
/// distinct confidences, over `num_classes` classes.
pub fn random_eval_video<R: Rng>(rng: &mut R, id: &str, num_classes: usize, max_gt: usize, max_pred: usize) -> EvalVideo {
    let num_frames = 400;
    let mut frames: Vec<usize> = (0..num_frames).collect();
    frames.shuffle(rng);
    let n_gt = rng.gen_range(0..=max_gt);
    let mut actions: Vec<Action> = frames[..n_gt].iter().map(|&f| Action::new(rng.gen_range(0..num_classes), f)).collect();
    actions.sort_by_key(|a| (a.frame, a.class));
    let n_pred = rng.gen_range(0..=max_pred);
    let spots = (0..n_pred)
        .map(|_| {
            // mostly near a ground truth so that every tolerance matters
            let frame = match actions.is_empty() || rng.gen_bool(0.3) {
                true => rng.gen_range(0..num_frames),
                false => {
                    let a = actions[rng.gen_range(0..actions.len())];
                    let off: i64 = rng.gen_range(-130..=130);
                    (a.frame as i64 + off).clamp(0, num_frames as i64 - 1) as usize
                }
            };
            let class = if rng.gen_bool(0.8) && !actions.is_empty() {
                actions[rng.gen_range(0..actions.len())].class
            } else {
                rng.gen_range(0..num_classes)
            };
            Spot::new(class, frame, rng.gen_range(0.0..1.0))
        })
        .collect();
    EvalVideo {
        video_id: id.to_string(),
        num_frames,
        spots,
        actions,
    }
}

pub fn shifted(videos: &[EvalVideo], by: usize) -> Vec<EvalVideo> {
    videos
        .iter()
        .map(|v| EvalVideo {
            video_id: v.video_id.clone(),
            num_frames: v.num_frames + by,
            spots: v.spots.iter().map(|s| Spot::new(s.class, s.frame + by, s.confidence)).collect(),
            actions: v.actions.iter().map(|a| Action::new(a.class, a.frame + by)).collect(),
        })
        .collect()
}

pub fn metric_oracle(instances: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MetricConfig::default();
    let fps = 2.0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..instances {
        let c = rng.gen_range(1..=3);
        let n_videos = rng.gen_range(1..=2);
        let videos: Vec<EvalVideo> =
            (0..n_videos).map(|j| random_eval_video(&mut rng, &format!("v{j}"), c, 6, 10)).collect();
        let got = average_map(&videos, c, fps, &cfg);
        let (want, want_aps) = oracle_average_map(&videos, c, fps, &cfg);
        for (d, aps) in got.per_delta.iter().zip(&want_aps) {
            for (a, b) in d.per_class_ap.iter().zip(aps) {
                let gap = match (a, b) {
                    (Some(a), Some(b)) => (a - b).abs(),
                    (None, None) => 0.0,
                    _ => f64::INFINITY,
                };
                worst = worst.max(gap);
            }
        }
        worst = worst.max((got.average_map - want).abs());
        if worst > 1e-12 && failures.is_empty() {
            failures.push(format!("#{i}: Average-mAP {} vs oracle {want}", got.average_map));
        }
        let moved = average_map(&shifted(&videos, 1000), c, fps, &cfg);
        if moved != got {
            failures.push(format!("#{i}: translation changed the result"));
        }
        // perfect, confident predictions
        let perfect: Vec<EvalVideo> = videos
            .iter()
            .map(|v| EvalVideo {
                spots: v.actions.iter().map(|a| Spot::new(a.class, a.frame, 1.0)).collect(),
                ..v.clone()
            })
            .collect();
        if perfect.iter().any(|v| !v.actions.is_empty()) {
            let p = average_map(&perfect, c, fps, &cfg).average_map;
            if p != 1.0 {
                failures.push(format!("#{i}: perfect predictions scored {p}"));
            }
        }
    }
    let single = [average_precision(&[false, true], 1, ApInterpolation::AllPoint)];
    if single[0] != brute_force_ap(&[false, true], 1).to_f64() {
        failures.push("FP-then-TP case".into());
    }
    let detail = format!(
        "{instances} instances, max |AP - oracle| {worst:.1e} (tol 1e-12), perfect = 1.0 exactly, translation exact; {} violations{}",
        failures.len(),
        failures.first().map_or(String::new(), |f| format!(" (first: {f})"))
    );
    Outcome::new(failures.is_empty(), detail)
}

/// Clamped loss of both candidate shifts at every constructed tie of the
/// comparator, and the selected shift.
pub fn tse_tie_cases(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Margins::new(0.9, 0.1);
    let mut ties = 0;
    let mut worst = 0.0f64;
    let mut wrong_choice = 0;
    let mut tuples = 0;
    while ties < 1000 && tuples < 100_000 {
        tuples += 1;
        let k = random_slicing(&mut rng);
        for sp in k.k3..k.k4 {
            for sf in k.k1 + 1..=k.k2 {
                if (sp - k.k3) * (k.k2 - k.k1) != (k.k2 - sf) * (k.k4 - k.k3) {
                    continue;
                }
                ties += 1;
                let frame = 1000;
                if tse_frame(frame, Some(frame - sp), Some(frame - sf), &k).unwrap() != sf {
                    wrong_choice += 1;
                }
                for i in 0..=20 {
                    let p = i as f64 / 20.0;
                    let a = loss_point_clamped(p, sp, &k, m).unwrap();
                    let b = loss_point_clamped(p, sf, &k, m).unwrap();
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    let ok = ties >= 100 && worst <= 1e-12 && wrong_choice == 0;
    Outcome::new(
        ok,
        format!("{ties} tie cases, max loss gap {worst:.1e} (tol 1e-12), {wrong_choice} ties not resolved to s_f"),
    )
}

/// Largest change of the clamped loss between two adjacent integer shifts.
pub fn single_frame_bound(p: f64, k: &SlicingParams, m: Margins) -> f64 {
    (k.k1 - 2..=k.k4 + 2)
        .filter(|&s| s != -1)
        .map(|s| (loss_point_clamped(p, s + 1, k, m).unwrap() - loss_point_clamped(p, s, k, m).unwrap()).abs())
        .fold(0.0, f64::max)
}

pub fn tse_continuity(layouts: usize, seed: u64) -> Outcome {
    use ctxspot_core::{SpottingConfig, VideoAnnotations};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut off_action_jumps = Vec::new();
    let mut action_jumps = 0;
    for l in 0..layouts {
        let mut cfg = SpottingConfig::default();
        let c = cfg.num_classes;
        cfg.slicing = (0..c).map(|_| random_slicing(&mut rng)).collect();
        let m = Margins::from_config(&cfg);
        let n = 600;
        let mut frames: Vec<usize> = (0..n).collect();
        frames.shuffle(&mut rng);
        let count = rng.gen_range(0..=12);
        let actions: Vec<Action> = frames[..count].iter().map(|&f| Action::new(rng.gen_range(0..c), f)).collect();
        let ann = VideoAnnotations::new(format!("l{l}"), 2.0, n, actions, None).unwrap();
        let map = ctxspot_core::tse::tse_video(&ann, &cfg).unwrap();
        for class in 0..c {
            let k = cfg.slicing[class];
            let is_action: Vec<bool> = {
                let mut v = vec![false; n];
                for f in ann.class_frames(class) {
                    v[f] = true;
                }
                v
            };
            for p in [0.05, 0.3, 0.5, 0.7, 0.95] {
                let bound = single_frame_bound(p, &k, m) * (1.0 + 1e-9) + 1e-12;
                let loss: Vec<f64> =
                    (0..n).map(|i| loss_point_clamped(p, map.values[[i, class]], &k, m).unwrap()).collect();
                for i in 0..n - 1 {
                    if (loss[i + 1] - loss[i]).abs() > bound {
                        if is_action[i + 1] {
                            action_jumps += 1;
                        } else {
                            off_action_jumps.push(format!("layout {l} class {class} p {p} frame {i}->{}", i + 1));
                        }
                    }
                }
            }
        }
    }
    Outcome::new(
        off_action_jumps.is_empty(),
        format!(
            "{layouts} layouts, {action_jumps} jumps at action frames, {} elsewhere{}",
            off_action_jumps.len(),
            off_action_jumps.first().map_or(String::new(), |f| format!(" (first: {f})"))
        ),
    )
}
