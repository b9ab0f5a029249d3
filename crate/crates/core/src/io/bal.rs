//! "Bundle Adjustment in the Large" text problems.
//!
//! Layout: a header `n_cams n_pts n_obs`, then `cam pt u v` per observation,
//! then 9 values per camera (Rodrigues rotation, translation, `f`, `k1`,
//! `k2`), then 3 coordinates per point. BAL cameras look down `-z` and
//! measure pixels from the image centre with `y` up; both are converted to the
//! crate's `+z`, `y`-down convention on load. Radial terms are kept on the
//! intrinsics but not used by the projection.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use super::{parse_finite, parse_index, tokens, ParseError, Problem, WriteError};
use crate::geometry::{Intrinsics, Pose};
use crate::graph::{BAGraph, CameraId, CameraVertex, Observation, PointId, PointVertex};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BalOptions {
    /// Image width and height in pixels. When absent, the smallest centred
    /// image containing every measurement is used.
    pub image_size: Option<(f64, f64)>,
}

fn flip() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
}

fn flip_vec(v: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, -v.y, -v.z)
}

pub fn parse_bal(text: &str) -> Result<Problem, ParseError> {
    parse_bal_with(text, BalOptions::default())
}

pub fn parse_bal_bytes(bytes: &[u8]) -> Result<Problem, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::Utf8)?;
    parse_bal(text)
}

pub fn parse_bal_with(text: &str, options: BalOptions) -> Result<Problem, ParseError> {
    let toks: Vec<(usize, &str)> = tokens(text).collect();
    if toks.len() < 3 {
        return Err(ParseError::MalformedHeader("expected `n_cams n_pts n_obs`".into()));
    }
    let mut header = [0usize; 3];
    for (h, (_, t)) in header.iter_mut().zip(&toks) {
        *h = t
            .parse::<u32>()
            .map_err(|_| ParseError::MalformedHeader(format!("bad count {t:?}")))? as usize;
    }
    let [n_cams, n_pts, n_obs] = header;
    let expected = n_obs
        .checked_mul(4)
        .and_then(|a| n_cams.checked_mul(9).and_then(|b| a.checked_add(b)))
        .and_then(|a| n_pts.checked_mul(3).and_then(|b| a.checked_add(b)))
        .ok_or_else(|| ParseError::MalformedHeader("counts overflow".into()))?;
    let body = &toks[3..];
    if body.len() != expected {
        return Err(ParseError::CountMismatch {
            expected,
            got: body.len(),
        });
    }

    let (obs_toks, params) = body.split_at(4 * n_obs);
    let mut raw_obs = Vec::with_capacity(n_obs);
    for chunk in obs_toks.chunks_exact(4) {
        let c = parse_index(chunk[0].0, chunk[0].1)?;
        let p = parse_index(chunk[1].0, chunk[1].1)?;
        let u = parse_finite(chunk[2].0, chunk[2].1)?;
        let v = parse_finite(chunk[3].0, chunk[3].1)?;
        raw_obs.push((c, p, u, v));
    }
    let mut values = params.iter().map(|(line, t)| parse_finite(*line, t));
    let mut number = || values.next().expect("length checked");

    let mut cams = Vec::with_capacity(n_cams);
    for _ in 0..n_cams {
        let mut v = [0.0; 9];
        for x in v.iter_mut() {
            *x = number()?;
        }
        cams.push(v);
    }
    let mut pts = Vec::with_capacity(n_pts);
    for _ in 0..n_pts {
        pts.push(Vector3::new(number()?, number()?, number()?));
    }

    let (width, height) = options.image_size.unwrap_or_else(|| {
        let (mu, mv) = raw_obs
            .iter()
            .fold((0.0f64, 0.0f64), |(a, b), o| (a.max(o.2.abs()), b.max(o.3.abs())));
        (2.0 * (mu + 1.0).ceil(), 2.0 * (mv + 1.0).ceil())
    });
    let (cx, cy) = (width / 2.0, height / 2.0);

    let mut intrinsics: Vec<Intrinsics> = Vec::new();
    let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
    let cameras = cams
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let key = [v[6].to_bits(), v[7].to_bits(), v[8].to_bits()];
            let kref = *seen.entry(key).or_insert_with(|| {
                let mut k = Intrinsics::new(v[6], v[6], cx, cy, width, height);
                k.radial = [v[7], v[8]];
                intrinsics.push(k);
                intrinsics.len() - 1
            });
            let r_bal = UnitQuaternion::from_scaled_axis(Vector3::new(v[0], v[1], v[2]));
            let pose = Pose::new(flip() * r_bal, flip_vec(Vector3::new(v[3], v[4], v[5])));
            CameraVertex::new(i as u32, pose, kref)
        })
        .collect();
    let points = pts
        .iter()
        .enumerate()
        .map(|(i, x)| PointVertex::new(i as u32, *x))
        .collect();
    let observations = raw_obs
        .iter()
        .map(|&(c, p, u, v)| Observation::new(CameraId(c), PointId(p), Vector2::new(u + cx, cy - v)))
        .collect();
    let graph = BAGraph::build(cameras, points, observations, intrinsics)?;
    Ok(Problem::new(graph))
}

/// Serialize a graph in BAL layout. Camera and point ids are replaced by
/// their slots; fixed flags and covariances are not representable and are
/// dropped. Intrinsics must have `fx == fy` and a centred principal point.
pub fn write_bal(graph: &BAGraph) -> Result<String, WriteError> {
    for (i, k) in graph.intrinsics().iter().enumerate() {
        if k.fx != k.fy || k.cx != k.width / 2.0 || k.cy != k.height / 2.0 {
            return Err(WriteError::Unrepresentable(i));
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        graph.cameras().len(),
        graph.points().len(),
        graph.observations().len()
    );
    for (i, o) in graph.observations().iter().enumerate() {
        let (c, p) = graph.observation_slots(i);
        let k = graph.camera_intrinsics(c);
        let _ = writeln!(out, "{c} {p} {} {}", o.measurement.x - k.cx, k.cy - o.measurement.y);
    }
    for (slot, cam) in graph.cameras().iter().enumerate() {
        let k = graph.camera_intrinsics(slot);
        let aa = (flip() * cam.pose.rotation).scaled_axis();
        let t = flip_vec(cam.pose.translation);
        for v in [aa.x, aa.y, aa.z, t.x, t.y, t.z, k.fx, k.radial[0], k.radial[1]] {
            let _ = writeln!(out, "{v}");
        }
    }
    for p in graph.points() {
        let x = p.position;
        let _ = writeln!(out, "{}\n{}\n{}", x.x, x.y, x.z);
    }
    Ok(out)
}
