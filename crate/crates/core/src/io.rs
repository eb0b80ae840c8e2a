//! File formats: JSON-lines traces and ground truth, estimate CSVs, and the
//! command-line pose syntax.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Pose2D;
use crate::motion_events::ImuSample;
use crate::pipeline::StepOutput;
use crate::simulator::TruthSample;

fn parse_jsonl<T: DeserializeOwned>(reader: impl BufRead, check: impl Fn(&T) -> Result<()>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
        let item: T = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        check(&item).map_err(|e| parse_err(e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One `ImuSample` per line; timestamps must increase.
pub fn read_trace(reader: impl BufRead) -> Result<Vec<ImuSample>> {
    let samples: Vec<ImuSample> = parse_jsonl(reader, ImuSample::validate)?;
    check_increasing(samples.iter().map(|s| s.t))?;
    Ok(samples)
}

pub fn write_trace(w: impl Write, samples: &[ImuSample]) -> Result<()> {
    write_jsonl(w, samples)
}

pub fn read_truth(reader: impl BufRead) -> Result<Vec<TruthSample>> {
    let samples: Vec<TruthSample> = parse_jsonl(reader, |s: &TruthSample| {
        if s.t.is_finite() && s.pose.x().is_finite() && s.pose.y().is_finite() && s.pose.theta().is_finite() {
            Ok(())
        } else {
            Err(Error::domain("non-finite value"))
        }
    })?;
    check_increasing(samples.iter().map(|s| s.t))?;
    Ok(samples)
}

pub fn write_truth(w: impl Write, samples: &[TruthSample]) -> Result<()> {
    write_jsonl(w, samples)
}

fn check_increasing(ts: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev: Option<f64> = None;
    for (i, t) in ts.enumerate() {
        if let Some(p) = prev {
            if !(t > p) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("timestamp {t} does not follow {p}"),
                });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

pub const ESTIMATE_HEADER: &str = "t,p_x,p_y,theta,v_x,v_y,b_ax,b_ay,b_gz,trace,mode";

/// Per-sample estimates. Positions in metres as in the filter dump; the
/// filter-only columns are empty while no filter is running.
pub fn write_estimates(mut w: impl Write, steps: &[StepOutput]) -> Result<()> {
    writeln!(w, "{ESTIMATE_HEADER}")?;
    for s in steps {
        match &s.filter {
            Some(f) => {
                let row = f.csv_row();
                let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{},{}", cells.join(","), s.mode.name())?;
            }
            None => writeln!(
                w,
                "{:e},{:e},{:e},{:e},,,,,,,{}",
                s.t,
                s.pose.x() * 1e-3,
                s.pose.y() * 1e-3,
                s.pose.theta(),
                s.mode.name()
            )?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `(t, pose in mm)` back from an estimates CSV.
pub fn read_estimates(reader: impl BufRead) -> Result<Vec<(f64, Pose2D)>> {
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == ESTIMATE_HEADER => {}
        Some((_, Err(e))) => return Err(e.into()),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {ESTIMATE_HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 11 {
            return Err(err(format!("expected 11 columns, found {}", cells.len())));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = cells[k]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad number {:?}", cells[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("non-finite value {:?}", cells[k])))
            }
        };
        out.push((num(0)?, Pose2D::new(num(1)? * 1e3, num(2)? * 1e3, num(3)?)));
    }
    Ok(out)
}

/// Parses `x,y,theta` with x and y in mm and theta in radians, or in degrees
/// with a `deg` suffix (`rad` is accepted too).
pub fn parse_pose_arg(text: &str) -> Result<Pose2D> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = |why: &str| Error::domain(format!("bad pose {text:?}: {why}; expected x_mm,y_mm,theta[rad|deg]"));
    let [x, y, th] = parts[..] else {
        return Err(bad("need three comma-separated values"));
    };
    let num = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad("not a number"))
    };
    let theta = if let Some(d) = th.strip_suffix("deg") {
        num(d.trim())?.to_radians()
    } else {
        num(th.strip_suffix("rad").unwrap_or(th).trim())?
    };
    Ok(Pose2D::new(num(x)?, num(y)?, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{run_trace, PipelineConfig};
    use crate::simulator::{builtin, plan_trajectory, synthesize_imu};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn pose_args() {
        let p = parse_pose_arg("10,20,90deg").unwrap();
        assert_eq!((p.x(), p.y()), (10.0, 20.0));
        assert!((p.theta() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(parse_pose_arg("1, -2, 0.5").unwrap(), Pose2D::new(1.0, -2.0, 0.5));
        assert_eq!(parse_pose_arg("0,0,0.5rad").unwrap().theta(), 0.5);
        for bad in ["", "1,2", "1,2,3,4", "a,2,3", "1,2,xdeg", "1,2,inf"] {
            assert!(parse_pose_arg(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn trace_round_trip() {
        let s = builtin::magnetic_drift();
        let truth = plan_trajectory(&s).unwrap();
        let imu = synthesize_imu(&truth, &s);
        let mut buf = Vec::new();
        write_trace(&mut buf, &imu[..500]).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), imu[..500]);

        let mut buf = Vec::new();
        write_truth(&mut buf, &truth.samples[..500]).unwrap();
        assert_eq!(read_truth(buf.as_slice()).unwrap(), truth.samples[..500]);
    }

    #[test]
    fn trace_errors_carry_line_numbers() {
        let good = r#"{"t":0.0,"acc":[0,0,9.81],"gyro":[0,0,0],"lum":0.5}"#;
        let text = format!("{good}\n{}\n", &good[..20]);
        match read_trace(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let text = format!("{good}\n{good}\n");
        assert!(matches!(read_trace(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let missing = r#"{"t":0.0,"acc":[0,0,9.81],"lum":0.5}"#;
        let err = read_trace(missing.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("gyro"), "{err}");
    }

    #[test]
    fn estimates_round_trip() {
        let s = builtin::straight_line().noise_free();
        let truth = plan_trajectory(&s).unwrap();
        let steps = run_trace(&PipelineConfig::default(), &synthesize_imu(&truth, &s)).unwrap();
        let mut buf = Vec::new();
        write_estimates(&mut buf, &steps).unwrap();
        let back = read_estimates(buf.as_slice()).unwrap();
        assert_eq!(back.len(), steps.len());
        for (a, b) in back.iter().zip(&steps) {
            assert_eq!(a.0, b.t);
            assert!(a.1.distance(&b.pose) < 1e-9);
        }
        assert!(read_estimates("t,x\n".as_bytes()).is_err());
    }
}
