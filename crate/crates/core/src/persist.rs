//! Model files in the same sectioned text format as run configs.
//!
//! ```text
//! schema_version = 1
//! kind = "agmpnn"
//! [shape]
//! pre_taps = 6
//! post_taps = 0
//! ...
//! [params]
//! lambda = [...]
//! ```

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::agmpnn::AgmpnnModel;
use crate::config::{parse_document, row_f64, row_usize, Document, SectionReader, Value};
use crate::error::{DpdError, Result};
use crate::ila::DpdModel;
use crate::mpm::{MpmCoefficients, MpmSpec};
use crate::rvftdnn::RvftdnnModel;
use crate::signal::TapWindow;

pub const SCHEMA_VERSION: usize = 1;

fn floats(v: &[f64]) -> Value {
    Value::List(v.iter().map(|&x| Value::Float(x)).collect())
}

fn complex_flat(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn line(out: &mut String, key: &str, v: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {v}");
}

pub fn model_to_text(model: &DpdModel) -> String {
    let mut s = String::new();
    line(&mut s, "schema_version", SCHEMA_VERSION);
    line(&mut s, "kind", Value::Str(model.family().name().into()));
    let w = model.window();
    s.push_str("\n[shape]\n");
    line(&mut s, "pre_taps", w.pre_taps);
    line(&mut s, "post_taps", w.post_taps);
    match model {
        DpdModel::Mpm(c) => {
            line(&mut s, "k_orders", c.spec.k_orders);
            line(&mut s, "offset_b", Value::Float(c.spec.offset_b));
            s.push_str("\n[params]\n# rows of [l, k, re, im]\ncoefficients = [\n");
            for t in 0..c.spec.taps() {
                for k in 0..c.spec.k_orders {
                    let v = c.get(t, k);
                    let _ = writeln!(s, "  [{t}, {k}, {}, {}],", Value::Float(v.re), Value::Float(v.im));
                }
            }
            s.push_str("]\n");
        }
        DpdModel::Agmpnn(m) => {
            line(&mut s, "k_orders", m.k_orders);
            line(&mut s, "n_experts", m.n_experts);
            s.push_str("\n[params]\n");
            line(&mut s, "lambda", floats(&complex_flat(&m.lambda)));
            line(&mut s, "offsets", floats(&m.offsets));
            line(&mut s, "mu", floats(&m.mu));
            line(&mut s, "nu", floats(&m.nu));
        }
        DpdModel::Rvftdnn(m) => {
            line(&mut s, "n1", m.n1);
            line(&mut s, "n2", m.n2);
            s.push_str("\n[params]\n");
            line(&mut s, "w1", floats(&m.w1));
            line(&mut s, "b1", floats(&m.b1));
            line(&mut s, "w2", floats(&m.w2));
            line(&mut s, "b2", floats(&m.b2));
            line(&mut s, "w3", floats(&m.w3));
            line(&mut s, "b3", floats(&m.b3));
        }
    }
    s
}

fn format_err(msg: impl Into<String>) -> DpdError {
    DpdError::Format(msg.into())
}

fn need<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| format_err(format!("model file lacks `{key}`")))
}

fn complex_list(r: &mut SectionReader<'_>, key: &str) -> Result<Vec<Complex64>> {
    let flat = need(r.f64_list(key)?, key)?;
    if flat.len() % 2 != 0 {
        return Err(format_err(format!("`{key}` needs an even number of reals")));
    }
    Ok(flat.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
}

fn read_mpm(doc: &Document, window: TapWindow, shape: &mut SectionReader<'_>) -> Result<DpdModel> {
    let k_orders = need(shape.usize("k_orders")?, "k_orders")?;
    let offset_b = shape.f64("offset_b")?.unwrap_or(0.0);
    let spec = MpmSpec::new(window, k_orders, offset_b)?;
    let mut p = doc.reader("params");
    let rows = need(p.rows("coefficients", 4)?, "coefficients")?;
    let mut lambda = vec![Complex64::new(0.0, 0.0); spec.n_terms()];
    let mut seen = vec![false; spec.n_terms()];
    for row in rows {
        let bad = || format_err("coefficient rows must be [l, k, re, im]");
        let (t, k) = (row_usize(row, 0).ok_or_else(bad)?, row_usize(row, 1).ok_or_else(bad)?);
        if t >= spec.taps() || k >= k_orders {
            return Err(format_err(format!("coefficient ({t}, {k}) is outside the {}x{k_orders} grid", spec.taps())));
        }
        let i = t * k_orders + k;
        if std::mem::replace(&mut seen[i], true) {
            return Err(format_err(format!("coefficient ({t}, {k}) given twice")));
        }
        lambda[i] = Complex64::new(row_f64(row, 2).ok_or_else(bad)?, row_f64(row, 3).ok_or_else(bad)?);
    }
    if seen.iter().any(|s| !s) {
        return Err(format_err("coefficient grid is incomplete"));
    }
    p.finish()?;
    Ok(DpdModel::Mpm(MpmCoefficients::new(spec, lambda)?))
}

fn read_agmpnn(doc: &Document, window: TapWindow, shape: &mut SectionReader<'_>) -> Result<DpdModel> {
    let k_orders = need(shape.usize("k_orders")?, "k_orders")?;
    let n_experts = need(shape.usize("n_experts")?, "n_experts")?;
    let mut p = doc.reader("params");
    let model = AgmpnnModel {
        window,
        k_orders,
        n_experts,
        lambda: complex_list(&mut p, "lambda")?,
        offsets: need(p.f64_list("offsets")?, "offsets")?,
        mu: need(p.f64_list("mu")?, "mu")?,
        nu: need(p.f64_list("nu")?, "nu")?,
    };
    p.finish()?;
    model.validate().map_err(|e| format_err(e.to_string()))?;
    Ok(DpdModel::Agmpnn(model))
}

fn read_rvftdnn(doc: &Document, window: TapWindow, shape: &mut SectionReader<'_>) -> Result<DpdModel> {
    let n1 = need(shape.usize("n1")?, "n1")?;
    let n2 = need(shape.usize("n2")?, "n2")?;
    let mut p = doc.reader("params");
    let b3 = need(p.f64_list("b3")?, "b3")?;
    let b3: [f64; 2] = b3.try_into().map_err(|_| format_err("`b3` needs exactly two values"))?;
    let model = RvftdnnModel {
        window,
        n1,
        n2,
        w1: need(p.f64_list("w1")?, "w1")?,
        b1: need(p.f64_list("b1")?, "b1")?,
        w2: need(p.f64_list("w2")?, "w2")?,
        b2: need(p.f64_list("b2")?, "b2")?,
        w3: need(p.f64_list("w3")?, "w3")?,
        b3,
    };
    p.finish()?;
    model.validate().map_err(|e| format_err(e.to_string()))?;
    Ok(DpdModel::Rvftdnn(model))
}

pub fn model_from_text(text: &str) -> Result<DpdModel> {
    let doc = parse_document(text)?;
    doc.check_sections(&["", "shape", "params"])?;
    let mut top = doc.reader("");
    let version = need(top.usize("schema_version")?, "schema_version")?;
    if version != SCHEMA_VERSION {
        return Err(format_err(format!("unsupported model schema version {version}")));
    }
    let kind: crate::ila::Family = need(top.parsed("kind", "a model family")?, "kind")?;
    top.finish()?;
    let mut shape = doc.reader("shape");
    let window = TapWindow::new(need(shape.usize("pre_taps")?, "pre_taps")?, need(shape.usize("post_taps")?, "post_taps")?);
    let model = match kind {
        crate::ila::Family::Mpm => read_mpm(&doc, window, &mut shape)?,
        crate::ila::Family::Agmpnn => read_agmpnn(&doc, window, &mut shape)?,
        crate::ila::Family::Rvftdnn => read_rvftdnn(&doc, window, &mut shape)?,
    };
    shape.finish()?;
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &DpdModel) -> Result<()> {
    std::fs::write(path, model_to_text(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DpdModel> {
    model_from_text(&std::fs::read_to_string(path)?)
}
