//! Self-contained HTML review reports, one per stack, and a group summary.

pub mod image;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use base64::Engine as _;
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::tables::{Orientation, ARTIFACTS, EXCLUDE_THRESHOLD};
use crate::iqm::IqmVector;
use crate::volume::{BrainMask, Stack};
pub use image::{GrayImage, Window};

const WIDGET_JS: &str = include_str!("widget.js");

const STYLE: &str = "body{font-family:sans-serif;margin:1em;background:#fafafa;color:#222}\
.mosaic{display:flex;flex-wrap:wrap;gap:4px}\
figure{margin:0;text-align:center;font-size:11px}\
img{image-rendering:pixelated;background:#000}\
table{border-collapse:collapse;font-size:12px}\
td,th{border:1px solid #ccc;padding:2px 6px;text-align:right}\
th{cursor:pointer;background:#eee}\
td:first-child,th:first-child{text-align:left}\
#rating{position:sticky;top:0;padding:8px;border:2px solid #4a4;background:#fff;margin-bottom:1em}\
#rating.exclude{border-color:#c33}\
#rating label{margin-right:1em;display:inline-block}\
#message{color:#c33}";

const SORT_JS: &str = "document.querySelectorAll('th').forEach(function(th,i){th.addEventListener('click',function(){\
var body=th.closest('table').tBodies[0];var rows=Array.from(body.rows);var asc=th.dataset.asc!=='1';th.dataset.asc=asc?'1':'0';\
rows.sort(function(a,b){var x=a.cells[i].dataset.v,y=b.cells[i].dataset.v;var fx=parseFloat(x),fy=parseFloat(y);\
var c=(isNaN(fx)||isNaN(fy))?String(x).localeCompare(String(y)):fx-fy;return asc?c:-c;});rows.forEach(function(r){body.appendChild(r);});});});";

/// Values injected into every report so rendering stays reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub timestamp: String,
    pub toolkit_version: String,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            timestamp: String::new(),
            toolkit_version: crate::VERSION.to_owned(),
        }
    }
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// File name of the rating document for one stack.
pub fn rating_file_name(subject_id: &str, run_id: &str) -> String {
    format!("{subject_id}_{run_id}_rating.json")
}

/// File name of the HTML report for one stack.
pub fn report_file_name(subject_id: &str, run_id: &str) -> String {
    format!("{subject_id}_{run_id}_report.html")
}

const ORIENTATIONS: [Orientation; 4] = [
    Orientation::Unknown,
    Orientation::Axial,
    Orientation::Coronal,
    Orientation::Sagittal,
];

/// The rating schema handed to the widget.
pub fn rating_schema() -> serde_json::Value {
    json!({
        "quality": {"min": 0.0, "max": 4.0, "step": 0.05, "exclude_max": EXCLUDE_THRESHOLD},
        "orientations": ORIENTATIONS.map(Orientation::as_str),
        "artifacts": ARTIFACTS,
        "artifact_grade": {"min": 0, "max": 3},
    })
}

/// JSON island embedded in a report: stack identity and the rating schema.
pub fn report_data(stack: &Stack, iqms: &IqmVector, opts: &ReportOptions) -> serde_json::Value {
    json!({
        "subject_id": stack.subject_id,
        "run_id": stack.run_id,
        "toolkit_version": opts.toolkit_version,
        "generated": opts.timestamp,
        "features": iqms.names,
        "rating_file": rating_file_name(&stack.subject_id, &stack.run_id),
        "rating_schema": rating_schema(),
    })
}

/// Serializes for a `<script>` element; `</` cannot close it early.
fn script_json(v: &serde_json::Value) -> String {
    v.to_string().replace("</", "<\\/")
}

fn img_tag(img: &GrayImage, alt: &str) -> String {
    // physical aspect ratio, 3 screen pixels per millimetre of the finer axis
    let unit = img.pixel_size[0].min(img.pixel_size[1]);
    let w = (img.width as f64 * img.pixel_size[0] / unit * 3.0).round();
    let h = (img.height as f64 * img.pixel_size[1] / unit * 3.0).round();
    format!(
        "<img alt=\"{}\" width=\"{w}\" height=\"{h}\" src=\"data:image/png;base64,{}\">",
        escape(alt),
        base64::engine::general_purpose::STANDARD.encode(img.to_png())
    )
}

fn format_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".to_owned(),
    }
}

/// Renders the report of one stack as a single HTML document.
pub fn render_report(
    stack: &Stack,
    mask: &BrainMask,
    iqms: &IqmVector,
    opts: &ReportOptions,
) -> Result<String> {
    let window = Window::from_mask(stack, mask)?;
    let slices = image::mosaic(stack, mask, window);
    let views = image::through_plane_views(stack, mask, window)?;
    let id = format!("{} {}", stack.subject_id, stack.run_id);
    let mut h = String::new();
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>QA report {}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n",
        escape(&id)
    );
    let _ = writeln!(
        h,
        "<script type=\"application/json\" id=\"fetqc-data\">{}</script>",
        script_json(&report_data(stack, iqms, opts))
    );
    let _ = writeln!(
        h,
        "<form id=\"rating\" onsubmit=\"return false\">\n<label>Quality <input type=\"range\" id=\"quality\" min=\"0\" max=\"4\" step=\"0.05\" value=\"2\"> <output id=\"quality-value\"></output></label>\n\
<label>Orientation <select id=\"orientation\">{}</select></label>\n<label>Rater <input type=\"text\" id=\"rater\" size=\"8\"></label>\n\
<div id=\"artifacts\"></div>\n<button type=\"button\" id=\"export\">Export rating</button> <label>Load rating <input type=\"file\" id=\"load\" accept=\".json\"></label>\n\
<span id=\"message\"></span>\n</form>",
        ORIENTATIONS
            .iter()
            .map(|o| format!("<option value=\"{0}\">{0}</option>", o.as_str()))
            .collect::<String>()
    );
    let _ = writeln!(
        h,
        "<h1>{}</h1>\n<p>{}x{}x{} voxels, spacing {:.3} x {:.3} x {:.3} mm, {} of {} slices with brain. Window {:.4} to {:.4}. Version {}. {}</p>",
        escape(&id),
        stack.shape()[0],
        stack.shape()[1],
        stack.shape()[2],
        stack.spacing[0],
        stack.spacing[1],
        stack.spacing[2],
        slices.len(),
        stack.n_slices(),
        window.lo,
        window.hi,
        escape(&opts.toolkit_version),
        escape(&opts.timestamp)
    );
    h.push_str("<h2>Slices</h2>\n<div class=\"mosaic\">\n");
    for (s, img) in &slices {
        let _ = writeln!(
            h,
            "<figure class=\"slice\">{}<figcaption>{s}</figcaption></figure>",
            img_tag(img, &format!("slice {s}"))
        );
    }
    h.push_str("</div>\n<h2>Through-plane views</h2>\n<div class=\"mosaic\">\n");
    for (axis, (at, img)) in crate::volume::in_plane_axes(stack.through_plane_axis)
        .iter()
        .zip(&views)
    {
        let _ = writeln!(
            h,
            "<figure class=\"through-plane\">{}<figcaption>axis {axis} at {at}</figcaption></figure>",
            img_tag(img, &format!("axis {axis} section {at}"))
        );
    }
    h.push_str("</div>\n<h2>Image quality metrics</h2>\n<table id=\"iqms\">\n<thead><tr><th>metric</th><th>value</th></tr></thead>\n<tbody>\n");
    for (name, v) in iqms.names.iter().zip(&iqms.values) {
        let _ = writeln!(
            h,
            "<tr><td data-v=\"{0}\">{0}</td><td data-v=\"{1}\">{1}</td></tr>",
            escape(name),
            format_value(*v)
        );
    }
    let _ = write!(h, "</tbody>\n</table>\n<script>{WIDGET_JS}</script>\n<script>{SORT_JS}</script>\n</body>\n</html>\n");
    Ok(h)
}

pub fn write_report(
    stack: &Stack,
    mask: &BrainMask,
    iqms: &IqmVector,
    out: &Path,
    opts: &ReportOptions,
) -> Result<()> {
    let html = render_report(stack, mask, iqms, opts)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(out, html).map_err(|e| Error::io(out, e))
}

/// One stack in the group report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupRow {
    pub subject_id: String,
    pub run_id: String,
    /// Relative link to the stack's report.
    pub report_href: Option<String>,
    pub predicted: Option<f64>,
    pub predicted_label: Option<String>,
    pub rating: Option<f64>,
    pub iqms: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupSort {
    #[default]
    Id,
    /// Descending predicted score; stacks without one go last.
    Predicted,
    /// Descending rating; unrated stacks go last.
    Rating,
}

pub fn sort_rows(rows: &mut [GroupRow], by: GroupSort) {
    let key = |r: &GroupRow| match by {
        GroupSort::Id => None,
        GroupSort::Predicted => r.predicted,
        GroupSort::Rating => r.rating,
    };
    rows.sort_by(|a, b| {
        let by_value = match (key(a), key(b)) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        by_value.then_with(|| (&a.subject_id, &a.run_id).cmp(&(&b.subject_id, &b.run_id)))
    });
}

/// Sortable summary table over many stacks. Prediction columns are left out
/// when no row has a prediction.
pub fn render_group_report(
    rows: &[GroupRow],
    iqm_names: &[String],
    sort: GroupSort,
    opts: &ReportOptions,
) -> String {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows, sort);
    let with_pred = rows
        .iter()
        .any(|r| r.predicted.is_some() || r.predicted_label.is_some());
    let mut h = String::new();
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>QA group report</title>\n<style>{STYLE}</style>\n</head>\n<body>\n\
<h1>QA group report</h1>\n<p>{} stacks. Version {}. {}</p>\n<table id=\"group\">\n<thead><tr><th>subject</th><th>run</th>",
        rows.len(),
        escape(&opts.toolkit_version),
        escape(&opts.timestamp)
    );
    if with_pred {
        h.push_str("<th>predicted</th><th>label</th>");
    }
    h.push_str("<th>rating</th>");
    for n in iqm_names {
        let _ = write!(h, "<th>{}</th>", escape(n));
    }
    h.push_str("</tr></thead>\n<tbody>\n");
    let cell = |v: Option<f64>| match v {
        Some(x) => format!("<td data-v=\"{x}\">{x:.3}</td>"),
        None => "<td data-v=\"\"></td>".to_owned(),
    };
    for r in &rows {
        let subject = match &r.report_href {
            Some(href) => format!("<a href=\"{}\">{}</a>", escape(href), escape(&r.subject_id)),
            None => escape(&r.subject_id),
        };
        let _ = write!(
            h,
            "<tr><td data-v=\"{}\">{subject}</td><td data-v=\"{1}\">{1}</td>",
            escape(&r.subject_id),
            escape(&r.run_id)
        );
        if with_pred {
            h.push_str(&cell(r.predicted));
            let label = escape(r.predicted_label.as_deref().unwrap_or(""));
            let _ = write!(h, "<td data-v=\"{label}\">{label}</td>");
        }
        h.push_str(&cell(r.rating));
        for v in &r.iqms {
            h.push_str(&cell(*v));
        }
        h.push_str("</tr>\n");
    }
    let _ = write!(
        h,
        "</tbody>\n</table>\n<script>{SORT_JS}</script>\n</body>\n</html>\n"
    );
    h
}
