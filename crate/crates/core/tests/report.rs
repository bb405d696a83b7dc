mod common;

use base64::Engine as _;
use common::oracle;
use fetqc::iqm::{extract_all_iqms, FeatureCatalog};
use fetqc::report::{render_group_report, render_report, GroupRow, GroupSort, ReportOptions};
use fetqc::{BrainMask, Error, Stack};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 12x9x10 stack with brain in slices 3..=7.
fn fixture() -> (Stack, BrainMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = Array3::from_shape_fn((12, 9, 10), |(x, y, z)| {
        50.0 + (x * 7 + y * 3 + z) as f64 + rng.gen_range(0.0..20.0)
    });
    let m = Array3::from_shape_fn((12, 9, 10), |(x, y, z)| {
        (3..=7).contains(&z) && (2..10).contains(&x) && (1..8).contains(&y)
    });
    let mut s = Stack::from_voxels(v, [0.8, 0.8, 3.0]).unwrap();
    s.subject_id = "sub-07".into();
    s.run_id = "run-2".into();
    let m = BrainMask::from_voxels(m, s.spacing).unwrap();
    (s, m)
}

fn options() -> ReportOptions {
    ReportOptions {
        timestamp: "2024-01-01T00:00:00Z".into(),
        toolkit_version: "test".into(),
    }
}

fn render() -> String {
    let (s, m) = fixture();
    let iqms = extract_all_iqms(&s, &m, &FeatureCatalog::canonical());
    render_report(&s, &m, &iqms, &options()).unwrap()
}

/// Decoded PNGs in document order as (width, height, pixels).
fn images(html: &str) -> Vec<(usize, usize, Vec<u8>)> {
    html.split("src=\"data:image/png;base64,")
        .skip(1)
        .map(|rest| {
            let b64 = &rest[..rest.find('"').unwrap()];
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64)
                .unwrap();
            let mut reader = png::Decoder::new(bytes.as_slice()).read_info().unwrap();
            let mut buf = vec![0; reader.output_buffer_size()];
            let info = reader.next_frame(&mut buf).unwrap();
            buf.truncate(info.buffer_size());
            (info.width as usize, info.height as usize, buf)
        })
        .collect()
}

#[test]
fn mosaic_shows_only_slices_with_brain() {
    let html = render();
    assert_eq!(html.matches("<figure class=\"slice\">").count(), 5);
    assert_eq!(html.matches("<figure class=\"through-plane\">").count(), 2);
    assert_eq!(images(&html).len(), 7);
}

#[test]
fn report_is_self_contained() {
    let html = render();
    for attr in ["src=\"", "href=\""] {
        for rest in html.split(attr).skip(1) {
            assert!(
                rest.starts_with("data:"),
                "external reference {attr}{}",
                &rest[..rest.len().min(40)]
            );
        }
    }
    assert!(!html.contains("http://") && !html.contains("https://"));
    assert!(!html.contains("/tmp") && !html.contains("/root"));
}

#[test]
fn rendering_is_byte_identical() {
    assert_eq!(render(), render());
}

#[test]
fn slice_pixels_follow_the_window() {
    let (s, m) = fixture();
    let inside: Vec<f64> = s
        .voxels
        .iter()
        .zip(m.voxels.iter())
        .filter(|(_, b)| **b)
        .map(|(v, _)| *v)
        .collect();
    let (lo, hi) = (
        oracle::percentile(&inside, 1.0),
        oracle::percentile(&inside, 99.0),
    );
    let window = |v: f64| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8;
    let imgs = images(&render());
    for (k, z) in (3..=7).enumerate() {
        let (w, h, px) = &imgs[k];
        assert_eq!((*w, *h), (12, 9));
        for y in 0..9 {
            for x in 0..12 {
                assert_eq!(
                    px[y * 12 + x],
                    window(s.voxels[[x, y, z]]),
                    "slice {z} pixel {x},{y}"
                );
            }
        }
    }
    // sections through x = 5 and y = 4, one row per slice
    let (w, h, px) = &imgs[5];
    assert_eq!((*w, *h), (9, 10));
    for z in 0..10 {
        for y in 0..9 {
            assert_eq!(px[z * 9 + y], window(s.voxels[[5, y, z]]));
        }
    }
    let (w, h, px) = &imgs[6];
    assert_eq!((*w, *h), (12, 10));
    for z in 0..10 {
        for x in 0..12 {
            assert_eq!(px[z * 12 + x], window(s.voxels[[x, 4, z]]));
        }
    }
}

#[test]
fn json_island_carries_identity_and_schema() {
    let html = render();
    let start = html.find("id=\"fetqc-data\">").unwrap() + "id=\"fetqc-data\">".len();
    let end = start + html[start..].find("</script>").unwrap();
    let v: serde_json::Value = serde_json::from_str(&html[start..end]).unwrap();
    assert_eq!(v["subject_id"], "sub-07");
    assert_eq!(v["run_id"], "run-2");
    assert_eq!(v["rating_file"], "sub-07_run-2_rating.json");
    assert_eq!(v["generated"], "2024-01-01T00:00:00Z");
    let schema = &v["rating_schema"];
    assert_eq!(schema["quality"]["max"], 4.0);
    assert_eq!(schema["quality"]["step"], 0.05);
    assert_eq!(schema["quality"]["exclude_max"], 1.0);
    assert_eq!(schema["artifacts"].as_array().unwrap().len(), 6);
}

#[test]
fn empty_mask_is_rejected() {
    let (s, _) = fixture();
    let m = BrainMask::from_voxels(Array3::from_elem((12, 9, 10), false), s.spacing).unwrap();
    let iqms = extract_all_iqms(&s, &m, &FeatureCatalog::canonical());
    assert!(matches!(
        render_report(&s, &m, &iqms, &options()),
        Err(Error::EmptyRegion)
    ));
}

fn row(sub: &str, predicted: Option<f64>, rating: Option<f64>) -> GroupRow {
    GroupRow {
        subject_id: sub.into(),
        run_id: "run-1".into(),
        report_href: Some(format!("{sub}_run-1_report.html")),
        predicted,
        predicted_label: predicted.map(|p| if p > 1.0 { "include" } else { "exclude" }.to_owned()),
        rating,
        iqms: vec![Some(1.5)],
    }
}

fn body_rows(html: &str) -> Vec<&str> {
    html.split("<tr>").skip(2).collect()
}

#[test]
fn group_report_table() {
    let rows = [
        row("sub-01", Some(2.0), None),
        row("sub-02", Some(3.5), Some(3.0)),
        row("sub-03", Some(0.5), None),
    ];
    let names = ["mask_volume".to_owned()];
    let html = render_group_report(&rows, &names, GroupSort::Id, &options());
    let body = body_rows(&html);
    assert_eq!(body.len(), 3);
    // the rating is the fifth cell: subject, run, predicted, label, rating
    let rated = body.iter().filter(|r| {
        r.split("<td")
            .nth(5)
            .is_some_and(|c| !c.starts_with(" data-v=\"\""))
    });
    assert_eq!(rated.count(), 1);
    assert!(html.contains("href=\"sub-02_run-1_report.html\""));

    let sorted = render_group_report(&rows, &names, GroupSort::Predicted, &options());
    let order: Vec<usize> = ["sub-02", "sub-01", "sub-03"]
        .iter()
        .map(|s| sorted.find(&format!("data-v=\"{s}\"")).unwrap())
        .collect();
    assert!(order.windows(2).all(|w| w[0] < w[1]));

    let unpredicted = [row("sub-01", None, Some(2.0)), row("sub-02", None, None)];
    let html = render_group_report(&unpredicted, &names, GroupSort::Id, &options());
    assert!(!html.contains("<th>predicted</th>"));
    assert!(html.contains("<th>rating</th>"));
    assert_eq!(body_rows(&html).len(), 2);
}
