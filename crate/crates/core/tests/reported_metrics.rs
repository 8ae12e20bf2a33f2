use phpvul::eval::f1_score;

mod common;

struct Row {
    table: u8,
    label: String,
    pre: f64,
    rec: f64,
    f1: f64,
}

fn rows() -> Vec<Row> {
    let text = std::fs::read_to_string(common::fixture("reported_metrics.tsv")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            assert_eq!(c.len(), 8, "{l}");
            let num = |i: usize| c[i].parse::<f64>().unwrap();
            Row {
                table: c[0].parse().unwrap(),
                label: format!("{}/{}/{}/{}", c[0], c[1], c[2], c[3]),
                rec: num(5),
                pre: num(6),
                f1: num(7),
            }
        })
        .collect()
}

#[test]
fn every_row_satisfies_the_f1_identity() {
    let rows = rows();
    assert!(rows.iter().any(|r| r.table == 1) && rows.iter().any(|r| r.table == 2));
    for r in &rows {
        let f1 = f1_score(r.pre, r.rec);
        assert!(
            (f1 - r.f1).abs() <= 0.01,
            "{}: 2PR/(P+R) = {f1:.4}, reported {}",
            r.label,
            r.f1
        );
    }
}

#[test]
fn anchor_row() {
    assert_eq!(format!("{:.2}", f1_score(79.80, 87.96)), "83.68");
    let row = rows().into_iter().find(|r| r.table == 1).unwrap();
    assert_eq!((row.pre, row.rec, row.f1), (79.80, 87.96, 83.68));
}
