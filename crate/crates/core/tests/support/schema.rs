//! Checks emitted figures against the layouts in `docs/svg-schema.md` and
//! `docs/file-formats.md`.
#![allow(dead_code)]

use roxmltree::{Document, Node};

const SVG_NS: &str = "http://www.w3.org/2000/svg";

fn elements<'a>(root: Node<'a, 'a>) -> Vec<Node<'a, 'a>> {
    root.children().filter(|n| n.is_element()).collect()
}

fn attr<'a>(n: &Node<'a, '_>, name: &str) -> Result<&'a str, String> {
    n.attribute(name).ok_or_else(|| format!("<{}> missing {name}", n.tag_name().name()))
}

fn is_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}

fn tile_label(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 2 && (b'A'..=b'H').contains(&b[0]) && (b'1'..=b'8').contains(&b[1])
}

fn expect(n: &Node<'_, '_>, tag: &str, class: Option<&str>) -> Result<(), String> {
    if n.tag_name().name() != tag || n.tag_name().namespace() != Some(SVG_NS) {
        return Err(format!("expected <{tag}>, found <{}>", n.tag_name().name()));
    }
    if let Some(c) = class {
        if n.attribute("class") != Some(c) {
            return Err(format!("<{tag}> should have class {c}, has {:?}", n.attribute("class")));
        }
    }
    Ok(())
}

fn root(doc: &Document<'_>, size: Option<usize>) -> Result<(), String> {
    let r = doc.root_element();
    expect(&r, "svg", None)?;
    let (w, h) = (attr(&r, "width")?, attr(&r, "height")?);
    if attr(&r, "viewBox")? != format!("0 0 {w} {h}") {
        return Err("viewBox must match width and height".into());
    }
    if let Some(s) = size {
        if w != s.to_string() || h != s.to_string() {
            return Err(format!("board must be {s}x{s}"));
        }
    }
    Ok(())
}

/// Board figure: background, 64 tiles, shadows, discs, legal markers,
/// probability labels, the top-candidate box, coordinate labels.
pub fn validate_board_svg(text: &str) -> Result<(), String> {
    let doc = Document::parse(text).map_err(|e| e.to_string())?;
    root(&doc, Some(432))?;
    let els = elements(doc.root_element());
    let mut it = els.iter().peekable();
    let bg = it.next().ok_or("empty svg")?;
    expect(bg, "rect", None)?;
    if bg.attribute("id") != Some("background") {
        return Err("first element must be rect#background".into());
    }
    for sq in 0..64 {
        let n = it.next().ok_or("missing tiles")?;
        expect(n, "rect", Some("tile"))?;
        let want = format!("tile-{}{}", (b'A' + (sq % 8) as u8) as char, sq / 8 + 1);
        if attr(n, "id")? != want {
            return Err(format!("tile {sq} has id {:?}, want {want}", n.attribute("id")));
        }
        if !is_color(attr(n, "fill")?) {
            return Err(format!("{want}: bad fill"));
        }
    }
    let mut ranks = Vec::new();
    while let Some(n) = it.next_if(|n| n.attribute("class") == Some("shadow")) {
        expect(n, "rect", Some("shadow"))?;
        let id = attr(n, "id")?;
        if !id.strip_prefix("shadow-").is_some_and(tile_label) {
            return Err(format!("bad shadow id {id}"));
        }
        ranks.push(attr(n, "data-rank")?.parse::<usize>().map_err(|e| e.to_string())?);
        let op: f64 = attr(n, "fill-opacity")?.parse().map_err(|_| "bad fill-opacity")?;
        if !(0.0..=1.0).contains(&op) {
            return Err("fill-opacity outside [0, 1]".into());
        }
    }
    if ranks != (1..=ranks.len()).collect::<Vec<_>>() || ranks.len() > 3 {
        return Err(format!("shadow ranks {ranks:?}"));
    }
    let mut discs = 0;
    while let Some(n) = it.next_if(|n| n.attribute("class") == Some("disc")) {
        expect(n, "circle", Some("disc"))?;
        let id = attr(n, "id")?;
        if !id.strip_prefix("disc-").is_some_and(tile_label) {
            return Err(format!("bad disc id {id}"));
        }
        if !matches!(attr(n, "fill")?, "#000000" | "#ffffff") {
            return Err(format!("{id}: disc fill must be black or white"));
        }
        discs += 1;
    }
    if !(4..=64).contains(&discs) {
        return Err(format!("{discs} discs"));
    }
    while let Some(n) = it.next_if(|n| n.attribute("class") == Some("legal")) {
        expect(n, "circle", Some("legal"))?;
        if !attr(n, "id")?.strip_prefix("legal-").is_some_and(tile_label) {
            return Err("bad legal-marker id".into());
        }
    }
    let mut probs = 0;
    while let Some(n) = it.next_if(|n| n.attribute("class") == Some("prob")) {
        expect(n, "text", Some("prob"))?;
        if !attr(n, "id")?.strip_prefix("prob-").is_some_and(tile_label) {
            return Err("bad probability label id".into());
        }
        let p: f64 = n.text().unwrap_or("").parse().map_err(|_| "probability label is not a number")?;
        if !(0.0..=1.0).contains(&p) {
            return Err("probability outside [0, 1]".into());
        }
        probs += 1;
    }
    if !(1..=5).contains(&probs) {
        return Err(format!("{probs} probability labels"));
    }
    let top = it.next().ok_or("missing top-candidate")?;
    expect(top, "rect", Some("top-candidate"))?;
    if top.attribute("id") != Some("top-candidate") || top.attribute("fill") != Some("none") {
        return Err("top-candidate must be an unfilled rect#top-candidate".into());
    }
    for i in 0..8 {
        for want in [format!("col-{}", (b'A' + i as u8) as char), format!("row-{}", i + 1)] {
            let n = it.next().ok_or("missing coordinate labels")?;
            expect(n, "text", Some("coord"))?;
            if attr(n, "id")? != want {
                return Err(format!("coordinate label {:?}, want {want}", n.attribute("id")));
            }
        }
    }
    if let Some(extra) = it.next() {
        return Err(format!("unexpected trailing <{}>", extra.tag_name().name()));
    }
    Ok(())
}

/// Layer heatmap: background, column labels, then per row a row label and
/// one cell rect plus value text per column.
pub fn validate_heatmap_svg(text: &str, rows: usize, cols: usize) -> Result<(), String> {
    let doc = Document::parse(text).map_err(|e| e.to_string())?;
    root(&doc, None)?;
    let els = elements(doc.root_element());
    if els.len() != 1 + cols + rows * (1 + 2 * cols) {
        return Err(format!("{} elements for a {rows}x{cols} grid", els.len()));
    }
    expect(&els[0], "rect", None)?;
    if els[0].attribute("id") != Some("background") {
        return Err("first element must be rect#background".into());
    }
    for n in &els[1..=cols] {
        expect(n, "text", Some("col-label"))?;
    }
    let mut k = 1 + cols;
    for i in 0..rows {
        expect(&els[k], "text", Some("row-label"))?;
        k += 1;
        for j in 0..cols {
            expect(&els[k], "rect", None)?;
            if attr(&els[k], "id")? != format!("cell-{i}-{j}") || !is_color(attr(&els[k], "fill")?) {
                return Err(format!("bad cell {i},{j}"));
            }
            expect(&els[k + 1], "text", Some("cell-value"))?;
            let v = els[k + 1].text().unwrap_or("");
            if v != "NA" && v.parse::<f64>().is_err() {
                return Err(format!("cell {i},{j} value {v:?}"));
            }
            k += 2;
        }
    }
    Ok(())
}

/// Plot data: a `# name name …` header, then one point per line with a
/// label column followed by numeric columns.
pub fn validate_plot_data(text: &str, header: &[&str]) -> Result<usize, String> {
    let mut lines = text.lines();
    let head = lines.next().ok_or("empty plot data")?;
    let names: Vec<&str> = head.strip_prefix("# ").ok_or("missing # header")?.split(' ').collect();
    if names != header {
        return Err(format!("header {names:?}, want {header:?}"));
    }
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != header.len() {
            return Err(format!("line {}: {} fields", i + 2, fields.len()));
        }
        if fields[0].is_empty() || fields[1..].iter().any(|f| f.parse::<f64>().map_or(true, |v| !v.is_finite())) {
            return Err(format!("line {}: {line:?}", i + 2));
        }
        count += 1;
    }
    if !text.ends_with('\n') {
        return Err("plot data must end with a newline".into());
    }
    Ok(count)
}
