use std::fmt::Write as _;
use std::path::Path;

use crate::align::blue_ramp;
use crate::engine::{Cell, Tile};

use super::projection::BoardProjection;
use super::VizError;

const CELL: usize = 48;
const MARGIN: usize = 24;
const SIZE: usize = 2 * MARGIN + 8 * CELL;
const BOARD_FILL: &str = "#2e7d32";

fn square_label(square: usize) -> String {
    format!("{}{}", (b'A' + (square % 8) as u8) as char, square / 8 + 1)
}

/// 8×8 board with A1 in the top-left corner. The element layout is
/// described in `docs/svg-schema.md`.
pub fn board_svg(bp: &BoardProjection) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect id=\"background\" x=\"0\" y=\"0\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"#ffffff\"/>\n"
    );
    let top_p = bp.top5[0].1;
    for square in 0..64 {
        let (x, y) = (MARGIN + (square % 8) * CELL, MARGIN + (square / 8) * CELL);
        let fill = Tile::from_square(square)
            .and_then(|t| bp.top5.iter().find(|c| c.0 == t))
            .map_or(BOARD_FILL.to_string(), |&(_, p)| blue_ramp(if top_p > 0.0 { p / top_p } else { 0.0 }));
        writeln!(
            s,
            "<rect id=\"tile-{}\" class=\"tile\" x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#000000\" stroke-width=\"1\"/>",
            square_label(square)
        )
        .unwrap();
    }
    for (rank, (t, c)) in bp.nearest3.iter().enumerate() {
        let (x, y) = (MARGIN + t.col() * CELL, MARGIN + t.row() * CELL);
        let opacity = 0.15 + 0.45 * c.clamp(0.0, 1.0);
        writeln!(
            s,
            "<rect id=\"shadow-{}\" class=\"shadow\" data-rank=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#000000\" fill-opacity=\"{opacity:.3}\"/>",
            t,
            rank + 1,
            x + 4,
            y + 4,
            CELL - 8,
            CELL - 8
        )
        .unwrap();
    }
    for square in 0..64 {
        let fill = match bp.board.cell(square) {
            Cell::Empty => continue,
            Cell::Black => "#000000",
            Cell::White => "#ffffff",
        };
        let (cx, cy) = (MARGIN + (square % 8) * CELL + CELL / 2, MARGIN + (square / 8) * CELL + CELL / 2);
        writeln!(
            s,
            "<circle id=\"disc-{}\" class=\"disc\" cx=\"{cx}\" cy=\"{cy}\" r=\"{}\" fill=\"{fill}\" stroke=\"#000000\" stroke-width=\"1\"/>",
            square_label(square),
            CELL / 2 - 5
        )
        .unwrap();
    }
    for t in Tile::all().filter(|t| bp.legality_mask[t.index()]) {
        let (cx, cy) = (MARGIN + t.col() * CELL + CELL / 2, MARGIN + t.row() * CELL + CELL / 2);
        writeln!(s, "<circle id=\"legal-{t}\" class=\"legal\" cx=\"{cx}\" cy=\"{cy}\" r=\"4\" fill=\"#ffd54f\"/>").unwrap();
    }
    for (t, p) in &bp.top5 {
        let (x, y) = (MARGIN + t.col() * CELL + CELL / 2, MARGIN + t.row() * CELL + CELL - 5);
        writeln!(s, "<text id=\"prob-{t}\" class=\"prob\" x=\"{x}\" y=\"{y}\" text-anchor=\"middle\" font-size=\"9\">{p:.3}</text>")
            .unwrap();
    }
    let t = bp.top_candidate;
    writeln!(
        s,
        "<rect id=\"top-candidate\" class=\"top-candidate\" x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"4\"/>",
        MARGIN + t.col() * CELL,
        MARGIN + t.row() * CELL
    )
    .unwrap();
    for i in 0..8 {
        let mid = MARGIN + i * CELL + CELL / 2;
        writeln!(
            s,
            "<text id=\"col-{}\" class=\"coord\" x=\"{mid}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            (b'A' + i as u8) as char,
            MARGIN - 8,
            (b'A' + i as u8) as char
        )
        .unwrap();
        writeln!(
            s,
            "<text id=\"row-{}\" class=\"coord\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            i + 1,
            MARGIN / 2,
            mid + 4,
            i + 1
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_board_svg(bp: &BoardProjection, path: impl AsRef<Path>) -> Result<(), VizError> {
    std::fs::write(path, board_svg(bp))?;
    Ok(())
}
