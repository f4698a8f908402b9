//! A 3x5 bitmap digit font, enough to stamp atom IDs onto images and read
//! them back.

use image::{Rgb, RgbImage};

pub const GLYPH_W: u32 = 3;
pub const GLYPH_H: u32 = 5;

// one row per byte, bit 2 = leftmost column
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Pixel size of `n` digits at `scale`, with one blank column between glyphs.
pub fn text_size(n: usize, scale: u32) -> (u32, u32) {
    let n = n as u32;
    (scale * (n * (GLYPH_W + 1)).saturating_sub(1), scale * GLYPH_H)
}

/// Draws the digits of `text` with their top-left corner at `(x, y)`.
/// Characters other than ASCII digits are skipped; pixels off the image are
/// dropped.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: u32, color: Rgb<u8>) {
    let s = scale as i64;
    for (k, ch) in text.chars().filter(char::is_ascii_digit).enumerate() {
        let glyph = DIGITS[ch as usize - '0' as usize];
        let gx = x + k as i64 * (GLYPH_W as i64 + 1) * s;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..GLYPH_W as i64 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..s {
                    for dx in 0..s {
                        let (px, py) = (gx + col * s + dx, y + row as i64 * s + dy);
                        if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                            img.put_pixel(px as u32, py as u32, color);
                        }
                    }
                }
            }
        }
    }
}

/// Reads `n` digits drawn by [`draw_text`] at `(x, y)` in `color`. Returns
/// `None` if any cell does not match a glyph.
pub fn read_text(img: &RgbImage, x: u32, y: u32, n: usize, scale: u32, color: Rgb<u8>) -> Option<String> {
    let mut out = String::with_capacity(n);
    for k in 0..n as u32 {
        let gx = x + k * (GLYPH_W + 1) * scale;
        let mut glyph = [0u8; 5];
        for (row, bits) in glyph.iter_mut().enumerate() {
            for col in 0..GLYPH_W {
                let (px, py) = (gx + col * scale + scale / 2, y + row as u32 * scale + scale / 2);
                if px < img.width() && py < img.height() && *img.get_pixel(px, py) == color {
                    *bits |= 0b100 >> col;
                }
            }
        }
        let d = DIGITS.iter().position(|g| *g == glyph)?;
        out.push(char::from(b'0' + d as u8));
    }
    Some(out)
}
