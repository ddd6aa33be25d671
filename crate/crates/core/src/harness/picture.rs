//! PNG helpers: deterministic placeholder frames for the fake driver and
//! red annotation boxes drawn over screenshots before they go to the model.

use std::io::Cursor;

use image::{ImageFormat, Rgba, RgbaImage};
use sha2::{Digest, Sha256};

const RED: Rgba<u8> = Rgba([230, 30, 30, 255]);

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("png encoding to memory");
    out.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> Option<RgbaImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .ok()
        .map(|i| i.to_rgba8())
}

pub fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(b"\x89PNG\r\n\x1a\n")
}

/// A small frame whose colors are a pure function of `state`.
pub fn placeholder_frame(state: &[u8], width: u32, height: u32) -> Vec<u8> {
    let digest = Sha256::digest(state);
    let band = Rgba([digest[0], digest[1], digest[2], 255]);
    let mut img = RgbaImage::from_pixel(width, height, Rgba([250, 250, 245, 255]));
    let top = height / 3;
    for y in top..(top + height / 3) {
        for x in 0..width {
            let shade = digest[(x as usize * 32 / width as usize) % 32];
            img.put_pixel(
                x,
                y,
                if shade % 2 == 0 {
                    band
                } else {
                    Rgba([shade, band[1], band[2], 255])
                },
            );
        }
    }
    encode_png(&img)
}

/// 3x5 glyphs for the characters used in annotation labels.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        _ => return None,
    })
}

fn put(img: &mut RgbaImage, x: i64, y: i64) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, RED);
    }
}

fn draw_label(img: &mut RgbaImage, text: &str, x: i64, y: i64, scale: i64) {
    let mut cx = x;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if row & (0b100 >> rx) != 0 {
                        for dy in 0..scale {
                            for dx in 0..scale {
                                put(img, cx + rx * scale + dx, y + ry as i64 * scale + dy);
                            }
                        }
                    }
                }
            }
        }
        cx += 4 * scale;
    }
}

/// Rectangle outline `[x, y, w, h]` with an optional label above it.
#[derive(Debug, Clone, PartialEq)]
pub struct Mark {
    pub rect: [f64; 4],
    pub label: Option<String>,
}

/// Draws red outlines (and labels) over a PNG screenshot.
pub fn annotate(png: &[u8], marks: &[Mark]) -> Option<Vec<u8>> {
    let mut img = decode_png(png)?;
    for mark in marks {
        let [x, y, w, h] = mark.rect.map(|v| v.round() as i64);
        for t in 0..3 {
            for px in x..=x + w {
                put(&mut img, px, y + t);
                put(&mut img, px, y + h - t);
            }
            for py in y..=y + h {
                put(&mut img, x + t, py);
                put(&mut img, x + w - t, py);
            }
        }
        if let Some(label) = &mark.label {
            let ly = if y >= 14 { y - 12 } else { y + h + 4 };
            draw_label(&mut img, label, x, ly, 2);
        }
    }
    Some(encode_png(&img))
}
