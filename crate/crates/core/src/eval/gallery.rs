//! Static HTML gallery for visual inspection of retrievals: one section per
//! query, one row per method, every image embedded as a base64 data URI so
//! the file is fully self-contained.

use std::fmt::Write as _;
use std::io::Cursor;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

use crate::dataio::Image;
use crate::error::{Error, Result};
use crate::retrieval::{CorpusAccess, RetrievalResult};

/// One query's worth of gallery content.
pub struct GalleryEntry {
    pub query_id: String,
    pub query_pixels: Image,
    /// `(method label, result)` rows, rendered in order.
    pub methods: Vec<(String, RetrievalResult)>,
}

fn png_data_uri(img: &Image) -> Result<String> {
    let rgb: image::RgbImage =
        image::RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8())
            .expect("buffer length matches extents");
    let mut bytes = Vec::new();
    rgb.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Numeric(format!("png encoding failed: {e}")))?;
    Ok(format!("data:image/png;base64,{}", BASE64.encode(bytes)))
}

fn cell(img: &Image, caption: &str) -> Result<String> {
    Ok(format!(
        "<figure class=\"cell\"><img src=\"{}\" alt=\"{caption}\"><figcaption>{caption}</figcaption></figure>",
        png_data_uri(img)?
    ))
}

/// Write the gallery. Candidate pixels come from `corpus`; a query list that
/// is empty still produces a valid page with an empty-state note.
pub fn render_gallery(
    entries: &[GalleryEntry],
    corpus: &dyn CorpusAccess,
    path: &Path,
) -> Result<()> {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n<title>retrieval gallery</title>\n<style>\n\
         body { font-family: sans-serif; background: #111; color: #ddd; margin: 1.5em; }\n\
         .row { display: flex; flex-wrap: wrap; gap: 6px; margin: 4px 0 14px; }\n\
         .cell { margin: 0; text-align: center; font-size: 11px; }\n\
         .cell img { display: block; width: 96px; height: auto; image-rendering: pixelated; }\n\
         h2 { border-bottom: 1px solid #444; padding-bottom: 4px; }\n\
         h3 { margin: 10px 0 2px; color: #9cf; }\n\
         </style></head><body>\n<h1>Retrieval gallery</h1>\n",
    );

    if entries.is_empty() {
        html.push_str("<p class=\"empty\">No queries to display.</p>\n");
    }
    for entry in entries {
        let _ = write!(html, "<h2>Query {}</h2>\n<div class=\"row\">", entry.query_id);
        html.push_str(&cell(&entry.query_pixels, "query")?);
        html.push_str("</div>\n");
        for (method, result) in &entry.methods {
            let _ = write!(html, "<h3>{method}</h3>\n<div class=\"row\">");
            for ranked in &result.ranked {
                let pixels = corpus.pixels(&ranked.frame_id)?;
                let caption = match ranked.siamese_distance {
                    Some(d) => format!(
                        "#{} {} l2 {:.3} siam {:.3}",
                        ranked.final_rank, ranked.frame_id, ranked.l2_score, d
                    ),
                    None => format!(
                        "#{} {} l2 {:.3}",
                        ranked.final_rank, ranked.frame_id, ranked.l2_score
                    ),
                };
                html.push_str(&cell(&pixels, &caption)?);
            }
            html.push_str("</div>\n");
        }
    }
    html.push_str("</body></html>\n");
    std::fs::write(path, html).map_err(|e| Error::io(path, e))
}
