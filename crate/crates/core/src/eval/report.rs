//! Compression/size reporting.

use crate::index::CompressionStats;

/// Human table plus machine-readable CSV for a list of labeled compression
/// stats. Byte counts are the exact on-disk sizes; a missing ratio (empty
/// corpus) renders as "n/a".
pub fn compression_report(stats: &[(String, CompressionStats)]) -> (String, String) {
    let mut csv = String::from("method,n_frames,raw_bytes,index_bytes,ratio,encode_seconds\n");
    let mut table = format!(
        "{:<14} {:>10} {:>14} {:>13} {:>10} {:>12}\n",
        "method", "frames", "raw bytes", "index bytes", "ratio", "encode (s)"
    );
    for (label, s) in stats {
        let ratio_csv = match s.ratio {
            Some(r) => format!("{r:.3}"),
            None => "n/a".to_string(),
        };
        csv.push_str(&format!(
            "{label},{},{},{},{ratio_csv},{:.4}\n",
            s.n_frames, s.raw_bytes, s.index_bytes, s.encode_seconds
        ));
        table.push_str(&format!(
            "{label:<14} {:>10} {:>14} {:>13} {:>10} {:>12.4}\n",
            s.n_frames, s.raw_bytes, s.index_bytes, ratio_csv, s.encode_seconds
        ));
    }
    (table, csv)
}
