//! A deliberately small DICOM reader.
//!
//! Scope: uncompressed explicit-VR little-endian files holding one 16-bit
//! unsigned monochrome frame. Everything the pipeline needs (dimensions,
//! photometric interpretation, window center/width, view position, pixel
//! data) is parsed; every other element is skipped by its declared length.
//! Anything outside that envelope is rejected with an error naming the
//! offending element, never converted wrongly: compressed transfer
//! syntaxes, signed or non-16-bit pixels, color, multi-frame, non-identity
//! rescale, and undefined-length values.

use super::{DicomImage, RawImage, WindowParams, WindowingError};

const EXPLICIT_VR_LE: &str = "1.2.840.10008.1.2.1";

const TAG_TRANSFER_SYNTAX: (u16, u16) = (0x0002, 0x0010);
const TAG_VIEW_POSITION: (u16, u16) = (0x0018, 0x5101);
const TAG_SAMPLES_PER_PIXEL: (u16, u16) = (0x0028, 0x0002);
const TAG_PHOTOMETRIC: (u16, u16) = (0x0028, 0x0004);
const TAG_NUMBER_OF_FRAMES: (u16, u16) = (0x0028, 0x0008);
const TAG_ROWS: (u16, u16) = (0x0028, 0x0010);
const TAG_COLUMNS: (u16, u16) = (0x0028, 0x0011);
const TAG_BITS_ALLOCATED: (u16, u16) = (0x0028, 0x0100);
const TAG_PIXEL_REPRESENTATION: (u16, u16) = (0x0028, 0x0103);
const TAG_WINDOW_CENTER: (u16, u16) = (0x0028, 0x1050);
const TAG_WINDOW_WIDTH: (u16, u16) = (0x0028, 0x1051);
const TAG_RESCALE_INTERCEPT: (u16, u16) = (0x0028, 0x1052);
const TAG_RESCALE_SLOPE: (u16, u16) = (0x0028, 0x1053);
const TAG_PIXEL_DATA: (u16, u16) = (0x7FE0, 0x0010);

fn tag_name(tag: (u16, u16)) -> String {
    let name = match tag {
        TAG_TRANSFER_SYNTAX => " TransferSyntaxUID",
        TAG_VIEW_POSITION => " ViewPosition",
        TAG_SAMPLES_PER_PIXEL => " SamplesPerPixel",
        TAG_PHOTOMETRIC => " PhotometricInterpretation",
        TAG_NUMBER_OF_FRAMES => " NumberOfFrames",
        TAG_ROWS => " Rows",
        TAG_COLUMNS => " Columns",
        TAG_BITS_ALLOCATED => " BitsAllocated",
        TAG_PIXEL_REPRESENTATION => " PixelRepresentation",
        TAG_WINDOW_CENTER => " WindowCenter",
        TAG_WINDOW_WIDTH => " WindowWidth",
        TAG_RESCALE_INTERCEPT => " RescaleIntercept",
        TAG_RESCALE_SLOPE => " RescaleSlope",
        TAG_PIXEL_DATA => " PixelData",
        _ => "",
    };
    format!("({:04X},{:04X}){name}", tag.0, tag.1)
}

fn unsupported(tag: (u16, u16), reason: impl Into<String>) -> WindowingError {
    WindowingError::UnsupportedDicom {
        element: tag_name(tag),
        reason: reason.into(),
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        Self { data, pos }
    }

    fn malformed(&self, msg: impl Into<String>) -> WindowingError {
        WindowingError::MalformedDicom {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WindowingError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.data.len())
            .ok_or_else(|| self.malformed(format!("truncated: need {n} more bytes")))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, WindowingError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, WindowingError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn peek_group(&self) -> Option<u16> {
        let b = self.data.get(self.pos..self.pos + 2)?;
        Some(u16::from_le_bytes([b[0], b[1]]))
    }
}

struct Element<'a> {
    tag: (u16, u16),
    value: &'a [u8],
}

/// Value representations that use the long (reserved + 32-bit length) form.
fn long_form_vr(vr: &[u8; 2]) -> bool {
    matches!(vr, b"OB" | b"OW" | b"OF" | b"SQ" | b"UT" | b"UN")
}

fn read_element<'a>(cur: &mut Cursor<'a>) -> Result<Element<'a>, WindowingError> {
    let group = cur.u16()?;
    let element = cur.u16()?;
    let tag = (group, element);
    let vr_bytes = cur.take(2)?;
    let vr: [u8; 2] = [vr_bytes[0], vr_bytes[1]];
    if !vr.iter().all(u8::is_ascii_uppercase) {
        return Err(WindowingError::MalformedDicom {
            offset: cur.pos - 2,
            msg: format!("element {}: invalid VR bytes {vr:?}", tag_name(tag)),
        });
    }
    let length = if long_form_vr(&vr) {
        cur.take(2)?;
        cur.u32()?
    } else {
        u32::from(cur.u16()?)
    };
    if length == 0xFFFF_FFFF {
        return Err(unsupported(
            tag,
            "undefined-length value cannot be skipped by this reader",
        ));
    }
    let value = cur.take(length as usize)?;
    Ok(Element { tag, value })
}

fn ascii_value(tag: (u16, u16), bytes: &[u8]) -> Result<String, WindowingError> {
    let s = std::str::from_utf8(bytes)
        .map_err(|_| unsupported(tag, "value is not valid character data"))?;
    Ok(s.trim_matches(|c: char| c == ' ' || c == '\0').to_string())
}

fn us_value(tag: (u16, u16), bytes: &[u8]) -> Result<u16, WindowingError> {
    if bytes.len() != 2 {
        return Err(unsupported(
            tag,
            format!("expected a single 16-bit value, got {} bytes", bytes.len()),
        ));
    }
    Ok(u16::from_le_bytes([bytes[0], bytes[1]]))
}

/// Decimal string, possibly multi-valued with backslash separators.
fn ds_values(tag: (u16, u16), bytes: &[u8]) -> Result<Vec<f64>, WindowingError> {
    let text = ascii_value(tag, bytes)?;
    text.split('\\')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| unsupported(tag, format!("unparseable decimal value {part:?}")))
        })
        .collect()
}

pub(super) fn parse(bytes: &[u8]) -> Result<DicomImage, WindowingError> {
    if bytes.len() < 132 || &bytes[128..132] != b"DICM" {
        return Err(WindowingError::MalformedDicom {
            offset: 128,
            msg: "missing DICM magic after 128-byte preamble".to_string(),
        });
    }
    let mut cur = Cursor::new(bytes, 132);

    // File meta group: always explicit-VR little-endian, group 0002.
    let mut transfer_syntax: Option<String> = None;
    while cur.peek_group() == Some(0x0002) {
        let el = read_element(&mut cur)?;
        if el.tag == TAG_TRANSFER_SYNTAX {
            transfer_syntax = Some(ascii_value(el.tag, el.value)?);
        }
    }
    let ts = transfer_syntax
        .ok_or_else(|| unsupported(TAG_TRANSFER_SYNTAX, "missing from file meta group"))?;
    if ts != EXPLICIT_VR_LE {
        return Err(unsupported(
            TAG_TRANSFER_SYNTAX,
            format!("transfer syntax {ts:?} not supported; only {EXPLICIT_VR_LE:?}"),
        ));
    }

    let mut view_position: Option<String> = None;
    let mut photometric: Option<String> = None;
    let mut rows: Option<u16> = None;
    let mut columns: Option<u16> = None;
    let mut bits_allocated: Option<u16> = None;
    let mut wc: Option<Vec<f64>> = None;
    let mut ww: Option<Vec<f64>> = None;
    let mut pixel_data: Option<&[u8]> = None;

    while !cur.at_end() {
        let el = read_element(&mut cur)?;
        match el.tag {
            TAG_VIEW_POSITION => {
                let v = ascii_value(el.tag, el.value)?;
                if !v.is_empty() {
                    view_position = Some(v);
                }
            }
            TAG_SAMPLES_PER_PIXEL => {
                let v = us_value(el.tag, el.value)?;
                if v != 1 {
                    return Err(unsupported(
                        el.tag,
                        format!("{v} samples per pixel; need 1"),
                    ));
                }
            }
            TAG_PHOTOMETRIC => photometric = Some(ascii_value(el.tag, el.value)?),
            TAG_NUMBER_OF_FRAMES => {
                let v = ascii_value(el.tag, el.value)?;
                if v != "1" {
                    return Err(unsupported(el.tag, format!("{v:?} frames; need 1")));
                }
            }
            TAG_ROWS => rows = Some(us_value(el.tag, el.value)?),
            TAG_COLUMNS => columns = Some(us_value(el.tag, el.value)?),
            TAG_BITS_ALLOCATED => bits_allocated = Some(us_value(el.tag, el.value)?),
            TAG_PIXEL_REPRESENTATION => {
                let v = us_value(el.tag, el.value)?;
                if v != 0 {
                    return Err(unsupported(el.tag, "signed pixel data not supported"));
                }
            }
            TAG_WINDOW_CENTER => wc = Some(ds_values(el.tag, el.value)?),
            TAG_WINDOW_WIDTH => ww = Some(ds_values(el.tag, el.value)?),
            TAG_RESCALE_INTERCEPT => {
                let v = ds_values(el.tag, el.value)?;
                if v != [0.0] {
                    return Err(unsupported(
                        el.tag,
                        format!("non-identity rescale intercept {v:?}"),
                    ));
                }
            }
            TAG_RESCALE_SLOPE => {
                let v = ds_values(el.tag, el.value)?;
                if v != [1.0] {
                    return Err(unsupported(
                        el.tag,
                        format!("non-identity rescale slope {v:?}"),
                    ));
                }
            }
            TAG_PIXEL_DATA => pixel_data = Some(el.value),
            _ => {} // skipped by length
        }
    }

    let photometric = photometric.ok_or_else(|| unsupported(TAG_PHOTOMETRIC, "missing"))?;
    let inverted = match photometric.as_str() {
        "MONOCHROME1" => true,
        "MONOCHROME2" => false,
        other => {
            return Err(unsupported(
                TAG_PHOTOMETRIC,
                format!("photometric interpretation {other:?}; need MONOCHROME1/2"),
            ))
        }
    };
    let rows = rows.ok_or_else(|| unsupported(TAG_ROWS, "missing"))?;
    let columns = columns.ok_or_else(|| unsupported(TAG_COLUMNS, "missing"))?;
    let bits = bits_allocated.ok_or_else(|| unsupported(TAG_BITS_ALLOCATED, "missing"))?;
    if bits != 16 {
        return Err(unsupported(
            TAG_BITS_ALLOCATED,
            format!("{bits} bits allocated; need 16"),
        ));
    }
    let wc = wc.ok_or_else(|| unsupported(TAG_WINDOW_CENTER, "missing"))?;
    let ww = ww.ok_or_else(|| unsupported(TAG_WINDOW_WIDTH, "missing"))?;
    if wc.is_empty() || wc.len() != ww.len() {
        return Err(unsupported(
            TAG_WINDOW_WIDTH,
            format!(
                "{} width value(s) for {} center value(s)",
                ww.len(),
                wc.len()
            ),
        ));
    }
    let pixel_data = pixel_data.ok_or_else(|| unsupported(TAG_PIXEL_DATA, "missing"))?;

    let n_pixels = usize::from(rows) * usize::from(columns);
    if pixel_data.len() < n_pixels * 2 {
        return Err(unsupported(
            TAG_PIXEL_DATA,
            format!(
                "{} bytes of pixel data; need {}",
                pixel_data.len(),
                n_pixels * 2
            ),
        ));
    }
    let pixels: Vec<u16> = pixel_data[..n_pixels * 2]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();

    let windows: Vec<WindowParams> = wc
        .into_iter()
        .zip(ww)
        .map(|(c, w)| WindowParams::new(c, w))
        .collect::<Result<_, _>>()?;

    Ok(DicomImage {
        image: RawImage::new(u32::from(columns), u32::from(rows), pixels, inverted)?,
        windows,
        view_position,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Writes fixture files byte-by-byte against the transfer-syntax layout,
    /// independent of the parser above.
    struct FixtureBuilder {
        dataset: Vec<u8>,
        transfer_syntax: String,
    }

    fn pad_even(mut v: Vec<u8>, pad: u8) -> Vec<u8> {
        if !v.len().is_multiple_of(2) {
            v.push(pad);
        }
        v
    }

    fn short_element(tag: (u16, u16), vr: &[u8; 2], value: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&tag.0.to_le_bytes());
        out.extend_from_slice(&tag.1.to_le_bytes());
        out.extend_from_slice(vr);
        out.extend_from_slice(&u16::try_from(value.len()).unwrap().to_le_bytes());
        out.extend_from_slice(value);
        out
    }

    fn long_element(tag: (u16, u16), vr: &[u8; 2], value: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&tag.0.to_le_bytes());
        out.extend_from_slice(&tag.1.to_le_bytes());
        out.extend_from_slice(vr);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&u32::try_from(value.len()).unwrap().to_le_bytes());
        out.extend_from_slice(value);
        out
    }

    impl FixtureBuilder {
        fn new() -> Self {
            Self {
                dataset: Vec::new(),
                transfer_syntax: EXPLICIT_VR_LE.to_string(),
            }
        }

        fn transfer_syntax(mut self, ts: &str) -> Self {
            self.transfer_syntax = ts.to_string();
            self
        }

        fn string(mut self, tag: (u16, u16), vr: &[u8; 2], value: &str) -> Self {
            let padded = pad_even(value.as_bytes().to_vec(), b' ');
            self.dataset.extend(short_element(tag, vr, &padded));
            self
        }

        fn us(mut self, tag: (u16, u16), value: u16) -> Self {
            self.dataset
                .extend(short_element(tag, b"US", &value.to_le_bytes()));
            self
        }

        fn raw(mut self, element: Vec<u8>) -> Self {
            self.dataset.extend(element);
            self
        }

        fn pixel_data(mut self, pixels: &[u16]) -> Self {
            let bytes: Vec<u8> = pixels.iter().flat_map(|p| p.to_le_bytes()).collect();
            self.dataset
                .extend(long_element(TAG_PIXEL_DATA, b"OW", &bytes));
            self
        }

        fn build(self) -> Vec<u8> {
            let ts_value = pad_even(self.transfer_syntax.into_bytes(), 0);
            let ts_element = short_element(TAG_TRANSFER_SYNTAX, b"UI", &ts_value);
            let group_len = short_element(
                (0x0002, 0x0000),
                b"UL",
                &(ts_element.len() as u32).to_le_bytes(),
            );
            let mut out = vec![0u8; 128];
            out.extend_from_slice(b"DICM");
            out.extend(group_len);
            out.extend(ts_element);
            out.extend(self.dataset);
            out
        }
    }

    /// 2x2 monochrome fixture with the standard attributes present.
    fn standard_fixture() -> FixtureBuilder {
        FixtureBuilder::new()
            .string(TAG_VIEW_POSITION, b"CS", "PA")
            .us(TAG_SAMPLES_PER_PIXEL, 1)
            .string(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2")
            .us(TAG_ROWS, 2)
            .us(TAG_COLUMNS, 2)
            .us(TAG_BITS_ALLOCATED, 16)
            .us((0x0028, 0x0101), 16) // bits stored, skipped by the reader
            .us(TAG_PIXEL_REPRESENTATION, 0)
            .string(TAG_WINDOW_CENTER, b"DS", "40\\80")
            .string(TAG_WINDOW_WIDTH, b"DS", "400\\200")
            .pixel_data(&[10, 20, 30, 40])
    }

    #[test]
    fn parses_multi_valued_windows_in_file_order() {
        let parsed = parse(&standard_fixture().build()).unwrap();
        let pairs: Vec<(f64, f64)> = parsed.windows.iter().map(|w| (w.wc(), w.ww())).collect();
        assert_eq!(pairs, vec![(40.0, 400.0), (80.0, 200.0)]);
        assert_eq!(parsed.image.pixels(), &[10, 20, 30, 40]);
        assert_eq!(parsed.image.width(), 2);
        assert_eq!(parsed.image.height(), 2);
        assert_eq!(parsed.view_position.as_deref(), Some("PA"));
        assert!(!parsed.image.monochrome_inverted());
    }

    #[test]
    fn parses_single_window() {
        let bytes = FixtureBuilder::new()
            .us(TAG_SAMPLES_PER_PIXEL, 1)
            .string(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2")
            .us(TAG_ROWS, 1)
            .us(TAG_COLUMNS, 1)
            .us(TAG_BITS_ALLOCATED, 16)
            .string(TAG_WINDOW_CENTER, b"DS", "50")
            .string(TAG_WINDOW_WIDTH, b"DS", "100")
            .pixel_data(&[123])
            .build();
        let parsed = parse(&bytes).unwrap();
        assert_eq!(parsed.windows.len(), 1);
        assert_eq!(
            (parsed.windows[0].wc(), parsed.windows[0].ww()),
            (50.0, 100.0)
        );
        assert_eq!(parsed.view_position, None);
    }

    #[test]
    fn compressed_transfer_syntax_rejected_by_name() {
        let bytes = standard_fixture()
            .transfer_syntax("1.2.840.10008.1.2.4.50")
            .build();
        let err = parse(&bytes).unwrap_err();
        match err {
            WindowingError::UnsupportedDicom { element, reason } => {
                assert!(element.contains("(0002,0010)"), "{element}");
                assert!(reason.contains("1.2.840.10008.1.2.4.50"), "{reason}");
            }
            other => panic!("expected UnsupportedDicom, got {other}"),
        }
    }

    #[test]
    fn implicit_vr_rejected() {
        let bytes = standard_fixture()
            .transfer_syntax("1.2.840.10008.1.2")
            .build();
        assert!(matches!(
            parse(&bytes),
            Err(WindowingError::UnsupportedDicom { .. })
        ));
    }

    #[test]
    fn monochrome1_sets_inversion_flag() {
        let mut b = FixtureBuilder::new().us(TAG_SAMPLES_PER_PIXEL, 1).string(
            TAG_PHOTOMETRIC,
            b"CS",
            "MONOCHROME1",
        );
        b = b
            .us(TAG_ROWS, 1)
            .us(TAG_COLUMNS, 1)
            .us(TAG_BITS_ALLOCATED, 16)
            .string(TAG_WINDOW_CENTER, b"DS", "50")
            .string(TAG_WINDOW_WIDTH, b"DS", "100")
            .pixel_data(&[1]);
        assert!(parse(&b.build()).unwrap().image.monochrome_inverted());
    }

    #[test]
    fn color_photometric_rejected() {
        let bytes = FixtureBuilder::new()
            .string(TAG_PHOTOMETRIC, b"CS", "RGB")
            .us(TAG_ROWS, 1)
            .us(TAG_COLUMNS, 1)
            .us(TAG_BITS_ALLOCATED, 16)
            .string(TAG_WINDOW_CENTER, b"DS", "50")
            .string(TAG_WINDOW_WIDTH, b"DS", "100")
            .pixel_data(&[1])
            .build();
        let err = parse(&bytes).unwrap_err();
        match err {
            WindowingError::UnsupportedDicom { element, reason } => {
                assert!(element.contains("(0028,0004)"), "{element}");
                assert!(reason.contains("RGB"), "{reason}");
            }
            other => panic!("expected UnsupportedDicom, got {other}"),
        }
    }

    #[test]
    fn missing_window_center_rejected_by_name() {
        let bytes = FixtureBuilder::new()
            .string(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2")
            .us(TAG_ROWS, 1)
            .us(TAG_COLUMNS, 1)
            .us(TAG_BITS_ALLOCATED, 16)
            .string(TAG_WINDOW_WIDTH, b"DS", "100")
            .pixel_data(&[1])
            .build();
        let err = parse(&bytes).unwrap_err();
        assert!(err.to_string().contains("(0028,1050)"), "{err}");
    }

    #[test]
    fn window_count_mismatch_rejected() {
        let bytes = FixtureBuilder::new()
            .string(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2")
            .us(TAG_ROWS, 1)
            .us(TAG_COLUMNS, 1)
            .us(TAG_BITS_ALLOCATED, 16)
            .string(TAG_WINDOW_CENTER, b"DS", "40\\80")
            .string(TAG_WINDOW_WIDTH, b"DS", "400")
            .pixel_data(&[1])
            .build();
        let err = parse(&bytes).unwrap_err();
        assert!(err.to_string().contains("(0028,1051)"), "{err}");
    }

    #[test]
    fn identity_rescale_accepted_non_identity_rejected() {
        let ok = standard_fixture()
            .string(TAG_RESCALE_INTERCEPT, b"DS", "0")
            .string(TAG_RESCALE_SLOPE, b"DS", "1")
            .build();
        assert!(parse(&ok).is_ok());

        let bad = standard_fixture()
            .string(TAG_RESCALE_INTERCEPT, b"DS", "0")
            .string(TAG_RESCALE_SLOPE, b"DS", "2")
            .build();
        let err = parse(&bad).unwrap_err();
        assert!(err.to_string().contains("(0028,1053)"), "{err}");

        let bad2 = standard_fixture()
            .string(TAG_RESCALE_INTERCEPT, b"DS", "-1024")
            .build();
        let err2 = parse(&bad2).unwrap_err();
        assert!(err2.to_string().contains("(0028,1052)"), "{err2}");
    }

    #[test]
    fn truncated_pixel_data_rejected() {
        let bytes = FixtureBuilder::new()
            .string(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2")
            .us(TAG_ROWS, 2)
            .us(TAG_COLUMNS, 2)
            .us(TAG_BITS_ALLOCATED, 16)
            .string(TAG_WINDOW_CENTER, b"DS", "50")
            .string(TAG_WINDOW_WIDTH, b"DS", "100")
            .pixel_data(&[1, 2]) // four pixels declared, two stored
            .build();
        let err = parse(&bytes).unwrap_err();
        assert!(err.to_string().contains("(7FE0,0010)"), "{err}");
    }

    #[test]
    fn missing_pixel_data_rejected() {
        let bytes = FixtureBuilder::new()
            .string(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2")
            .us(TAG_ROWS, 1)
            .us(TAG_COLUMNS, 1)
            .us(TAG_BITS_ALLOCATED, 16)
            .string(TAG_WINDOW_CENTER, b"DS", "50")
            .string(TAG_WINDOW_WIDTH, b"DS", "100")
            .build();
        let err = parse(&bytes).unwrap_err();
        assert!(err.to_string().contains("(7FE0,0010)"), "{err}");
    }

    #[test]
    fn unknown_elements_are_skipped() {
        let private = short_element((0x0009, 0x0010), b"LO", b"VENDORNAME");
        let sequence = long_element((0x0008, 0x1140), b"SQ", &[]);
        let bytes = standard_fixture().raw(private).raw(sequence).build();
        assert!(parse(&bytes).is_ok());
    }

    #[test]
    fn undefined_length_sequence_rejected() {
        let mut sq = Vec::new();
        sq.extend_from_slice(&0x0008u16.to_le_bytes());
        sq.extend_from_slice(&0x1140u16.to_le_bytes());
        sq.extend_from_slice(b"SQ");
        sq.extend_from_slice(&[0, 0]);
        sq.extend_from_slice(&0xFFFF_FFFFu32.to_le_bytes());
        let bytes = standard_fixture().raw(sq).build();
        let err = parse(&bytes).unwrap_err();
        assert!(
            matches!(err, WindowingError::UnsupportedDicom { .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_magic_rejected() {
        let mut bytes = standard_fixture().build();
        bytes[130] = b'X';
        assert!(matches!(
            parse(&bytes),
            Err(WindowingError::MalformedDicom { offset: 128, .. })
        ));
        assert!(matches!(
            parse(&[0u8; 64]),
            Err(WindowingError::MalformedDicom { .. })
        ));
    }

    #[test]
    fn multi_frame_rejected() {
        let bytes = standard_fixture()
            .string(TAG_NUMBER_OF_FRAMES, b"IS", "2")
            .build();
        let err = parse(&bytes).unwrap_err();
        assert!(err.to_string().contains("(0028,0008)"), "{err}");
    }

    #[test]
    fn eight_bit_and_signed_pixels_rejected() {
        let eight = FixtureBuilder::new()
            .string(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2")
            .us(TAG_ROWS, 1)
            .us(TAG_COLUMNS, 1)
            .us(TAG_BITS_ALLOCATED, 8)
            .string(TAG_WINDOW_CENTER, b"DS", "50")
            .string(TAG_WINDOW_WIDTH, b"DS", "100")
            .pixel_data(&[1])
            .build();
        assert!(parse(&eight)
            .unwrap_err()
            .to_string()
            .contains("(0028,0100)"));

        let signed = standard_fixture().us(TAG_PIXEL_REPRESENTATION, 1).build();
        assert!(parse(&signed)
            .unwrap_err()
            .to_string()
            .contains("(0028,0103)"));
    }

    #[test]
    fn truncated_element_is_malformed() {
        let mut bytes = standard_fixture().build();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            parse(&bytes),
            Err(WindowingError::MalformedDicom { .. })
                | Err(WindowingError::UnsupportedDicom { .. })
        ));
    }
}
