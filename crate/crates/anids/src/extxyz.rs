//! Extended XYZ reader and writer.
//!
//! Each frame is an atom count, a comment line of `key=value` pairs, and one
//! line per atom. The `Properties` key names the per-atom columns; `species`
//! and `pos` are required, `forces` (or `force`) is read when present. A
//! frame-level `energy` is read when present. `Lattice` and `pbc` are
//! accepted and ignored.

use std::fmt::Write as _;

use anids_core::moldata::Molecule;
use anids_core::Vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

const SYMBOLS: [&str; 36] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
];

pub fn atomic_number(symbol: &str) -> Option<u32> {
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(symbol))
        .map(|i| i as u32 + 1)
}

pub fn symbol(z: u32) -> Option<&'static str> {
    SYMBOLS.get((z as usize).checked_sub(1)?).copied()
}

/// Splits `a=1 b="x y" c` into pairs; bare words map to an empty value.
fn key_values(line: &str, lineno: usize) -> Result<Vec<(String, String)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            return Ok(out);
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        let mut value = String::new();
        if chars.peek() == Some(&'=') {
            chars.next();
            if chars.peek() == Some(&'"') {
                chars.next();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(c) => value.push(c),
                        None => return Err(err(lineno, format!("unterminated quote in value of {key}"))),
                    }
                }
            } else {
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() {
                        break;
                    }
                    value.push(c);
                    chars.next();
                }
            }
        }
        out.push((key, value));
    }
}

#[derive(Debug, Clone, Copy)]
struct Columns {
    species: usize,
    pos: usize,
    forces: Option<usize>,
    width: usize,
}

fn columns(spec: &str, lineno: usize) -> Result<Columns, ParseError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if !parts.len().is_multiple_of(3) {
        return Err(err(lineno, format!("malformed Properties '{spec}'")));
    }
    let (mut species, mut pos, mut forces, mut width) = (None, None, None, 0);
    for p in parts.chunks(3) {
        let count: usize = p[2].parse().map_err(|_| err(lineno, format!("bad column count in '{}'", p.join(":"))))?;
        match (p[0], p[1], count) {
            ("species", "S" | "I", 1) => species = Some(width),
            ("pos", "R", 3) => pos = Some(width),
            ("forces" | "force", "R", 3) => forces = Some(width),
            ("species" | "pos" | "forces" | "force", _, _) => {
                return Err(err(lineno, format!("unexpected type for column '{}'", p.join(":"))))
            }
            _ => {}
        }
        width += count;
    }
    Ok(Columns {
        species: species.ok_or_else(|| err(lineno, "Properties lacks species"))?,
        pos: pos.ok_or_else(|| err(lineno, "Properties lacks pos"))?,
        forces,
        width,
    })
}

const DEFAULT_COLUMNS: Columns = Columns { species: 0, pos: 1, forces: None, width: 4 };

pub fn parse(text: &str) -> Result<Vec<Molecule>, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        if lines[k].trim().is_empty() {
            k += 1;
            continue;
        }
        let count_line = k + 1;
        let n: usize = lines[k]
            .trim()
            .parse()
            .map_err(|_| err(count_line, format!("expected atom count, found '{}'", lines[k].trim())))?;
        let comment = *lines.get(k + 1).ok_or_else(|| err(count_line + 1, "missing comment line"))?;
        let kv = key_values(comment, count_line + 1)?;
        let mut cols = DEFAULT_COLUMNS;
        let mut energy = None;
        for (key, value) in &kv {
            match key.to_ascii_lowercase().as_str() {
                "properties" => cols = columns(value, count_line + 1)?,
                "energy" => {
                    energy = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| err(count_line + 1, format!("bad energy '{value}'")))?,
                    )
                }
                _ => {}
            }
        }

        let mut z = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut f = Vec::with_capacity(n);
        for a in 0..n {
            let lineno = k + 3 + a;
            let line = *lines.get(k + 2 + a).ok_or_else(|| err(lineno, format!("frame ends after {a} of {n} atoms")))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < cols.width {
                return Err(err(lineno, format!("expected {} columns, found {}", cols.width, fields.len())));
            }
            let sp = fields[cols.species];
            let number = atomic_number(sp)
                .or_else(|| sp.parse::<u32>().ok().filter(|&v| v > 0))
                .ok_or_else(|| err(lineno, format!("unknown species '{sp}'")))?;
            let real = |c: usize| -> Result<f64, ParseError> {
                let v: f64 = fields[c].parse().map_err(|_| err(lineno, format!("bad number '{}'", fields[c])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(lineno, format!("non-finite value '{}'", fields[c])))
                }
            };
            let vec = |c: usize| -> Result<Vec3, ParseError> { Ok(Vec3::new(real(c)?, real(c + 1)?, real(c + 2)?)) };
            z.push(number);
            x.push(vec(cols.pos)?);
            if let Some(c) = cols.forces {
                f.push(vec(c)?);
            }
        }
        frames.push(Molecule {
            atomic_numbers: z,
            positions: x,
            forces: cols.forces.map(|_| f),
            energy,
        });
        k += 2 + n;
    }
    Ok(frames)
}

/// Appends one frame. Numbers use the shortest representation that reads
/// back to the same `f64`.
pub fn write_frame(out: &mut String, mol: &Molecule) {
    let _ = writeln!(out, "{}", mol.len());
    out.push_str("Properties=species:S:1:pos:R:3");
    if mol.forces.is_some() {
        out.push_str(":forces:R:3");
    }
    if let Some(e) = mol.energy {
        let _ = write!(out, " energy={e:?}");
    }
    out.push_str(" pbc=\"F F F\"\n");
    for (i, (z, x)) in mol.atomic_numbers.iter().zip(&mol.positions).enumerate() {
        let sym = symbol(*z).map(str::to_string).unwrap_or_else(|| z.to_string());
        let _ = write!(out, "{sym} {:?} {:?} {:?}", x.x, x.y, x.z);
        if let Some(f) = &mol.forces {
            let _ = write!(out, " {:?} {:?} {:?}", f[i].x, f[i].y, f[i].z);
        }
        out.push('\n');
    }
}

pub fn to_string(frames: &[Molecule]) -> String {
    let mut s = String::new();
    for m in frames {
        write_frame(&mut s, m);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_labelled_frame() {
        let text = "2\nLattice=\"10 0 0 0 10 0 0 0 10\" Properties=species:S:1:pos:R:3:forces:R:3 energy=-3.5 pbc=\"T T T\"\n\
                    O 0.0 0.0 0.0 0.1 0.2 0.3\nH 0.96 0 0 -0.1 -0.2 -0.3\n";
        let f = parse(text).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].atomic_numbers, vec![8, 1]);
        assert_eq!(f[0].energy, Some(-3.5));
        assert_eq!(f[0].forces.as_ref().unwrap()[1], Vec3::new(-0.1, -0.2, -0.3));
    }

    #[test]
    fn plain_xyz_has_no_labels() {
        let f = parse("1\nwater fragment\nO 1 2 3\n").unwrap();
        assert_eq!(f[0].positions[0], Vec3::new(1.0, 2.0, 3.0));
        assert!(f[0].forces.is_none() && f[0].energy.is_none());
    }

    #[test]
    fn extra_columns_are_skipped() {
        let text = "1\nProperties=species:S:1:charge:R:1:pos:R:3\nC 0.5 1 2 3\n";
        assert_eq!(parse(text).unwrap()[0].positions[0], Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("2\n\nH 0 0 0\nH 0 0 x\n").unwrap_err();
        assert_eq!(e.line, 4);
        let e = parse("3\n\nH 0 0 0\n").unwrap_err();
        assert_eq!(e.line, 4);
        let e = parse("two\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse("1\n\nXx 0 0 0\n").unwrap_err();
        assert!(e.message.contains("species"));
        let e = parse("1\nProperties=species:S:1\nH\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn round_trip_is_exact() {
        let m = Molecule {
            atomic_numbers: vec![1, 8],
            positions: vec![Vec3::new(0.1 + 0.2, -1e-17, 3.0), Vec3::new(1.0 / 3.0, 2.0, -0.0)],
            forces: Some(vec![Vec3::new(1e300, -2.5, 0.0), Vec3::new(0.7, 0.0, 5e-324)]),
            energy: Some(-1234.56789),
        };
        let text = to_string(&[m.clone(), m.clone()]);
        assert_eq!(parse(&text).unwrap(), vec![m.clone(), m]);
    }
}
