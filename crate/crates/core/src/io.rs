//! Text and binary encodings of grid functions, trajectories and noise paths.
//!
//! A grid function is the flat record `N, h, re_0, im_0, ..., re_{N+1}, im_{N+1}`.
//! In binary form every field is a little-endian `f64` (so `N` is stored as a
//! float). Text output prints floats with 17 significant digits, enough for an
//! exact round trip.
//!
//! Binary trajectory layout:
//!
//! ```text
//! magic  "SNLSTRJ1"
//! header cfg_hash: u64, N: u64, dt: f64, lambda: f64, K: u64, seed: u64
//! repeat step: u64, t: f64, grid function record
//! ```

use std::io::{self, Read, Write};

use num_complex::Complex64;

use crate::grid::{GridFunction, UniformGrid};
use crate::scheme::SchemeConfig;

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"SNLSTRJ1";

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column names for [`grid_function_csv_fields`] on a grid with `n` interior nodes.
pub fn grid_function_csv_header(n: usize) -> Vec<String> {
    let mut cols = vec!["N".to_string(), "h".to_string()];
    for l in 0..n + 2 {
        cols.push(format!("re_{l}"));
        cols.push(format!("im_{l}"));
    }
    cols
}

pub fn grid_function_csv_fields(f: &GridFunction) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * f.values().len() + 2);
    out.push(f.grid().n_interior().to_string());
    out.push(fmt_f64(f.grid().step()));
    for z in f.values() {
        out.push(fmt_f64(z.re));
        out.push(fmt_f64(z.im));
    }
    out
}

pub fn parse_grid_function_csv(fields: &[&str]) -> io::Result<GridFunction> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let n: usize = fields
        .first()
        .ok_or_else(|| bad("empty record".into()))?
        .trim()
        .parse()
        .map_err(|e| bad(format!("bad N: {e}")))?;
    let grid = UniformGrid::new(n).map_err(|e| bad(e.to_string()))?;
    if fields.len() != 2 + 2 * grid.len() {
        return Err(bad(format!("expected {} fields, got {}", 2 + 2 * grid.len(), fields.len())));
    }
    let nums = fields[2..]
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("bad float {s:?}: {e}"))))
        .collect::<io::Result<Vec<f64>>>()?;
    let values = nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
    GridFunction::new(grid, values).map_err(|e| bad(e.to_string()))
}

pub fn write_grid_function_le(w: &mut impl Write, f: &GridFunction) -> io::Result<()> {
    w.write_all(&(f.grid().n_interior() as f64).to_le_bytes())?;
    w.write_all(&f.grid().step().to_le_bytes())?;
    for z in f.values() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_grid_function_le(r: &mut impl Read) -> io::Result<GridFunction> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let n = read_f64(r)?;
    if !(n >= 1.0 && n.fract() == 0.0) {
        return Err(bad(format!("bad node count {n}")));
    }
    let grid = UniformGrid::new(n as usize).map_err(|e| bad(e.to_string()))?;
    let _h = read_f64(r)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        values.push(Complex64::new(re, im));
    }
    GridFunction::new(grid, values).map_err(|e| bad(e.to_string()))
}

/// Identity of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryHeader {
    pub cfg_hash: u64,
    pub n_interior: u64,
    pub dt: f64,
    pub lambda: f64,
    pub modes: u64,
    pub seed: u64,
}

impl TrajectoryHeader {
    pub fn from_config(cfg: &SchemeConfig) -> Self {
        Self {
            cfg_hash: config_fingerprint(cfg),
            n_interior: cfg.n_interior as u64,
            dt: cfg.dt,
            lambda: cfg.regime.lambda(),
            modes: cfg.covariance.truncation() as u64,
            seed: cfg.seed,
        }
    }

    /// `# key=value` lines for the top of a CSV trajectory.
    pub fn csv_comment(&self) -> String {
        format!(
            "# cfg_hash={:016x}\n# N={}\n# dt={}\n# lambda={}\n# K={}\n# seed={}\n",
            self.cfg_hash,
            self.n_interior,
            fmt_f64(self.dt),
            self.lambda,
            self.modes,
            self.seed
        )
    }
}

/// 64-bit FNV-1a over a canonical rendering of every field that affects a run.
pub fn config_fingerprint(cfg: &SchemeConfig) -> u64 {
    let mut text = format!(
        "n={};dt={};t={};lambda={};seed={};fp_tol={};fp_max_iter={};fp_damping={};blowup={};q=",
        cfg.n_interior,
        fmt_f64(cfg.dt),
        fmt_f64(cfg.t_final),
        cfg.regime.lambda(),
        cfg.seed,
        fmt_f64(cfg.fp_tol),
        cfg.fp_max_iter,
        fmt_f64(cfg.fp_damping),
        fmt_f64(cfg.blowup_threshold),
    );
    for q in cfg.covariance.eigenvalues() {
        text.push_str(&fmt_f64(*q));
        text.push(',');
    }
    fnv1a64(text.as_bytes())
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Streaming writer for the binary trajectory format.
pub struct BinaryTrajectoryWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinaryTrajectoryWriter<W> {
    pub fn new(mut inner: W, header: &TrajectoryHeader) -> io::Result<Self> {
        inner.write_all(TRAJECTORY_MAGIC)?;
        inner.write_all(&header.cfg_hash.to_le_bytes())?;
        inner.write_all(&header.n_interior.to_le_bytes())?;
        inner.write_all(&header.dt.to_le_bytes())?;
        inner.write_all(&header.lambda.to_le_bytes())?;
        inner.write_all(&header.modes.to_le_bytes())?;
        inner.write_all(&header.seed.to_le_bytes())?;
        Ok(Self { inner })
    }

    pub fn snapshot(&mut self, step: u64, t: f64, u: &GridFunction) -> io::Result<()> {
        self.inner.write_all(&step.to_le_bytes())?;
        self.inner.write_all(&t.to_le_bytes())?;
        write_grid_function_le(&mut self.inner, u)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// One stored state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub t: f64,
    pub u: GridFunction,
}

/// Reads a whole binary trajectory.
pub fn read_binary_trajectory(r: &mut impl Read) -> io::Result<(TrajectoryHeader, Vec<Snapshot>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a trajectory file"));
    }
    let header = TrajectoryHeader {
        cfg_hash: read_u64(r)?,
        n_interior: read_u64(r)?,
        dt: read_f64(r)?,
        lambda: read_f64(r)?,
        modes: read_u64(r)?,
        seed: read_u64(r)?,
    };
    let mut snapshots = Vec::new();
    loop {
        let mut b = [0u8; 8];
        match r.read_exact(&mut b) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        }
        let step = u64::from_le_bytes(b);
        let t = read_f64(r)?;
        let u = read_grid_function_le(r)?;
        snapshots.push(Snapshot { step, t, u });
    }
    Ok((header, snapshots))
}

/// `step,k,xi` rows for one step's draws; `k` is 1-based.
pub fn noise_path_rows(step: u64, draws: &[f64]) -> impl Iterator<Item = [String; 3]> + '_ {
    draws
        .iter()
        .enumerate()
        .map(move |(k, xi)| [step.to_string(), (k + 1).to_string(), fmt_f64(*xi)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fmt_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn binary_trajectory_round_trip() {
        let cfg = SchemeConfig {
            n_interior: 3,
            ..SchemeConfig::default()
        };
        let header = TrajectoryHeader::from_config(&cfg);
        let g = UniformGrid::new(3).unwrap();
        let a = GridFunction::dirichlet_from_fn(g, |x| Complex64::new(x, -x));
        let mut w = BinaryTrajectoryWriter::new(Vec::new(), &header).unwrap();
        w.snapshot(0, 0.0, &a).unwrap();
        w.snapshot(10, 1e-3, &a.rotate(0.3)).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(bytes.len(), 8 + 48 + 2 * (16 + 8 * (2 + 2 * 5)));
        let (h, snaps) = read_binary_trajectory(&mut bytes.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(snaps.len(), 2);
        assert_eq!(snaps[1].step, 10);
        assert_eq!(snaps[1].u, a.rotate(0.3));
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = SchemeConfig::default();
        let mut b = a.clone();
        assert_eq!(config_fingerprint(&a), config_fingerprint(&b));
        b.seed = 1;
        assert_ne!(config_fingerprint(&a), config_fingerprint(&b));
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_binary_trajectory(&mut &b"NOTMAGIC"[..]).is_err());
        assert!(parse_grid_function_csv(&["2", "0.3", "1"]).is_err());
    }

    proptest! {
        #[test]
        fn grid_function_encodings_round_trip(n in 1usize..20, seed in proptest::collection::vec(-1e3f64..1e3, 44)) {
            let g = UniformGrid::new(n).unwrap();
            let f = GridFunction::from_fn(g, |x| {
                let i = (x * g.intervals() as f64).round() as usize;
                Complex64::new(seed[2 * i], seed[2 * i + 1])
            });
            let mut bytes = Vec::new();
            write_grid_function_le(&mut bytes, &f).unwrap();
            prop_assert_eq!(&read_grid_function_le(&mut bytes.as_slice()).unwrap(), &f);

            let fields = grid_function_csv_fields(&f);
            prop_assert_eq!(fields.len(), grid_function_csv_header(n).len());
            let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
            prop_assert_eq!(&parse_grid_function_csv(&refs).unwrap(), &f);
        }
    }
}
