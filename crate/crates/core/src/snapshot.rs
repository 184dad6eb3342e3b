//! Binary checkpoint format for a [`CrossbarCore`].
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "AIMCSNAP"
//! 8       4     format version (u32, currently 1)
//! 12      4     rows (u32)
//! 16      4     cols (u32)
//! 20      1     cell mode (0 = single device, 1 = two devices)
//! 21      1     bipolar correction (0/1)
//! 22      2     reserved, zero
//! 24      8     seed (u64)
//! 32      8     clock, s (f64)
//! 40      8     weight scale, uS per unit weight (f64)
//! 48      8     time per pulse update, s (f64)
//! 56      8     MVM counter (u64)
//! 64      8     pulse counter (u64)
//! 72      4     length L of the parameter block (u32)
//! 76      L     JSON object {"device": .., "adc": .., "encoding": ..}
//! 76+L    ...   rows*cols cell records, row-major
//! ```
//!
//! A cell record is four device records in the order plus A, plus B, minus A, minus B.
//! A device record is `g_prog, t_prog, nu, set_cap`, each an f64 (32 bytes).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossbar::{AdcParams, CellMode, CrossbarCore, InputEncoding, UnitCell};
use crate::device::{DeviceParams, DeviceState};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AIMCSNAP";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Params {
    device: DeviceParams,
    adc: AdcParams,
    encoding: InputEncoding,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Snapshot(msg.into())
}

pub fn write<W: Write>(core: &CrossbarCore, mut w: W) -> Result<()> {
    let dim = |n: usize| u32::try_from(n).map_err(|_| bad("dimension does not fit in u32"));
    let (mvm, pulse) = core.counters();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim(core.rows())?.to_le_bytes())?;
    w.write_all(&dim(core.cols())?.to_le_bytes())?;
    let mode = match core.mode() {
        CellMode::Single => 0u8,
        CellMode::Two => 1u8,
    };
    w.write_all(&[mode, core.bipolar_correction() as u8, 0, 0])?;
    w.write_all(&core.seed().to_le_bytes())?;
    for v in [core.clock(), core.weight_scale(), core.t_prog_step()] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&mvm.to_le_bytes())?;
    w.write_all(&pulse.to_le_bytes())?;
    let params = serde_json::to_vec(&Params {
        device: core.device_params().clone(),
        adc: core.adc().clone(),
        encoding: core.encoding().clone(),
    })?;
    w.write_all(&dim(params.len())?.to_le_bytes())?;
    w.write_all(&params)?;
    for cell in core.cells() {
        for d in [&cell.plus_a, &cell.plus_b, &cell.minus_a, &cell.minus_b] {
            for v in [d.g_prog, d.t_prog, d.nu, d.set_cap] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => bad("file is truncated"),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read<R: Read>(r: R) -> Result<CrossbarCore> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != MAGIC {
        return Err(bad("not a crossbar snapshot (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(bad("empty crossbar"));
    }
    let [mode, bipolar, _, _] = r.bytes::<4>()?;
    let mode = match mode {
        0 => CellMode::Single,
        1 => CellMode::Two,
        m => return Err(bad(format!("unknown cell mode {m}"))),
    };
    let seed = r.u64()?;
    let clock = r.f64()?;
    let weight_scale = r.f64()?;
    let t_prog_step = r.f64()?;
    let counters = (r.u64()?, r.u64()?);
    let len = r.u32()? as usize;
    let mut buf = vec![0u8; len];
    r.inner.read_exact(&mut buf).map_err(|_| bad("file is truncated"))?;
    let params: Params = serde_json::from_slice(&buf)?;
    params.device.validate()?;
    params.adc.validate()?;
    params.encoding.validate()?;

    let mut cells = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let mut dev = || -> Result<DeviceState> {
            Ok(DeviceState { g_prog: r.f64()?, t_prog: r.f64()?, nu: r.f64()?, set_cap: r.f64()? })
        };
        cells.push(UnitCell { plus_a: dev()?, plus_b: dev()?, minus_a: dev()?, minus_b: dev()? });
    }
    if r.inner.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes after the last cell record"));
    }
    let finite = [clock, weight_scale, t_prog_step].iter().all(|v| v.is_finite())
        && cells.iter().all(|c| {
            [&c.plus_a, &c.plus_b, &c.minus_a, &c.minus_b]
                .iter()
                .all(|d| d.g_prog.is_finite() && d.t_prog.is_finite() && d.nu.is_finite() && d.set_cap.is_finite())
        });
    if !finite {
        return Err(Error::NonFinite("snapshot"));
    }
    Ok(CrossbarCore::from_parts(
        rows,
        cols,
        cells,
        params.device,
        params.adc,
        params.encoding,
        mode,
        clock,
        seed,
        weight_scale,
        t_prog_step,
        bipolar != 0,
        counters,
    ))
}

pub fn save(core: &CrossbarCore, path: &Path) -> Result<()> {
    write(core, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<CrossbarCore> {
    read(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::CoreConfig;
    use crate::programming::DeviceSelectionPlan;
    use ndarray::Array2;

    fn programmed(mode: CellMode) -> CrossbarCore {
        let cfg = CoreConfig::preset(5, 3, DeviceParams::pcm1(), mode, 11);
        let mut core = CrossbarCore::build(&cfg).unwrap();
        let target = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - 2.0) * 0.2 + j as f64 * 0.1);
        let plan = DeviceSelectionPlan::for_core(&core, target.view()).unwrap();
        let u = Array2::from_shape_fn((5, 3), |(i, j)| 0.3 * ((i + j) % 3) as f64 - 0.2);
        core.apply_pulse_matrix(u.view(), &plan).unwrap();
        core.mvm_batch(Array2::ones((5, 2)).view()).unwrap();
        core
    }

    #[test]
    fn round_trip_is_exact() {
        for mode in [CellMode::Single, CellMode::Two] {
            let mut core = programmed(mode);
            let mut buf = vec![];
            write(&core, &mut buf).unwrap();
            let mut back = read(buf.as_slice()).unwrap();
            assert_eq!(back, core);
            // Both continue with the same noise streams.
            let x = Array2::from_elem((5, 4), 0.5);
            assert_eq!(back.mvm_batch(x.view()).unwrap(), core.mvm_batch(x.view()).unwrap());
        }
    }

    #[test]
    fn header_layout() {
        let core = programmed(CellMode::Two);
        let mut buf = vec![];
        write(&core, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 3);
        assert_eq!(buf[20], 1);
        let len = u32::from_le_bytes(buf[72..76].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 76 + len + 5 * 3 * 4 * 32);
        let first = 76 + len;
        let g = f64::from_le_bytes(buf[first..first + 8].try_into().unwrap());
        assert_eq!(g, core.cell(0, 0).plus_a.g_prog);
    }

    #[test]
    fn rejects_corruption() {
        let core = programmed(CellMode::Single);
        let mut buf = vec![];
        write(&core, &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read(bad_magic.as_slice()), Err(Error::Snapshot(_))));

        let mut bad_version = buf.clone();
        bad_version[8] = 9;
        assert!(matches!(read(bad_version.as_slice()), Err(Error::Snapshot(_))));

        assert!(matches!(read(&buf[..buf.len() - 3]), Err(Error::Snapshot(_))));

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(matches!(read(trailing.as_slice()), Err(Error::Snapshot(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("core.snap");
        let core = programmed(CellMode::Single);
        save(&core, &path).unwrap();
        assert_eq!(load(&path).unwrap(), core);
    }
}
